"""Reasoning backends: deterministic scripted logic and an HTTP chat client.

Everything the planner and the solvers need from a "reasoner" is exposed in
two interchangeable flavors. The scripted flavor replays fixed decision
rules and templated reflections so the whole pipeline runs offline and
reproducibly. The HTTP flavor talks to an OpenAI-style chat-completions
endpoint; it is configured from environment variables and never logs the
credential.

The module also owns the deterministic text embedder shared by retrieval:
a hashed bag-of-words in 256 dimensions, L2-normalized, with lowercase
tokenization on non-alphanumeric boundaries.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import requests

logger = logging.getLogger(__name__)

EMBED_DIM = 256

ENV_ENDPOINT = "ASMPLAN_ENDPOINT"
ENV_API_KEY = "ASMPLAN_API_KEY"
ENV_MODEL = "ASMPLAN_MODEL"


class ConfigError(ValueError):
    """Raised when backend configuration is missing or malformed."""


class TransportError(RuntimeError):
    """Raised when the HTTP backend gives up on a request."""

    def __init__(self, message: str, *, status: int | None = None, retries: int = 0):
        super().__init__(message)
        self.status = status
        self.retries = retries


# ---------------------------------------------------------------------------
# Embeddings

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on anything that is not a letter or digit."""

    return [tok for tok in _TOKEN_SPLIT.split(text.lower()) if tok]


def _bucket(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % EMBED_DIM


def embed(text: str) -> np.ndarray:
    """Hashed bag-of-words embedding, unit-norm unless the text is empty.

    Token-free input produces the zero vector (left unnormalized) so the
    caller can detect it by its zero norm.
    """

    vec = np.zeros(EMBED_DIM, dtype=np.float64)
    tokens = tokenize(text)
    if not tokens:
        logger.debug("embed: no tokens in %r, returning zero vector", text)
        return vec
    for token in tokens:
        vec[_bucket(token)] += 1.0
    return vec / np.linalg.norm(vec)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity that treats any zero vector as similarity 0.0."""

    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))


# ---------------------------------------------------------------------------
# Scripted planner decisions


@dataclass(frozen=True)
class PlannerFlags:
    """What the planner already knows, in dependency order."""

    process_known: bool = False
    times_known: bool = False
    balance_solved: bool = False
    requirements_known: bool = False
    locations_known: bool = False


@dataclass(frozen=True)
class ReasonerDecision:
    """One thought/action pair chosen by a reasoner."""

    thought: str
    target: str
    query: str


def scripted_decide(flags: PlannerFlags, product: str) -> ReasonerDecision:
    """Pick the next agent to call from the planner's knowledge flags.

    The branch order is fixed: procedure, then step times, then the line
    balance, then tool/part requirements, then physical locations, and a
    final synthesis step once everything is known.
    """

    if not flags.process_known:
        return ReasonerDecision(
            thought=f"The assembly procedure for {product} is unknown.",
            target="knowledge_agent",
            query=f"Retrieve the assembly procedure for {product}.",
        )
    if not flags.times_known:
        return ReasonerDecision(
            thought=f"Step execution times for {product} are unknown.",
            target="knowledge_agent",
            query=f"Retrieve the execution time of each assembly step for {product}.",
        )
    if not flags.balance_solved:
        return ReasonerDecision(
            thought="The line balancing problem is unsolved.",
            target="line_balance_agent",
            query="Assign the assembly steps to workstations within the cycle-time limit.",
        )
    if not flags.requirements_known:
        return ReasonerDecision(
            thought=f"Required tools and parts for {product} are unknown.",
            target="knowledge_agent",
            query=f"Retrieve the tools and parts required by each assembly step for {product}.",
        )
    if not flags.locations_known:
        return ReasonerDecision(
            thought="Physical locations of the required tools and parts are unknown.",
            target="scene_graph",
            query="Retrieve the storage locations of the required tools and parts.",
        )
    return ReasonerDecision(
        thought="All facts are gathered; assemble the station-level task plan.",
        target="final",
        query="Compose the final task plan.",
    )


# ---------------------------------------------------------------------------
# Scripted reflection for the line-balance loop


@dataclass(frozen=True)
class BalanceSnapshot:
    """Plain-data view of one candidate assignment for reflection.

    ``loads`` is indexed by station number starting at 1 (index 0 unused
    semantics avoided by passing a list of exactly ``stations`` values).
    """

    stations: int
    ct_limit: float | None
    loads: tuple[float, ...]
    station_of: Mapping[str, int]
    durations: Mapping[str, float]
    predecessors: Mapping[str, tuple[str, ...]]

    def successors(self) -> dict[str, tuple[str, ...]]:
        succ: dict[str, list[str]] = {t: [] for t in self.durations}
        for task, preds in self.predecessors.items():
            for pred in preds:
                succ.setdefault(pred, []).append(task)
        return {t: tuple(sorted(s)) for t, s in succ.items()}


@dataclass(frozen=True)
class Reflection:
    """Actionable hint produced after evaluating one assignment."""

    text: str
    overloaded_station: int | None = None
    overload: float | None = None
    movable: tuple[str, ...] = ()
    move: tuple[str, int] | None = None
    swap: tuple[str, str] | None = None

    @property
    def empty(self) -> bool:
        return self.move is None and self.swap is None and self.overloaded_station is None


def _legal_station_range(
    task: str, snapshot: BalanceSnapshot, succ: Mapping[str, tuple[str, ...]]
) -> tuple[int, int]:
    lo = 1
    for pred in snapshot.predecessors.get(task, ()):
        lo = max(lo, snapshot.station_of[pred])
    hi = snapshot.stations
    for nxt in succ.get(task, ()):
        hi = min(hi, snapshot.station_of[nxt])
    return lo, hi


def scripted_reflect(snapshot: BalanceSnapshot) -> Reflection:
    """Turn an evaluation into a templated improvement hint.

    Names the most-overloaded station and its overload, lists movable
    tasks (duration at most the overload with a legal destination that
    stays under the limit), and proposes the single best move. When no
    task is movable the hint proposes a duration-reducing swap instead.
    A feasible assignment yields the empty hint.
    """

    if snapshot.ct_limit is None:
        return Reflection(text="")
    ct_limit = float(snapshot.ct_limit)
    excesses = [load - ct_limit for load in snapshot.loads]
    if all(excess < 0 for excess in excesses):
        return Reflection(text="")

    station = max(
        range(1, snapshot.stations + 1),
        key=lambda s: (excesses[s - 1], -s),
    )
    overload = excesses[station - 1]
    succ = snapshot.successors()
    on_station = sorted(
        (t for t, s in snapshot.station_of.items() if s == station),
        key=lambda t: (-snapshot.durations[t], t),
    )

    movable: list[str] = []
    best_move: tuple[str, int] | None = None
    for task in on_station:
        duration = snapshot.durations[task]
        if duration > overload:
            continue
        lo, hi = _legal_station_range(task, snapshot, succ)
        dests = [
            s
            for s in range(lo, hi + 1)
            if s != station and snapshot.loads[s - 1] + duration < ct_limit
        ]
        if not dests:
            continue
        movable.append(task)
        if best_move is None:
            target = min(dests, key=lambda s: (snapshot.loads[s - 1], s))
            best_move = (task, target)

    if movable:
        task, target = best_move  # type: ignore[misc]
        text = (
            f"Station {station} exceeds the cycle-time limit by {overload:g} s. "
            f"Movable tasks: {', '.join(movable)}. "
            f"Move task {task} to station {target} (least-loaded legal station)."
        )
        return Reflection(
            text=text,
            overloaded_station=station,
            overload=overload,
            movable=tuple(movable),
            move=best_move,
        )

    best_swap: tuple[str, str] | None = None
    best_key: tuple[float, str, str] | None = None
    for task in sorted(t for t, s in snapshot.station_of.items() if s == station):
        for other in sorted(snapshot.station_of):
            other_station = snapshot.station_of[other]
            if other_station == station:
                continue
            if snapshot.durations[other] >= snapshot.durations[task]:
                continue
            lo_t, hi_t = _legal_station_range(task, snapshot, succ)
            lo_o, hi_o = _legal_station_range(other, snapshot, succ)
            if not (lo_t <= other_station <= hi_t and lo_o <= station <= hi_o):
                continue
            delta = snapshot.durations[task] - snapshot.durations[other]
            new_here = snapshot.loads[station - 1] - delta
            new_there = snapshot.loads[other_station - 1] + delta
            if new_there >= ct_limit:
                continue
            key = (max(new_here, new_there), task, other)
            if best_key is None or key < best_key:
                best_key = key
                best_swap = (task, other)

    if best_swap is not None:
        text = (
            f"Station {station} exceeds the cycle-time limit by {overload:g} s "
            f"and no single task is small enough to move. "
            f"Swap task {best_swap[0]} with task {best_swap[1]}."
        )
        return Reflection(
            text=text,
            overloaded_station=station,
            overload=overload,
            swap=best_swap,
        )
    return Reflection(
        text=(
            f"Station {station} exceeds the cycle-time limit by {overload:g} s "
            f"but no legal move or swap improves it."
        ),
        overloaded_station=station,
        overload=overload,
    )


# ---------------------------------------------------------------------------
# HTTP chat-completions client


@dataclass(frozen=True)
class FewShotConfig:
    """Zero to two exemplar question/answer pairs prepended to prompts."""

    exemplars: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if len(self.exemplars) > 2:
            raise ConfigError(
                f"at most 2 exemplar pairs are supported, got {len(self.exemplars)}"
            )


@dataclass(frozen=True)
class CompletionRequest:
    """One chat-completions call: ordered messages plus sampling knobs."""

    messages: tuple[dict[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 512


@dataclass(frozen=True)
class CompletionResult:
    content: str
    retries: int
    status: int


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    api_key: str
    model: str = "gpt-4"
    timeout_s: float = 30.0
    max_retries: int = 2
    backoff_s: float = 0.5

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> "EndpointConfig":
        env = os.environ if environ is None else environ
        url = env.get(ENV_ENDPOINT, "")
        api_key = env.get(ENV_API_KEY, "")
        model = env.get(ENV_MODEL, "gpt-4")
        if not url:
            raise ConfigError(f"{ENV_ENDPOINT} is not set")
        if not api_key:
            raise ConfigError(f"{ENV_API_KEY} is not set")
        return cls(url=url, api_key=api_key, model=model)


def build_messages(
    system: str, user: str, few_shot: FewShotConfig | None = None
) -> tuple[dict[str, str], ...]:
    messages: list[dict[str, str]] = [{"role": "system", "content": system}]
    if few_shot is not None:
        for question, answer in few_shot.exemplars:
            messages.append({"role": "user", "content": question})
            messages.append({"role": "assistant", "content": answer})
    messages.append({"role": "user", "content": user})
    return tuple(messages)


def http_complete(request: CompletionRequest, config: EndpointConfig) -> CompletionResult:
    """POST a chat-completions request, retrying transient failures.

    Connection errors, timeouts and 5xx responses are retried up to
    ``config.max_retries`` times with exponential backoff. Other error
    statuses and malformed success bodies fail immediately. The API
    credential travels only in the Authorization header and is never
    written to any log line.
    """

    if not config.url:
        raise ConfigError("endpoint URL is not configured")
    if not config.api_key:
        raise ConfigError("API credential is not configured")

    payload = {
        "model": config.model,
        "messages": list(request.messages),
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    headers = {
        "Authorization": f"Bearer {config.api_key}",
        "Content-Type": "application/json",
    }

    attempts = config.max_retries + 1
    last_error = "no attempt made"
    last_status: int | None = None
    for attempt in range(attempts):
        if attempt:
            time.sleep(config.backoff_s * (2 ** (attempt - 1)))
        logger.debug(
            "completion attempt %d/%d to %s (model=%s, %d messages)",
            attempt + 1,
            attempts,
            config.url,
            config.model,
            len(request.messages),
        )
        try:
            response = requests.post(
                config.url, json=payload, headers=headers, timeout=config.timeout_s
            )
        except requests.RequestException as exc:
            last_error = f"transport failure: {exc.__class__.__name__}"
            last_status = None
            logger.debug("attempt %d failed: %s", attempt + 1, last_error)
            continue
        if response.status_code >= 500:
            last_error = f"server error {response.status_code}"
            last_status = response.status_code
            logger.debug("attempt %d failed: %s", attempt + 1, last_error)
            continue
        if response.status_code != 200:
            raise TransportError(
                f"request rejected with status {response.status_code}: "
                f"{response.text[:200]}",
                status=response.status_code,
                retries=attempt,
            )
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(
                f"unexpected response shape: {exc}",
                status=response.status_code,
                retries=attempt,
            ) from exc
        if not isinstance(content, str):
            raise TransportError(
                "completion content is not a string",
                status=response.status_code,
                retries=attempt,
            )
        logger.debug("completion succeeded after %d retries", attempt)
        return CompletionResult(content=content, retries=attempt, status=200)

    raise TransportError(
        f"gave up after {attempts} attempts: {last_error}",
        status=last_status,
        retries=attempts - 1,
    )
