"""Question answering over the knowledge graph.

Retrieval runs in two layers. The first layer embeds the query and every
entity (name plus attribute text) with the deterministic hashed
bag-of-words embedder and ranks entities by cosine similarity. The second
layer expands the top candidates by one relation hop and formats the
induced subgraph into ordered, provenance-tagged context lines.

Answer synthesis is pluggable: the scripted synthesizer recognizes six
question templates and answers them by direct graph traversal, while the
HTTP synthesizer forwards the formatted context and question to a chat
model. Scripted answers carry the ids of every entity they mention so the
output can be audited against the graph.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .backend import (
    CompletionRequest,
    CompletionResult,
    EndpointConfig,
    FewShotConfig,
    build_messages,
    embed,
    http_complete,
)
from .context import ContextBlock, FormattedContext
from .kgraph import ContextSubgraph, Entity, GraphError, KnowledgeGraph, neighbors, product_chain

logger = logging.getLogger(__name__)

DEFAULT_K = 5

QUESTION_TYPES = (
    "overall_process",
    "applicability",
    "sequence_comparison",
    "sequence_linking",
    "requirement_query",
    "relation_comparison",
)

SINGLE_HOP_TYPES = frozenset({"overall_process", "applicability"})


class UnsupportedTemplateError(ValueError):
    """Raised when the scripted synthesizer cannot parse a question."""


@dataclass(frozen=True)
class Query:
    text: str
    k: int = DEFAULT_K

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")


@dataclass(frozen=True)
class Candidate:
    entity_id: str
    score: float


@dataclass
class CandidateSet:
    query: str
    candidates: list[Candidate] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [c.entity_id for c in self.candidates]

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class Answer:
    """Synthesized answer plus the graph ids it was built from."""

    text: str
    provenance: tuple[str, ...]


def entity_embedding_text(entity: Entity) -> str:
    parts = [entity.name]
    for key in sorted(entity.attrs):
        parts.append(f"{key} {entity.attrs[key]}")
    return " ".join(parts)


def retrieve(query: Query, g: KnowledgeGraph, k: int | None = None) -> CandidateSet:
    """Rank entities by cosine similarity to the query text.

    Ties break on ascending entity id; asking for more candidates than the
    graph holds returns everything, still sorted. Scores can be zero (no
    token overlap) — callers that need relevance filter on score.
    """

    limit = query.k if k is None else k
    if limit < 1:
        raise ValueError("k must be at least 1")
    result = CandidateSet(query=query.text)
    if not g.entities:
        return result
    qvec = embed(query.text)
    if float(np.linalg.norm(qvec)) == 0.0:
        logger.debug("query %r has no tokens; all scores are zero", query.text)
    ids = sorted(g.entities)
    matrix = np.stack([embed(entity_embedding_text(g.entities[i])) for i in ids])
    scores = matrix @ qvec
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    for i in order[:limit]:
        result.candidates.append(Candidate(entity_id=ids[i], score=float(scores[i])))
    return result


def _attribute_line(entity: Entity) -> ContextBlock:
    rendered = "; ".join(f"{k}={entity.attrs[k]}" for k in sorted(entity.attrs))
    text = f"{entity.name} ({entity.kind})"
    if rendered:
        text += f": {rendered}"
    return ContextBlock(text=text, provenance=(entity.id,))


def _relation_line(sub: ContextSubgraph, rel) -> ContextBlock:
    src = sub.entities[rel.src]
    dst = sub.entities[rel.dst]
    return ContextBlock(
        text=f"{src.name} —{rel.label}→ {dst.name}",
        provenance=(rel.src, rel.dst),
    )


def format_context(candidates: CandidateSet, sub: ContextSubgraph) -> FormattedContext:
    """Render a context subgraph as deterministic text blocks.

    Candidates are visited in rank order; each contributes its attribute
    line followed by its incident relations sorted by (label, dst id,
    src id). Expansion-only entities follow sorted by id, then any
    relations connecting only expansion entities, sorted by (label,
    src id, dst id). Each entity and relation contributes at most one
    block; distinct entities that share a display name keep separate
    blocks because their provenance differs.
    """

    ctx = FormattedContext()
    emitted_entities: set[str] = set()
    emitted_relations: set = set()
    for cand in candidates.candidates:
        if cand.entity_id not in sub.entities:
            continue
        if cand.entity_id not in emitted_entities:
            ctx.blocks.append(_attribute_line(sub.entities[cand.entity_id]))
            emitted_entities.add(cand.entity_id)
        incident = [
            r
            for r in sub.relations
            if (r.src == cand.entity_id or r.dst == cand.entity_id)
            and r not in emitted_relations
        ]
        for rel in sorted(incident, key=lambda r: (r.label, r.dst, r.src)):
            ctx.blocks.append(_relation_line(sub, rel))
            emitted_relations.add(rel)
    for entity_id in sorted(sub.entities):
        if entity_id not in emitted_entities:
            ctx.blocks.append(_attribute_line(sub.entities[entity_id]))
            emitted_entities.add(entity_id)
    leftovers = [r for r in sub.relations if r not in emitted_relations]
    for rel in sorted(leftovers, key=lambda r: (r.label, r.src, r.dst)):
        ctx.blocks.append(_relation_line(sub, rel))
        emitted_relations.add(rel)
    return ctx


def two_layer_retrieve(
    query: Query, g: KnowledgeGraph, k: int | None = None
) -> tuple[CandidateSet, ContextSubgraph, FormattedContext]:
    """Rank, expand one hop, and format; the context covers all candidates."""

    candidates = retrieve(query, g, k)
    if not candidates.candidates:
        empty = ContextSubgraph(entities={}, relations=frozenset())
        return candidates, empty, FormattedContext()
    sub = neighbors(g, candidates.ids(), hops=1)
    return candidates, sub, format_context(candidates, sub)


# ---------------------------------------------------------------------------
# Structured traversal helpers (shared with the planner)


def resolve_product(g: KnowledgeGraph, text: str) -> Entity | None:
    """Find a product by exact id or (casefolded) name, else by retrieval rank."""

    wanted = text.casefold().strip()
    for product in g.entities_of_kind("product"):
        if product.id == text.strip() or product.name.casefold() == wanted:
            return product
    ranked = retrieve(Query(text=text, k=max(DEFAULT_K, 8)), g)
    for cand in ranked.candidates:
        entity = g.entities[cand.entity_id]
        if entity.kind == "product" and cand.score > 0.0:
            return entity
    return None


def step_requirements(
    g: KnowledgeGraph, step_id: str
) -> tuple[list[str], list[str], str | None]:
    """Return (part ids, tool ids, reference part id) for one step, id-sorted."""

    parts = sorted(r.dst for r in g.out_relations(step_id, "requires_part"))
    tools = sorted(r.dst for r in g.out_relations(step_id, "requires_tool"))
    refs = sorted(r.src for r in g.in_relations(step_id, "reference_part_of"))
    return parts, tools, refs[0] if refs else None


def products_with_process(g: KnowledgeGraph, process_name: str) -> list[tuple[Entity, Entity]]:
    """All (product, step) pairs whose step name matches, sorted by product id."""

    wanted = process_name.casefold().strip()
    hits: list[tuple[Entity, Entity]] = []
    for step in g.entities_of_kind("process"):
        if step.name.casefold() != wanted:
            continue
        for rel in g.out_relations(step.id, "belongs_to_product"):
            hits.append((g.entities[rel.dst], step))
    hits.sort(key=lambda pair: (pair[0].id, pair[1].id))
    return hits


# ---------------------------------------------------------------------------
# Scripted template answering

_QUOTE = r'["“”]'

_P_OVERALL = re.compile(
    r"^what is the complete assembly process for (?:the )?(.+?)\?$", re.IGNORECASE
)
_P_APPLICABILITY = re.compile(
    rf"^which products require the {_QUOTE}(.+?){_QUOTE} process for assembly\?$",
    re.IGNORECASE,
)
_P_FIRST = re.compile(
    r"^what is the first assembly step for (?:the )?(.+?)\?$", re.IGNORECASE
)
_P_NEXT_AFTER_FIRST = re.compile(
    r"^what is the next step after the first assembly process of (?:the )?(.+?)\?$",
    re.IGNORECASE,
)
_P_NEXT = re.compile(
    r"^what is the next step after (.+?) in the assembly of (?:the )?(.+?)\?$",
    re.IGNORECASE,
)
_P_REQ_FIRST = re.compile(
    r"^which components and tools are required for the first assembly step of "
    r"(?:the )?(.+?)\?$",
    re.IGNORECASE,
)
_P_REQ = re.compile(
    r"^which components and tools are required for (.+?) in the assembly of "
    r"(?:the )?(.+?)\?$",
    re.IGNORECASE,
)
_P_REFERENCE = re.compile(
    r"^in step (\d+) of (.+?) during (?:the )?(.+?) assembly, "
    r"which part serves as the reference component\?$",
    re.IGNORECASE,
)


def _require_product(g: KnowledgeGraph, text: str) -> Entity:
    product = resolve_product(g, text)
    if product is None:
        raise UnsupportedTemplateError(
            f"no product matching {text!r} in the graph"
        )
    return product


def _find_step(g: KnowledgeGraph, product: Entity, name: str) -> Entity:
    wanted = name.casefold().strip()
    for step in product_chain(g, product.id):
        if step.name.casefold() == wanted:
            return step
    raise UnsupportedTemplateError(
        f"product {product.id!r} has no step named {name!r}"
    )


def _requirements_answer(g: KnowledgeGraph, product: Entity, step: Entity) -> Answer:
    part_ids, tool_ids, _ = step_requirements(g, step.id)
    part_names = [g.entities[p].name for p in part_ids]
    tool_names = [g.entities[t].name for t in tool_ids]
    text = (
        f"parts: {', '.join(part_names) if part_names else 'none'}; "
        f"tools: {', '.join(tool_names) if tool_names else 'none'}"
    )
    return Answer(
        text=text,
        provenance=tuple([product.id, step.id] + part_ids + tool_ids),
    )


def scripted_answer(question: str, g: KnowledgeGraph) -> Answer:
    """Answer one of the six supported templates by graph traversal.

    Raises :class:`UnsupportedTemplateError` for anything else, so callers
    can distinguish "not a known question shape" from graph lookup errors.
    """

    q = " ".join(question.strip().split())

    match = _P_OVERALL.match(q)
    if match:
        product = _require_product(g, match.group(1))
        chain = product_chain(g, product.id)
        text = " -> ".join(step.name for step in chain)
        return Answer(
            text=text, provenance=tuple([product.id] + [s.id for s in chain])
        )

    match = _P_APPLICABILITY.match(q)
    if match:
        hits = products_with_process(g, match.group(1))
        seen: list[Entity] = []
        prov: list[str] = []
        for product, step in hits:
            if product.id not in {p.id for p in seen}:
                seen.append(product)
            prov.extend([product.id, step.id])
        text = ", ".join(p.name for p in seen) if seen else "no products"
        return Answer(text=text, provenance=tuple(prov))

    match = _P_FIRST.match(q)
    if match:
        product = _require_product(g, match.group(1))
        chain = product_chain(g, product.id)
        if not chain:
            raise GraphError(f"product {product.id!r} has no steps")
        return Answer(text=chain[0].name, provenance=(product.id, chain[0].id))

    match = _P_NEXT_AFTER_FIRST.match(q)
    if match:
        product = _require_product(g, match.group(1))
        chain = product_chain(g, product.id)
        if not chain:
            raise GraphError(f"product {product.id!r} has no steps")
        if len(chain) == 1:
            return Answer(text="no successor", provenance=(product.id, chain[0].id))
        return Answer(
            text=chain[1].name, provenance=(product.id, chain[0].id, chain[1].id)
        )

    match = _P_NEXT.match(q)
    if match:
        product = _require_product(g, match.group(2))
        step = _find_step(g, product, match.group(1))
        chain = product_chain(g, product.id)
        index = [s.id for s in chain].index(step.id)
        if index + 1 >= len(chain):
            return Answer(text="no successor", provenance=(product.id, step.id))
        nxt = chain[index + 1]
        return Answer(text=nxt.name, provenance=(product.id, step.id, nxt.id))

    match = _P_REQ_FIRST.match(q)
    if match:
        product = _require_product(g, match.group(1))
        chain = product_chain(g, product.id)
        if not chain:
            raise GraphError(f"product {product.id!r} has no steps")
        return _requirements_answer(g, product, chain[0])

    match = _P_REQ.match(q)
    if match:
        product = _require_product(g, match.group(2))
        step = _find_step(g, product, match.group(1))
        return _requirements_answer(g, product, step)

    match = _P_REFERENCE.match(q)
    if match:
        order = int(match.group(1))
        product = _require_product(g, match.group(3))
        chain = product_chain(g, product.id)
        by_order = [s for s in chain if s.attrs.get("order") == order]
        step = by_order[0] if by_order else _find_step(g, product, match.group(2))
        _, _, reference = step_requirements(g, step.id)
        if reference is None:
            return Answer(text="no reference part", provenance=(product.id, step.id))
        return Answer(
            text=g.entities[reference].name,
            provenance=(product.id, step.id, reference),
        )

    raise UnsupportedTemplateError(f"unsupported question template: {question!r}")


# ---------------------------------------------------------------------------
# Synthesizer handles


class Synthesizer(Protocol):
    def synthesize(
        self, question: str, g: KnowledgeGraph, context: FormattedContext
    ) -> Answer: ...


class ScriptedSynthesizer:
    """Template engine backed by deterministic graph traversal."""

    def synthesize(
        self, question: str, g: KnowledgeGraph, context: FormattedContext
    ) -> Answer:
        return scripted_answer(question, g)


class HttpSynthesizer:
    """Sends the formatted context plus the question to a chat endpoint."""

    SYSTEM_PROMPT = (
        "You answer questions about industrial assembly processes. "
        "Use only the provided context lines; answer with the bare fact."
    )

    def __init__(self, config: EndpointConfig, few_shot: FewShotConfig | None = None):
        self.config = config
        self.few_shot = few_shot or FewShotConfig()

    def synthesize(
        self, question: str, g: KnowledgeGraph, context: FormattedContext
    ) -> Answer:
        user = f"Context:\n{context.render()}\n\nQuestion: {question}"
        request = CompletionRequest(
            messages=build_messages(self.SYSTEM_PROMPT, user, self.few_shot)
        )
        result: CompletionResult = http_complete(request, self.config)
        return Answer(
            text=result.content.strip(),
            provenance=tuple(sorted(context.provenance_ids())),
        )


def answer(query: Query, g: KnowledgeGraph, synth: Synthesizer) -> Answer:
    """Retrieve context for the query and hand it to the synthesizer."""

    _, _, context = two_layer_retrieve(query, g)
    return synth.synthesize(query.text, g, context)
