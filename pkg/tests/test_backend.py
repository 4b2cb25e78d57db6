from __future__ import annotations

import json
import logging
import socket

import numpy as np
import pytest

from asmplan.backend import (
    BalanceSnapshot,
    CompletionRequest,
    ConfigError,
    EndpointConfig,
    FewShotConfig,
    PlannerFlags,
    TransportError,
    build_messages,
    cosine,
    embed,
    http_complete,
    scripted_decide,
    scripted_reflect,
    tokenize,
)
from conftest import chat_body


class TestTokenizeAndEmbed:
    def test_tokenize_lowercases_and_splits(self):
        assert tokenize("Press_Fit-TOOL 3b") == ["press", "fit", "tool", "3b"]

    def test_tokenize_empty(self):
        assert tokenize("") == []
        assert tokenize("???") == []

    def test_embed_is_unit_norm(self):
        assert np.linalg.norm(embed("tighten the bonnet")) == pytest.approx(1.0)

    def test_embed_token_free_is_zero(self):
        assert np.linalg.norm(embed("?!——?")) == 0.0

    def test_embed_is_order_insensitive(self):
        assert np.array_equal(embed("valve seat press"), embed("press seat valve"))

    def test_embed_counts_repetitions(self):
        assert not np.array_equal(embed("seat seat valve"), embed("seat valve"))

    def test_embed_deterministic_across_calls(self):
        assert np.array_equal(embed("spring compressor"), embed("spring compressor"))

    def test_cosine_handles_zero_vectors(self):
        zero = np.zeros(4)
        one = np.array([1.0, 0.0, 0.0, 0.0])
        assert cosine(zero, one) == 0.0
        assert cosine(one, one) == pytest.approx(1.0)
        assert cosine(one, np.array([0.0, 1.0, 0.0, 0.0])) == 0.0


class TestScriptedDecide:
    def test_branch_order(self):
        flags = PlannerFlags()
        sequence = []
        for update in (
            {"process_known": True},
            {"times_known": True},
            {"balance_solved": True},
            {"requirements_known": True},
            {"locations_known": True},
        ):
            sequence.append(scripted_decide(flags, "widget").target)
            flags = PlannerFlags(**{**flags.__dict__, **update})
        sequence.append(scripted_decide(flags, "widget").target)
        assert sequence == [
            "knowledge_agent",
            "knowledge_agent",
            "line_balance_agent",
            "knowledge_agent",
            "scene_graph",
            "final",
        ]

    def test_queries_name_the_product(self):
        first = scripted_decide(PlannerFlags(), "pressure reducing valve")
        assert "pressure reducing valve" in first.query
        assert "procedure" in first.query
        assert first.thought

    def test_balance_query_mentions_cycle_time(self):
        flags = PlannerFlags(process_known=True, times_known=True)
        decision = scripted_decide(flags, "widget")
        assert decision.target == "line_balance_agent"
        assert "cycle-time" in decision.query


def snapshot(
    loads: tuple[float, ...],
    station_of: dict[str, int],
    durations: dict[str, float],
    predecessors: dict[str, tuple[str, ...]] | None = None,
    ct_limit: float | None = 100.0,
) -> BalanceSnapshot:
    return BalanceSnapshot(
        stations=len(loads),
        ct_limit=ct_limit,
        loads=loads,
        station_of=station_of,
        durations=durations,
        predecessors=predecessors or {t: () for t in durations},
    )


class TestScriptedReflect:
    def test_feasible_assignment_yields_empty_hint(self):
        snap = snapshot((40.0, 30.0), {"x": 1, "y": 2}, {"x": 40.0, "y": 30.0})
        reflection = scripted_reflect(snap)
        assert reflection.empty
        assert reflection.text == ""

    def test_no_limit_yields_empty_hint(self):
        snap = snapshot(
            (400.0, 0.0), {"x": 1}, {"x": 400.0}, ct_limit=None
        )
        assert scripted_reflect(snap).empty

    def test_overload_tie_breaks_to_lowest_station(self):
        snap = snapshot(
            (120.0, 120.0),
            {"x": 1, "y": 2},
            {"x": 120.0, "y": 120.0},
        )
        assert scripted_reflect(snap).overloaded_station == 1

    def test_movable_excludes_tasks_bigger_than_the_overload(self):
        snap = snapshot(
            (40.0, 0.0),
            {"x": 1, "y": 1},
            {"x": 30.0, "y": 10.0},
            ct_limit=25.0,
        )
        reflection = scripted_reflect(snap)
        assert reflection.overload == 15.0
        assert reflection.movable == ("y",)
        assert reflection.move == ("y", 2)

    def test_move_targets_least_loaded_legal_station(self):
        snap = snapshot(
            (50.0, 20.0, 10.0),
            {"t": 1, "u": 2, "v": 3},
            {"t": 5.0, "u": 20.0, "v": 10.0},
            ct_limit=45.0,
        )
        assert scripted_reflect(snap).move == ("t", 3)

    def test_successor_station_caps_the_destination(self):
        snap = snapshot(
            (50.0, 10.0, 0.0),
            {"w": 1, "x": 2},
            {"w": 5.0, "x": 10.0},
            predecessors={"w": (), "x": ("w",)},
            ct_limit=45.0,
        )
        reflection = scripted_reflect(snap)
        # Station 3 is emptier but w's successor sits on station 2.
        assert reflection.move == ("w", 2)

    def test_largest_movable_task_is_proposed(self):
        snap = snapshot(
            (45.0, 0.0),
            {"big": 1, "small": 1, "rest": 1},
            {"big": 20.0, "small": 10.0, "rest": 15.0},
            ct_limit=25.0,
        )
        reflection = scripted_reflect(snap)
        assert reflection.movable == ("big", "rest", "small")
        assert reflection.move == ("big", 2)

    def test_swap_fallback_minimizes_the_larger_new_load(self):
        snap = snapshot(
            (260.0, 80.0),
            {"a": 1, "b": 1, "d": 1, "c": 2},
            {"a": 120.0, "b": 100.0, "d": 40.0, "c": 80.0},
            ct_limit=250.0,
        )
        reflection = scripted_reflect(snap)
        assert reflection.move is None
        assert reflection.swap == ("a", "c")
        assert "Swap task a with task c" in reflection.text

    def test_no_action_when_nothing_helps(self):
        snap = snapshot(
            (40.0, 24.0),
            {"x": 1, "y": 1, "z": 2},
            {"x": 30.0, "y": 10.0, "z": 24.0},
            ct_limit=25.0,
        )
        reflection = scripted_reflect(snap)
        assert reflection.move is None and reflection.swap is None
        assert reflection.overloaded_station == 1
        assert "no legal move or swap" in reflection.text


class TestFewShotConfig:
    def test_accepts_up_to_two_exemplars(self):
        FewShotConfig()
        FewShotConfig(exemplars=(("q1", "a1"),))
        FewShotConfig(exemplars=(("q1", "a1"), ("q2", "a2")))

    def test_rejects_three_exemplars(self):
        with pytest.raises(ConfigError, match="at most 2"):
            FewShotConfig(exemplars=(("q1", "a1"), ("q2", "a2"), ("q3", "a3")))


class TestEndpointConfig:
    def test_from_env_reads_all_fields(self):
        config = EndpointConfig.from_env(
            {
                "ASMPLAN_ENDPOINT": "http://example.test/v1",
                "ASMPLAN_API_KEY": "sk-secret",
                "ASMPLAN_MODEL": "local-model",
            }
        )
        assert config.url == "http://example.test/v1"
        assert config.api_key == "sk-secret"
        assert config.model == "local-model"

    def test_model_defaults(self):
        config = EndpointConfig.from_env(
            {"ASMPLAN_ENDPOINT": "http://x", "ASMPLAN_API_KEY": "k"}
        )
        assert config.model == "gpt-4"

    def test_missing_endpoint_names_the_variable(self):
        with pytest.raises(ConfigError, match="ASMPLAN_ENDPOINT"):
            EndpointConfig.from_env({"ASMPLAN_API_KEY": "k"})

    def test_missing_key_names_the_variable(self):
        with pytest.raises(ConfigError, match="ASMPLAN_API_KEY"):
            EndpointConfig.from_env({"ASMPLAN_ENDPOINT": "http://x"})


class TestBuildMessages:
    def test_system_first_user_last(self):
        messages = build_messages("be brief", "what now?")
        assert [m["role"] for m in messages] == ["system", "user"]
        assert messages[-1]["content"] == "what now?"

    def test_few_shot_pairs_interleave(self):
        few_shot = FewShotConfig(exemplars=(("q1", "a1"), ("q2", "a2")))
        messages = build_messages("sys", "real question", few_shot)
        assert [m["role"] for m in messages] == [
            "system",
            "user",
            "assistant",
            "user",
            "assistant",
            "user",
        ]
        assert [m["content"] for m in messages[1:5]] == ["q1", "a1", "q2", "a2"]


def endpoint_config(url: str, **overrides) -> EndpointConfig:
    settings = {
        "url": url,
        "api_key": "test-key",
        "model": "test-model",
        "timeout_s": 5.0,
        "max_retries": 2,
        "backoff_s": 0.01,
    }
    settings.update(overrides)
    return EndpointConfig(**settings)


def request(text: str = "hello?") -> CompletionRequest:
    return CompletionRequest(messages=build_messages("sys", text))


class TestHttpComplete:
    def test_success_carries_payload_and_credential(self, stub_endpoint):
        stub_endpoint.enqueue_content("hi there")
        result = http_complete(request("ping"), endpoint_config(stub_endpoint.url))
        assert result.content == "hi there"
        assert result.retries == 0
        assert result.status == 200
        sent = stub_endpoint.requests[0]
        assert sent["model"] == "test-model"
        assert sent["messages"][-1]["content"] == "ping"
        assert sent["temperature"] == 0.0
        assert stub_endpoint.headers[0]["Authorization"] == "Bearer test-key"

    def test_server_errors_are_retried(self, stub_endpoint):
        stub_endpoint.enqueue(500, json.dumps({"error": "boom"}))
        stub_endpoint.enqueue(503, json.dumps({"error": "busy"}))
        stub_endpoint.enqueue_content("finally")
        result = http_complete(request(), endpoint_config(stub_endpoint.url))
        assert result.content == "finally"
        assert result.retries == 2
        assert len(stub_endpoint.requests) == 3

    def test_gives_up_after_max_retries(self, stub_endpoint):
        for _ in range(3):
            stub_endpoint.enqueue(500, json.dumps({"error": "down"}))
        with pytest.raises(TransportError, match="gave up after 3 attempts") as info:
            http_complete(request(), endpoint_config(stub_endpoint.url))
        assert info.value.status == 500
        assert info.value.retries == 2

    def test_client_errors_fail_immediately(self, stub_endpoint):
        stub_endpoint.enqueue(404, json.dumps({"error": "nope"}))
        with pytest.raises(TransportError, match="status 404") as info:
            http_complete(request(), endpoint_config(stub_endpoint.url))
        assert info.value.status == 404
        assert info.value.retries == 0
        assert len(stub_endpoint.requests) == 1

    def test_malformed_success_body_rejected(self, stub_endpoint):
        stub_endpoint.enqueue(200, json.dumps({"unexpected": True}))
        with pytest.raises(TransportError, match="unexpected response shape"):
            http_complete(request(), endpoint_config(stub_endpoint.url))

    def test_non_string_content_rejected(self, stub_endpoint):
        body = chat_body("placeholder")
        body["choices"][0]["message"]["content"] = 42
        stub_endpoint.enqueue(200, json.dumps(body))
        with pytest.raises(TransportError, match="not a string"):
            http_complete(request(), endpoint_config(stub_endpoint.url))

    def test_connection_failures_are_retried_then_fail(self):
        with socket.socket() as sock:
            sock.bind(("127.0.0.1", 0))
            dead_url = f"http://127.0.0.1:{sock.getsockname()[1]}/v1/chat/completions"
        config = endpoint_config(dead_url, max_retries=1)
        with pytest.raises(TransportError, match="transport failure") as info:
            http_complete(request(), config)
        assert info.value.status is None
        assert info.value.retries == 1

    def test_configuration_checked_before_any_request(self, stub_endpoint):
        with pytest.raises(ConfigError, match="URL"):
            http_complete(request(), endpoint_config(""))
        with pytest.raises(ConfigError, match="credential"):
            http_complete(request(), endpoint_config(stub_endpoint.url, api_key=""))
        assert stub_endpoint.requests == []

    def test_credential_never_reaches_the_logs(self, stub_endpoint, caplog):
        stub_endpoint.enqueue(500, json.dumps({"error": "x"}))
        stub_endpoint.enqueue_content("done")
        with caplog.at_level(logging.DEBUG):
            http_complete(request(), endpoint_config(stub_endpoint.url))
        assert "test-key" not in caplog.text
