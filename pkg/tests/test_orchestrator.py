from __future__ import annotations

import json

import pytest

from asmplan.backend import (
    EndpointConfig,
    PlannerFlags,
    ReasonerDecision,
)
from asmplan.kgraph import (
    Entity,
    Relation,
    empty_graph,
    graph_from_dict,
    graph_to_dict,
    merge_subgraph,
)
from asmplan.linebalance import chain_instance, solve_reflective
from asmplan.orchestrator import (
    AssemblyPlan,
    HttpReasoner,
    InfeasiblePlanError,
    PlanningError,
    ReasonerError,
    Subtask,
    _perturb,
    label_subtasks,
    operation_verb,
    plan,
    render_plan,
    verify_provenance,
    write_trace,
)
from asmplan.scenegraph import (
    SceneEdge,
    SceneNode,
    build_scene,
    remove_edge,
    remove_node,
    update,
)

VALVE = "Pressure Reducing Valve"
EXPECTED_TARGETS = [
    "knowledge_agent",
    "knowledge_agent",
    "line_balance_agent",
    "knowledge_agent",
    "scene_graph",
    "final",
]


@pytest.fixture(scope="module")
def valve_plan(graph, scene) -> AssemblyPlan:
    return plan(VALVE, graph, scene, ct_limit=250.0)


def decision_body(target: str, thought: str = "next", query: str = "go") -> str:
    from conftest import chat_body

    return json.dumps(
        chat_body(json.dumps({"thought": thought, "target": target, "query": query}))
    )


class TestScriptedValvePlan:
    def test_consults_agents_in_order(self, valve_plan):
        assert [r.action.target for r in valve_plan.trace] == EXPECTED_TARGETS
        assert [r.t for r in valve_plan.trace] == list(range(1, 7))

    def test_plan_shape(self, valve_plan):
        assert valve_plan.product_id == "PRV01"
        assert valve_plan.product_name == "pressure reducing valve"
        assert valve_plan.stations == 5
        assert valve_plan.station_names == tuple(
            f"Workstation {i}" for i in range(1, 6)
        )
        assert len(valve_plan) == 36
        assert len(valve_plan.step_names) == 12

    def test_report_metrics(self, valve_plan):
        report = valve_plan.report
        assert report.method == "plan"
        assert report.loads == (206.0, 237.0, 247.0, 240.0, 205.0)
        assert report.ct == 247.0
        assert report.nwu == 5
        assert report.tct == 6
        assert report.nitc == 1
        assert report.feasible

    def test_station_allocation_matches_the_balance_solver(self, valve_plan):
        steps = [
            (step_id, dur, None)
            for step_id, dur in (
                (f"PRV01/step_{i:02d}", d)
                for i, d in enumerate(
                    [124, 82, 71, 94, 72, 67, 78, 102, 138, 102, 147, 58], start=1
                )
            )
        ]
        inst = chain_instance(steps, stations=5, ct_limit=250.0)
        assignment, _, _ = solve_reflective(inst)
        op_station = {
            s.step_ref: s.station for s in valve_plan.subtasks if s.duration_s
        }
        assert op_station == assignment.station_of

    def test_labels_cover_picks_and_locations(self, valve_plan):
        location = [s for s in valve_plan.subtasks if "Location" in s.labels]
        objects = [s for s in valve_plan.subtasks if "Object" in s.labels]
        assert len(location) == 18
        assert len(objects) == 18
        assert all(s.verb == "pick" for s in objects)
        switches = [s for s in valve_plan.subtasks if s.verb == "switch_tool"]
        assert len(switches) == 6
        assert all(s.labels == () for s in switches)

    def test_station_two_subtask_sequence(self, valve_plan):
        verbs = [
            (s.verb, s.object_name)
            for s in valve_plan.by_station()[2]
        ]
        assert verbs == [
            ("pick", "rubber ring tool"),
            ("switch_tool", "rubber ring tool"),
            ("pick", "rubber ring"),
            ("install", "rubber ring"),
            ("pick", "seal seating tool"),
            ("switch_tool", "seal seating tool"),
            ("pick", "o ring"),
            ("install", "o ring"),
            ("pick", "diaphragm"),
            ("install", "diaphragm"),
        ]

    def test_pick_chains_resolve_scene_containment(self, valve_plan):
        rubber_tool_pick = next(
            s
            for s in valve_plan.subtasks
            if s.verb == "pick" and s.object_ref == "tool/rubber_ring_tool"
        )
        assert rubber_tool_pick.source == ("Shelf 2", "Room 2")
        assert rubber_tool_pick.target == ("Workstation 2", "Room 1")
        assert rubber_tool_pick.location() == "Shelf 2 / Room 2"

    def test_each_station_mounts_its_own_tool(self, valve_plan):
        torque_picks = [
            s
            for s in valve_plan.subtasks
            if s.verb == "pick" and s.object_ref == "tool/torque_wrench"
        ]
        assert [s.station for s in torque_picks] == [4, 5]

    def test_operations_carry_step_durations(self, valve_plan):
        operations = [s for s in valve_plan.subtasks if s.duration_s is not None]
        assert len(operations) == 12
        assert sum(s.duration_s for s in operations) == 1135.0
        picks_and_switches = [s for s in valve_plan.subtasks if s.duration_s is None]
        assert len(picks_and_switches) == 24

    def test_provenance_resolves(self, valve_plan, graph, scene):
        assert verify_provenance(valve_plan, graph, scene) == []
        assert all(s.graph_refs and s.scene_refs for s in valve_plan.subtasks)

    def test_runs_are_deterministic(self, valve_plan, graph, scene):
        again = plan(VALVE, graph, scene, ct_limit=250.0)
        as_json = lambda p: json.dumps(p.to_dict(), sort_keys=True)  # noqa: E731
        assert as_json(again) == as_json(valve_plan)

    def test_to_records_shape(self, valve_plan):
        records = valve_plan.to_records()
        assert records[0] == {
            "index": 1,
            "verb": "pick",
            "object": "tool/press_fit_tool",
            "station": 1,
            "location": "Shelf 1 / Room 1",
            "labels": ["Location", "Object"],
            "duration_s": None,
        }
        assert [r["index"] for r in records] == list(range(1, 37))

    def test_trace_round_trips_through_jsonl(self, valve_plan, tmp_path):
        target = tmp_path / "trace.jsonl"
        write_trace(valve_plan.trace, target)
        rows = [
            json.loads(line)
            for line in target.read_text(encoding="utf-8").splitlines()
        ]
        assert [row["t"] for row in rows] == list(range(1, 7))
        assert [row["action"]["target"] for row in rows] == EXPECTED_TARGETS
        assert all(row["thought"] and row["observation"] for row in rows)

    def test_rendering_mentions_stations_steps_and_actions(self, valve_plan):
        text = render_plan(valve_plan)
        assert text.startswith(
            "Assembly plan for pressure reducing valve — 5 workstations, "
            "cycle time 247 s"
        )
        assert "Workstation 3 (load 247 s):" in text
        assert "At Workstation 1, perform step: press fit valve seat" in text
        assert "- pick press fit tool from Shelf 1 / Room 1" in text
        assert "- switch tool to press fit tool" in text
        assert "- press fit valve seat (124 s)" in text


def place_widget_world():
    entities = [
        Entity(id="WID1", kind="product", name="widget kit"),
        Entity(
            id="WID1/step_01",
            kind="process",
            name="place widget base",
            attrs={"order": 1, "time_seconds": 30.0},
        ),
        Entity(
            id="WID1/step_02",
            kind="process",
            name="inspect widget base",
            attrs={"order": 2, "time_seconds": 20.0},
        ),
        Entity(id="part/widget_base", kind="part", name="widget base"),
    ]
    relations = [
        Relation(src="WID1", dst="WID1/step_01", label="first_step_of"),
        Relation(src="WID1/step_01", dst="WID1", label="belongs_to_product"),
        Relation(src="WID1/step_02", dst="WID1", label="belongs_to_product"),
        Relation(src="WID1/step_01", dst="WID1/step_02", label="next_step"),
        Relation(src="WID1/step_01", dst="part/widget_base", label="requires_part"),
    ]
    g = merge_subgraph(empty_graph(), entities, relations)
    sg = build_scene(
        [
            SceneNode(id="room", kind="room", name="Cell"),
            SceneNode(id="rack", kind="shelf", name="Rack"),
            SceneNode(id="bench1", kind="workstation", name="Bench 1"),
            SceneNode(id="bench2", kind="workstation", name="Bench 2"),
            SceneNode(
                id="wb1",
                kind="part_instance",
                name="widget base #1",
                attrs={"catalog_ref": "part/widget_base"},
            ),
        ],
        [
            SceneEdge(src="rack", dst="room", label="located_in"),
            SceneEdge(src="bench1", dst="room", label="located_in"),
            SceneEdge(src="bench2", dst="room", label="located_in"),
            SceneEdge(src="wb1", dst="rack", label="stored_on"),
        ],
    )
    return g, sg


class TestToolFreePlacePlan:
    def test_place_targets_the_workstation(self):
        g, sg = place_widget_world()
        result = plan("widget kit", g, sg)
        assert [s.verb for s in result.subtasks] == ["pick", "place", "inspect"]
        pick, place, inspect = result.subtasks
        assert pick.source == ("Rack", "Cell")
        assert place.target == ("Bench 1", "Cell")
        assert place.duration_s == 30.0
        assert place.labels == ("Location",)
        assert inspect.station == 2
        assert inspect.object_ref is None and inspect.labels == ()
        assert result.report.tct is None

    def test_rendering_without_objects_uses_the_step_name(self):
        g, sg = place_widget_world()
        text = render_plan(plan("widget kit", g, sg))
        assert "- place widget base at Bench 1 / Cell (30 s)" in text
        assert "- inspect widget base (20 s)" in text
        assert "inspect inspect" not in text


class TestPlanValidation:
    def test_unknown_product(self, graph, scene):
        with pytest.raises(PlanningError, match="no product in the knowledge graph"):
            plan("???", graph, scene)

    def test_station_request_cannot_exceed_the_scene(self, graph, scene):
        with pytest.raises(PlanningError, match="scene has 5"):
            plan(VALVE, graph, scene, stations=6)

    def test_station_request_must_be_positive(self, graph, scene):
        with pytest.raises(PlanningError, match="at least 1"):
            plan(VALVE, graph, scene, stations=0)

    def test_scene_needs_workstations(self, graph):
        bare = build_scene([SceneNode(id="r", kind="room", name="Room")], [])
        with pytest.raises(PlanningError, match="no workstations"):
            plan(VALVE, graph, bare)

    def test_missing_scene_instance_is_reported(self, graph, scene):
        stripped = update(
            scene,
            [
                remove_edge(SceneEdge(src="inst/o_ring_1", dst="shelf/1", label="stored_on")),
                remove_node("inst/o_ring_1"),
            ],
        )
        with pytest.raises(PlanningError, match="part/o_ring"):
            plan(VALVE, graph, stripped, ct_limit=250.0)

    def test_step_without_time_is_reported(self, graph, scene):
        # Loading/merging already rejects processes without a numeric
        # time_seconds, so corrupt a private copy in memory to prove the
        # planner still guards against it.
        broken = graph_from_dict(graph_to_dict(graph))
        broken.entities["PRV01/step_04"].attrs.pop("time_seconds")
        with pytest.raises(PlanningError, match="time_seconds"):
            plan(VALVE, broken, scene)


class TestConflictHandling:
    def test_impossible_limit_names_the_load_bound(self, graph, scene):
        with pytest.raises(InfeasiblePlanError) as info:
            plan(VALVE, graph, scene, ct_limit=100.0)
        verdict = info.value.verdict
        assert "no feasible plan" in verdict
        assert "227" in verdict
        assert "cycle-time limit 100 s" in verdict
        assert str(info.value) == verdict
        # The failure keeps the reasoning trail gathered so far.
        targets = [r.action.target for r in info.value.trace]
        assert targets[:2] == ["knowledge_agent", "knowledge_agent"]

    def test_escalates_workstations_when_a_tighter_line_fails(self, graph, scene):
        result = plan(VALVE, graph, scene, stations=4, ct_limit=250.0)
        assert result.stations == 5
        assert result.report.ct == 247.0
        balance_round = next(
            r for r in result.trace if r.action.target == "line_balance_agent"
        )
        assert "escalating to 5 workstations" in balance_round.observation

    def test_perturb_moves_the_biggest_movable_task(self):
        steps = [
            (f"s{i:02d}", d, None)
            for i, d in enumerate(
                [124, 82, 71, 94, 72, 67, 78, 102, 138, 102, 147, 58], start=1
            )
        ]
        inst = chain_instance(steps, stations=5)
        assignment, _, _ = solve_reflective(inst)
        shifted = _perturb(inst, assignment)
        assert shifted is not None
        # Station 3 is the busiest; s08 is its biggest task whose successor
        # allows a later station.
        assert assignment.station_of["s08"] == 3
        assert shifted.station_of["s08"] == 4
        moved = {
            t
            for t in assignment.station_of
            if assignment.station_of[t] != shifted.station_of[t]
        }
        assert moved == {"s08"}

    def test_perturb_returns_none_when_pinned(self):
        inst = chain_instance([("a", 5.0, None), ("b", 3.0, None)], stations=1)
        assignment, _, _ = solve_reflective(inst)
        assert _perturb(inst, assignment) is None


class TestHttpReasoner:
    def config(self, stub) -> EndpointConfig:
        return EndpointConfig(
            url=stub.url, api_key="k", model="m", backoff_s=0.01, max_retries=0
        )

    def test_valid_reply_becomes_a_decision(self, stub_endpoint):
        stub_endpoint.enqueue(200, decision_body("scene_graph", "find it", "where?"))
        reasoner = HttpReasoner(self.config(stub_endpoint))
        decision = reasoner.decide(PlannerFlags(), "widget")
        assert decision == ReasonerDecision(
            thought="find it", target="scene_graph", query="where?"
        )
        prompt = stub_endpoint.requests[0]["messages"][-1]["content"]
        assert "product: widget" in prompt
        assert "process_known: False" in prompt

    def test_malformed_reply_is_reprompted_once(self, stub_endpoint):
        stub_endpoint.enqueue_content("not json at all")
        stub_endpoint.enqueue(200, decision_body("final"))
        decision = HttpReasoner(self.config(stub_endpoint)).decide(
            PlannerFlags(), "widget"
        )
        assert decision.target == "final"
        assert len(stub_endpoint.requests) == 2
        retry_prompt = stub_endpoint.requests[1]["messages"][-1]["content"]
        assert "could not be used" in retry_prompt

    def test_unknown_target_is_rejected_and_reprompted(self, stub_endpoint):
        bad = json.dumps({"thought": "?", "target": "weather_agent", "query": "?"})
        stub_endpoint.enqueue_content(bad)
        stub_endpoint.enqueue(200, decision_body("knowledge_agent"))
        decision = HttpReasoner(self.config(stub_endpoint)).decide(
            PlannerFlags(), "widget"
        )
        assert decision.target == "knowledge_agent"
        retry_prompt = stub_endpoint.requests[1]["messages"][-1]["content"]
        assert "unknown target" in retry_prompt

    def test_two_bad_replies_raise(self, stub_endpoint):
        stub_endpoint.enqueue_content("garbage one")
        stub_endpoint.enqueue_content("garbage two")
        with pytest.raises(ReasonerError, match="twice") as info:
            HttpReasoner(self.config(stub_endpoint)).decide(PlannerFlags(), "widget")
        assert "garbage one" in str(info.value)
        assert "garbage two" in str(info.value)

    def test_remote_decisions_drive_a_full_plan(self, graph, scene, stub_endpoint):
        for target in EXPECTED_TARGETS:
            stub_endpoint.enqueue(200, decision_body(target))
        remote = plan(
            VALVE,
            graph,
            scene,
            ct_limit=250.0,
            reasoner=HttpReasoner(self.config(stub_endpoint)),
        )
        scripted = plan(VALVE, graph, scene, ct_limit=250.0)
        assert remote.to_dict() == scripted.to_dict()
        assert len(stub_endpoint.requests) == 6


class AlwaysKnowledge:
    def decide(self, flags: PlannerFlags, product: str) -> ReasonerDecision:
        return ReasonerDecision(
            thought="ask knowledge again", target="knowledge_agent", query="more"
        )


class TestGuards:
    def test_round_cap_stops_an_unproductive_reasoner(self, graph, scene):
        with pytest.raises(PlanningError, match="did not finish within 50"):
            plan(VALVE, graph, scene, reasoner=AlwaysKnowledge())


class TestHelpers:
    @pytest.mark.parametrize(
        ("step_name", "verb"),
        [
            ("Press Fit valve seat", "press_fit"),
            ("press fit guide bushing", "press_fit"),
            ("tighten bonnet", "tighten"),
            ("Place housing on jig", "place"),
            ("inspect seal", "inspect"),
            ("mount bracket", "install"),
        ],
    )
    def test_operation_verbs(self, step_name, verb):
        assert operation_verb(step_name) == verb

    def test_label_rules(self):
        def subtask(verb, source=(), target=()):
            return Subtask(
                index=1,
                station=1,
                verb=verb,
                object_ref=None,
                object_name=None,
                tool_ref=None,
                tool_name=None,
                source=source,
                target=target,
                duration_s=None,
                labels=(),
                step_ref=None,
                graph_refs=(),
                scene_refs=(),
            )

        labelled = label_subtasks(
            [
                subtask("pick", source=("Shelf",)),
                subtask("switch_tool"),
                subtask("install"),
                subtask("place", target=("Bench",)),
            ]
        )
        assert labelled[0].labels == ("Location", "Object")
        assert labelled[1].labels == ()
        assert labelled[2].labels == ()
        assert labelled[3].labels == ("Location",)
