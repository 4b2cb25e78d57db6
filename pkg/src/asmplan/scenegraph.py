"""Scene graph of the shop floor: rooms, shelves, workstations, instances.

Physical part and tool instances point back at catalog entities in the
knowledge graph through ``attrs["catalog_ref"]``; that join is how the
planner turns "requires rubber ring tool" into "fetch it from Shelf 2 in
Room 2". Containment (``located_in`` / ``stored_on``) must form a forest
whose roots are rooms, so every placed instance has one well-defined chain
up to a room.

Updates are batch-atomic: either every operation in the batch applies and
the result validates, or the original graph is returned unchanged to the
caller (mutations are functional, as in :mod:`asmplan.kgraph`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .context import ContextBlock, FormattedContext

NODE_KINDS = frozenset({"room", "shelf", "workstation", "part_instance", "tool_instance"})
EDGE_LABELS = frozenset({"located_in", "stored_on", "adjacent_to"})
CONTAINMENT_LABELS = frozenset({"located_in", "stored_on"})

#: Kinds allowed as the destination of each containment label.
_CONTAINER_KINDS = {
    "located_in": frozenset({"room", "workstation"}),
    "stored_on": frozenset({"shelf", "workstation"}),
}


class SceneError(ValueError):
    """Raised when a scene operation would break a structural invariant."""


@dataclass
class SceneNode:
    id: str
    kind: str
    name: str
    attrs: dict[str, Any] = field(default_factory=dict)
    coords: tuple[float, float] | None = None

    def validate(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise SceneError("scene node id must be a non-empty string")
        if self.kind not in NODE_KINDS:
            raise SceneError(f"unknown scene node kind {self.kind!r} on {self.id!r}")
        if not self.name:
            raise SceneError(f"scene node {self.id!r} needs a name")
        if self.coords is not None and len(self.coords) != 2:
            raise SceneError(f"scene node {self.id!r} coords must be (x, y)")


@dataclass(frozen=True)
class SceneEdge:
    src: str
    dst: str
    label: str

    def validate(self) -> None:
        if self.label not in EDGE_LABELS:
            raise SceneError(f"unknown scene edge label {self.label!r}")
        if not self.src or not self.dst:
            raise SceneError("scene edge endpoints must be non-empty ids")
        if self.src == self.dst:
            raise SceneError(f"self-edge on {self.src!r} is not allowed")


@dataclass
class SceneGraph:
    nodes: dict[str, SceneNode] = field(default_factory=dict)
    edges: frozenset[SceneEdge] = field(default_factory=frozenset)

    def container_of(self, node_id: str) -> str | None:
        parents = [e.dst for e in self.edges if e.src == node_id and e.label in CONTAINMENT_LABELS]
        return parents[0] if parents else None

    def workstations(self) -> list[SceneNode]:
        return sorted(
            (n for n in self.nodes.values() if n.kind == "workstation"),
            key=lambda n: n.id,
        )

    def instances_of(self, catalog_ref: str) -> list[SceneNode]:
        return sorted(
            (
                n
                for n in self.nodes.values()
                if n.kind in ("part_instance", "tool_instance")
                and n.attrs.get("catalog_ref") == catalog_ref
            ),
            key=lambda n: n.id,
        )


def _validate(nodes: dict[str, SceneNode], edges: Iterable[SceneEdge]) -> None:
    for node in nodes.values():
        node.validate()
    parents: dict[str, str] = {}
    for edge in edges:
        edge.validate()
        if edge.src not in nodes:
            raise SceneError(f"edge source {edge.src!r} is not in the scene")
        if edge.dst not in nodes:
            raise SceneError(f"edge target {edge.dst!r} is not in the scene")
        if edge.label in CONTAINMENT_LABELS:
            if edge.src in parents:
                raise SceneError(
                    f"node {edge.src!r} has more than one container"
                )
            allowed = _CONTAINER_KINDS[edge.label]
            if nodes[edge.dst].kind not in allowed:
                raise SceneError(
                    f"{edge.label} target {edge.dst!r} must be one of "
                    f"{sorted(allowed)}, got {nodes[edge.dst].kind!r}"
                )
            if nodes[edge.src].kind == "room":
                raise SceneError(f"room {edge.src!r} cannot be contained")
            parents[edge.src] = edge.dst
    for start in parents:
        seen = {start}
        current: str | None = start
        while current is not None:
            current = parents.get(current)
            if current in seen:
                raise SceneError(f"containment cycle through {start!r}")
            if current is not None:
                seen.add(current)


def build_scene(nodes: Iterable[SceneNode], edges: Iterable[SceneEdge]) -> SceneGraph:
    node_map: dict[str, SceneNode] = {}
    for node in nodes:
        if node.id in node_map:
            raise SceneError(f"duplicate scene node id {node.id!r}")
        node_map[node.id] = node
    edge_set = frozenset(edges)
    _validate(node_map, edge_set)
    return SceneGraph(nodes=node_map, edges=edge_set)


def locate(sg: SceneGraph, catalog_ref: str) -> list[list[SceneNode]]:
    """Containment chains for every instance of a catalog entity.

    Each chain runs from the instance up to its root (a room when the
    instance is placed); instances are ordered by node id. An unknown
    catalog_ref simply yields an empty list.
    """

    paths: list[list[SceneNode]] = []
    for instance in sg.instances_of(catalog_ref):
        chain = [instance]
        current = sg.container_of(instance.id)
        while current is not None:
            chain.append(sg.nodes[current])
            current = sg.container_of(current)
        paths.append(chain)
    return paths


def serialize(sg: SceneGraph, focus: Sequence[str] | None = None) -> FormattedContext:
    """Render scene edges as text lines ordered by (label, src id, dst id).

    With ``focus`` only the containment chains of the focus nodes are
    rendered (the edges linking each focus node to its ancestors).
    """

    if focus is None:
        chosen = list(sg.edges)
    else:
        for node_id in focus:
            if node_id not in sg.nodes:
                raise SceneError(f"unknown focus node {node_id!r}")
        wanted: set[tuple[str, str]] = set()
        for node_id in focus:
            current = node_id
            parent = sg.container_of(current)
            while parent is not None:
                wanted.add((current, parent))
                current = parent
                parent = sg.container_of(current)
        chosen = [
            e
            for e in sg.edges
            if e.label in CONTAINMENT_LABELS and (e.src, e.dst) in wanted
        ]
    ctx = FormattedContext()
    for edge in sorted(chosen, key=lambda e: (e.label, e.src, e.dst)):
        src = sg.nodes[edge.src]
        dst = sg.nodes[edge.dst]
        ctx.blocks.append(
            ContextBlock(
                text=f"{src.name} —{edge.label}→ {dst.name}",
                provenance=(edge.src, edge.dst),
            )
        )
    return ctx


# ---------------------------------------------------------------------------
# Batch updates


@dataclass(frozen=True)
class SceneOp:
    """One update operation.

    ``op`` is add_node / remove_node / add_edge / remove_edge; ``node``
    accompanies add_node, ``node_id`` remove_node, ``edge`` the edge ops.
    """

    op: str
    node: SceneNode | None = None
    node_id: str | None = None
    edge: SceneEdge | None = None


def add_node(node: SceneNode) -> SceneOp:
    return SceneOp(op="add_node", node=node)


def remove_node(node_id: str) -> SceneOp:
    return SceneOp(op="remove_node", node_id=node_id)


def add_edge(edge: SceneEdge) -> SceneOp:
    return SceneOp(op="add_edge", edge=edge)


def remove_edge(edge: SceneEdge) -> SceneOp:
    return SceneOp(op="remove_edge", edge=edge)


def update(sg: SceneGraph, ops: Sequence[SceneOp]) -> SceneGraph:
    """Apply a batch of operations atomically and return the new scene.

    The whole batch validates against the final state: any failure raises
    :class:`SceneError` and leaves the input untouched. Removing a node
    that still has incident edges is rejected so updates stay explicit.
    """

    nodes = dict(sg.nodes)
    edges = set(sg.edges)
    for op in ops:
        if op.op == "add_node":
            if op.node is None:
                raise SceneError("add_node needs a node")
            if op.node.id in nodes:
                raise SceneError(f"node {op.node.id!r} already exists")
            nodes[op.node.id] = op.node
        elif op.op == "remove_node":
            if op.node_id is None or op.node_id not in nodes:
                raise SceneError(f"cannot remove unknown node {op.node_id!r}")
            incident = [e for e in edges if op.node_id in (e.src, e.dst)]
            if incident:
                raise SceneError(
                    f"node {op.node_id!r} still has {len(incident)} incident edges"
                )
            del nodes[op.node_id]
        elif op.op == "add_edge":
            if op.edge is None:
                raise SceneError("add_edge needs an edge")
            edges.add(op.edge)
        elif op.op == "remove_edge":
            if op.edge is None or op.edge not in edges:
                raise SceneError(f"cannot remove unknown edge {op.edge!r}")
            edges.remove(op.edge)
        else:
            raise SceneError(f"unknown scene operation {op.op!r}")
    _validate(nodes, edges)
    return SceneGraph(nodes=nodes, edges=frozenset(edges))


# ---------------------------------------------------------------------------
# Persistence


def scene_to_dict(sg: SceneGraph) -> dict[str, Any]:
    return {
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind,
                "name": n.name,
                "attrs": dict(n.attrs),
                **({"coords": list(n.coords)} if n.coords is not None else {}),
            }
            for n in sorted(sg.nodes.values(), key=lambda n: n.id)
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "label": e.label}
            for e in sorted(sg.edges, key=lambda e: (e.label, e.src, e.dst))
        ],
    }


def scene_from_dict(raw: dict[str, Any]) -> SceneGraph:
    if not isinstance(raw, dict) or "nodes" not in raw or "edges" not in raw:
        raise SceneError("scene JSON needs 'nodes' and 'edges' arrays")
    nodes = [
        SceneNode(
            id=item["id"],
            kind=item["kind"],
            name=item["name"],
            attrs=dict(item.get("attrs", {})),
            coords=tuple(item["coords"]) if item.get("coords") is not None else None,
        )
        for item in raw["nodes"]
    ]
    edges = [
        SceneEdge(src=item["src"], dst=item["dst"], label=item["label"])
        for item in raw["edges"]
    ]
    return build_scene(nodes, edges)


def save_scene(sg: SceneGraph, path: str | Path) -> None:
    payload = json.dumps(scene_to_dict(sg), indent=2, ensure_ascii=False, sort_keys=True)
    Path(path).write_text(payload + "\n", encoding="utf-8")


def load_scene(path: str | Path) -> SceneGraph:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneError(f"{path}: invalid JSON ({exc})") from exc
    return scene_from_dict(raw)
