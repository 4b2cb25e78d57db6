"""Typed knowledge graph for assembly-process data.

Entities come in five kinds (product, process, part, tool, attribute) and
relations in seven labels covering process ordering, requirements and
ownership. The graph has set semantics: entities are keyed by caller-supplied
stable ids, relations by their (src, label, dst) triple, so merging the same
data twice leaves the graph unchanged.

Mutating operations (:func:`merge_subgraph`, :func:`ingest_document`) are
functional: they validate, then return a *new* graph and never touch the
input. Readers can therefore keep querying an older snapshot while a single
writer prepares the next one.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

logger = logging.getLogger(__name__)

ENTITY_KINDS = frozenset({"product", "process", "part", "tool", "attribute"})

RELATION_LABELS = frozenset(
    {
        "first_step_of",
        "next_step",
        "requires_part",
        "requires_tool",
        "reference_part_of",
        "belongs_to_product",
        "has_attribute",
    }
)

#: Attribute values allowed on entities (lists may hold the scalar subset).
_SCALAR_TYPES = (str, int, float, bool)


class GraphError(ValueError):
    """Raised when a graph operation would break a structural invariant."""


class DocumentError(ValueError):
    """Raised when a process document fails validation before ingestion."""


def _attr_category(value: Any) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    return type(value).__name__


@dataclass
class Entity:
    """A node in the knowledge graph.

    ``attrs`` holds scalar metadata such as ``time_seconds`` on process
    entities or ``model`` strings on products.
    """

    id: str
    kind: str
    name: str
    attrs: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise GraphError("entity id must be a non-empty string")
        if self.kind not in ENTITY_KINDS:
            raise GraphError(f"unknown entity kind {self.kind!r} on {self.id!r}")
        if not isinstance(self.name, str) or not self.name.strip():
            raise GraphError(f"entity {self.id!r} needs a non-empty name")
        for key, value in self.attrs.items():
            if not isinstance(value, _SCALAR_TYPES) and not (
                isinstance(value, list)
                and all(isinstance(v, _SCALAR_TYPES) for v in value)
            ):
                raise GraphError(
                    f"entity {self.id!r} attribute {key!r} has unsupported type"
                )
        if self.kind == "process":
            seconds = self.attrs.get("time_seconds")
            if not isinstance(seconds, (int, float)) or isinstance(seconds, bool):
                raise GraphError(
                    f"process {self.id!r} needs a numeric time_seconds attribute"
                )
            if seconds < 0:
                raise GraphError(f"process {self.id!r} has negative time_seconds")


@dataclass(frozen=True)
class Relation:
    """A directed, labelled edge between two entity ids."""

    src: str
    dst: str
    label: str

    def validate(self) -> None:
        if self.label not in RELATION_LABELS:
            raise GraphError(f"unknown relation label {self.label!r}")
        if not self.src or not self.dst:
            raise GraphError("relation endpoints must be non-empty ids")


@dataclass
class KnowledgeGraph:
    """Immutable-by-convention container of entities and relations.

    Equality compares the entity map and relation set only; the adjacency
    caches are derived data. Build instances through :func:`empty_graph`,
    :func:`merge_subgraph` or :func:`graph_from_dict` so the caches stay
    consistent.
    """

    entities: dict[str, Entity] = field(default_factory=dict)
    relations: frozenset[Relation] = field(default_factory=frozenset)
    _out: dict[str, tuple[Relation, ...]] = field(
        default_factory=dict, compare=False, repr=False
    )
    _in: dict[str, tuple[Relation, ...]] = field(
        default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        out: dict[str, list[Relation]] = {}
        inc: dict[str, list[Relation]] = {}
        for rel in sorted(self.relations, key=lambda r: (r.src, r.label, r.dst)):
            out.setdefault(rel.src, []).append(rel)
            inc.setdefault(rel.dst, []).append(rel)
        object.__setattr__(self, "_out", {k: tuple(v) for k, v in out.items()})
        object.__setattr__(self, "_in", {k: tuple(v) for k, v in inc.items()})

    def out_relations(self, entity_id: str, label: str | None = None) -> list[Relation]:
        rels = self._out.get(entity_id, ())
        return [r for r in rels if label is None or r.label == label]

    def in_relations(self, entity_id: str, label: str | None = None) -> list[Relation]:
        rels = self._in.get(entity_id, ())
        return [r for r in rels if label is None or r.label == label]

    def entities_of_kind(self, kind: str) -> list[Entity]:
        return sorted(
            (e for e in self.entities.values() if e.kind == kind),
            key=lambda e: e.id,
        )

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.entities


@dataclass
class ContextSubgraph:
    """A closed fragment of one knowledge graph.

    Every relation endpoint is present in ``entities``; the constructor
    enforces this so downstream formatting never dangles.
    """

    entities: dict[str, Entity]
    relations: frozenset[Relation]

    def __post_init__(self) -> None:
        for rel in self.relations:
            if rel.src not in self.entities or rel.dst not in self.entities:
                raise GraphError(
                    f"subgraph relation {rel.src}-{rel.label}->{rel.dst} dangles"
                )

    def ids(self) -> set[str]:
        return set(self.entities)


def empty_graph() -> KnowledgeGraph:
    return KnowledgeGraph()


def merge_subgraph(
    g: KnowledgeGraph,
    new_entities: Iterable[Entity],
    new_relations: Iterable[Relation],
) -> KnowledgeGraph:
    """Return ``g`` extended with the given entities and relations.

    Merge rules:

    * an incoming entity with a fresh id is added as-is;
    * an incoming entity with an existing id must keep its kind, and its
      attribute map is merged key-wise with the incoming value winning;
      overwrites of differing same-type values are logged, while a clash
      between a number and a string on the same key is rejected;
    * relations are dropped into a set, so duplicates collapse;
    * every relation endpoint must resolve inside the merged entity set.

    The input graph is never modified; failures leave it untouched.
    """

    merged: dict[str, Entity] = dict(g.entities)
    for incoming in new_entities:
        incoming.validate()
        current = merged.get(incoming.id)
        if current is None:
            merged[incoming.id] = Entity(
                id=incoming.id,
                kind=incoming.kind,
                name=incoming.name,
                attrs=dict(incoming.attrs),
            )
            continue
        if current.kind != incoming.kind:
            raise GraphError(
                f"entity {incoming.id!r} kind clash: "
                f"{current.kind!r} vs {incoming.kind!r}"
            )
        attrs = dict(current.attrs)
        for key, value in incoming.attrs.items():
            if key in attrs and attrs[key] != value:
                old_cat, new_cat = _attr_category(attrs[key]), _attr_category(value)
                if {old_cat, new_cat} == {"number", "string"}:
                    raise GraphError(
                        f"attribute type clash on {incoming.id!r} key {key!r}: "
                        f"{old_cat} vs {new_cat}"
                    )
                logger.warning(
                    "attribute conflict on %s.%s: %r replaced by %r",
                    incoming.id,
                    key,
                    attrs[key],
                    value,
                )
            attrs[key] = value
        name = incoming.name
        if current.name != incoming.name:
            logger.warning(
                "entity %s renamed from %r to %r", incoming.id, current.name, name
            )
        merged[incoming.id] = Entity(
            id=incoming.id, kind=incoming.kind, name=name, attrs=attrs
        )

    rels = set(g.relations)
    for rel in new_relations:
        rel.validate()
        if rel.src not in merged:
            raise GraphError(f"relation source {rel.src!r} not in graph")
        if rel.dst not in merged:
            raise GraphError(f"relation target {rel.dst!r} not in graph")
        rels.add(rel)
    return KnowledgeGraph(entities=merged, relations=frozenset(rels))


def neighbors(g: KnowledgeGraph, entity_ids: Iterable[str], hops: int = 1) -> ContextSubgraph:
    """Return the ``hops``-hop neighborhood of the given ids.

    Traversal follows relations in both directions. The result is the
    induced subgraph: it contains every relation of ``g`` whose endpoints
    both landed in the neighborhood, not merely the traversed edges.
    """

    seeds = list(entity_ids)
    if not seeds:
        raise GraphError("neighbors() needs at least one seed id")
    for entity_id in seeds:
        if entity_id not in g.entities:
            raise GraphError(f"unknown entity id {entity_id!r}")
    if hops < 0:
        raise GraphError("hops must be non-negative")

    frontier = set(seeds)
    reached = set(seeds)
    for _ in range(hops):
        nxt: set[str] = set()
        for entity_id in frontier:
            for rel in g.out_relations(entity_id):
                nxt.add(rel.dst)
            for rel in g.in_relations(entity_id):
                nxt.add(rel.src)
        frontier = nxt - reached
        reached |= nxt
    induced = frozenset(
        r for r in g.relations if r.src in reached and r.dst in reached
    )
    return ContextSubgraph(
        entities={eid: g.entities[eid] for eid in reached},
        relations=induced,
    )


# ---------------------------------------------------------------------------
# Process documents


@dataclass(frozen=True)
class ProcessStep:
    order: int
    name: str
    duration_s: float
    parts: tuple[str, ...] = ()
    tools: tuple[str, ...] = ()
    reference_part: str | None = None


@dataclass(frozen=True)
class ProcessDocument:
    """One product's ordered assembly procedure.

    ``product_name`` is optional in the JSON form and defaults to the
    product id; it only exists to give the product entity a display name.
    """

    product_id: str
    steps: tuple[ProcessStep, ...]
    product_name: str | None = None

    def display_name(self) -> str:
        return self.product_name or self.product_id


def document_from_dict(raw: dict[str, Any]) -> ProcessDocument:
    """Parse and validate a process document.

    Rejects empty step lists, non-increasing order indexes, non-positive
    durations and reference parts that are not installed by an earlier or
    the same step of the document.
    """

    if not isinstance(raw, dict):
        raise DocumentError("document must be a JSON object")
    product_id = raw.get("product_id")
    if not product_id or not isinstance(product_id, str):
        raise DocumentError("document needs a non-empty string product_id")
    steps_raw = raw.get("steps")
    if not isinstance(steps_raw, list) or not steps_raw:
        raise DocumentError(f"document {product_id!r} needs a non-empty steps list")

    steps: list[ProcessStep] = []
    seen_parts: set[str] = set()
    last_order: int | None = None
    for position, step_raw in enumerate(steps_raw, start=1):
        if not isinstance(step_raw, dict):
            raise DocumentError(f"step #{position} of {product_id!r} is not an object")
        try:
            order = int(step_raw["order"])
            name = str(step_raw["name"])
            duration = float(step_raw["duration_s"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DocumentError(
                f"step #{position} of {product_id!r} is missing or has a "
                f"malformed order/name/duration_s field"
            ) from exc
        if not name:
            raise DocumentError(f"step #{position} of {product_id!r} has an empty name")
        if last_order is not None and order <= last_order:
            raise DocumentError(
                f"step order must strictly increase in {product_id!r}: "
                f"{order} follows {last_order}"
            )
        if duration <= 0:
            raise DocumentError(
                f"step {order} of {product_id!r} has non-positive duration {duration}"
            )
        parts = tuple(str(p) for p in step_raw.get("parts", []) or [])
        tools = tuple(str(t) for t in step_raw.get("tools", []) or [])
        reference = step_raw.get("reference_part")
        seen_parts.update(parts)
        if reference is not None:
            reference = str(reference)
            if reference not in seen_parts:
                raise DocumentError(
                    f"step {order} of {product_id!r} references part "
                    f"{reference!r} that no earlier step installs"
                )
        steps.append(
            ProcessStep(
                order=order,
                name=name,
                duration_s=duration,
                parts=parts,
                tools=tools,
                reference_part=reference,
            )
        )
        last_order = order
    product_name = raw.get("product_name")
    if product_name is not None:
        product_name = str(product_name)
    return ProcessDocument(
        product_id=product_id, steps=tuple(steps), product_name=product_name
    )


def load_document(path: str | Path) -> ProcessDocument:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"{path}: invalid JSON ({exc})") from exc
    return document_from_dict(raw)


def step_entity_id(product_id: str, order: int) -> str:
    return f"{product_id}/step_{order:02d}"


def catalog_display_name(catalog_id: str) -> str:
    """Derive a human name from a catalog id such as ``part/main_spring``."""

    tail = catalog_id.rsplit("/", 1)[-1]
    return tail.replace("_", " ").strip() or catalog_id


def document_subgraph(
    doc: ProcessDocument,
) -> tuple[list[Entity], list[Relation]]:
    """Translate a validated document into entities and relations.

    * one product entity named after the document;
    * one process entity per step carrying ``time_seconds`` and ``order``;
    * part and tool entities named from their catalog ids;
    * ``first_step_of`` from the product to its first step, ``next_step``
      links along the document order, ``belongs_to_product`` from each
      step, ``requires_part``/``requires_tool`` per step, and
      ``reference_part_of`` from the reference part to the step it guides.
    """

    entities: dict[str, Entity] = {}
    relations: list[Relation] = []
    entities[doc.product_id] = Entity(
        id=doc.product_id, kind="product", name=doc.display_name()
    )
    previous_step_id: str | None = None
    for index, step in enumerate(doc.steps):
        sid = step_entity_id(doc.product_id, step.order)
        entities[sid] = Entity(
            id=sid,
            kind="process",
            name=step.name,
            attrs={"time_seconds": step.duration_s, "order": step.order},
        )
        relations.append(Relation(src=sid, dst=doc.product_id, label="belongs_to_product"))
        if index == 0:
            relations.append(
                Relation(src=doc.product_id, dst=sid, label="first_step_of")
            )
        if previous_step_id is not None:
            relations.append(Relation(src=previous_step_id, dst=sid, label="next_step"))
        for part_id in step.parts:
            entities.setdefault(
                part_id,
                Entity(id=part_id, kind="part", name=catalog_display_name(part_id)),
            )
            relations.append(Relation(src=sid, dst=part_id, label="requires_part"))
        for tool_id in step.tools:
            entities.setdefault(
                tool_id,
                Entity(id=tool_id, kind="tool", name=catalog_display_name(tool_id)),
            )
            relations.append(Relation(src=sid, dst=tool_id, label="requires_tool"))
        if step.reference_part is not None:
            entities.setdefault(
                step.reference_part,
                Entity(
                    id=step.reference_part,
                    kind="part",
                    name=catalog_display_name(step.reference_part),
                ),
            )
            relations.append(
                Relation(src=step.reference_part, dst=sid, label="reference_part_of")
            )
        previous_step_id = sid
    return list(entities.values()), relations


def ingest_document(g: KnowledgeGraph, doc: ProcessDocument) -> KnowledgeGraph:
    """Merge one product's procedure into the graph and return the result."""

    entities, relations = document_subgraph(doc)
    return merge_subgraph(g, entities, relations)


# ---------------------------------------------------------------------------
# Chain traversal and integrity


def product_chain(g: KnowledgeGraph, product_id: str) -> list[Entity]:
    """Return the product's process entities in execution order.

    Walks ``next_step`` from the ``first_step_of`` target and checks the
    walk is a single acyclic path covering every process that belongs to
    the product.
    """

    if product_id not in g.entities:
        raise GraphError(f"unknown product {product_id!r}")
    if g.entities[product_id].kind != "product":
        raise GraphError(f"{product_id!r} is not a product entity")
    firsts = g.out_relations(product_id, "first_step_of")
    owned = {r.src for r in g.in_relations(product_id, "belongs_to_product")}
    if not firsts:
        if owned:
            raise GraphError(f"product {product_id!r} has steps but no first_step_of")
        return []
    if len(firsts) > 1:
        raise GraphError(f"product {product_id!r} has multiple first steps")

    chain: list[Entity] = []
    visited: set[str] = set()
    current: str | None = firsts[0].dst
    while current is not None:
        if current in visited:
            raise GraphError(f"next_step cycle detected at {current!r}")
        if current not in owned:
            raise GraphError(
                f"step {current!r} reached by walk does not belong to {product_id!r}"
            )
        visited.add(current)
        chain.append(g.entities[current])
        successors = [
            r.dst for r in g.out_relations(current, "next_step") if r.dst in owned
        ]
        if len(successors) > 1:
            raise GraphError(f"step {current!r} has multiple successors")
        current = successors[0] if successors else None
    if visited != owned:
        missing = sorted(owned - visited)
        raise GraphError(
            f"walk from first step missed processes of {product_id!r}: {missing}"
        )
    return chain


def check_integrity(g: KnowledgeGraph) -> list[str]:
    """Full-graph invariant scan; returns human-readable problem strings."""

    problems: list[str] = []
    for entity in g.entities.values():
        try:
            entity.validate()
        except GraphError as exc:
            problems.append(str(exc))
    for rel in g.relations:
        if rel.src not in g.entities:
            problems.append(f"dangling relation source {rel.src!r}")
        if rel.dst not in g.entities:
            problems.append(f"dangling relation target {rel.dst!r}")
    for product in g.entities_of_kind("product"):
        try:
            product_chain(g, product.id)
        except GraphError as exc:
            problems.append(str(exc))
    return problems


# ---------------------------------------------------------------------------
# Persistence


def graph_to_dict(g: KnowledgeGraph) -> dict[str, Any]:
    return {
        "entities": [
            {"id": e.id, "kind": e.kind, "name": e.name, "attrs": dict(e.attrs)}
            for e in sorted(g.entities.values(), key=lambda e: e.id)
        ],
        "relations": [
            {"src": r.src, "dst": r.dst, "label": r.label}
            for r in sorted(g.relations, key=lambda r: (r.src, r.label, r.dst))
        ],
    }


def graph_from_dict(raw: dict[str, Any]) -> KnowledgeGraph:
    if not isinstance(raw, dict) or "entities" not in raw or "relations" not in raw:
        raise GraphError("graph JSON needs 'entities' and 'relations' arrays")
    try:
        entities = [
            Entity(
                id=item["id"],
                kind=item["kind"],
                name=item["name"],
                attrs=dict(item.get("attrs", {})),
            )
            for item in raw["entities"]
        ]
        relations = [
            Relation(src=item["src"], dst=item["dst"], label=item["label"])
            for item in raw["relations"]
        ]
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph JSON entry: {exc!r}") from None
    return merge_subgraph(empty_graph(), entities, relations)


def save_graph(g: KnowledgeGraph, path: str | Path) -> None:
    payload = json.dumps(graph_to_dict(g), indent=2, ensure_ascii=False, sort_keys=True)
    Path(path).write_text(payload + "\n", encoding="utf-8")


def load_graph(path: str | Path) -> KnowledgeGraph:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: invalid JSON ({exc})") from exc
    return graph_from_dict(raw)
