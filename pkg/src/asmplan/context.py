"""Ordered, provenance-tagged text blocks handed to answer synthesizers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ContextBlock:
    """One line of formatted context plus the graph ids that back it."""

    text: str
    provenance: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.provenance:
            raise ValueError("context block must cite at least one source id")


@dataclass
class FormattedContext:
    """Deterministic sequence of context blocks.

    Rendering the same underlying data twice must produce byte-identical
    text, so builders are required to fix their own ordering before
    appending blocks here.
    """

    blocks: list[ContextBlock] = field(default_factory=list)

    def render(self) -> str:
        return "\n".join(block.text for block in self.blocks)

    def provenance_ids(self) -> set[str]:
        ids: set[str] = set()
        for block in self.blocks:
            ids.update(block.provenance)
        return ids

    def __len__(self) -> int:
        return len(self.blocks)
