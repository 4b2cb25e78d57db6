"""Assembly-process planning toolkit.

The package combines five pieces that together turn a natural-language
assembly request into a station-level task plan:

* :mod:`asmplan.kgraph` stores products, processes, parts and tools as a
  typed knowledge graph.
* :mod:`asmplan.retrieval` answers process questions over that graph with
  two-layer (entity + neighborhood) retrieval.
* :mod:`asmplan.scenegraph` tracks where physical part and tool instances
  live on the shop floor.
* :mod:`asmplan.linebalance` assigns process steps to workstations and
  scores the result (cycle time, load balancing rate, tool changes).
* :mod:`asmplan.orchestrator` runs the reason-act loop that stitches the
  stores and the solver into an executable, provenance-tracked plan.

The :mod:`asmplan.cli` module exposes all of it as the ``asmplan`` command.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
