"""The implicit reasoning graph induced by step references.

Every "#j" citation in a step's description or evidence becomes a directed
edge (j, i). Because appends reject forward and self references, edges
always point from lower to higher indices, so the graph is acyclic by
construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .core import ActionKind, Trace
from .errors import EmptyTrace, ForwardReference


class Topology(Enum):
    CHAIN = "chain"
    MERGE = "merge"
    BRANCH = "branch"
    MIXED = "mixed"
    DISCONNECTED = "disconnected"


@dataclass(frozen=True)
class StateGraph:
    """Nodes are (step index, action kind); edges are (cited, citing) pairs."""

    nodes: tuple[tuple[int, ActionKind], ...]
    edges: frozenset[tuple[int, int]]


def build_graph(trace: Trace) -> StateGraph:
    """Derive the reference graph of a trace with at least one state."""
    if not trace.states:
        raise EmptyTrace("cannot build a graph from a trace with no states")
    nodes = tuple((s.index, s.action) for s in trace.states)
    edges = set()
    for state in trace.states:
        for j in state.references():
            if j < 1 or j >= state.index:
                raise ForwardReference(
                    f"step {state.index} references #{j}, "
                    "which is not an earlier step"
                )
            edges.add((j, state.index))
    return StateGraph(nodes=nodes, edges=frozenset(edges))


def classify_topology(graph: StateGraph) -> Topology:
    """Name the shape of the reasoning graph.

    A chain is the strict sequential shape: every step after the first
    cites exactly its predecessor. Fan-in without fan-out is a merge,
    fan-out without fan-in a branch, both together mixed. What remains is
    disconnected: some step after the first hangs with nothing flowing in
    while other edges exist, or there are no edges at all between two or
    more steps. Merge wins over the hanging-step rule on purpose: steps
    that open independent lines of reasoning before a join are roots, not
    breaks.
    """
    indices = [i for i, _ in graph.nodes]
    sources: dict[int, set[int]] = {i: set() for i in indices}
    targets: dict[int, set[int]] = {i: set() for i in indices}
    for j, i in graph.edges:
        sources[i].add(j)
        targets[j].add(i)

    ordered = sorted(indices)
    is_chain = all(
        sources[i] == {previous}
        for previous, i in zip(ordered, ordered[1:])
    )
    if is_chain:
        return Topology.CHAIN

    has_merge = any(len(s) >= 2 for s in sources.values())
    has_branch = any(len(t) >= 2 for t in targets.values())
    if has_merge and has_branch:
        return Topology.MIXED
    if has_merge:
        return Topology.MERGE
    if has_branch:
        return Topology.BRANCH
    return Topology.DISCONNECTED


def to_dot(graph: StateGraph) -> str:
    """Deterministic DOT text: nodes ascending, edges in sorted order."""
    lines = ["digraph trace {"]
    for index, action in sorted(graph.nodes):
        lines.append(f'  {index} [label="S{index}: {action.value}"];')
    for j, i in sorted(graph.edges):
        lines.append(f"  {j} -> {i};")
    lines.append("}")
    return "\n".join(lines) + "\n"
