"""Small deterministic graph helpers (topological order, cycle finding)."""

from __future__ import annotations

import heapq
from typing import Iterable


class CycleError(ValueError):
    def __init__(self, cycle: list[str]):
        super().__init__("cycle: " + " -> ".join(cycle + cycle[:1]))
        self.cycle = cycle


def topological_order(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[str]:
    """Kahn's algorithm; ready nodes are taken in lexicographic order.

    Raises CycleError naming one cycle when the graph is not a DAG.
    """
    nodes = sorted(set(nodes))
    succ: dict[str, set[str]] = {n: set() for n in nodes}
    indeg = {n: 0 for n in nodes}
    for a, b in set(edges):
        if b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    ready = [n for n in nodes if indeg[n] == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        n = heapq.heappop(ready)
        out.append(n)
        for m in sorted(succ[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(ready, m)
    if len(out) != len(nodes):
        left = [n for n in nodes if indeg[n] > 0]
        raise CycleError(find_cycle(left, [(a, b) for a in left for b in succ[a] if b in left]))
    return out


def find_cycle(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[str]:
    """One cycle in the graph (smallest start node first), or [] if acyclic."""
    succ: dict[str, list[str]] = {}
    for a, b in edges:
        succ.setdefault(a, []).append(b)
    color: dict[str, int] = {}

    def dfs(n: str, stack: list[str]) -> list[str] | None:
        color[n] = 1
        stack.append(n)
        for m in sorted(succ.get(n, ())):
            if color.get(m) == 1:
                return stack[stack.index(m):]
            if m not in color:
                found = dfs(m, stack)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in sorted(set(nodes)):
        if n not in color:
            found = dfs(n, [])
            if found:
                return found
    return []
