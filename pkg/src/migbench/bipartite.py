"""Minimum-cost maximum-cardinality matching on a bipartite graph.

Successive shortest augmenting paths: each augmentation raises the
matching cardinality by one at the smallest possible cost increase, so the
final matching has maximum cardinality and, among those, minimum total
cost. Vertices are scanned in index order and path improvements are
strict, which makes the result deterministic for a given input.
"""

from __future__ import annotations

_INF = float("inf")


def min_cost_max_matching(n_left: int, n_right: int, edges: dict[tuple[int, int], float]) -> list[tuple[int, int]]:
    """Match left to right vertices over `edges` ({(i, j): cost}).

    Returns the matched (i, j) pairs sorted by left index. Costs must be
    non-negative.
    """
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n_left)]
    for (i, j), cost in sorted(edges.items()):
        if cost < 0:
            raise ValueError(f"negative edge cost {cost} on ({i}, {j})")
        adj[i].append((j, cost))

    match_left: list[int | None] = [None] * n_left
    match_right: list[int | None] = [None] * n_right

    while True:
        # Bellman-Ford over the residual graph from all free left vertices.
        dist_left = [_INF] * n_left
        dist_right = [_INF] * n_right
        from_right: list[int | None] = [None] * n_right
        for i in range(n_left):
            if match_left[i] is None:
                dist_left[i] = 0.0
        changed = True
        while changed:
            changed = False
            for i in range(n_left):
                if dist_left[i] == _INF:
                    continue
                for j, cost in adj[i]:
                    if match_left[i] == j:
                        continue
                    nd = dist_left[i] + cost
                    if nd < dist_right[j]:
                        dist_right[j] = nd
                        from_right[j] = i
                        changed = True
                        owner = match_right[j]
                        if owner is not None:
                            back = nd - edges[(owner, j)]
                            if back < dist_left[owner]:
                                dist_left[owner] = back
        best_j = None
        best = _INF
        for j in range(n_right):
            if match_right[j] is None and dist_right[j] < best:
                best = dist_right[j]
                best_j = j
        if best_j is None:
            break
        # Walk the augmenting path back, flipping matched edges.
        j = best_j
        while j is not None:
            i = from_right[j]
            prev_j = match_left[i]
            match_left[i] = j
            match_right[j] = i
            j = prev_j

    return sorted((i, j) for i, j in enumerate(match_left) if j is not None)
