"""Exact OT on the transportation polytope via a network simplex method."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .entropic_ot import TransportPlan, round_to_polytope

__all__ = ["ExactOtSolution", "exact_ot_solve", "exact_ot_plan", "brute_force_ot"]

_OPT_TOL = 1e-11
# after this many degenerate pivots in a row, fall back to Bland's rule
_BLAND_AFTER_STALL = 50


@dataclass(frozen=True)
class ExactOtSolution:
    plan: TransportPlan
    value: float
    iterations: int
    dual_row: np.ndarray
    dual_col: np.ndarray
    basis: tuple[tuple[int, int], ...] = ()


def _northwest_corner(r: np.ndarray, c: np.ndarray):
    """Initial basic feasible solution. Returns flow plus m+n-1 basic cells."""
    m, n = r.size, c.size
    flow = np.zeros((m, n))
    basis: list[tuple[int, int]] = []
    supply = r.copy()
    demand = c.copy()
    i = j = 0
    while True:
        amount = min(supply[i], demand[j])
        flow[i, j] = amount
        basis.append((i, j))
        supply[i] -= amount
        demand[j] -= amount
        if i == m - 1 and j == n - 1:
            break
        # move down on exhausted supply, right otherwise; ties go down so the
        # degenerate zero cell keeps the basis a spanning tree
        if supply[i] <= demand[j] and i < m - 1:
            i += 1
        else:
            j += 1
    return flow, basis


def _initial_duals(basis_rows, basis_cols, cost, m, n):
    """Solve phi_i + psi_j = cost_ij over the basis tree, rooted at row 0."""
    phi = [0.0] * m
    psi = [0.0] * n
    seen_r = [False] * m
    seen_c = [False] * n
    seen_r[0] = True
    stack = [(True, 0)]
    while stack:
        is_row, idx = stack.pop()
        if is_row:
            base = phi[idx]
            for j in basis_rows[idx]:
                if not seen_c[j]:
                    seen_c[j] = True
                    psi[j] = cost[idx, j] - base
                    stack.append((False, j))
        else:
            base = psi[idx]
            for i in basis_cols[idx]:
                if not seen_r[i]:
                    seen_r[i] = True
                    phi[i] = cost[i, idx] - base
                    stack.append((True, i))
    return np.array(phi), np.array(psi)


def _rehang(start_is_row, start, anchor, basis_rows, basis_cols, parent):
    """Traverse the detached component and re-root it at `start`.

    Returns the component's row and column indices; rewrites parent pointers
    so the component hangs off `anchor` (the other endpoint of the entering
    arc) in the main tree.
    """
    rows: list[int] = []
    cols: list[int] = []
    parent[(start_is_row, start)] = anchor
    stack = [(start_is_row, start)]
    seen_r: set[int] = set()
    seen_c: set[int] = set()
    (seen_r if start_is_row else seen_c).add(start)
    while stack:
        node = stack.pop()
        is_row, idx = node
        if is_row:
            rows.append(idx)
            for j in basis_rows[idx]:
                if j not in seen_c:
                    seen_c.add(j)
                    parent[(False, j)] = node
                    stack.append((False, j))
        else:
            cols.append(idx)
            for i in basis_cols[idx]:
                if i not in seen_r:
                    seen_r.add(i)
                    parent[(True, i)] = node
                    stack.append((True, i))
    return rows, cols


def _initial_parents(basis_rows, basis_cols, m):
    """Parent pointers for the basis tree rooted at row 0."""
    parent: dict[tuple[bool, int], tuple[bool, int] | None] = {(True, 0): None}
    stack = [(True, 0)]
    while stack:
        node = stack.pop()
        is_row, idx = node
        neighbors = basis_rows[idx] if is_row else basis_cols[idx]
        for nxt in neighbors:
            key = (not is_row, nxt)
            if key not in parent:
                parent[key] = node
                stack.append(key)
    return parent


def _find_cycle(enter_i, enter_j, parent):
    """Tree path from row enter_i to column enter_j as alternating cells.

    Walks parent pointers from both endpoints to their lowest common
    ancestor. Even positions of the returned cell list lose flow when the
    entering cell (enter_i, enter_j) gains. Also returns the ancestor set of
    the row endpoint, which the caller uses to locate the detached subtree.
    """
    side_a = [(True, enter_i)]
    seen = {(True, enter_i): 0}
    node = parent[(True, enter_i)]
    while node is not None:
        seen[node] = len(side_a)
        side_a.append(node)
        node = parent[node]
    side_b = []
    node = (False, enter_j)
    while node not in seen:
        side_b.append(node)
        node = parent[node]
    path_nodes = side_a[: seen[node] + 1] + list(reversed(side_b))
    cells = []
    for a, b in zip(path_nodes[:-1], path_nodes[1:]):
        if a[0]:
            cells.append((a[1], b[1]))
        else:
            cells.append((b[1], a[1]))
    return cells, seen


def exact_ot_solve(
    cost: np.ndarray,
    r: np.ndarray,
    c: np.ndarray,
    warm_basis: tuple[tuple[int, int], ...] | None = None,
) -> ExactOtSolution:
    """Optimal transportation plan by network simplex.

    Dantzig's most-negative-reduced-cost rule drives the pivots; a Bland-style
    smallest-index rule kicks in after a run of degenerate pivots so cycling
    cannot occur. Deterministic for fixed inputs. A basis from a previous
    solve with the same marginals can be passed back in as a warm start
    (feasibility of a basis does not depend on the cost matrix).
    """
    cost = np.asarray(cost, dtype=float)
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost has non-finite entries")
    m, n = cost.shape
    if r.shape != (m,) or c.shape != (n,):
        raise ValueError("marginal shapes do not match the cost matrix")

    scale = max(float(np.abs(cost).max()), 1.0)
    opt_tol = _OPT_TOL * scale

    flow = basis = None
    if warm_basis is not None and len(warm_basis) == m + n - 1:
        try:
            basis = [tuple(cell) for cell in warm_basis]
            flow = _flow_from_basis(basis, r, c, m, n)
        except ValueError:
            flow = basis = None
    if basis is None:
        flow, basis = _northwest_corner(r, c)
    basis_rows: list[set[int]] = [set() for _ in range(m)]
    basis_cols: list[set[int]] = [set() for _ in range(n)]
    for i, j in basis:
        basis_rows[i].add(j)
        basis_cols[j].add(i)

    phi, psi = _initial_duals(basis_rows, basis_cols, cost, m, n)
    parent = _initial_parents(basis_rows, basis_cols, m)

    max_pivots = 20 * (m + n) * max(m, n) + 1000
    block = 4 * (m + n)
    candidates = np.empty(0, dtype=np.int64)
    stall = 0
    pivots = 0
    optimal = False
    while pivots < max_pivots:
        # pricing: re-price the cached candidate block against the current
        # duals and take its most negative arc; full scan when it runs dry
        # (Bland mode always rescans)
        entering = None
        if stall < _BLAND_AFTER_STALL:
            if candidates.size:
                ci, cj = candidates // n, candidates % n
                red = cost[ci, cj] - phi[ci] - psi[cj]
                keep = red < -opt_tol
                candidates = candidates[keep]
                if candidates.size:
                    red = red[keep]
                    pick = int(np.argmin(red))
                    entering = (int(candidates[pick] // n), int(candidates[pick] % n), float(red[pick]))
                    candidates = np.delete(candidates, pick)
            if entering is None:
                flat_reduced = (cost - phi[:, None] - psi[None, :]).ravel()
                negative = np.flatnonzero(flat_reduced < -opt_tol)
                if negative.size == 0:
                    optimal = True
                    break
                order = np.argsort(flat_reduced[negative], kind="stable")[:block]
                candidates = negative[order]
                continue
        else:
            reduced = cost - phi[:, None] - psi[None, :]
            negative = np.flatnonzero(reduced.ravel() < -opt_tol)
            if negative.size == 0:
                optimal = True
                break
            flat = int(negative[0])
            i, j = divmod(flat, n)
            entering = (i, j, float(reduced.flat[flat]))
        enter_i, enter_j, delta = entering
        pivots += 1

        cells, enter_i_ancestors = _find_cycle(enter_i, enter_j, parent)
        losers = cells[0::2]
        theta = min(flow[i, j] for i, j in losers)
        # smallest-index tie break among the minimizers
        leave = min(
            (cell for cell in losers if flow[cell] == theta),
            key=lambda cell: cell[0] * n + cell[1],
        )
        flow[enter_i, enter_j] += theta
        for idx, cell in enumerate(cells):
            if idx % 2 == 0:
                flow[cell] -= theta
            else:
                flow[cell] += theta
        basis_rows[leave[0]].discard(leave[1])
        basis_cols[leave[1]].discard(leave[0])
        flow[leave] = 0.0

        # The child endpoint of the leaving arc heads the detached subtree;
        # re-hang it from the entering arc and shift its duals by the
        # entering reduced cost.
        if parent[(True, leave[0])] == (False, leave[1]):
            child = (True, leave[0])
        else:
            child = (False, leave[1])
        if child in enter_i_ancestors:
            rows, cols = _rehang(
                True, enter_i, (False, enter_j), basis_rows, basis_cols, parent
            )
            shift = -delta
        else:
            rows, cols = _rehang(
                False, enter_j, (True, enter_i), basis_rows, basis_cols, parent
            )
            shift = delta
        if rows:
            phi[rows] -= shift
        if cols:
            psi[cols] += shift

        basis_rows[enter_i].add(enter_j)
        basis_cols[enter_j].add(enter_i)
        stall = stall + 1 if theta <= opt_tol else 0
    if not optimal:
        raise RuntimeError("network simplex exceeded its pivot budget")

    np.maximum(flow, 0.0, out=flow)
    if (
        np.abs(flow.sum(axis=1) - r).max() > 1e-12
        or np.abs(flow.sum(axis=0) - c).max() > 1e-12
    ):
        plan = round_to_polytope(flow, r, c)
    else:
        plan = TransportPlan(flow, r, c)
    value = float((cost * plan.matrix).sum())
    basis_out = tuple(
        (i, j) for i in range(m) for j in sorted(basis_rows[i])
    )
    return ExactOtSolution(
        plan=plan,
        value=value,
        iterations=pivots,
        dual_row=phi,
        dual_col=psi,
        basis=basis_out,
    )


def _flow_from_basis(basis, r, c, m, n):
    """Recover the unique flow carried by a spanning-tree basis.

    Peels leaves: a node of tree-degree one fixes the flow on its only arc.
    Raises if the cells do not form a spanning tree.
    """
    adj_rows = [set() for _ in range(m)]
    adj_cols = [set() for _ in range(n)]
    for i, j in basis:
        adj_rows[i].add(j)
        adj_cols[j].add(i)
    supply = np.array(r, dtype=float)
    demand = np.array(c, dtype=float)
    flow = np.zeros((m, n))
    leaves = [(True, i) for i in range(m) if len(adj_rows[i]) == 1]
    leaves += [(False, j) for j in range(n) if len(adj_cols[j]) == 1]
    processed = 0
    while leaves:
        is_row, idx = leaves.pop()
        if is_row:
            if not adj_rows[idx]:
                continue
            j = next(iter(adj_rows[idx]))
            flow[idx, j] = supply[idx]
            demand[j] -= supply[idx]
            supply[idx] = 0.0
            adj_rows[idx].discard(j)
            adj_cols[j].discard(idx)
            if len(adj_cols[j]) == 1:
                leaves.append((False, j))
        else:
            if not adj_cols[idx]:
                continue
            i = next(iter(adj_cols[idx]))
            flow[i, idx] = demand[idx]
            supply[i] -= demand[idx]
            demand[idx] = 0.0
            adj_cols[idx].discard(i)
            adj_rows[i].discard(idx)
            if len(adj_rows[i]) == 1:
                leaves.append((True, i))
        processed += 1
    if processed != m + n - 1 or np.any(flow < -1e-9):
        raise ValueError("warm basis is not a feasible spanning tree")
    np.maximum(flow, 0.0, out=flow)
    return flow


def exact_ot_plan(
    cost: np.ndarray, r: np.ndarray, c: np.ndarray
) -> tuple[TransportPlan, float]:
    """Optimal plan and value when dual certificates are not needed.

    For square problems with uniform marginals the optimum is attained at a
    permutation matrix scaled by 1/n (Birkhoff), so the assignment problem
    solver applies and is far faster than the network simplex at large n.
    """
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    if m == n and np.ptp(r) <= 1e-15 and np.ptp(c) <= 1e-15:
        from scipy.optimize import linear_sum_assignment

        rows, cols = linear_sum_assignment(cost)
        flow = np.zeros((n, n))
        flow[rows, cols] = 1.0 / n
        value = float(cost[rows, cols].sum() / n)
        return TransportPlan(flow, r, c), value
    sol = exact_ot_solve(cost, r, c)
    return sol.plan, sol.value


def brute_force_ot(cost: np.ndarray, r: np.ndarray, c: np.ndarray) -> float:
    """Enumerate scaled permutation plans; test oracle for uniform marginals.

    By Birkhoff's theorem the uniform-marginal transportation LP attains its
    optimum at a permutation matrix scaled by 1/n.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost must be square")
    if n > 7:
        raise ValueError("brute force limited to n <= 7")
    uniform = np.full(n, 1.0 / n)
    if not (np.allclose(r, uniform) and np.allclose(c, uniform)):
        raise ValueError("brute force requires uniform marginals")
    best = np.inf
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        best = min(best, cost[rows, perm].sum() / n)
    return float(best)
