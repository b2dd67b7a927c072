"""Transportation linear program and the optimal-coupling gain.

The transportation problem ``min sum t_ij c_ij`` subject to row sums
``rows``, column sums ``cols`` and ``t >= 0`` is solved with the
transportation simplex (MODI / u-v method).  Basic feasible solutions are
spanning trees of the bipartite row/column graph; a plan is stored as its
``m + n - 1`` basic cells.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import EpsilonTooLarge, InfeasibleMarginals
from .gain import GainField, _scalar_obs
from .models import as_ensemble, require_particles

REDUCED_COST_TOL = 1e-12
# Consecutive degenerate pivots tolerated before switching to Bland's rule.
DEGENERATE_STALL = 25


@dataclass(frozen=True)
class Coupling:
    rows_idx: np.ndarray
    cols_idx: np.ndarray
    values: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    objective: float
    u: np.ndarray
    v: np.ndarray
    pivots: int = 0

    @property
    def shape(self):
        return (len(self.row_marginals), len(self.col_marginals))

    @property
    def plan(self) -> np.ndarray:
        t = np.zeros(self.shape)
        np.add.at(t, (self.rows_idx, self.cols_idx), self.values)
        return t

    def transport(self, Y: np.ndarray) -> np.ndarray:
        """``sum_j t_ij Y_j`` for every row i, without forming the dense plan."""
        out = np.zeros((self.shape[0],) + Y.shape[1:])
        np.add.at(out, self.rows_idx, self.values[:, None] * Y[self.cols_idx])
        return out

    def write_csv(self, path, dense: bool = False):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["i", "j", "t_ij"])
            if dense:
                plan = self.plan
                for i, j in np.ndindex(plan.shape):
                    writer.writerow([i, j, repr(float(plan[i, j]))])
            else:
                order = np.lexsort((self.cols_idx, self.rows_idx))
                for k in order:
                    writer.writerow([int(self.rows_idx[k]), int(self.cols_idx[k]), repr(float(self.values[k]))])


def _check_marginals(rows, cols):
    rows = np.asarray(rows, dtype=float).ravel()
    cols = np.asarray(cols, dtype=float).ravel()
    if np.any(rows < 0) or np.any(cols < 0):
        raise InfeasibleMarginals("marginals must be nonnegative")
    if abs(rows.sum() - cols.sum()) > 1e-12 * max(1.0, rows.sum()):
        raise InfeasibleMarginals(
            f"row total {rows.sum():.15g} differs from column total {cols.sum():.15g}"
        )
    return rows, cols


def northwest_corner(rows, cols, row_order=None, col_order=None):
    """Staircase basic feasible solution over the given row/column orders.

    Cell amounts are computed from cumulative sums, so the result is exactly
    the monotone coupling of the two orderings.  Degenerate steps keep a
    zero-valued basic cell so the basis remains a spanning tree.
    """
    m, n = len(rows), len(cols)
    ro = np.arange(m) if row_order is None else np.asarray(row_order)
    co = np.arange(n) if col_order is None else np.asarray(col_order)
    R = np.cumsum(rows[ro])
    C = np.cumsum(cols[co])
    C[-1] = R[-1]  # absorb the <= 1e-12 total mismatch in the last cell
    cells_i, cells_j, vals = [], [], []
    i = j = 0
    prev = 0.0
    while True:
        hi = min(R[i], C[j])
        cells_i.append(ro[i])
        cells_j.append(co[j])
        vals.append(max(hi - prev, 0.0))
        prev = max(prev, hi)
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and R[i] <= C[j]):
            i += 1
        else:
            j += 1
    return np.array(cells_i), np.array(cells_j), np.array(vals)


def tree_duals(m, n, rows_idx, cols_idx, cost_of):
    """Dual potentials with ``u_i + v_j = c_ij`` on basic cells and ``u_0 = 0``.

    ``cost_of(i, j)`` returns a single cost entry."""
    row_adj = [[] for _ in range(m)]
    col_adj = [[] for _ in range(n)]
    for i, j in zip(rows_idx, cols_idx):
        row_adj[i].append(j)
        col_adj[j].append(i)
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    queue = deque([(0, True)])
    while queue:
        node, is_row = queue.popleft()
        if is_row:
            for j in row_adj[node]:
                if np.isnan(v[j]):
                    v[j] = cost_of(node, j) - u[node]
                    queue.append((j, False))
        else:
            for i in col_adj[node]:
                if np.isnan(u[i]):
                    u[i] = cost_of(i, node) - v[node]
                    queue.append((i, True))
    if np.isnan(u).any() or np.isnan(v).any():
        raise RuntimeError("basic cells do not span all rows and columns")
    return u, v


class _Basis:
    """Spanning-tree basis with adjacency sets for cycle search."""

    def __init__(self, m, n, rows_idx, cols_idx, vals):
        self.m, self.n = m, n
        self.value = {}
        self.row_adj = [set() for _ in range(m)]
        self.col_adj = [set() for _ in range(n)]
        for i, j, x in zip(rows_idx, cols_idx, vals):
            self.add(int(i), int(j), float(x))

    def add(self, i, j, x):
        self.value[(i, j)] = x
        self.row_adj[i].add(j)
        self.col_adj[j].add(i)

    def remove(self, i, j):
        del self.value[(i, j)]
        self.row_adj[i].discard(j)
        self.col_adj[j].discard(i)

    def duals(self, cost):
        cells = list(self.value)
        return tree_duals(
            self.m, self.n, [c[0] for c in cells], [c[1] for c in cells], lambda i, j: cost[i, j]
        )

    def path(self, j_start, i_end):
        """Tree path from column node ``j_start`` to row node ``i_end`` as a list of cells."""
        parent = {("c", j_start): None}
        queue = deque([("c", j_start)])
        target = ("r", i_end)
        while queue:
            node = queue.popleft()
            if node == target:
                break
            kind, k = node
            if kind == "c":
                nbrs = (("r", i) for i in self.col_adj[k])
            else:
                nbrs = (("c", j) for j in self.row_adj[k])
            for nb in nbrs:
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        cells = []
        node = target
        while parent[node] is not None:
            prev = parent[node]
            if node[0] == "r":
                cells.append((node[1], prev[1]))
            else:
                cells.append((prev[1], node[1]))
            node = prev
        cells.reverse()
        return cells


def solve_transportation(
    cost,
    rows,
    cols,
    *,
    row_order=None,
    col_order=None,
    max_pivots: int | None = None,
) -> Coupling:
    """Optimal basic feasible solution of the transportation problem.

    Starts from the north-west corner rule over ``row_order``/``col_order``
    and pivots on the most negative reduced cost, switching to Bland's rule
    (first negative reduced cost in row-major order, smallest leaving cell)
    after a run of degenerate pivots so the method cannot cycle.
    """
    cost = np.asarray(cost, dtype=float)
    rows, cols = _check_marginals(rows, cols)
    m, n = len(rows), len(cols)
    if cost.shape != (m, n):
        raise ValueError(f"cost shape {cost.shape} does not match marginals ({m}, {n})")
    basis = _Basis(m, n, *northwest_corner(rows, cols, row_order, col_order))
    if max_pivots is None:
        max_pivots = 50 * (m + n) ** 2

    pivots = 0
    stall = 0
    while True:
        u, v = basis.duals(cost)
        reduced = cost - u[:, None] - v[None, :]
        for i, j in basis.value:
            reduced[i, j] = 0.0
        scale = max(1.0, np.abs(cost).max())
        if stall >= DEGENERATE_STALL:
            neg = np.flatnonzero(reduced.ravel() < -REDUCED_COST_TOL * scale)
            if neg.size == 0:
                break
            flat = neg[0]
        else:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -REDUCED_COST_TOL * scale:
                break
        if pivots >= max_pivots:
            raise RuntimeError(f"transportation simplex exceeded {max_pivots} pivots")
        ei, ej = divmod(int(flat), n)
        cycle = basis.path(ej, ei)
        minus = cycle[0::2]
        plus = cycle[1::2]
        theta = min(basis.value[c] for c in minus)
        leaving = min(c for c in minus if basis.value[c] <= theta)
        for c in minus:
            basis.value[c] -= theta
        for c in plus:
            basis.value[c] += theta
        basis.remove(*leaving)
        basis.add(ei, ej, theta)
        pivots += 1
        stall = stall + 1 if theta == 0.0 else 0

    cells = list(basis.value.items())
    ri = np.array([c[0][0] for c in cells])
    ci = np.array([c[0][1] for c in cells])
    vals = np.array([max(c[1], 0.0) for c in cells])
    objective = float(vals @ cost[ri, ci])
    return Coupling(ri, ci, vals, rows, cols, objective, u, v, pivots)


def monotone_coupling(x, rows, cols) -> Coupling:
    """Optimal coupling for points on a line under squared-distance cost.

    For ``c_ij = (x_i - x_j)^2`` the cost is a Monge array once both sides are
    sorted, so the north-west corner rule on sorted order is optimal; no
    pivots are needed and the dense cost matrix is never formed.
    """
    x = np.asarray(x, dtype=float).ravel()
    rows, cols = _check_marginals(rows, cols)
    order = np.argsort(x, kind="stable")
    ri, ci, vals = northwest_corner(rows, cols, order, order)
    u, v = tree_duals(len(rows), len(cols), ri, ci, lambda i, j: (x[i] - x[j]) ** 2)
    objective = float(vals @ (x[ri] - x[ci]) ** 2)
    return Coupling(ri, ci, vals, rows, cols, objective, u, v, 0)


def squared_distance_cost(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    return d2


def optimality_report(coupling: Coupling, cost) -> dict:
    """Independent feasibility and complementary-slackness measurements."""
    cost = np.asarray(cost, dtype=float)
    plan = coupling.plan
    reduced = cost - coupling.u[:, None] - coupling.v[None, :]
    basic = reduced[coupling.rows_idx, coupling.cols_idx]
    return {
        "row_violation": float(np.abs(plan.sum(axis=1) - coupling.row_marginals).max()),
        "col_violation": float(np.abs(plan.sum(axis=0) - coupling.col_marginals).max()),
        "min_plan": float(plan.min()),
        "min_reduced_cost": float(reduced.min()),
        "max_basic_reduced_cost": float(np.abs(basic).max()),
        "objective_gap": float(abs((plan * cost).sum() - coupling.objective)),
    }


def perturbed_marginals(h, epsilon: float) -> np.ndarray:
    """Column marginals ``(1 + epsilon (h_j - h_mean)) / N``."""
    h = np.asarray(h, dtype=float).ravel()
    dh = h - h.mean()
    bound = epsilon_bound(dh)
    if not epsilon < bound:
        raise EpsilonTooLarge(epsilon, bound)
    return (1.0 + epsilon * dh) / h.size


def epsilon_bound(dh) -> float:
    top = np.abs(dh).max() if np.size(dh) else 0.0
    return np.inf if top == 0 else 1.0 / top


def coupling_gain(ens, h_vals, epsilon: float = 0.1, *, method: str = "auto", return_coupling=False):
    """Optimal-coupling gain ``K^i = sum_j a_ij X^j`` with ``a_ij = (N t_ij - delta_ij) / epsilon``.

    ``method`` is ``"monotone"`` (d = 1 only), ``"simplex"`` or ``"auto"``.
    """
    ens = as_ensemble(ens)
    require_particles(ens)
    n = ens.n
    X = ens.states
    h = _scalar_obs(h_vals, n, "coupling")
    cols = perturbed_marginals(h, epsilon)
    rows = np.full(n, 1.0 / n)
    if method == "auto":
        method = "monotone" if ens.dim == 1 else "simplex"
    if method == "monotone":
        if ens.dim != 1:
            raise ValueError("monotone coupling requires d = 1")
        coupling = monotone_coupling(X[:, 0], rows, cols)
    elif method == "simplex":
        # Start from the staircase along the leading principal axis.
        dev = X - X.mean(axis=0)
        axis = np.linalg.svd(dev, full_matrices=False)[2][0] if ens.dim > 1 else np.ones(1)
        order = np.argsort(dev @ axis, kind="stable")
        coupling = solve_transportation(squared_distance_cost(X), rows, cols, row_order=order, col_order=order)
    else:
        raise ValueError(f"unknown coupling method {method!r}")
    K = (n * coupling.transport(X) - X) / epsilon
    gain = GainField(K[:, :, None], f"coupling:{epsilon:g}")
    return (gain, coupling) if return_coupling else gain


def coupling_coefficients(coupling: Coupling, epsilon: float) -> np.ndarray:
    """Dense ``a_ij = (N t_ij - delta_ij) / epsilon``."""
    n = coupling.shape[0]
    return (n * coupling.plan - np.eye(n)) / epsilon
