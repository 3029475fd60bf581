"""Offline solvers for the full-horizon objective.

Three independent routes to ``cost(OPT)``:

* :func:`solve_offline_convex` solves the normal equations when the memory map
  is linear (the joint problem is then a strongly convex quadratic).
* :func:`solve_offline_dp` is a brute-force dynamic program on a 1-D grid.
* :func:`solve_offline_multistart` runs L-BFGS from several seed trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import spsolve

from .core import CostReport, Instance, Trajectory, evaluate_total, memory
from .errors import InvalidArgument, SolverFailure, Unsupported
from .prox import DEFAULT, SolverConfig

MULTISTART_NOTE = "upper bound on ratio denominator uncertainty"


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    cells: int = 2001

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidArgument("grid needs lo < hi")
        if self.cells < 3:
            raise InvalidArgument("grid needs at least 3 cells")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / (self.cells - 1)

    def points(self, anchors=()) -> np.ndarray:
        """Uniform grid merged with any in-bracket ``anchors`` (e.g. 0, the v_t)."""
        pts = np.linspace(self.lo, self.hi, self.cells)
        anchors = np.asarray(anchors, dtype=float).ravel()
        anchors = anchors[(anchors >= self.lo) & (anchors <= self.hi)]
        return np.union1d(pts, anchors)


@dataclass(frozen=True)
class OfflineResult:
    trajectory: Trajectory
    report: CostReport
    method: str
    note: str = ""

    @property
    def cost(self) -> float:
        return self.report.total


# ------------------------------------------------------------------ objective

def objective(inst: Instance, Y: np.ndarray) -> float:
    return evaluate_total(inst, Y).total


def objective_grad(inst: Instance, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """Joint objective and its gradient with respect to ``y_1..y_T``."""
    Y = np.asarray(Y, dtype=float).reshape(inst.T, inst.d)
    sw, p, T = inst.switching, inst.p, inst.T
    full = inst.stacked(Y)
    windows = np.array([memory(full, t, p) for t in range(1, T + 1)])
    R = Y - sw.batch(windows)
    grad = R.copy()
    val = 0.5 * float(np.sum(R * R))
    for t, c in enumerate(inst.costs):
        z = Y[t] - c.v
        gz = c.Q @ z
        val += 0.5 * float(z @ gz)
        grad[t] += gz
    for t in range(1, T + 1):
        J = sw.jacobians(windows[t - 1])
        for i in range(1, p + 1):
            s = t - i  # y_s sits in slot i of round t's window
            if s >= 1:
                grad[s - 1] -= J[i - 1].T @ R[t - 1]
    return val, grad


def stationarity(inst: Instance, Y) -> float:
    return float(np.linalg.norm(objective_grad(inst, Y)[1]))


# -------------------------------------------------------------------- convex

def _linear_system(inst: Instance):
    """Sparse ``(Qblk + D^T D, Qblk V + D^T b)`` for a linear memory map."""
    sw = inst.switching
    if not sw.is_linear:
        raise Unsupported("convex solve needs a linear memory map")
    T, d, p = inst.T, inst.d, inst.p
    C = sw.C
    n = T * d
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    for t in range(1, T + 1):
        blk = slice((t - 1) * d, t * d)
        for a in range(d):
            rows.append((t - 1) * d + a)
            cols.append((t - 1) * d + a)
            vals.append(1.0)
        for i in range(1, p + 1):
            s = t - i
            if s >= 1:
                r, c = np.nonzero(C[i - 1])
                rows.extend((t - 1) * d + r)
                cols.extend((s - 1) * d + c)
                vals.extend(-C[i - 1][r, c])
            else:
                b[blk] += C[i - 1] @ inst.prehistory[-s]
    D = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    Qblk = sp.block_diag([c.Q for c in inst.costs], format="csr")
    V = np.concatenate([c.v for c in inst.costs])
    return (Qblk + D.T @ D).tocsc(), Qblk @ V + D.T @ b


def solve_offline_convex(inst: Instance, cfg: SolverConfig = DEFAULT) -> Trajectory:
    """Exact minimizer of the joint objective when the memory map is linear."""
    H, rhs = _linear_system(inst)
    y = spsolve(H, rhs) if H.shape[0] > 1 else rhs / H.toarray()[0, 0]
    y = np.atleast_1d(y)
    # one step of iterative refinement
    y = y + np.atleast_1d(spsolve(H, rhs - H @ y) if H.shape[0] > 1 else 0.0)
    Y = y.reshape(inst.T, inst.d)
    g = stationarity(inst, Y)
    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    if not np.all(np.isfinite(Y)) or g > max(cfg.grad_tol * math.sqrt(inst.T * inst.d), 1e-11 * scale):
        raise SolverFailure(f"convex offline solve left gradient norm {g:.3e}", last_iterate=Y, residual=g)
    return Trajectory(Y, "offline-convex")


# ------------------------------------------------------------------------ DP

def auto_grid(inst: Instance, cells: int = 2001) -> GridSpec:
    v = np.concatenate([inst.minimizers.ravel(), inst.prehistory.ravel()])
    rng = float(np.max(v) - np.min(v))
    r = rng if rng > 0 else 1.0
    if cells % 2 == 0:
        cells += 1
    return GridSpec(float(np.min(v)) - 3 * r, float(np.max(v)) + 3 * r, cells)


def _dp_budget(n_points: int, p: int, T: int, max_bytes: float, max_ops: float):
    states = n_points ** (p - 1) if p >= 1 else 1
    table = 8.0 * T * n_points ** p * (1 if p == 1 else 1)
    ops = float(T) * n_points ** (p + 1)
    if table > max_bytes or ops > max_ops:
        raise Unsupported(
            f"DP refused: needs about {table / 2**20:.1f} MiB of tables and {ops:.2e} transitions "
            f"(limits {max_bytes / 2**20:.0f} MiB, {max_ops:.1e}); use a coarser grid or multistart")
    return states


def solve_offline_dp(inst: Instance, grid: GridSpec | None = None,
                     max_bytes: float = 2.0 * 2**30, max_ops: float = 2e10,
                     chunk: int = 512) -> Trajectory:
    """Grid dynamic program over ``(y_{t-1}, ..., y_{t-p})`` for scalar problems.

    The grid is uniform on ``[lo, hi]`` plus the anchors 0, every ``v_t`` and
    the prehistory, so those points are represented exactly.
    """
    if inst.d != 1:
        raise Unsupported("DP oracle is one-dimensional")
    if inst.p > 2:
        raise Unsupported("DP oracle supports memory p <= 2; use multistart")
    grid = grid or auto_grid(inst)
    g = grid.points(np.concatenate([[0.0], inst.minimizers.ravel(), inst.prehistory.ravel()]))
    N, T, p = g.size, inst.T, inst.p
    _dp_budget(N, p, T, max_bytes, max_ops)
    sw = inst.switching
    hit = np.array([0.5 * c.Q[0, 0] * (g - c.v[0]) ** 2 for c in inst.costs])  # (T, N)
    pre = inst.prehistory[:, 0]

    def delta_of(*slots):
        """delta on broadcast slot arrays (slot 1 first)."""
        shape = np.broadcast(*slots).shape
        win = np.stack([np.broadcast_to(s, shape).ravel() for s in slots], axis=1)[:, :, None]
        return sw.batch(win).reshape(shape)

    if p == 1:
        V = hit[0] + 0.5 * (g - delta_of(np.array([pre[0]]))) ** 2
        back = np.zeros((T, N), dtype=np.int64)
        dg = delta_of(g)  # delta at each previous grid point
        for t in range(1, T):
            nxt = np.empty(N)
            for a0 in range(0, N, chunk):
                a = g[a0:a0 + chunk, None]
                tot = V[None, :] + 0.5 * (a - dg[None, :]) ** 2
                j = np.argmin(tot, axis=1)
                back[t, a0:a0 + chunk] = j
                nxt[a0:a0 + chunk] = tot[np.arange(len(j)), j]
            V = nxt + hit[t]
        idx = [int(np.argmin(V))]
        for t in range(T - 1, 0, -1):
            idx.append(int(back[t, idx[-1]]))
        Y = g[np.array(idx[::-1])]
        return Trajectory(Y[:, None], "offline-dp")

    # p == 2: value over (y_t, y_{t-1}) pairs
    y0, ym1 = pre[0], pre[1]
    V1 = hit[0] + 0.5 * (g - delta_of(np.array([y0]), np.array([ym1]))) ** 2  # over y_1
    if T == 1:
        return Trajectory(np.array([[g[int(np.argmin(V1))]]]), "offline-dp")
    # V[a, b]: best cost with y_t = g[a], y_{t-1} = g[b]
    V = hit[1][:, None] + V1[None, :] + 0.5 * (g[:, None] - delta_of(g[None, :], np.array([y0]))) ** 2
    backs = []
    for t in range(2, T):
        nxt = np.empty((N, N))
        bk = np.empty((N, N), dtype=np.int32)
        for b in range(N):
            # new y_t = a, y_{t-1} = b, y_{t-2} = c
            dv = delta_of(np.array([g[b]]), g)  # over c
            tot = V[b][None, :] + 0.5 * (g[:, None] - dv[None, :]) ** 2
            c = np.argmin(tot, axis=1)
            bk[:, b] = c
            nxt[:, b] = tot[np.arange(N), c]
        V = nxt + hit[t][:, None]
        backs.append(bk)
    a, b = np.unravel_index(int(np.argmin(V)), V.shape)
    idx = [a, b]
    for bk in reversed(backs):
        c = int(bk[idx[-2], idx[-1]])
        idx.append(c)
    Y = g[np.array(idx[::-1])]
    return Trajectory(Y[:, None], "offline-dp")


# ---------------------------------------------------------------- multistart

def _rollout(inst: Instance) -> np.ndarray:
    full = inst.stacked(np.zeros((0, inst.d)))
    for t in range(1, inst.T + 1):
        full = np.vstack([full, inst.switching(memory(full, t, inst.p))])
    return full[inst.p:]


def polish(inst: Instance, Y0, cfg: SolverConfig = DEFAULT) -> np.ndarray:
    """Local L-BFGS refinement of a trajectory; never returns something worse."""
    Y0 = np.asarray(Y0, dtype=float).reshape(inst.T, inst.d)

    def fg(x):
        v, gr = objective_grad(inst, x)
        return v, gr.ravel()

    res = minimize(fg, Y0.ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": cfg.max_iters, "gtol": cfg.grad_tol, "ftol": 1e-15,
                            "maxcor": 20})
    Y = res.x.reshape(inst.T, inst.d)
    if not np.all(np.isfinite(Y)) or objective(inst, Y) > objective(inst, Y0):
        return Y0
    return Y


def solve_offline_multistart(inst: Instance, restarts: int = 32, seed: int = 0,
                             cfg: SolverConfig = DEFAULT, seeds=()) -> Trajectory:
    """Best local optimum over seeded L-BFGS runs.

    Seeds, in order: any caller-supplied trajectories, the ``v`` sequence,
    the free ``delta`` rollout, then random perturbations of ``v``.  The seeds
    themselves are candidates too, so the result is never worse than any of
    them; the lowest index wins ties.
    """
    if restarts < 1:
        raise InvalidArgument("restarts must be at least 1")
    rng = np.random.default_rng(seed)
    V = inst.minimizers
    scale = max(1.0, float(np.std(V)))
    starts = [np.asarray(s, dtype=float).reshape(inst.T, inst.d) for s in seeds]
    starts += [V.copy(), _rollout(inst)]
    while len(starts) < len(seeds) + restarts:
        starts.append(V + scale * rng.standard_normal(V.shape))
    starts = starts[: len(seeds) + max(restarts, 1)]
    best, best_cost, failures = None, math.inf, 0
    for s in starts:
        cands = [s]
        try:
            cands.append(polish(inst, s, cfg))
        except (FloatingPointError, ValueError):
            failures += 1
        for c in cands:
            if not np.all(np.isfinite(c)):
                continue
            cost = objective(inst, c)
            if cost < best_cost:
                best, best_cost = c, cost
    if best is None:
        raise SolverFailure("every multistart run failed", residual=math.inf)
    return Trajectory(best, "offline-multistart")


# ---------------------------------------------------------------- dispatcher

P2_CELLS = 301

def offline_optimum(inst: Instance, cfg: SolverConfig = DEFAULT, cells: int = 2001,
                    restarts: int = 32, seed: int = 0, seeds=()) -> OfflineResult:
    """``cost(OPT)`` by the most exact route available.

    Linear memory maps use the convex solve; scalar nonlinear problems use the
    DP followed by a local polish; anything else falls back to multistart and
    is labelled as an upper estimate of the optimum.  With two-step memory the
    DP table grows with the cube of the grid, so its grid is capped at
    ``P2_CELLS`` and the polish supplies the last digits; if the DP still
    exceeds its budget the multistart route is taken.
    """
    if inst.switching.is_linear:
        traj = solve_offline_convex(inst, cfg)
        return OfflineResult(traj, evaluate_total(inst, traj), "convex")
    refused = ""
    if inst.d == 1 and inst.p <= 2:
        try:
            dp = solve_offline_dp(inst, auto_grid(inst, cells if inst.p == 1 else min(cells, P2_CELLS)))
        except Unsupported as exc:
            refused = f"; {exc}"
        else:
            cands = [dp.points] + [np.asarray(s, dtype=float).reshape(inst.T, 1) for s in seeds]
            best = min((polish(inst, c, cfg) for c in cands), key=lambda Y: objective(inst, Y))
            traj = Trajectory(best, "offline-dp")
            return OfflineResult(traj, evaluate_total(inst, traj), "dp")
    traj = solve_offline_multistart(inst, restarts, seed, cfg, seeds)
    return OfflineResult(traj, evaluate_total(inst, traj), "multistart", MULTISTART_NOTE + refused)
