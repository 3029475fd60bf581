"""Online control to online optimization with memory and delay.

Linear systems in controllable canonical form
---------------------------------------------
``x_{t+1} = A x_t + B u_t + w_t`` with ``x_0 = 0`` and cost
``sum_{t=1}^T q_t/2 ||x_t||^2 + sum_{t=0}^{T-1} 1/2 ||u_t||^2``.
``B`` has unit rows ``e_i`` at indices ``k_1 < ... < k_d = n``.  Every other
row ``r`` of ``A`` is a shift row (a single 1 in column ``r + 1``).  With
``psi(x) = (x^{(k_1)}, ..., x^{(k_d)})`` the decision is
``y_t = psi(x_{t+1}) - zeta_t``, and the control problem becomes an
instance with memory map ``sum_i C_i y_{t-i}`` and delay ``p``.  Decision
``y_t`` (``t = 0..T-1``) is played in round ``t + 1``.

Indices in docstrings are 1-based like the math; arrays are 0-based.

Nonlinear systems
-----------------
``x_{t+1} = A x_t + g(x_t) + u_t`` with tracking cost
``1/2 (x_t - v_t)^T Q_t (x_t - v_t)``: take ``y_t = x_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithms import OnlineAlgorithm, RoundView
from .core import HittingCost, Instance, evaluate_total
from .delta import CallbackDelta, Delta, DroneDelta, LinearDelta, LinearSineDelta
from .errors import InvalidArgument, VerificationFailure


# ------------------------------------------------------------ canonical form

@dataclass(frozen=True)
class CanonicalIndices:
    k: tuple  # 1-based k_1..k_d
    n: int

    @property
    def d(self) -> int:
        return len(self.k)

    @property
    def p_i(self) -> tuple:
        prev = (0,) + self.k[:-1]
        return tuple(a - b for a, b in zip(self.k, prev))

    @property
    def p(self) -> int:
        return max(self.p_i)

    def psi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x[..., [ki - 1 for ki in self.k]]


def canonical_indices(A, B) -> CanonicalIndices:
    """Locate the input rows of a canonical pair ``(A, B)`` and validate its shape."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise InvalidArgument(f"A must be square and B must have {n} rows")
    d = B.shape[1]
    ks = []
    for r in range(n):
        row = B[r]
        nz = np.flatnonzero(row)
        if nz.size == 0:
            continue
        if nz.size != 1 or row[nz[0]] != 1.0:
            raise InvalidArgument(f"row {r + 1} of B is not a unit vector")
        if nz[0] != len(ks):
            raise InvalidArgument(f"row {r + 1} of B selects input {nz[0] + 1}, expected {len(ks) + 1}")
        ks.append(r + 1)
    if len(ks) != d:
        raise InvalidArgument(f"B has {len(ks)} unit rows for {d} inputs")
    if ks[-1] != n:
        raise InvalidArgument(f"last input row must be row {n}, got {ks[-1]}")
    for r in range(1, n + 1):
        if r in ks:
            continue
        expect = np.zeros(n)
        expect[r] = 1.0  # column r + 1 in 1-based terms
        if not np.array_equal(A[r - 1], expect):
            raise InvalidArgument(f"row {r} of A must be a shift row with a single 1 in column {r + 1}")
    return CanonicalIndices(tuple(ks), n)


def extract_Ci(A, idx: CanonicalIndices) -> np.ndarray:
    """Memory matrices ``C_i(h, j) = A(k_h, k_j + 1 - i)`` for ``i <= p_j``, else 0."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d, p = idx.d, idx.p
    C = np.zeros((p, d, d))
    for i in range(1, p + 1):
        for h in range(d):
            for j in range(d):
                if i <= idx.p_i[j]:
                    C[i - 1, h, j] = A[idx.k[h] - 1, idx.k[j] - i]
    return C


def accumulate_r(w, t: int, i: int, j: int, idx: CanonicalIndices) -> float:
    """``r(t, i, j) = sum_{tau=t+1-j}^{t-1} w_tau^{(k_i - tau + t - j)}``.

    ``w[tau]`` is the disturbance at time ``tau``; times before 0 contribute
    nothing, and asking for a time past the end of ``w`` is an error.
    ``i`` and ``j`` are 1-based.
    """
    if j < 1 or not 1 <= i <= idx.d:
        raise InvalidArgument("need j >= 1 and 1 <= i <= d")
    if j == 1:
        return 0.0
    w = np.asarray(w, dtype=float)
    total = 0.0
    for tau in range(t + 1 - j, t):
        if tau < 0:
            continue
        if tau >= len(w):
            raise InvalidArgument(f"r({t},{i},{j}) needs w_{tau} but only {len(w)} disturbances are known")
        comp = idx.k[i - 1] - tau + t - j
        total += w[tau][comp - 1]
    return total


def r_vector(w, t: int, idx: CanonicalIndices) -> np.ndarray:
    """Stack ``r(t, h, j)`` at state row ``k_h - j + 1`` (1-based), zero elsewhere."""
    R = np.zeros(idx.n)
    for h in range(1, idx.d + 1):
        for j in range(2, idx.p_i[h - 1] + 1):
            R[idx.k[h - 1] - j] = accumulate_r(w, t, h, j, idx)
    return R


# ------------------------------------------------------------- linear systems

@dataclass(frozen=True, eq=False)
class LinearControlSystem:
    A: np.ndarray
    B: np.ndarray
    w: np.ndarray  # (T, n): w_0..w_{T-1}
    q: np.ndarray  # (T,): q_1..q_T
    x0: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        B = B[:, None] if B.ndim == 1 else B
        n = A.shape[0]
        w = np.asarray(self.w, dtype=float).reshape(-1, n)
        q = np.asarray(self.q, dtype=float).ravel()
        if len(q) != len(w):
            raise InvalidArgument(f"need one weight per disturbance: {len(q)} weights, {len(w)} disturbances")
        if len(w) < 1:
            raise InvalidArgument("horizon must be at least 1")
        if np.any(q <= 0):
            raise InvalidArgument("cost weights q_t must be positive")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if np.any(x0 != 0):
            raise InvalidArgument("the reduction assumes x_0 = 0")
        for name, val in (("A", A), ("B", B), ("w", w), ("q", q), ("x0", x0)):
            object.__setattr__(self, name, val)

    @property
    def T(self) -> int:
        return len(self.w)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    def simulate(self, us) -> np.ndarray:
        """States ``x_0..x_T`` under inputs ``u_0..u_{T-1}``."""
        us = np.asarray(us, dtype=float).reshape(self.T, self.d)
        xs = np.zeros((self.T + 1, self.n))
        for t in range(self.T):
            xs[t + 1] = self.A @ xs[t] + self.B @ us[t] + self.w[t]
        return xs

    def cost(self, us) -> float:
        us = np.asarray(us, dtype=float).reshape(self.T, self.d)
        xs = self.simulate(us)
        return math.fsum(0.5 * self.q * np.sum(xs[1:] ** 2, axis=1)) + 0.5 * float(np.sum(us * us))


@dataclass(frozen=True, eq=False)
class ReductionState:
    """Accumulated disturbances and the per-round cost data of the reduction."""

    idx: CanonicalIndices
    C: np.ndarray
    zeta: np.ndarray  # (T, d): zeta_0..zeta_{T-1}
    offset: float


def zeta_sequence(sys: LinearControlSystem, idx: CanonicalIndices, C: np.ndarray, upto: int | None = None):
    """``zeta_t = psi(w_t) + A[I,:] R_t + sum_i C_i zeta_{t-i}`` for ``t = 0..upto-1``."""
    upto = sys.T if upto is None else upto
    rows = [ki - 1 for ki in idx.k]
    Z = np.zeros((upto, idx.d))
    for t in range(upto):
        z = idx.psi(sys.w[t]) + sys.A[rows] @ r_vector(sys.w, t, idx)
        for i in range(1, idx.p + 1):
            if t - i >= 0:
                z = z + C[i - 1] @ Z[t - i]
        Z[t] = z
    return Z


def _round_cost(sys, idx, zeta_s, s: int, w_known=None):
    """Curvature, minimizer and constant of the cost for decision ``y_s``.

    ``f_s(y) = 1/2 sum_i sum_{j <= p_i, s + j <= T} q_{s+j} (y_i + zeta_s_i + r(s+j, i, j))^2``.
    """
    w = sys.w if w_known is None else w_known
    d = idx.d
    diag = np.zeros(d)
    v = np.zeros(d)
    const = 0.0
    for i in range(1, d + 1):
        wsum, msum, ssum = 0.0, 0.0, 0.0
        for j in range(1, idx.p_i[i - 1] + 1):
            t = s + j
            if t > sys.T:
                break
            c = zeta_s[i - 1] + accumulate_r(w, t, i, j, idx)
            qt = sys.q[t - 1]
            wsum += qt
            msum += qt * c
            ssum += qt * c * c
        diag[i - 1] = wsum
        v[i - 1] = -msum / wsum
        const += 0.5 * (ssum - msum * msum / wsum)
    return diag, v, const


def _prehistory_constant(sys, idx) -> float:
    """Cost terms whose decision index is negative: ``1/2 q_t r(t, i, j)^2`` with ``t < j``."""
    total = 0.0
    for i in range(1, idx.d + 1):
        for j in range(2, idx.p_i[i - 1] + 1):
            for t in range(1, min(j, sys.T + 1)):
                r = accumulate_r(sys.w, t, i, j, idx)
                total += 0.5 * sys.q[t - 1] * r * r
    return total


@dataclass(frozen=True, eq=False)
class LinearRecovery:
    """Maps decisions back to inputs: ``u_t = y_t - sum_i C_i y_{t-i}``."""

    state: ReductionState

    def inputs(self, ys) -> np.ndarray:
        C, p = self.state.C, self.state.C.shape[0]
        ys = np.asarray(ys, dtype=float)
        ys = ys.reshape(len(ys), -1)
        us = ys.copy()
        for t in range(len(ys)):
            for i in range(1, p + 1):
                if t - i >= 0:
                    us[t] -= C[i - 1] @ ys[t - i]
        return us

    def decisions(self, us) -> np.ndarray:
        C, p = self.state.C, self.state.C.shape[0]
        us = np.asarray(us, dtype=float)
        us = us.reshape(len(us), -1)
        ys = np.zeros_like(us)
        for t in range(len(us)):
            ys[t] = us[t] + sum((C[i - 1] @ ys[t - i] for i in range(1, p + 1) if t - i >= 0),
                                np.zeros(us.shape[1]))
        return ys

    def states_psi(self, ys) -> np.ndarray:
        """``psi(x_{t+1}) = y_t + zeta_t``."""
        return np.asarray(ys, dtype=float).reshape(len(ys), -1) + self.state.zeta[: len(ys)]


def reduce_linear(sys: LinearControlSystem) -> tuple[Instance, LinearRecovery]:
    """Instance whose cost plus ``recovery.state.offset`` equals the control cost."""
    idx = canonical_indices(sys.A, sys.B)
    C = extract_Ci(sys.A, idx)
    Z = zeta_sequence(sys, idx, C)
    costs = []
    offset = _prehistory_constant(sys, idx)
    for s in range(sys.T):
        diag, v, const = _round_cost(sys, idx, Z[s], s)
        costs.append(HittingCost(np.diag(diag), v))
        offset += const
    inst = Instance(tuple(costs), LinearDelta(C), idx.p,
                    meta={"family": "linear_control", "offset": offset})
    return inst, LinearRecovery(ReductionState(idx, C, Z, offset))


def q_bracket(sys: LinearControlSystem) -> tuple[float, float]:
    """Smallest and largest per-coordinate weight sums ``sum_{j <= p_i} q_{t+j}``."""
    idx = canonical_indices(sys.A, sys.B)
    sums = []
    for s in range(sys.T):
        for i in range(idx.d):
            sums.append(sum(sys.q[s + j - 1] for j in range(1, idx.p_i[i] + 1) if s + j <= sys.T))
    return min(sums), max(sums)


class LinearControlLoop:
    """Run an online algorithm against the plant, one time step at a time.

    At time ``t`` the controller has seen ``x_0..x_t`` and hence
    ``w_0..w_{t-1}``.  Costs whose minimizer would need later disturbances are
    handed to the algorithm with a placeholder minimizer, which the round view
    refuses to reveal, so any attempt to use them faults.
    """

    def __init__(self, sys: LinearControlSystem):
        self.sys = sys
        self.idx = canonical_indices(sys.A, sys.B)
        self.C = extract_Ci(sys.A, self.idx)

    def _partial_instance(self, w_seen: np.ndarray, t: int) -> Instance:
        sys, idx, p = self.sys, self.idx, self.idx.p
        known = len(w_seen)
        Z = zeta_sequence(_with_w(sys, w_seen), idx, self.C, upto=known) if known else np.zeros((0, idx.d))
        costs = []
        for s in range(sys.T):
            if s <= t - p and s < known:
                diag, v, _ = _round_cost(sys, idx, Z[s], s, w_known=w_seen)
            else:
                diag, _, _ = _round_cost(sys, idx, np.zeros(idx.d), s, w_known=np.zeros((sys.T, sys.n)))
                v = np.zeros(idx.d)
            costs.append(HittingCost(np.diag(diag), v))
        return Instance(tuple(costs), LinearDelta(self.C), p)

    def run(self, alg: OnlineAlgorithm) -> tuple[np.ndarray, np.ndarray]:
        """Inputs ``u_0..u_{T-1}`` and states ``x_0..x_T``."""
        sys = self.sys
        xs = np.zeros((sys.T + 1, sys.n))
        us = np.zeros((sys.T, sys.d))
        ys = np.zeros((sys.T, sys.d))
        for t in range(sys.T):
            w_seen = sys.w[:t]  # recovered from x_1..x_t
            inst = self._partial_instance(w_seen, t)
            if t == 0:
                alg.reset(inst)
            ys[t] = alg.act(RoundView(inst, t + 1, ys))
            us[t] = ys[t] - sum((self.C[i - 1] @ ys[t - i] for i in range(1, self.idx.p + 1) if t - i >= 0),
                                np.zeros(sys.d))
            xs[t + 1] = sys.A @ xs[t] + sys.B @ us[t] + sys.w[t]
        return us, xs


def _with_w(sys: LinearControlSystem, w_seen: np.ndarray) -> LinearControlSystem:
    w = np.zeros_like(sys.w)
    w[: len(w_seen)] = w_seen
    return LinearControlSystem(sys.A, sys.B, w, sys.q)


# ---------------------------------------------------------- nonlinear systems

@dataclass(frozen=True, eq=False)
class NonlinearControlSystem:
    """``x_{t+1} = A x_t + g(x_t) + u_t`` tracking ``v_t`` with weights ``Q_t``.

    ``g`` is ``("sine", {"G": ...})`` for ``G sin(x)``, ``("drag", {"C1", "C2"})``
    for ``-(C1 + C2 |x| x)`` (with ``A = I`` this is the drone model), or a
    callable together with ``lipschitz`` for the map ``x -> A x + g(x)``.
    """

    A: np.ndarray
    g: object
    Q: np.ndarray  # (T, n, n)
    v: np.ndarray  # (T, n)
    k: int = 0
    x0: np.ndarray | None = None
    lipschitz: float | None = None
    radius: float = 10.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        v = np.asarray(self.v, dtype=float).reshape(-1, n)
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim == 1:
            Q = Q[:, None, None] * np.eye(n)
        if Q.shape != (len(v), n, n):
            raise InvalidArgument(f"Q must have shape {(len(v), n, n)}, got {Q.shape}")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(n)
        for name, val in (("A", A), ("Q", Q), ("v", v), ("x0", x0)):
            object.__setattr__(self, name, val)

    @property
    def T(self) -> int:
        return len(self.v)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def delta(self) -> Delta:
        n = self.n
        if isinstance(self.g, tuple):
            kind, prm = self.g
            if kind == "sine":
                return LinearSineDelta(self.A[None], np.asarray(prm["G"], dtype=float).reshape(1, n, n))
            if kind == "drag":
                if not np.array_equal(self.A, np.eye(n)):
                    raise InvalidArgument("drag dynamics are defined with A = I")
                return DroneDelta(float(prm["C1"]), float(prm["C2"]), self.radius, n)
            raise InvalidArgument(f"unknown nonlinearity {kind!r}")
        if callable(self.g):
            if self.lipschitz is None:
                raise InvalidArgument("a callable nonlinearity needs a declared Lipschitz constant")
            A, g = self.A, self.g
            return CallbackDelta(lambda win: A @ win[0] + np.asarray(g(win[0]), dtype=float),
                                 1, n, (float(self.lipschitz),))
        raise InvalidArgument("g must be a (kind, params) pair or a callable")

    def simulate(self, us) -> np.ndarray:
        us = np.asarray(us, dtype=float).reshape(self.T, self.n)
        sw = self.delta()
        xs = np.zeros((self.T + 1, self.n))
        xs[0] = self.x0
        for t in range(self.T):
            xs[t + 1] = sw(xs[t][None]) + us[t]
        return xs

    def cost(self, us) -> float:
        us = np.asarray(us, dtype=float).reshape(self.T, self.n)
        xs = self.simulate(us)
        track = [0.5 * (x - v) @ Q @ (x - v) for x, v, Q in zip(xs[1:], self.v, self.Q)]
        return math.fsum(track) + 0.5 * float(np.sum(us * us))


@dataclass(frozen=True, eq=False)
class NonlinearRecovery:
    sw: Delta
    x0: np.ndarray

    def inputs(self, ys) -> np.ndarray:
        ys = np.asarray(ys, dtype=float).reshape(len(ys), -1)
        prev = np.vstack([self.x0, ys[:-1]])
        return ys - self.sw.batch(prev[:, None, :])

    def decisions(self, us) -> np.ndarray:
        us = np.asarray(us, dtype=float).reshape(len(us), -1)
        ys = np.zeros_like(us)
        x = self.x0
        for t in range(len(us)):
            x = self.sw(x[None]) + us[t]
            ys[t] = x
        return ys


def reduce_nonlinear(sys: NonlinearControlSystem) -> tuple[Instance, NonlinearRecovery]:
    sw = sys.delta()
    costs = tuple(HittingCost(Q, v) for Q, v in zip(sys.Q, sys.v))
    inst = Instance(costs, sw, sys.k, sys.x0[None], meta={"family": "nonlinear_control"})
    return inst, NonlinearRecovery(sw, sys.x0)


# ----------------------------------------------------------------- roundtrip

@dataclass(frozen=True)
class EquivalenceReport:
    control_cost: float
    oco_cost: float
    state_gap: float

    @property
    def absolute(self) -> float:
        return abs(self.control_cost - self.oco_cost)

    @property
    def relative(self) -> float:
        return self.absolute / max(abs(self.control_cost), 1e-300)


def roundtrip_verify(sys, us, tol: float = 1e-8) -> EquivalenceReport:
    """Compare control cost and reduced cost for the inputs ``us``.

    Also rebuilds the states from the decisions and checks ``psi(x_{t+1}) =
    y_t + zeta_t`` (linear) or ``x_t = y_t`` (nonlinear) step by step.
    """
    us = np.asarray(us, dtype=float)
    if isinstance(sys, LinearControlSystem):
        inst, rec = reduce_linear(sys)
        ys = rec.decisions(us.reshape(sys.T, sys.d))
        xs = sys.simulate(us)
        rebuilt = rec.states_psi(ys)
        actual = rec.state.idx.psi(xs[1:])
        oco = evaluate_total(inst, ys).total + rec.state.offset
    elif isinstance(sys, NonlinearControlSystem):
        inst, rec = reduce_nonlinear(sys)
        ys = rec.decisions(us.reshape(sys.T, sys.n))
        xs = sys.simulate(us)
        rebuilt, actual = ys, xs[1:]
        oco = evaluate_total(inst, ys).total
    else:
        raise InvalidArgument("expected a LinearControlSystem or NonlinearControlSystem")
    gaps = np.max(np.abs(rebuilt - actual), axis=1)
    scale = max(1.0, float(np.max(np.abs(actual))))
    bad = np.flatnonzero(gaps > tol * scale)
    if bad.size:
        raise VerificationFailure(f"state identity fails at step {bad[0] + 1}: gap {gaps[bad[0]]:.3e}",
                                  step=int(bad[0]) + 1)
    rep = EquivalenceReport(sys.cost(us), oco, float(np.max(gaps, initial=0.0)))
    if rep.relative > tol:
        raise VerificationFailure(f"control cost {rep.control_cost!r} vs reduced cost {rep.oco_cost!r}")
    return rep


# ----------------------------------------------------------------- file io

def system_from_dict(data: dict):
    kind = data.get("kind", "linear")
    if kind == "linear":
        return LinearControlSystem(data["A"], data["B"], data["w"], data["q"], data.get("x0"))
    if kind == "nonlinear":
        g = data["g"]
        return NonlinearControlSystem(data["A"], (g["kind"], g.get("params", {})), data["Q"], data["v"],
                                      int(data.get("k", 0)), data.get("x0"),
                                      radius=float(data.get("radius", 10.0)))
    raise InvalidArgument(f"unknown system kind {kind!r}")
