"""Problem data, cost evaluation and instance files.

Conventions
-----------
Rounds are numbered ``t = 1..T``.  A trajectory stores ``y_1..y_T`` as a
``(T, d)`` array; the prehistory stores ``y_0, y_{-1}, ..., y_{1-p}`` as a
``(p, d)`` array, most recent first, which is also the layout of a memory
window handed to a :class:`~irobd.delta.Delta`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .delta import Delta, delta_from_spec
from .errors import InvalidArgument, UnboundedRatio

_SYM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HittingCost:
    """Quadratic hitting cost ``f(y) = 1/2 (y - v)^T Q (y - v)``.

    ``Q`` is the known geometry; ``v`` is the minimizer, which the learner sees
    ``k`` rounds late.  ``isotropic`` records that the cost was given as a
    scalar curvature ``m`` (``Q = m I``) so files round-trip unchanged.
    """

    Q: np.ndarray
    v: np.ndarray
    isotropic: bool = False

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim == 0:
            Q = float(Q) * np.eye(v.size)
        if v.ndim != 1 or Q.shape != (v.size, v.size):
            raise InvalidArgument(f"Q shape {Q.shape} does not match minimizer of size {v.size}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(v))):
            raise InvalidArgument("hitting cost has non-finite entries")
        if np.max(np.abs(Q - Q.T), initial=0.0) > _SYM_TOL * max(1.0, np.max(np.abs(Q))):
            raise InvalidArgument("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        if np.linalg.eigvalsh(Q)[0] <= 0:
            raise InvalidArgument("Q must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "v", v)

    @classmethod
    def isotropic_cost(cls, m: float, v) -> "HittingCost":
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return cls(m * np.eye(v.size), v, isotropic=True)

    @property
    def d(self) -> int:
        return self.v.size

    @property
    def m(self) -> float:
        """Strong-convexity constant (smallest eigenvalue of ``Q``)."""
        return float(np.linalg.eigvalsh(self.Q)[0])

    @property
    def l(self) -> float:
        """Smoothness constant (largest eigenvalue of ``Q``)."""
        return float(np.linalg.eigvalsh(self.Q)[-1])

    def geometry(self, z) -> float:
        """``h(z) = 1/2 z^T Q z``, minimized at the origin."""
        z = np.asarray(z, dtype=float)
        return 0.5 * float(z @ self.Q @ z)

    def with_minimizer(self, v) -> "HittingCost":
        return HittingCost(self.Q, v, self.isotropic)

    def __call__(self, y) -> float:
        return evaluate_hitting(self, y)

    def gradient(self, y) -> np.ndarray:
        return self.Q @ (np.asarray(y, dtype=float) - self.v)


@dataclass(frozen=True, eq=False)
class Instance:
    """A full problem: costs, switching map, delay and prehistory."""

    costs: tuple
    switching: Delta
    k: int = 0
    prehistory: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        costs = tuple(self.costs)
        if len(costs) < 1:
            raise InvalidArgument("horizon T must be at least 1")
        d = costs[0].d
        if any(c.d != d for c in costs):
            raise InvalidArgument("all hitting costs must share one dimension")
        if self.switching.d != d:
            raise InvalidArgument(f"switching map acts on dimension {self.switching.d}, costs on {d}")
        if not isinstance(self.k, (int, np.integer)) or self.k < 0:
            raise InvalidArgument("delay k must be a non-negative integer")
        p = self.switching.p
        pre = np.zeros((p, d)) if self.prehistory is None else np.asarray(self.prehistory, dtype=float)
        pre = pre.reshape(p, d) if pre.size == p * d else pre
        if pre.shape != (p, d):
            raise InvalidArgument(f"prehistory must have shape {(p, d)}, got {pre.shape}")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "prehistory", pre)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def T(self) -> int:
        return len(self.costs)

    @property
    def d(self) -> int:
        return self.costs[0].d

    @property
    def p(self) -> int:
        return self.switching.p

    @property
    def minimizers(self) -> np.ndarray:
        return np.array([c.v for c in self.costs])

    @property
    def m(self) -> float:
        return min(c.m for c in self.costs)

    @property
    def l(self) -> float:
        return max(c.l for c in self.costs)

    def with_delay(self, k: int) -> "Instance":
        return replace(self, k=k)

    def reveal_round(self, t: int) -> int:
        """Round at which the minimizer of ``f_t`` becomes known."""
        return t + self.k

    def stacked(self, points) -> np.ndarray:
        """``[y_{1-p}, ..., y_0, y_1, ..., y_T]`` as one ``(p + T, d)`` array."""
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        return np.vstack([self.prehistory[::-1], points])


@dataclass(frozen=True, eq=False)
class Trajectory:
    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument("trajectory contains non-finite points")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class CostReport:
    hitting: np.ndarray
    switching: np.ndarray
    total: float

    @property
    def hitting_total(self) -> float:
        return math.fsum(self.hitting)

    @property
    def switching_total(self) -> float:
        return math.fsum(self.switching)

    def to_dict(self) -> dict:
        return {"hitting": self.hitting.tolist(), "switching": self.switching.tolist(),
                "total": self.total}


def memory(stacked: np.ndarray, t: int, p: int) -> np.ndarray:
    """Window ``(y_{t-1}, ..., y_{t-p})`` out of a :meth:`Instance.stacked` array."""
    return stacked[t - 1:t - 1 + p][::-1]


def evaluate_hitting(cost: HittingCost, y) -> float:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (cost.d,):
        raise InvalidArgument(f"point has shape {y.shape}, expected ({cost.d},)")
    z = y - cost.v
    return max(0.5 * float(z @ cost.Q @ z), 0.0)


def evaluate_switching(sw: Delta, window) -> float:
    """Switching cost on ``(y_t, y_{t-1}, ..., y_{t-p})``, stacked as ``p + 1`` rows."""
    window = np.asarray(window, dtype=float)
    if window.ndim == 1 and sw.d == 1:
        window = window[:, None]
    if window.shape != (sw.p + 1, sw.d):
        raise InvalidArgument(f"switching window must have shape {(sw.p + 1, sw.d)}, got {window.shape}")
    r = window[0] - sw(window[1:])
    return 0.5 * float(r @ r)


def evaluate_total(inst: Instance, traj: Trajectory | np.ndarray) -> CostReport:
    points = traj.points if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    points = points.reshape(len(points), -1) if points.ndim != 2 else points
    if points.shape != (inst.T, inst.d):
        raise InvalidArgument(f"trajectory has shape {points.shape}, instance needs {(inst.T, inst.d)}")
    full = inst.stacked(points)
    p = inst.p
    H = np.array([evaluate_hitting(c, y) for c, y in zip(inst.costs, points)])
    if hasattr(inst.switching, "batch"):
        windows = np.array([memory(full, t, p) for t in range(1, inst.T + 1)])
        r = points - inst.switching.batch(windows)
        M = 0.5 * np.einsum("ij,ij->i", r, r)
    else:  # pragma: no cover - every Delta has batch
        M = np.array([evaluate_switching(inst.switching, full[t - 1:t + p][::-1])
                      for t in range(1, inst.T + 1)])
    return CostReport(H, M, math.fsum(H) + math.fsum(M))


def competitive_ratio(alg: CostReport | float, opt: CostReport | float) -> float:
    a = alg.total if isinstance(alg, CostReport) else float(alg)
    o = opt.total if isinstance(opt, CostReport) else float(opt)
    if o == 0.0:
        if a == 0.0:
            return 1.0
        raise UnboundedRatio(f"comparator cost is 0 while algorithm cost is {a!r}")
    return a / o


@dataclass(frozen=True)
class LipschitzAudit:
    observed: np.ndarray
    declared: np.ndarray

    @property
    def violations(self) -> list[int]:
        """Slots (1-based) whose observed ratio exceeds the declared constant."""
        tol = 1e-9 * np.maximum(1.0, self.declared)
        return [i + 1 for i in np.flatnonzero(self.observed > self.declared + tol)]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_lipschitz(sw: Delta, box, samples: int = 200, seed: int = 0) -> LipschitzAudit:
    """Sampled audit of the per-slot Lipschitz constants of ``sw`` on ``box``.

    ``box`` is ``(lo, hi)`` scalars or per-coordinate arrays.  For each slot
    two pair families are tried at every sampled base window: a uniformly random
    pair, and a short step along the top singular direction of the slot
    Jacobian (so linear maps report their spectral norm to rounding).
    """
    if samples < 1:
        raise InvalidArgument("samples must be at least 1")
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (sw.d,)) for b in box)
    if np.any(hi <= lo):
        raise InvalidArgument("degenerate box: every coordinate needs lo < hi")
    rng = np.random.default_rng(seed)
    width = hi - lo
    best = np.zeros(sw.p)
    for _ in range(samples):
        base = lo + width * rng.random((sw.p, sw.d))
        jacs = sw.jacobians(base)
        for i in range(sw.p):
            a = lo + width * rng.random(sw.d)
            b = lo + width * rng.random(sw.d)
            pairs = [(a, b)]
            _, _, vt = np.linalg.svd(jacs[i])
            step = 1e-4 * float(np.min(width))
            centre = base[i]
            pairs.append((centre, centre + step * vt[0]))
            for a, b in pairs:
                gap = np.linalg.norm(a - b)
                if gap == 0:
                    continue
                wa, wb = base.copy(), base.copy()
                wa[i], wb[i] = a, b
                best[i] = max(best[i], np.linalg.norm(sw(wa) - sw(wb)) / gap)
    return LipschitzAudit(best, np.asarray(sw.lipschitz, dtype=float))


# ---------------------------------------------------------------- serialization

def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise InvalidArgument("cannot serialize non-finite float")
        s = "%.17g" % x
        return s if any(ch in s for ch in ".en") else s + ".0"
    if isinstance(x, str):
        return json.dumps(x)
    if x is None:
        return "null"
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise InvalidArgument(f"cannot serialize {type(x).__name__}")


def dumps(obj) -> str:
    """JSON text with floats at 17 significant digits (exact round trip)."""
    return _fmt(obj)


def instance_to_dict(inst: Instance) -> dict:
    costs = []
    for c in inst.costs:
        if c.isotropic:
            costs.append({"m": float(c.Q[0, 0]), "v": c.v.tolist()})
        else:
            costs.append({"Q": c.Q.tolist(), "v": c.v.tolist()})
    out = {
        "T": inst.T,
        "d": inst.d,
        "k": inst.k,
        "prehistory": inst.prehistory.tolist(),
        "switching": {"kind": inst.switching.kind, "params": inst.switching.params()},
        "costs": costs,
    }
    if inst.meta:
        out["meta"] = inst.meta
    return out


def instance_from_dict(data: dict) -> Instance:
    try:
        T, d, k = int(data["T"]), int(data["d"]), int(data["k"])
        sw = data["switching"]
        delta = delta_from_spec(sw["kind"], sw.get("params", {}))
        costs = []
        for entry in data["costs"]:
            v = np.asarray(entry["v"], dtype=float).reshape(d)
            if "m" in entry:
                costs.append(HittingCost.isotropic_cost(float(entry["m"]), v))
            else:
                costs.append(HittingCost(np.asarray(entry["Q"], dtype=float), v))
    except KeyError as exc:
        raise InvalidArgument(f"instance file missing field {exc}") from None
    if len(costs) != T:
        raise InvalidArgument(f"T = {T} but {len(costs)} costs given")
    pre = data.get("prehistory")
    pre = None if pre is None else np.asarray(pre, dtype=float).reshape(delta.p, d)
    return Instance(tuple(costs), delta, k, pre, data.get("meta", {}))


def dump_instance(inst: Instance) -> str:
    return dumps(instance_to_dict(inst))


def load_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def read_instance(path) -> Instance:
    with open(path) as fh:
        return load_instance(fh.read())


def write_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_instance(inst) + "\n")


def trajectory_from(points: Sequence, label: str = "") -> Trajectory:
    return Trajectory(np.asarray(points, dtype=float), label)
