"""Instance generators: lower-bound constructions, drone tracking, random families."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HittingCost, Instance, Trajectory, evaluate_total
from .delta import DroneDelta, LinearDelta, LinearSineDelta, BumpDelta
from .errors import InvalidArgument

FAMILIES = ("thm3", "remark1", "remark2", "drone", "random")


def _iso_costs(m: float, vs) -> tuple:
    return tuple(HittingCost.isotropic_cost(m, np.atleast_1d(v)) for v in vs)


# ----------------------------------------------------------- exponential gap

def gen_theorem3(m: float, alpha: float, k: int) -> Instance:
    """Scalar instance with ``v_t = alpha^(t-1)``, ``delta(y) = alpha y`` and ``T = k``.

    No minimizer is revealed before the game ends, so an online learner sees
    only ``h_t``, all minimized at the origin.
    """
    if not alpha > 1:
        raise InvalidArgument("alpha must exceed 1")
    if m <= 0 or k < 1:
        raise InvalidArgument("need m > 0 and k >= 1")
    vs = alpha ** np.arange(k, dtype=float)
    return Instance(_iso_costs(m, vs), LinearDelta([[[alpha]]]), k,
                    meta={"family": "thm3", "m": m, "alpha": alpha, "k": k})


def exponential_adversary(inst: Instance) -> Trajectory:
    """The comparator that sits on every minimizer: cost ``1/2`` from the first move."""
    return Trajectory(inst.minimizers, "adversary")


# ------------------------------------------------------------ matching bound

def gen_remark1(m: float, L: float, T: int = 50, seed: int = 0, nonlinear: bool = False,
                profile: str = "random") -> Instance:
    """Scalar instance with memory map ``(1 + L) y`` or, if ``nonlinear``, ``y + L sin(y)``.

    Both maps have Lipschitz constant ``1 + L``.  ``profile`` is ``"random"``
    (a Gaussian random walk) or ``"escalate"`` (geometric growth ``(1+L)^t``
    capped at 1e6).
    """
    if m <= 0 or L < 0 or T < 1:
        raise InvalidArgument("need m > 0, L >= 0, T >= 1")
    rng = np.random.default_rng(seed)
    if profile == "random":
        vs = np.cumsum(rng.standard_normal(T))
    elif profile == "escalate":
        vs = np.minimum((1.0 + L) ** np.arange(1, T + 1), 1e6) * rng.choice([-1.0, 1.0])
    else:
        raise InvalidArgument(f"unknown remark1 profile {profile!r}")
    sw = LinearSineDelta([[[1.0]]], [[[L]]]) if nonlinear else LinearDelta([[[1.0 + L]]])
    meta = {"family": "remark1", "m": m, "L": L, "T": T, "seed": seed,
            "nonlinear": nonlinear, "profile": profile}
    return Instance(_iso_costs(m, vs), sw, 0, meta=meta)


# ------------------------------------------------------- nonlinear blow-up

UNHALVED_COST_SCALE = 2.0
"""The construction is usually scored with unhalved squares; our costs carry ``1/2``."""


def gen_remark2(eps: float, gamma: float, n: int) -> tuple[Instance, Trajectory]:
    """Instance where an early departure exploits a steep bump in the memory map.

    ``v_t = t eps`` for ``t <= n`` and ``v_{n+1} = (n-1) eps``.  Returns the
    instance and the reference trajectory that leaves early through the bump.
    """
    sw = BumpDelta(eps, gamma, n)
    vs = [t * eps for t in range(1, n + 1)] + [(n - 1) * eps]
    inst = Instance(_iso_costs(1.0, vs), sw, 0,
                    meta={"family": "remark2", "eps": eps, "gamma": gamma, "n": n})
    ref = [t * eps for t in range(1, n)] + [n * eps + gamma * eps, (n - 1) * eps]
    return inst, Trajectory(np.array(ref)[:, None], "early-departure")


@dataclass(frozen=True)
class EarlyDepartureOutcome:
    """How an online trajectory fares against the adaptive adversary.

    ``deviation`` is the first round where the learner left ``v_t`` (``None``
    if it tracked through round ``n``); in that case the game stops there and
    the ratio is unbounded.  Otherwise ``forced_cost`` is the round ``n + 1``
    cost.  Costs are in the package's halved units.
    """

    deviation: int | None
    forced_cost: float
    total: float

    @property
    def unbounded(self) -> bool:
        return self.deviation is not None


def early_departure_outcome(inst: Instance, traj: Trajectory, tol: float = 1e-12) -> EarlyDepartureOutcome:
    n = inst.T - 1
    ys = traj.points[:, 0]
    vs = inst.minimizers[:, 0]
    rep = evaluate_total(inst, traj)
    for t in range(1, n + 1):
        if abs(ys[t - 1] - vs[t - 1]) > tol:
            return EarlyDepartureOutcome(t, math.nan, rep.total)
    forced = float(rep.hitting[n] + rep.switching[n])
    return EarlyDepartureOutcome(None, forced, rep.total)


# ------------------------------------------------------------------- drone

DRONE_PROFILES = ("hover", "constant", "sine", "random")


def drone_profile(kind: str, T: int, seed: int = 0, level: float = 1.0) -> np.ndarray:
    if kind == "hover":
        return np.zeros(T)
    if kind == "constant":
        return np.full(T, float(level))
    if kind == "sine":
        return level * np.sin(2 * np.pi * np.arange(1, T + 1) / max(T, 2))
    if kind == "random":
        rng = np.random.default_rng(seed)
        return np.clip(np.cumsum(0.3 * rng.standard_normal(T)), -3 * level, 3 * level)
    raise InvalidArgument(f"unknown speed profile {kind!r}; expected one of {DRONE_PROFILES}")


def gen_drone(C1: float = 0.1, C2: float = 0.01, T: int = 10, k: int = 0,
              speed_profile: str = "hover", seed: int = 0, radius: float | None = None,
              level: float = 1.0) -> Instance:
    """Vertical speed tracking: ``f_t = 1/2 (y - y^d_t)^2`` under gravity and drag."""
    target = drone_profile(speed_profile, T, seed, level)
    if radius is None:
        radius = max(10.0, 2.0 * float(np.max(np.abs(target), initial=0.0)))
    sw = DroneDelta(C1, C2, radius)
    meta = {"family": "drone", "C1": C1, "C2": C2, "profile": speed_profile, "seed": seed}
    return Instance(_iso_costs(1.0, target), sw, k, meta=meta)


# ------------------------------------------------------------------ random

DELTA_KINDS = ("linear", "linear_sine", "drone")


def _spd(rng, d: int, m: float, l: float) -> np.ndarray:
    if m == l:
        return m * np.eye(d)
    eig = rng.uniform(m, l, d)
    # pin the extremes so the declared m and l are attained
    eig[0] = m
    if d > 1:
        eig[-1] = l
    U, _ = np.linalg.qr(rng.standard_normal((d, d)))
    Q = U @ np.diag(eig) @ U.T
    return 0.5 * (Q + Q.T)


def gen_random(seed: int, m: float = 1.0, l: float = 2.0, T: int = 20, d: int = 1, p: int = 1,
               k: int = 0, delta_kind: str = "linear", alpha: float = 0.9,
               prehistory_scale: float = 0.0) -> Instance:
    """Random instance for property tests.

    Linear maps get ``p`` random matrices whose spectral norms sum to
    ``alpha``; ``linear_sine`` adds an elementwise ``G sin`` term splitting the
    same budget; ``drone`` uses the drag map (``p = 1``).
    """
    if not 0 < m <= l:
        raise InvalidArgument("need 0 < m <= l")
    if T < 1 or d < 1 or p < 1 or k < 0 or alpha < 0:
        raise InvalidArgument("need T, d, p >= 1, k >= 0, alpha >= 0")
    rng = np.random.default_rng(seed)
    costs = []
    v = np.zeros(d)
    for _ in range(T):
        v = v + rng.standard_normal(d)
        costs.append(HittingCost(_spd(rng, d, m, l), v.copy(), isotropic=(m == l)))
    weights = rng.dirichlet(np.ones(p)) * alpha
    mats = []
    for w in weights:
        M = rng.standard_normal((d, d))
        mats.append(M * (w / np.linalg.norm(M, 2)))
    if delta_kind == "linear":
        sw = LinearDelta(np.array(mats))
    elif delta_kind == "linear_sine":
        G = [np.diag(rng.uniform(-1, 1, d)) for _ in range(p)]
        G = [0.5 * w * g / max(np.max(np.abs(g)), 1e-12) for g, w in zip(G, weights)]
        sw = LinearSineDelta(0.5 * np.array(mats), np.array(G))
    elif delta_kind == "drone":
        if p != 1:
            raise InvalidArgument("drone memory map has p = 1")
        sw = DroneDelta(0.1, 0.01, radius=10.0 + 2 * float(np.max(np.abs([c.v for c in costs]))), dim=d)
    else:
        raise InvalidArgument(f"unknown delta kind {delta_kind!r}; expected one of {DELTA_KINDS}")
    pre = prehistory_scale * rng.standard_normal((p, d))
    meta = {"family": "random", "seed": seed, "m": m, "l": l, "delta_kind": delta_kind, "alpha": alpha}
    return Instance(tuple(costs), sw, k, pre, meta)


def generate(family: str, **params) -> Instance:
    """Dispatch by family name; ``remark2`` returns only the instance."""
    builders = {"thm3": gen_theorem3, "remark1": gen_remark1,
                "remark2": lambda **kw: gen_remark2(**kw)[0], "drone": gen_drone,
                "random": gen_random}
    if family not in builders:
        raise InvalidArgument(f"unknown family {family!r}; expected one of {FAMILIES}")
    try:
        return builders[family](**params)
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for {family}: {exc}") from None
