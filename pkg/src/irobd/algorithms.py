"""Online algorithms played under the delayed-feedback protocol.

Every algorithm sees the problem through a :class:`RoundView`, which reveals
geometries ``h_s`` for ``s <= t`` and minimizers ``v_s`` only for
``s <= t - k``.  Reading anything else raises :class:`ProtocolViolation`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HittingCost, Instance, Trajectory, memory
from .errors import InvalidArgument, ProtocolViolation, SolverFailure
from .prox import DEFAULT, SolverConfig, estimate_minimizer, robd_minimize


class RoundView:
    """What the learner is allowed to know at round ``t``."""

    def __init__(self, inst: Instance, t: int, decisions: np.ndarray):
        self._inst = inst
        self.t = t
        self.k = inst.k
        self.T = inst.T
        self.d = inst.d
        self.switching = inst.switching
        self.prehistory = inst.prehistory
        self._decisions = decisions

    def _in_horizon(self, s: int) -> None:
        if not 1 <= s <= self.T:
            raise InvalidArgument(f"round {s} outside 1..{self.T}")

    def geometry(self, s: int) -> HittingCost:
        """``h_s`` as a cost minimized at the origin; legal for ``s <= t``."""
        self._in_horizon(s)
        if s > self.t:
            raise ProtocolViolation(f"round {self.t}: geometry of round {s} is not yet known")
        c = self._inst.costs[s - 1]
        return HittingCost(c.Q, np.zeros(self.d), c.isotropic)

    def revealed(self, s: int) -> bool:
        return 1 <= s <= self.t - self.k

    def hitting(self, s: int) -> HittingCost:
        """Full ``f_s``; legal once ``v_s`` is revealed (``s <= t - k``)."""
        self._in_horizon(s)
        if not self.revealed(s):
            raise ProtocolViolation(
                f"round {self.t}: minimizer of round {s} is revealed only at round {s + self.k}")
        return self._inst.costs[s - 1]

    def minimizer(self, s: int) -> np.ndarray:
        return self.hitting(s).v

    def past_decisions(self) -> np.ndarray:
        """The learner's own ``y_1..y_{t-1}``."""
        return self._decisions[: self.t - 1].copy()


class OnlineAlgorithm:
    label = "online"

    def reset(self, inst: Instance) -> None:
        pass

    def act(self, view: RoundView) -> np.ndarray:
        raise NotImplementedError


def play(inst: Instance, alg: OnlineAlgorithm) -> Trajectory:
    """Run ``alg`` through rounds ``1..T``."""
    alg.reset(inst)
    ys = np.zeros((inst.T, inst.d))
    for t in range(1, inst.T + 1):
        try:
            ys[t - 1] = alg.act(RoundView(inst, t, ys))
        except SolverFailure as exc:
            if exc.step is None:
                exc.step = t
            raise
    return Trajectory(ys, alg.label)


class ROBD(OnlineAlgorithm):
    label = "robd"

    def __init__(self, lam1: float, lam2: float = 0.0, cfg: SolverConfig = DEFAULT):
        if lam1 < 0 or lam2 < 0:
            raise InvalidArgument("regularization weights must be non-negative")
        self.lam1, self.lam2, self.cfg = lam1, lam2, cfg

    def reset(self, inst):
        if inst.k != 0:
            raise InvalidArgument("ROBD needs immediate feedback (k = 0); use iROBD for delays")
        self._stack = inst.stacked(np.zeros((0, inst.d)))

    def act(self, view):
        mem = memory(self._stack, view.t, view.switching.p)
        y = robd_minimize(view.hitting(view.t), view.switching, mem, self.lam1, self.lam2, self.cfg)
        self._stack = np.vstack([self._stack, y])
        return y


class IROBD(OnlineAlgorithm):
    """Iterative ROBD.

    Keeps the no-delay ROBD sequence ``yhat`` on revealed rounds, then rolls
    the last ``k`` rounds forward with optimistic minimizer estimates.
    ``estimates[t-1]`` records the estimate used for round ``t`` when ``y_t``
    was chosen (the true ``v_t`` when ``k = 0``).
    """

    label = "irobd"

    def __init__(self, lam: float, cfg: SolverConfig = DEFAULT, check_estimates: bool = False):
        if lam <= 0:
            raise InvalidArgument("lambda must be positive")
        self.lam, self.cfg, self.check = lam, cfg, check_estimates

    def reset(self, inst):
        self._oracle = inst.stacked(np.zeros((0, inst.d)))  # prehistory + yhat_1..
        self.estimates = np.zeros((inst.T, inst.d))

    def act(self, view):
        t, k, sw, p = view.t, view.k, view.switching, view.switching.p
        if t - k >= 1:
            # yhat_{t-k}: ROBD on the freshly revealed f_{t-k}; cached across rounds
            s = t - k
            mem = memory(self._oracle, s, p)
            yhat = robd_minimize(view.hitting(s), sw, mem, self.lam, 0.0, self.cfg)
            self._oracle = np.vstack([self._oracle, yhat])
        if k == 0:
            self.estimates[t - 1] = view.minimizer(t)
            return self._oracle[-1].copy()
        scratch = self._oracle.copy()
        for i in range(max(1, t - k + 1), t + 1):
            mem = memory(scratch, i, p)
            h = view.geometry(i)
            v_est = estimate_minimizer(h, sw, mem, self.lam, self.cfg, check=self.check)
            s_i = robd_minimize(h.with_minimizer(v_est), sw, mem, self.lam, 0.0, self.cfg)
            scratch = np.vstack([scratch, s_i])
        self.estimates[t - 1] = v_est
        return scratch[-1].copy()


class DelayedM2M(OnlineAlgorithm):
    """Move to the most recently revealed minimizer; SOCO only."""

    label = "m2m"

    def reset(self, inst):
        if not inst.switching.is_soco:
            raise InvalidArgument("delayed M2M is only analysed for SOCO switching (p = 1, delta = identity)")

    def act(self, view):
        s = view.t - view.k
        return view.minimizer(s).copy() if s >= 1 else view.prehistory[0].copy()


class Stay(OnlineAlgorithm):
    label = "stay"

    def act(self, view):
        return view.prehistory[0].copy()


def run_robd(inst: Instance, lam1: float, lam2: float = 0.0, cfg: SolverConfig = DEFAULT) -> Trajectory:
    return play(inst, ROBD(lam1, lam2, cfg))


def run_irobd(inst: Instance, lam: float, cfg: SolverConfig = DEFAULT,
              check_estimates: bool = False) -> tuple[Trajectory, np.ndarray]:
    """iROBD trajectory and the per-round minimizer estimates it used."""
    alg = IROBD(lam, cfg, check_estimates)
    traj = play(inst, alg)
    return traj, alg.estimates


def run_delayed_m2m(inst: Instance, cfg: SolverConfig = DEFAULT) -> Trajectory:
    return play(inst, DelayedM2M())


def run_stay(inst: Instance) -> Trajectory:
    return play(inst, Stay())


@dataclass(frozen=True)
class DelaySweep:
    """iROBD decisions and estimates for every delay ``0..k``.

    ``ys[i, t-1]`` is ``y_t^{(i)}`` and ``vs[i, t-1]`` is ``v_t^{(i)}``.
    """

    ys: np.ndarray
    vs: np.ndarray

    @property
    def k(self) -> int:
        return self.ys.shape[0] - 1


def delay_sweep(inst: Instance, lam: float, cfg: SolverConfig = DEFAULT) -> DelaySweep:
    ys, vs = [], []
    for i in range(inst.k + 1):
        traj, est = run_irobd(inst.with_delay(i), lam, cfg)
        ys.append(traj.points)
        vs.append(est)
    return DelaySweep(np.array(ys), np.array(vs))


ALGORITHMS = ("robd", "irobd", "m2m", "stay")


def run_named(name: str, inst: Instance, lam: float = 1.0, lam2: float = 0.0,
              cfg: SolverConfig = DEFAULT) -> Trajectory:
    if name == "robd":
        return run_robd(inst, lam, lam2, cfg)
    if name == "irobd":
        return run_irobd(inst, lam, cfg)[0]
    if name == "m2m":
        return run_delayed_m2m(inst, cfg)
    if name == "stay":
        return run_stay(inst)
    raise InvalidArgument(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")
