"""Runtime checks of the trajectory inequalities behind the ratio bounds.

Each check returns per-step slacks (right side minus left side); a negative
slack beyond the tolerance is a violation.  :func:`verify_instance` runs
every applicable check and collects the results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algorithms import DelaySweep, delay_sweep, run_delayed_m2m, run_irobd, run_named, run_robd
from .bounds import comparator_factor
from .core import Instance, evaluate_total
from .errors import InvalidArgument, VerificationFailure
from .offline import offline_optimum
from .prox import DEFAULT, SolverConfig


@dataclass(frozen=True)
class CheckResult:
    name: str
    slacks: np.ndarray  # per step (or a single aggregate)
    tol: float
    steps: np.ndarray | None = None  # labels for slacks, 1-based rounds

    @property
    def worst(self) -> float:
        return float(np.min(self.slacks)) if self.slacks.size else float("inf")

    @property
    def worst_step(self) -> int | None:
        if not self.slacks.size:
            return None
        i = int(np.argmin(self.slacks))
        return int(self.steps[i]) if self.steps is not None else i + 1

    @property
    def ok(self) -> bool:
        return self.worst >= -self.tol

    def describe(self) -> str:
        status = "ok" if self.ok else "FAIL"
        where = "" if self.ok else f" at step {self.worst_step}"
        return f"{status} {self.name}: worst slack {self.worst:.3e}{where}"

    def raise_if_failed(self):
        if not self.ok:
            raise VerificationFailure(self.describe(), step=self.worst_step)


def _sq(x) -> float:
    x = np.asarray(x)
    return float(x @ x)


def _mixed_window(inst: Instance, sweep: DelaySweep, level: int, t: int) -> np.ndarray:
    """Memory ``(y_{t-1}^{(level-1)}, ..., y_{t-p}^{(level-p)})``, superscripts floored at 0."""
    p = inst.p
    win = np.zeros((p, inst.d))
    for j in range(1, p + 1):
        s = t - j
        win[j - 1] = sweep.ys[max(level - j, 0), s - 1] if s >= 1 else inst.prehistory[-s]
    return win


def _base_window(inst: Instance, sweep: DelaySweep, t: int) -> np.ndarray:
    p = inst.p
    win = np.zeros((p, inst.d))
    for j in range(1, p + 1):
        s = t - j
        win[j - 1] = sweep.ys[0, s - 1] if s >= 1 else inst.prehistory[-s]
    return win


def _gap_sq(sweep: DelaySweep, level: int, s: int) -> float:
    if level <= 0 or s < 1:
        return 0.0
    return _sq(sweep.ys[level, s - 1] - sweep.ys[0, s - 1])


def check_delay_recursion(inst: Instance, sweep: DelaySweep, tol: float = 1e-8) -> list[CheckResult]:
    """Delay-error recursion for every delay level ``1..k`` and every round.

    Squared form:
    ``||dy||^2 <= 8 ||dv||^2 + 2 p L^2 sum_{i<=p} ||y_{t-i}^{(k-i)} - y_{t-i}^{(0)}||^2``.
    Step form:
    ``||dy|| <= 2 ||dv|| + ||delta(mixed memory) - delta(baseline memory)||``.
    """
    p, L, sw = inst.p, inst.switching.L, inst.switching
    sq, st, steps = [], [], []
    for level in range(1, sweep.k + 1):
        for t in range(1, inst.T + 1):
            dy = sweep.ys[level, t - 1] - sweep.ys[0, t - 1]
            dv = sweep.vs[level, t - 1] - sweep.vs[0, t - 1]
            hist = sum(_gap_sq(sweep, level - i, t - i) for i in range(1, p + 1))
            sq.append(8 * _sq(dv) + 2 * p * L * L * hist - _sq(dy))
            dd = sw(_mixed_window(inst, sweep, level, t)) - sw(_base_window(inst, sweep, t))
            st.append(2 * np.linalg.norm(dv) + np.linalg.norm(dd) - np.linalg.norm(dy))
            steps.append(t)
    steps = np.array(steps, dtype=int)
    return [CheckResult("delay recursion (squared, Lipschitz form)", np.array(sq), tol, steps),
            CheckResult("delay recursion (triangle step)", np.array(st), tol, steps)]


def check_linear_delay_recursion(inst: Instance, sweep: DelaySweep, tol: float = 1e-8) -> CheckResult:
    """Linear-memory recursion ``||dy||^2 <= 8 ||dv||^2 + 2 alpha^2 sum_{i<k} ||gap_{t-i}||^2``."""
    if not inst.switching.is_linear:
        raise InvalidArgument("the alpha form needs a linear memory map")
    a2 = inst.switching.alpha ** 2
    out, steps = [], []
    for level in range(1, sweep.k + 1):
        for t in range(1, inst.T + 1):
            dy = sweep.ys[level, t - 1] - sweep.ys[0, t - 1]
            dv = sweep.vs[level, t - 1] - sweep.vs[0, t - 1]
            hist = sum(_gap_sq(sweep, level - i, t - i) for i in range(1, level))
            out.append(8 * _sq(dv) + 2 * a2 * hist - _sq(dy))
            steps.append(t)
    return CheckResult("delay recursion (linear alpha form)", np.array(out), tol, np.array(steps, dtype=int))


def check_robd_comparator(inst: Instance, lam: float, robd_points, opt_points, tol: float = 1e-6,
                 pL2: float | None = None) -> CheckResult:
    """``sum (H^(0) + lam M^(0)) <= sum (H* + lam (m+lam)/(m+(1-p^2 L^2) lam) M*)``."""
    pL2 = (inst.p * inst.switching.L) ** 2 if pL2 is None else pL2
    a = evaluate_total(inst, robd_points)
    b = evaluate_total(inst, opt_points)
    lhs = a.hitting_total + lam * a.switching_total
    rhs = b.hitting_total + comparator_factor(inst.m, lam, pL2) * b.switching_total
    return CheckResult("ROBD versus comparator", np.array([rhs - lhs]), tol)


def check_m2m(inst: Instance, opt_points, tol: float = 1e-6) -> list[CheckResult]:
    """Per-step bounds on delayed move-to-minimizer against a comparator ``x*``.

    With ``v_0 = x*_0 = x_0`` and ``H*_0 = 0``:

    * ``t <= k``: ``f_t(x_0) <= l(t+1)/m H*_t + l(t+1) sum_{tau<=t} M*_tau``
    * ``t > k``: ``f_t(v_{t-k}) <= l(k+2)/m (H*_t + H*_{t-k}) + l(k+2) sum_{t-k<tau<=t} M*_tau``
    * ``t <= T-k``: ``1/2 ||v_t - v_{t-1}||^2 <= 3/m (H*_t + H*_{t-1}) + 3 M*_t``
    """
    if not inst.switching.is_soco:
        raise InvalidArgument("move-to-minimizer bounds are for SOCO switching")
    rep = evaluate_total(inst, opt_points)
    H = np.concatenate([[0.0], rep.hitting])
    M = np.concatenate([[0.0], rep.switching])
    cM = np.cumsum(M)
    m, l, k, T = inst.m, inst.l, inst.k, inst.T
    x0 = inst.prehistory[0]
    V = np.vstack([x0, inst.minimizers])
    early, late, move = [], [], []
    for t in range(1, T + 1):
        f = inst.costs[t - 1]
        if t <= k:
            early.append(l * (t + 1) / m * H[t] + l * (t + 1) * cM[t] - f(x0))
        else:
            rhs = l * (k + 2) / m * (H[t] + H[t - k]) + l * (k + 2) * (cM[t] - cM[t - k])
            late.append(rhs - f(V[t - k]))
        if t <= T - k:
            move.append(3 / m * (H[t] + H[t - 1]) + 3 * M[t] - 0.5 * _sq(V[t] - V[t - 1]))
    return [
        CheckResult("M2M waiting rounds", np.array(early), tol, np.arange(1, len(early) + 1)),
        CheckResult("M2M chasing rounds", np.array(late), tol, np.arange(k + 1, T + 1)),
        CheckResult("M2M movement", np.array(move), tol, np.arange(1, len(move) + 1)),
    ]


def check_dominance(inst: Instance, opt_points, trajectories, tol: float = 1e-8) -> CheckResult:
    opt = evaluate_total(inst, opt_points).total
    slacks = np.array([evaluate_total(inst, tr).total - opt for tr in trajectories])
    return CheckResult("offline optimum below every algorithm", slacks, tol)


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def lines(self) -> list[str]:
        return [c.describe() for c in self.checks]

    def raise_if_failed(self):
        for c in self.checks:
            c.raise_if_failed()


def verify_instance(inst: Instance, lam: float = 1.0, cfg: SolverConfig = DEFAULT) -> VerifyReport:
    """Run every inequality that applies to ``inst``."""
    rep = VerifyReport()
    sweep = delay_sweep(inst, lam, cfg)
    rep.checks.extend(check_delay_recursion(inst, sweep))
    if inst.switching.is_linear:
        rep.checks.append(check_linear_delay_recursion(inst, sweep))
    base = inst.with_delay(0)
    robd = run_robd(base, lam, 0.0, cfg)
    trajs = [robd, run_irobd(inst, lam, cfg)[0], run_named("stay", inst)]
    if inst.switching.is_soco:
        trajs.append(run_delayed_m2m(inst, cfg))
    opt = offline_optimum(base, cfg, seeds=[t.points for t in trajs])
    rep.checks.append(check_dominance(inst, opt.trajectory.points, trajs))
    pL2 = (inst.p * inst.switching.L) ** 2
    if inst.m + (1 - pL2) * lam > 0:
        rep.checks.append(check_robd_comparator(inst, lam, robd.points, opt.trajectory.points))
    if inst.switching.is_soco:
        rep.checks.extend(check_m2m(inst, opt.trajectory.points))
    return rep
