"""Inner minimizations: the regularized proximal step and optimistic estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HittingCost
from .delta import Delta
from .errors import InvalidArgument, SolverFailure


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the iterative inner solver.

    Parameters
    ----------
    grad_tol : float
        Stop once the gradient norm is at most this.
    max_iters : int
        Iteration cap for gradient descent.
    shrink, armijo : float
        Backtracking factor and sufficient-decrease constant.
    """

    grad_tol: float = 1e-10
    max_iters: int = 10_000
    shrink: float = 0.5
    armijo: float = 1e-4

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise InvalidArgument("grad_tol must be positive")
        if self.max_iters < 1:
            raise InvalidArgument("max_iters must be at least 1")
        if not 0 < self.shrink < 1 or not 0 < self.armijo < 1:
            raise InvalidArgument("line-search parameters must lie in (0, 1)")


DEFAULT = SolverConfig()


def _check(f: HittingCost, lam1: float, lam2: float) -> None:
    if lam1 < 0 or lam2 < 0:
        raise InvalidArgument("regularization weights must be non-negative")


def prox_closed_form(f: HittingCost, target, lam1: float, lam2: float = 0.0) -> np.ndarray:
    """Minimizer of ``f(y) + lam1/2 ||y - target||^2 + lam2/2 ||y - v||^2``."""
    _check(f, lam1, lam2)
    target = np.asarray(target, dtype=float).reshape(f.d)
    A = f.Q + (lam1 + lam2) * np.eye(f.d)
    return np.linalg.solve(A, f.Q @ f.v + lam1 * target + lam2 * f.v)


def gradient_descent(fun, grad, x0, lipschitz: float, cfg: SolverConfig = DEFAULT,
                     step: int | None = None) -> np.ndarray:
    """Backtracking gradient descent on a smooth strongly convex function.

    Raises :class:`SolverFailure` carrying the last iterate when ``max_iters``
    is exhausted before ``||grad|| <= cfg.grad_tol``.
    """
    x = np.array(x0, dtype=float)
    eta0 = 1.0 / lipschitz
    fx, g = fun(x), grad(x)
    for _ in range(cfg.max_iters):
        gn = float(np.linalg.norm(g))
        if gn <= cfg.grad_tol:
            return x
        eta = eta0
        while True:
            cand = x - eta * g
            fc = fun(cand)
            # rounding slack: near the optimum f differences drown in float noise
            slack = 8 * np.finfo(float).eps * max(abs(fx), 1.0)
            if fc <= fx - cfg.armijo * eta * gn * gn + slack or eta < 1e-20:
                break
            eta *= cfg.shrink
        x, fx, g = cand, fc, grad(cand)
    res = float(np.linalg.norm(g))
    if res <= cfg.grad_tol:
        return x
    raise SolverFailure(f"gradient descent stopped at residual {res:.3e} after {cfg.max_iters} iterations",
                        last_iterate=x, residual=res, step=step)


def robd_minimize(f: HittingCost, sw: Delta, mem, lam1: float, lam2: float = 0.0,
                  cfg: SolverConfig = DEFAULT, iterative: bool = False) -> np.ndarray:
    """One regularized step: ``argmin_y f(y) + lam1 c(y, mem) + lam2/2 ||y - v||^2``.

    The closed form is used unless ``iterative`` is set, in which case the
    generic gradient solver runs (kept as a cross-check).
    """
    _check(f, lam1, lam2)
    target = sw(mem)
    if not iterative:
        return prox_closed_form(f, target, lam1, lam2)
    A = f.Q + (lam1 + lam2) * np.eye(f.d)
    b = f.Q @ f.v + lam1 * target + lam2 * f.v

    def fun(y):
        return 0.5 * y @ A @ y - b @ y

    return gradient_descent(fun, lambda y: A @ y - b, target, f.l + lam1 + lam2, cfg)


def stationarity_residual(f: HittingCost, sw: Delta, mem, y, lam1: float, lam2: float = 0.0) -> float:
    y = np.asarray(y, dtype=float)
    g = f.Q @ (y - f.v) + lam1 * (y - sw(mem)) + lam2 * (y - f.v)
    return float(np.linalg.norm(g))


def min_over_y_value(h: HittingCost, sw: Delta, mem, v, lam: float,
                     cfg: SolverConfig = DEFAULT) -> tuple[np.ndarray, float]:
    """``psi(v) = min_y h(y - v) + lam c(y, mem)`` and its minimizing ``y``.

    Only the geometry ``Q`` of ``h`` is used; its own minimizer is ignored.
    """
    f = h.with_minimizer(v)
    y = robd_minimize(f, sw, mem, lam, 0.0, cfg)
    r = y - sw(mem)
    value = f.geometry(y - f.v) + lam * 0.5 * float(r @ r)
    return y, max(value, 0.0)


def estimate_minimizer(h: HittingCost, sw: Delta, mem, lam: float,
                       cfg: SolverConfig = DEFAULT, check: bool = False) -> np.ndarray:
    """Optimistic minimizer estimate ``argmin_v psi(v)``.

    ``psi`` is non-negative and vanishes at ``delta(mem)``, and it is strongly
    convex, so the estimate is ``delta(mem)`` itself.  With ``check`` the
    nested numeric minimization is run as well and must agree.
    """
    if lam <= 0:
        raise InvalidArgument("lambda must be positive")
    est = np.asarray(sw(mem), dtype=float)
    if check:
        numeric = estimate_minimizer_numeric(h, sw, mem, lam, cfg)
        gap = float(np.max(np.abs(numeric - est)))
        if gap > max(cfg.grad_tol, 1e-8) * 10 * max(1.0, float(np.max(np.abs(est)))):
            raise SolverFailure(f"nested estimate disagrees with delta(mem) by {gap:.3e}",
                                last_iterate=numeric, residual=gap)
    return est


def estimate_minimizer_numeric(h: HittingCost, sw: Delta, mem, lam: float,
                               cfg: SolverConfig = DEFAULT) -> np.ndarray:
    """Nested numeric minimization of ``psi``; an oracle for tests.

    By the envelope theorem ``grad psi(v) = Q (v - y(v))`` where ``y(v)`` is
    the inner minimizer.
    """
    m = h.m
    # psi is (m lam / (m + lam))-strongly convex and at most l-smooth
    L_outer = h.l

    def fun(v):
        return min_over_y_value(h, sw, mem, v, lam, cfg)[1]

    def grad(v):
        y, _ = min_over_y_value(h, sw, mem, v, lam, cfg)
        return h.Q @ (v - y)

    start = np.zeros(h.d)
    inner = SolverConfig(grad_tol=max(cfg.grad_tol, 1e-13) * m * lam / (m + lam),
                         max_iters=cfg.max_iters)
    return gradient_descent(fun, grad, start, L_outer, inner)
