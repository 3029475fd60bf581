"""Closed-form competitive-ratio bounds."""

from __future__ import annotations

import math

from .errors import InvalidArgument


def _positive(**kw):
    for name, val in kw.items():
        if not val > 0:
            raise InvalidArgument(f"{name} must be positive, got {val!r}")


def _balance(m: float, lam: float, shrink: float) -> float:
    """``max(1/lam, (m + lam) / (m + shrink lam))`` with a positive denominator."""
    den = m + shrink * lam
    if not den > 0:
        raise InvalidArgument(f"denominator m + ({shrink:g}) lambda = {den:g} must be positive")
    return max(1.0 / lam, (m + lam) / den)


def bound_cor1(m: float, L: float, lam: float) -> float:
    """ROBD ratio bound for one-step nonlinear memory with Lipschitz ``1 + L``."""
    _positive(m=m, lam=lam)
    if L < 0:
        raise InvalidArgument("L must be non-negative")
    return _balance(m, lam, -L * (L + 2))


def bound_cor1_opt(m: float, L: float) -> tuple[float, float]:
    """Best ``lambda`` for :func:`bound_cor1` and the bound it attains."""
    _positive(m=m)
    if L < 0:
        raise InvalidArgument("L must be non-negative")
    b = m + 2 * L + L * L
    lam = 2 * m / (b + math.sqrt(b * b + 4 * m))  # stable root of lam^2 + b lam - m
    a = 1 + (2 * L + L * L) / m
    return lam, 0.5 * (a + math.sqrt(a * a + 4 / m))


def bound_thm1(m: float, l: float, p: int, L: float, k: int, lam: float) -> float:
    """Delay bound shape ``(l + 2 p^2 L^2)^k max{1/lam, (m+lam)/(m+(1-p^2 L^2) lam)}``."""
    _positive(m=m, l=l, lam=lam)
    if p < 1 or k < 0 or L < 0:
        raise InvalidArgument("need p >= 1, k >= 0, L >= 0")
    pl2 = (p * L) ** 2
    return (l + 2 * pl2) ** k * _balance(m, lam, 1 - pl2)


def bound_thm2(m: float, l: float, alpha: float, k: int, lam: float) -> float:
    """Linear-memory delay bound shape ``(l + 2 a^2)^k max{1/lam, (m+lam)/(m+(1-a^2) lam)}``."""
    _positive(m=m, l=l, lam=lam)
    if k < 0 or alpha < 0:
        raise InvalidArgument("need k >= 0, alpha >= 0")
    return (l + 2 * alpha * alpha) ** k * _balance(m, lam, 1 - alpha * alpha)


def lower_bound_thm3(m: float, alpha: float, k: int) -> float:
    """``m (alpha^(2k) - 1) / (alpha^2 - 1)``, summed as ``m sum_j alpha^(2j)``.

    The geometric sum stays accurate as ``alpha -> 1`` and gives ``m k`` at 1.
    """
    _positive(m=m)
    if alpha < 1:
        raise InvalidArgument("alpha must be at least 1")
    if k < 0:
        raise InvalidArgument("k must be non-negative")
    a2 = alpha * alpha
    if a2 - 1 > 1e-3:
        return m * (a2 ** k - 1) / (a2 - 1)
    return m * math.fsum(a2 ** j for j in range(k))


def robd_linear_ratio_prior(m: float, alpha: float) -> float:
    """Known ROBD ratio for linear memory with aggregate norm ``alpha``."""
    _positive(m=m)
    a = 1 + (alpha * alpha - 1) / m
    return 0.5 * (a + math.sqrt(a * a + 4 / m))


def comparator_factor(m: float, lam: float, pL2: float) -> float:
    """Switching-cost weight ``lam (m + lam) / (m + (1 - pL2) lam)`` in the ROBD-vs-OPT comparison."""
    den = m + (1 - pL2) * lam
    if not den > 0:
        raise InvalidArgument("need m + (1 - p^2 L^2) lambda > 0")
    return lam * (m + lam) / den


BOUNDS = {
    "cor1": bound_cor1,
    "cor1_opt": bound_cor1_opt,
    "thm1": bound_thm1,
    "thm2": bound_thm2,
    "thm3": lower_bound_thm3,
    "prior": robd_linear_ratio_prior,
}
