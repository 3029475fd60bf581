"""Memory maps for the switching cost ``c = 1/2 ||y_t - delta(y_{t-1}, ..., y_{t-p})||^2``.

Every map takes a *window* of shape ``(p, d)`` whose row ``i - 1`` holds
``y_{t-i}`` (most recent first) and returns a ``d``-vector.  Each map carries
declared per-slot Lipschitz constants; algorithms trust them, tests audit them
with :func:`irobd.core.validate_lipschitz`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument

_FD_STEP = 1e-6


def _as_stack(mats, name: str) -> np.ndarray:
    arr = np.array(mats, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1, 1)
    elif arr.ndim == 1:
        # list of scalars: one 1x1 matrix per slot
        arr = arr.reshape(-1, 1, 1)
    elif arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise InvalidArgument(f"{name} must be a stack of square matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} has non-finite entries")
    return arr


class Delta:
    """Base class.  Subclasses set ``kind``, ``p``, ``d`` and ``lipschitz``."""

    kind: str = "abstract"
    p: int
    d: int
    lipschitz: np.ndarray

    def __call__(self, window: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch(self, windows: np.ndarray) -> np.ndarray:
        """Evaluate on a stack of windows, shape ``(N, p, d) -> (N, d)``."""
        windows = np.asarray(windows, dtype=float)
        return np.array([self(w) for w in windows]).reshape(len(windows), self.d)

    def jacobians(self, window: np.ndarray) -> np.ndarray:
        """Per-slot Jacobians ``d delta / d y_{t-i}``, shape ``(p, d, d)``.

        The default is a central finite difference.
        """
        window = np.asarray(window, dtype=float)
        jac = np.zeros((self.p, self.d, self.d))
        for i in range(self.p):
            for j in range(self.d):
                h = _FD_STEP * max(1.0, abs(window[i, j]))
                up = window.copy()
                dn = window.copy()
                up[i, j] += h
                dn[i, j] -= h
                jac[i, :, j] = (self(up) - self(dn)) / (2 * h)
        return jac

    def params(self) -> dict:
        raise InvalidArgument(f"switching kind {self.kind!r} is not serializable")

    @property
    def L(self) -> float:
        """Largest declared per-slot Lipschitz constant."""
        return float(np.max(self.lipschitz))

    @property
    def is_linear(self) -> bool:
        return False

    @property
    def is_soco(self) -> bool:
        return False

    def _check_window(self, window) -> np.ndarray:
        window = np.asarray(window, dtype=float)
        if window.shape != (self.p, self.d):
            raise InvalidArgument(
                f"memory window must have shape {(self.p, self.d)}, got {window.shape}")
        return window


@dataclass(frozen=True, eq=False)
class LinearDelta(Delta):
    """``delta = sum_i C_i y_{t-i}``; the structured-memory case."""

    C: np.ndarray
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        object.__setattr__(self, "C", _as_stack(self.C, "C"))

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def d(self) -> int:
        return self.C.shape[1]

    @property
    def lipschitz(self) -> np.ndarray:
        return np.array([np.linalg.norm(c, 2) for c in self.C])

    @property
    def alpha(self) -> float:
        """Sum of spectral norms of the memory matrices."""
        return float(np.sum(self.lipschitz))

    @property
    def is_linear(self) -> bool:
        return True

    @property
    def is_soco(self) -> bool:
        return self.p == 1 and np.array_equal(self.C[0], np.eye(self.d))

    def __call__(self, window):
        window = self._check_window(window)
        return np.einsum("ijk,ik->j", self.C, window)

    def batch(self, windows):
        return np.einsum("ijk,nik->nj", self.C, np.asarray(windows, dtype=float))

    def jacobians(self, window):
        return self.C.copy()

    def params(self):
        return {"C": self.C.tolist()}


@dataclass(frozen=True, eq=False)
class LinearSineDelta(Delta):
    """``delta = sum_i C_i y_{t-i} + G_i sin(y_{t-i})`` (sine taken elementwise).

    Globally Lipschitz with slot constant ``||C_i|| + ||G_i||``.  Covers the
    ``y + L sin(y)`` family and dynamics ``A x + G sin(x)``.
    """

    C: np.ndarray
    G: np.ndarray
    kind: str = field(default="linear_sine", init=False)

    def __post_init__(self):
        C = _as_stack(self.C, "C")
        G = _as_stack(self.G, "G")
        if C.shape != G.shape:
            raise InvalidArgument(f"C and G shapes differ: {C.shape} vs {G.shape}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "G", G)

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def d(self):
        return self.C.shape[1]

    @property
    def lipschitz(self):
        return np.array([np.linalg.norm(c, 2) + np.linalg.norm(g, 2)
                         for c, g in zip(self.C, self.G)])

    def __call__(self, window):
        window = self._check_window(window)
        return (np.einsum("ijk,ik->j", self.C, window)
                + np.einsum("ijk,ik->j", self.G, np.sin(window)))

    def batch(self, windows):
        windows = np.asarray(windows, dtype=float)
        return (np.einsum("ijk,nik->nj", self.C, windows)
                + np.einsum("ijk,nik->nj", self.G, np.sin(windows)))

    def jacobians(self, window):
        window = self._check_window(window)
        return self.C + self.G * np.cos(window)[:, None, :]

    def params(self):
        return {"C": self.C.tolist(), "G": self.G.tolist()}


@dataclass(frozen=True, eq=False)
class DroneDelta(Delta):
    """Vertical-speed dynamics ``delta(y) = y - (C1 + C2 |y| y)``, elementwise.

    ``|y| y`` has unbounded slope, so the declared constant
    ``1 + 2 C2 radius`` only holds on the operating box ``[-radius, radius]``.
    """

    C1: float
    C2: float
    radius: float = 10.0
    dim: int = 1
    kind: str = field(default="drone", init=False)

    def __post_init__(self):
        if self.C1 < 0 or self.C2 < 0:
            raise InvalidArgument("drone constants C1, C2 must be non-negative")
        if self.radius <= 0:
            raise InvalidArgument("operating radius must be positive")

    p = 1

    @property
    def d(self):
        return self.dim

    @property
    def lipschitz(self):
        return np.array([1.0 + 2.0 * self.C2 * self.radius])

    def drag(self, y):
        y = np.asarray(y, dtype=float)
        return self.C1 + self.C2 * np.abs(y) * y

    def __call__(self, window):
        y = self._check_window(window)[0]
        return y - self.drag(y)

    def batch(self, windows):
        y = np.asarray(windows, dtype=float)[:, 0, :]
        return y - self.drag(y)

    def jacobians(self, window):
        y = self._check_window(window)[0]
        return np.diag(1.0 - 2.0 * self.C2 * np.abs(y))[None]

    def params(self):
        return {"C1": self.C1, "C2": self.C2, "radius": self.radius, "dim": self.dim}


@dataclass(frozen=True, eq=False)
class BumpDelta(Delta):
    """Scalar map ``y + b(y)`` where ``b`` is a plateau/sine/plateau bump.

    ``b(y) = eps`` for ``y <= n eps``, ``-eps`` beyond ``n eps + gamma eps``,
    and a half sine wave in between.  The bump is tiny in magnitude but has
    slope ``pi / gamma`` on the short middle segment.
    """

    eps: float
    gamma: float
    n: int
    kind: str = field(default="remark2", init=False)

    def __post_init__(self):
        if self.eps <= 0 or not 0 < self.gamma < 1 or self.n < 1:
            raise InvalidArgument("need eps > 0, 0 < gamma < 1, n >= 1")

    p = 1
    d = 1

    @property
    def lipschitz(self):
        # slope of y + b(y) lies in [1 - pi/gamma, 1]; pi/gamma dominates for gamma < 1
        return np.array([math.pi / self.gamma])

    def bump(self, y):
        y = np.asarray(y, dtype=float)
        lo = self.n * self.eps
        hi = lo + self.gamma * self.eps
        phase = math.pi * (y - lo) / (self.gamma * self.eps) - math.pi / 2
        mid = -self.eps * np.sin(phase)
        return np.where(y <= lo, self.eps, np.where(y <= hi, mid, -self.eps))

    def bump_slope(self, y):
        y = np.asarray(y, dtype=float)
        lo = self.n * self.eps
        hi = lo + self.gamma * self.eps
        phase = math.pi * (y - lo) / (self.gamma * self.eps) - math.pi / 2
        inside = (y > lo) & (y <= hi)
        return np.where(inside, -(math.pi / self.gamma) * np.cos(phase), 0.0)

    def __call__(self, window):
        y = self._check_window(window)[0]
        return y + self.bump(y)

    def batch(self, windows):
        y = np.asarray(windows, dtype=float)[:, 0, :]
        return y + self.bump(y)

    def jacobians(self, window):
        y = self._check_window(window)[0]
        return (1.0 + self.bump_slope(y)).reshape(1, 1, 1)

    def params(self):
        return {"eps": self.eps, "gamma": self.gamma, "n": self.n}


@dataclass(frozen=True, eq=False)
class CallbackDelta(Delta):
    """Arbitrary map supplied as a Python callable (in-process use only)."""

    fn: Callable[[np.ndarray], np.ndarray]
    p: int
    d: int
    declared: tuple
    jac: Callable[[np.ndarray], np.ndarray] | None = None
    kind: str = field(default="callback", init=False)

    def __post_init__(self):
        if len(self.declared) != self.p or min(self.declared) < 0:
            raise InvalidArgument("need one non-negative Lipschitz constant per slot")

    @property
    def lipschitz(self):
        return np.asarray(self.declared, dtype=float)

    def __call__(self, window):
        window = self._check_window(window)
        return np.asarray(self.fn(window), dtype=float).reshape(self.d)

    def jacobians(self, window):
        if self.jac is not None:
            return np.asarray(self.jac(self._check_window(window)), dtype=float)
        return super().jacobians(window)


_KINDS = {
    "linear": lambda prm: LinearDelta(prm["C"]),
    "linear_sine": lambda prm: LinearSineDelta(prm["C"], prm["G"]),
    "drone": lambda prm: DroneDelta(float(prm["C1"]), float(prm["C2"]),
                                    float(prm.get("radius", 10.0)), int(prm.get("dim", 1))),
    "remark2": lambda prm: BumpDelta(float(prm["eps"]), float(prm["gamma"]), int(prm["n"])),
}


def delta_from_spec(kind: str, params: dict) -> Delta:
    try:
        build = _KINDS[kind]
    except KeyError:
        raise InvalidArgument(f"unknown switching kind {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        return build(params)
    except KeyError as exc:
        raise InvalidArgument(f"switching kind {kind!r} missing parameter {exc}") from None


def soco(d: int = 1) -> LinearDelta:
    """``delta = y_{t-1}``: plain smoothed online convex optimization."""
    return LinearDelta(np.eye(d)[None])
