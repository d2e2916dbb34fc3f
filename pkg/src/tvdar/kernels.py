"""Localizing kernels and bandwidth bookkeeping.

Two kernels are supported, each on its own support:

* ``rectangular_asymmetric``: the indicator of ``(-1, 0]``. With bandwidth
  ``n / T`` it selects exactly the trailing ``n`` observations, which makes a
  kernel-weighted fit identical to a rolling-window fit.
* ``epanechnikov``: ``1.5 * (1 - (2u)**2)`` on ``[-1/2, 1/2]``.

Both integrate to one. Because the supports differ, equal bandwidths do not
imply equal effective windows: the rectangular kernel spans ``b*T``
observations, the Epanechnikov kernel ``b*T`` observations centred on ``c``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import TimePoint
from .exceptions import ValidationError

__all__ = [
    "KernelSpec",
    "Bandwidth",
    "KernelWeights",
    "RECTANGULAR",
    "EPANECHNIKOV",
    "kernel_weight",
    "kernel_l2_norm",
    "weights_at",
    "check_bandwidth",
    "BandwidthWarning",
]

_KINDS = {
    "rectangular_asymmetric": (-1.0, 0.0),
    "epanechnikov": (-0.5, 0.5),
}

# squared L2 norms in closed form: int_{-1/2}^{1/2} 2.25 (1 - 4u^2)^2 du = 6/5
_L2_NORMS = {
    "rectangular_asymmetric": 1.0,
    "epanechnikov": 1.2,
}

# arguments this close to a support end are snapped onto it, so that
# (t/T - c)/b computed in floating point lands on the boundary when it should
_SNAP = 1e-10


class BandwidthWarning(UserWarning):
    """The bandwidth is large relative to the undersmoothing condition."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "epanechnikov"

    def __post_init__(self) -> None:
        aliases = {"rectangular": "rectangular_asymmetric", "epa": "epanechnikov"}
        kind = aliases.get(self.kind, self.kind)
        if kind not in _KINDS:
            raise ValidationError(
                f"unknown kernel {self.kind!r}; expected one of {sorted(_KINDS)}"
            )
        object.__setattr__(self, "kind", kind)

    @property
    def support(self) -> tuple[float, float]:
        return _KINDS[self.kind]

    def __call__(self, u):
        return kernel_weight(self, u)


RECTANGULAR = KernelSpec("rectangular_asymmetric")
EPANECHNIKOV = KernelSpec("epanechnikov")


@dataclass(frozen=True)
class Bandwidth:
    """Bandwidth as a fraction of the sample, ``0 < b <= 1``."""

    b: float

    def __post_init__(self) -> None:
        b = float(self.b)
        if not 0.0 < b <= 1.0:
            raise ValidationError(f"bandwidth must lie in (0, 1], got {b}")
        object.__setattr__(self, "b", b)

    @classmethod
    def from_window(cls, n: int, T: int) -> "Bandwidth":
        return cls(n / T)

    def equivalent_window(self, T: int) -> int:
        return int(round(self.b * T))


def _as_bandwidth(b) -> Bandwidth:
    return b if isinstance(b, Bandwidth) else Bandwidth(b)


def _as_kernel(spec) -> KernelSpec:
    return spec if isinstance(spec, KernelSpec) else KernelSpec(spec)


def kernel_weight(spec: KernelSpec | str, u):
    """Evaluate the kernel; zero outside its support.

    Accepts scalars or arrays and returns the same shape.
    """
    spec = _as_kernel(spec)
    u_arr = np.asarray(u, dtype=float)
    for edge in spec.support:
        u_arr = np.where(np.abs(u_arr - edge) < _SNAP, edge, u_arr)
    if spec.kind == "epanechnikov":
        w = np.where(np.abs(u_arr) <= 0.5, 1.5 * (1.0 - (2.0 * u_arr) ** 2), 0.0)
        w = np.maximum(w, 0.0)
    else:
        w = np.where((u_arr > -1.0) & (u_arr <= 0.0), 1.0, 0.0)
    if np.ndim(u) == 0:
        return float(w)
    return w


def kernel_l2_norm(spec: KernelSpec | str) -> float:
    """Squared L2 norm ``int K(u)**2 du`` over the support."""
    return _L2_NORMS[_as_kernel(spec).kind]


@dataclass(frozen=True)
class KernelWeights:
    """Kernel weights ``w[t-1] = K((t/T - c)/b)`` for ``t = 1..T``."""

    weights: np.ndarray
    total: float
    n_nonzero: int
    c: float
    b: float

    @property
    def support_index(self) -> np.ndarray:
        """One-based observation indices carrying positive weight."""
        return np.flatnonzero(self.weights > 0) + 1


def weights_at(spec: KernelSpec | str, b: Bandwidth | float, c: TimePoint | float, T: int) -> KernelWeights:
    """Kernel weights localized at rescaled time ``c``.

    Raises
    ------
    ValidationError
        If ``T < 2`` or no observation receives positive weight.
    """
    spec = _as_kernel(spec)
    bw = _as_bandwidth(b)
    c = float(c) if isinstance(c, TimePoint) else float(TimePoint(c))
    if T < 2:
        raise ValidationError("need T >= 2")
    t = np.arange(1, T + 1)
    w = kernel_weight(spec, (t / T - c) / bw.b)
    n_nonzero = int(np.count_nonzero(w))
    if n_nonzero == 0:
        raise ValidationError(
            f"empty effective window at c={c} with b={bw.b} and T={T}"
        )
    w.setflags(write=False)
    return KernelWeights(w, float(w.sum()), n_nonzero, c, bw.b)


def check_bandwidth(b: Bandwidth | float, T: int, threshold: float = 0.1) -> float:
    """Return ``T * b**3`` and warn when it exceeds ``threshold``."""
    bw = _as_bandwidth(b)
    value = T * bw.b**3
    if value > threshold:
        warnings.warn(
            f"T*b^3 = {value:.4g} exceeds {threshold}; the local estimator may be "
            "dominated by smoothing bias",
            BandwidthWarning,
            stacklevel=2,
        )
    return value
