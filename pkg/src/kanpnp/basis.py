"""Univariate bases for KAN edge functions.

Two families are supported:

* ``BSPLINE`` -- degree-``k`` B-splines on a uniform knot vector covering the
  domain ``[a, b]`` with ``G`` intervals, extended by ``k`` intervals on each
  side (``G + 2k + 1`` knots, ``G + k`` basis functions).
* ``FOURIER`` -- ``[1, cos(w_1 x), sin(w_1 x), ..., cos(w_k x), sin(w_k x)]``
  with ``w_m = 2 pi m / (b - a)`` and the phase measured from ``a``.

Inputs are clamped into ``[a, b]`` before evaluation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigurationError


class BasisKind(str, enum.Enum):
    BSPLINE = "bspline"
    FOURIER = "fourier"


@dataclass(frozen=True)
class BasisSpec:
    kind: BasisKind = BasisKind.BSPLINE
    grid_size: int = 5
    order: int = 3
    domain: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))
        self.validate()

    def validate(self):
        if int(self.grid_size) != self.grid_size or self.grid_size < 1:
            raise ConfigurationError(f"grid_size must be a positive integer, got {self.grid_size}")
        if int(self.order) != self.order or self.order < 1:
            raise ConfigurationError(f"order must be a positive integer, got {self.order}")
        a, b = self.domain
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ConfigurationError(f"domain must satisfy a < b, got {self.domain}")

    @property
    def n_basis(self) -> int:
        if self.kind is BasisKind.BSPLINE:
            return self.grid_size + self.order
        return 2 * self.order + 1

    @property
    def step(self) -> float:
        a, b = self.domain
        return (b - a) / self.grid_size

    def knots(self) -> np.ndarray:
        """Uniform knot vector ``t_0 .. t_{G+2k}`` (B-spline only)."""
        if self.kind is not BasisKind.BSPLINE:
            raise ConfigurationError("knots are only defined for B-spline bases")
        a = self.domain[0]
        idx = np.arange(self.grid_size + 2 * self.order + 1) - self.order
        return a + idx * self.step

    def frequencies(self) -> np.ndarray:
        """Angular frequencies ``w_1 .. w_k`` (Fourier only)."""
        a, b = self.domain
        return 2.0 * np.pi * np.arange(1, self.order + 1) / (b - a)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "grid_size": int(self.grid_size),
            "order": int(self.order),
            "domain": list(self.domain),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(BasisKind(d["kind"]), int(d["grid_size"]), int(d["order"]), tuple(d["domain"]))


@numba.njit(cache=True)
def _bspline_local(x, a, h, G, k, vals, ders, first):
    # Local de Boor triangle: only the k+1 functions that are nonzero on the
    # knot span containing x are computed. Uniform knots t_i = a + (i - k) h.
    left = np.empty(k + 1)
    right = np.empty(k + 1)
    N = np.empty(k + 1)
    for n in range(x.shape[0]):
        xv = x[n]
        j = int(np.floor((xv - a) / h))
        if j > G - 1:
            j = G - 1
        if j < 0:
            j = 0
        s = j + k
        N[0] = 1.0
        for p in range(1, k + 1):
            left[p] = xv - (a + (s + 1 - p - k) * h)
            right[p] = (a + (s + p - k) * h) - xv
            saved = 0.0
            for r in range(p):
                temp = N[r] / (right[r + 1] + left[p - r])
                N[r] = saved + right[r + 1] * temp
                saved = left[p - r] * temp
            N[p] = saved
            if p == k - 1:
                # degree k-1 values feed the derivative formula
                for r in range(k + 1):
                    lo = N[r - 1] if r >= 1 else 0.0
                    hi = N[r] if r <= k - 1 else 0.0
                    ders[n, r] = (lo - hi) / h
        if k == 1:
            ders[n, 0] = -1.0 / h
            ders[n, 1] = 1.0 / h
        for r in range(k + 1):
            vals[n, r] = N[r]
        first[n] = j


@numba.njit(cache=True, fastmath=True)
def _cubic_uniform(x, a, inv_h, last, dense, ders, first):
    # Closed-form uniform cubic B-splines written straight into the dense
    # design rows, zeros included. All constants take x's dtype: mixing in
    # integer literals would silently promote float32 work to float64.
    # x must already be clamped.
    f = x.dtype.type
    zero, one, two, three, four = f(0.0), f(1.0), f(2.0), f(3.0), f(4.0)
    sixth, half = f(1.0 / 6.0), f(0.5)
    nb = dense.shape[1]
    for n in range(x.shape[0]):
        t = (x[n] - a) * inv_h
        j = min(np.int32(t), last)
        u = t - f(j)
        v = one - u
        u2 = u * u
        u3 = u2 * u
        for m in range(nb):
            dense[n, m] = zero
        dense[n, j] = v * v * v * sixth
        dense[n, j + 1] = (three * u3 - two * three * u2 + four) * sixth
        dense[n, j + 2] = (three * (u2 - u3 + u) + one) * sixth
        dense[n, j + 3] = u3 * sixth
        ders[n, 0] = -half * v * v * inv_h
        ders[n, 1] = (three * half * u2 - two * u) * inv_h
        ders[n, 2] = (half - three * half * u2 + u) * inv_h
        ders[n, 3] = half * u2 * inv_h
        first[n] = j


@numba.njit(cache=True)
def _scatter_dense(local, first, n_basis, out):
    # out has shape (M, n_basis) and is zero-filled by the caller
    width = local.shape[1]
    for n in range(local.shape[0]):
        j = first[n]
        for r in range(width):
            out[n, j + r] = local[n, r]


def _clamp(basis: BasisSpec, x):
    a, b = basis.domain
    return np.clip(x, a, b)


def bspline_local(basis: BasisSpec, x: np.ndarray):
    """Nonzero B-spline values and derivatives on each point's knot span.

    Returns ``(vals, ders, first)`` where ``vals[n, r]`` is basis function
    ``first[n] + r`` at ``x[n]``; ``x`` must be 1-D and already clamped.
    """
    k = basis.order
    x = np.ascontiguousarray(x)
    dtype = x.dtype if x.dtype in (np.float32, np.float64) else np.float64
    x = x.astype(dtype, copy=False)
    vals = np.empty((x.shape[0], k + 1), dtype=dtype)
    ders = np.empty_like(vals)
    first = np.empty(x.shape[0], dtype=np.int64)
    _bspline_local(x, basis.domain[0], basis.step, basis.grid_size, k, vals, ders, first)
    return vals, ders, first


def _dense(basis: BasisSpec, local: np.ndarray, first: np.ndarray) -> np.ndarray:
    out = np.zeros((local.shape[0], basis.n_basis), dtype=local.dtype)
    _scatter_dense(local, first, basis.n_basis, out)
    return out


def _fourier_phase(basis: BasisSpec, x):
    a, b = basis.domain
    return 2.0 * np.pi * (x - a) / (b - a)


def _fourier(basis: BasisSpec, x: np.ndarray, derivative: bool) -> np.ndarray:
    m = np.arange(1, basis.order + 1, dtype=x.dtype)
    theta = _fourier_phase(basis, x)[..., None] * m
    out = np.empty(x.shape + (basis.n_basis,), dtype=x.dtype)
    if derivative:
        w = basis.frequencies().astype(x.dtype)
        out[..., 0] = 0.0
        out[..., 1::2] = -np.sin(theta) * w
        out[..., 2::2] = np.cos(theta) * w
    else:
        out[..., 0] = 1.0
        out[..., 1::2] = np.cos(theta)
        out[..., 2::2] = np.sin(theta)
    return out


def _as_float(x) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    return x


def basis_eval(basis: BasisSpec, x) -> np.ndarray:
    """Evaluate every basis function at ``x``; output shape ``x.shape + (n_basis,)``."""
    basis.validate()
    x = _as_float(x)
    xc = _clamp(basis, x)
    if basis.kind is BasisKind.FOURIER:
        return _fourier(basis, xc, derivative=False)
    vals, _, first = bspline_local(basis, xc.reshape(-1))
    return _dense(basis, vals, first).reshape(x.shape + (basis.n_basis,))


def basis_deriv(basis: BasisSpec, x) -> np.ndarray:
    """Derivative of :func:`basis_eval` with respect to ``x`` (inside the domain)."""
    basis.validate()
    x = _as_float(x)
    xc = _clamp(basis, x)
    if basis.kind is BasisKind.FOURIER:
        return _fourier(basis, xc, derivative=True)
    _, ders, first = bspline_local(basis, xc.reshape(-1))
    return _dense(basis, ders, first).reshape(x.shape + (basis.n_basis,))


def bspline_design(basis: BasisSpec, x: np.ndarray):
    """Dense design matrix ``(M, n_basis)`` with local derivatives for backward.

    ``x`` must be 1-D and clamped. Cubic bases take a closed-form fast path.
    """
    x = np.ascontiguousarray(x)
    k = basis.order
    if k == 3:
        dense = np.empty((x.shape[0], basis.n_basis), dtype=x.dtype)
        ders = np.empty((x.shape[0], 4), dtype=x.dtype)
        first = np.empty(x.shape[0], dtype=np.int64)
        c = x.dtype.type
        _cubic_uniform(x, c(basis.domain[0]), c(1.0 / basis.step), np.int32(basis.grid_size - 1),
                       dense, ders, first)
        return dense, ders, first
    vals, ders, first = bspline_local(basis, x)
    return _dense(basis, vals, first), ders, first
