"""Lipschitz bounds for KAN networks.

The certified bound multiplies per-layer bounds. Each layer is summarised by
a nonnegative matrix ``L[j, i] >= sup |phi_ji'|``; its operator norm bounds
the layer's Lipschitz constant in the chosen vector norm:

* ``"linf"`` -- maximum row sum, the infinity-norm operator bound;
* ``"l2"``   -- spectral norm of ``L``, which bounds the Euclidean constant
  because ``|J| <= L`` entrywise for every Jacobian ``J`` of the layer.
"""

from __future__ import annotations

import numpy as np

from .basis import BasisKind
from .errors import ConfigurationError
from .kan import KanLayer, KanNetwork, evaluate

# sup_x |d/dx silu(x)|, attained at x ~= 2.39936
SILU_DERIV_SUP = 1.0998393201288670


def edge_bounds(layer: KanLayer) -> np.ndarray:
    """Upper bounds on ``sup |phi_ji'|`` for every edge, shape ``[out, in]``."""
    basis = layer.basis
    c = layer.spline_coeffs.astype(np.float64)
    if basis.kind is BasisKind.BSPLINE:
        k = basis.order
        t = basis.knots()
        m = np.arange(basis.n_basis - 1)
        denom = t[m + k + 1] - t[m + 1]
        # the derivative spline's coefficients bound it (convex hull property)
        deriv = k * np.diff(c, axis=-1) / denom
        spline = np.abs(deriv).max(axis=-1)
    else:
        w = basis.frequencies()
        spline = (np.abs(c[..., 1::2]) * w + np.abs(c[..., 2::2]) * w).sum(axis=-1)
    return spline + np.abs(layer.base_weights.astype(np.float64)) * SILU_DERIV_SUP


def layer_bound(layer: KanLayer, norm: str = "l2") -> float:
    L = edge_bounds(layer)
    if norm == "linf":
        return float(L.sum(axis=1).max())
    if norm == "l2":
        return float(np.linalg.norm(L, 2))
    raise ConfigurationError(f"unknown norm {norm!r}")


def layer_bounds(net: KanNetwork, norm: str = "l2") -> list[float]:
    return [layer_bound(layer, norm) for layer in net.layers]


def lipschitz_upper_bound(net: KanNetwork, norm: str = "l2") -> float:
    """Product of per-layer bounds; certified in the requested norm."""
    return float(np.prod(layer_bounds(net, norm)))


def lipschitz_empirical(net: KanNetwork, n_pairs: int = 2000, seed: int = 0) -> float:
    """Largest observed ``||H(x) - H(y)|| / ||x - y||`` over seeded pairs.

    Half of the pairs are uniform in the input box, the rest are close pairs
    ``(x, x + d)`` with ``|d| ~ 1e-3`` that probe local slopes.
    """
    if n_pairs < 1:
        raise ConfigurationError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    a, b = net.basis.domain
    d = net.dims[0]
    n_far = (n_pairs + 1) // 2
    n_near = n_pairs - n_far
    x = rng.uniform(a, b, size=(n_pairs, d))
    y = np.empty_like(x)
    y[:n_far] = rng.uniform(a, b, size=(n_far, d))
    step = rng.normal(size=(n_near, d))
    step *= 1e-3 * (b - a) / np.maximum(np.linalg.norm(step, axis=1, keepdims=True), 1e-300)
    y[n_far:] = np.clip(x[n_far:] + step, a, b)
    net64 = net.astype(np.float64)
    hx = evaluate(net64, x)
    hy = evaluate(net64, y)
    dx = np.linalg.norm(x - y, axis=1)
    dh = np.linalg.norm(hx - hy, axis=1)
    keep = dx > 0
    if not np.any(keep):
        return 0.0
    return float(np.max(dh[keep] / dx[keep]))
