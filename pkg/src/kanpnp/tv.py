"""Total-variation denoising by Chambolle's dual projection iteration."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1] = u[1:] - u[:-1]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _div(px, py):
    # negative adjoint of _grad (Neumann boundary)
    d = np.zeros_like(px)
    if px.shape[0] > 1:
        d[0] = px[0]
        d[1:-1] = px[1:-1] - px[:-2]
        d[-1] = -px[-2]
    dy = np.zeros_like(py)
    if py.shape[1] > 1:
        dy[:, 0] = py[:, 0]
        dy[:, 1:-1] = py[:, 1:-1] - py[:, :-2]
        dy[:, -1] = -py[:, -2]
    return d + dy


def tv_norm(u) -> float:
    gx, gy = _grad(np.asarray(u, dtype=np.float64))
    return float(np.sum(np.sqrt(gx ** 2 + gy ** 2)))


def tv_energy(z, f, weight) -> float:
    """``1/2 ||z - f||^2 + weight * TV(z)`` summed over channels."""
    z = np.asarray(z, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if z.ndim == 2:
        z, f = z[..., None], f[..., None]
    fit = 0.5 * float(np.sum((z - f) ** 2))
    return fit + weight * sum(tv_norm(z[..., c]) for c in range(z.shape[2]))


def _chambolle(f, weight, iters, tau, callback=None):
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    for it in range(iters):
        gx, gy = _grad(_div(px, py) - f / weight)
        norm = np.sqrt(gx ** 2 + gy ** 2)
        px = (px + tau * gx) / (1.0 + tau * norm)
        py = (py + tau * gy) / (1.0 + tau * norm)
        if callback is not None:
            callback(it, f - weight * _div(px, py))
    return f - weight * _div(px, py)


def tv_denoise(image, weight: float, iters: int = 100, tau: float = 0.125, callback=None) -> np.ndarray:
    """Approximate ``argmin_z 1/2 ||z - image||^2 + weight * TV(z)``, channel by channel.

    ``callback(iteration, channel_estimate)`` is invoked after every dual
    update of every channel when given.
    """
    if weight <= 0:
        raise ConfigurationError(f"TV weight must be > 0, got {weight}")
    if iters < 1:
        raise ConfigurationError(f"TV iterations must be >= 1, got {iters}")
    if not 0 < tau <= 0.25:
        raise ConfigurationError("tau must lie in (0, 1/4]")
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[..., c] = _chambolle(img[..., c], weight, iters, tau, callback)
    return out[..., 0] if squeeze else out


class TVDenoiser:
    """TV prox usable as the ADMM denoising step."""

    network = None

    def __init__(self, weight: float = 0.1, iters: int = 50):
        self.weight = weight
        self.iters = iters

    def __call__(self, v, k: int):
        return tv_denoise(v, self.weight, self.iters)
