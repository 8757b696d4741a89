"""Data-fidelity proximal step for ``f(z) = ||A z - y||^2``.

The minimizer of ``f(z) + mu/2 ||z - v||^2`` solves

    (2 A^T A + mu I) z = 2 A^T y + mu v.

Identity, pure blur and pure mosaic operators have closed forms; everything
else goes through conjugate gradients warm-started at ``v``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericalError, ShapeError
from .operators import Blur, ForwardOperator, Identity, Mosaic, _embed_psf


@dataclass
class CgConfig:
    tol: float = 1e-7
    max_iters: int = 200

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigurationError("CG tolerance must be > 0")
        if self.max_iters < 1:
            raise ConfigurationError("CG max_iters must be >= 1")


@dataclass
class ProxInfo:
    method: str
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True


def cg_solve(linop: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray, x0: np.ndarray | None = None,
             cfg: CgConfig | None = None):
    """Conjugate gradients for a symmetric positive definite ``linop``.

    Returns ``(x, iterations, relative_residual)``. Hitting ``max_iters`` is
    reported through the residual, not raised.
    """
    cfg = cfg or CgConfig()
    rhs = np.asarray(rhs, dtype=np.float64)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros_like(rhs), 0, 0.0
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.float64)
    r = rhs - linop(x)
    p = r.copy()
    rr = float(np.vdot(r, r))
    it = 0
    if not np.isfinite(rr):
        raise NumericalError("non-finite residual in conjugate gradients", step="cg")
    rel = np.sqrt(rr) / rhs_norm
    while rel > cfg.tol and it < cfg.max_iters:
        Ap = linop(p)
        pAp = float(np.vdot(p, Ap))
        if not np.isfinite(pAp) or pAp <= 0:
            if not np.isfinite(pAp):
                raise NumericalError("non-finite value in conjugate gradients", step="cg")
            break
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(np.vdot(r, r))
        if not np.isfinite(rr_new):
            raise NumericalError("non-finite residual in conjugate gradients", step="cg")
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        rel = np.sqrt(rr) / rhs_norm
    return x, it, float(rel)


def deconv_fft_prox(psf, y: np.ndarray, v: np.ndarray, mu: float) -> np.ndarray:
    """Closed-form prox for circular blur, solved per DFT frequency."""
    if mu <= 0:
        raise ConfigurationError(f"mu must be > 0, got {mu}")
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if y.shape != v.shape:
        raise ShapeError(f"y {y.shape} and v {v.shape} must match for deconvolution")
    if isinstance(psf, Blur):
        otf = psf.otf
    else:
        otf = np.fft.rfft2(_embed_psf(np.asarray(psf, dtype=np.float64), y.shape[0], y.shape[1]))
    K = otf[..., None] if y.ndim == 3 else otf
    Y = np.fft.rfft2(y, axes=(0, 1))
    V = np.fft.rfft2(v, axes=(0, 1))
    Z = (2.0 * np.conj(K) * Y + mu * V) / (2.0 * np.abs(K) ** 2 + mu)
    return np.fft.irfft2(Z, s=y.shape[:2], axes=(0, 1))


def normal_residual(op: ForwardOperator, y, v, mu, z) -> float:
    """Relative residual of the prox normal equations at ``z``."""
    rhs = 2.0 * op.adjoint(y) + mu * v
    lhs = 2.0 * op.normal(z) + mu * z
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny))


def prox_data_fidelity(op: ForwardOperator, y, v, mu: float, cfg: CgConfig | None = None,
                       return_info: bool = False):
    """``argmin_z ||A z - y||^2 + mu/2 ||z - v||^2``."""
    if mu <= 0:
        raise ConfigurationError(f"mu must be > 0, got {mu}")
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if y.shape != op.out_shape or v.shape != op.in_shape:
        raise ShapeError(f"prox shapes y={y.shape}, v={v.shape} do not fit {op}")
    if isinstance(op, Identity):
        # written as a correction of v so that y == v returns v bit-exactly
        z, info = v + (2.0 / (2.0 + mu)) * (y - v), ProxInfo("identity")
    elif isinstance(op, Blur):
        z, info = deconv_fft_prox(op, y, v, mu), ProxInfo("fft")
    elif isinstance(op, Mosaic):
        m = op.mask
        z, info = (2.0 * m * y + mu * v) / (2.0 * m + mu), ProxInfo("diagonal")
    else:
        cfg = cfg or CgConfig()
        rhs = 2.0 * op.adjoint(y) + mu * v
        z, it, rel = cg_solve(lambda x: 2.0 * op.normal(x) + mu * x, rhs, v, cfg)
        info = ProxInfo("cg", it, rel, rel <= cfg.tol)
        if not info.converged:
            warnings.warn(f"CG stopped after {it} iterations at relative residual {rel:.3e}",
                          RuntimeWarning, stacklevel=2)
    if not np.all(np.isfinite(z)):
        raise NumericalError("non-finite prox output", step="data_fidelity")
    return (z, info) if return_info else z
