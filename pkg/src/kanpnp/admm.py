"""Plug-and-play ADMM driver.

Each iteration performs, in this order::

    x <- H(z - u)                                   denoising
    z <- argmin ||A z - y||^2 + mu_k/2 ||z - (x + u)||^2   data fidelity
    u <- u + x - z                                  dual update

with ``mu_k`` descending geometrically from ``mu_start`` to ``mu_end``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .errors import ConfigurationError, NumericalError, ShapeError
from .kan import KanNetwork
from .lipschitz import lipschitz_empirical, lipschitz_upper_bound
from .metrics import psnr
from .operators import Blur, ForwardOperator, Identity
from .prox import CgConfig, prox_data_fidelity
from .trainer import DenoiseConfig, apply_denoiser, render


@dataclass
class AdmmConfig:
    iterations: int = 5
    mu_start: float = 2.0
    mu_end: float = 0.2
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    record_trace: bool = True
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.denoise, dict):
            self.denoise = DenoiseConfig(**self.denoise)
        if self.iterations < 1:
            raise ConfigurationError("ADMM needs at least one iteration")
        if not (self.mu_start >= self.mu_end > 0):
            raise ConfigurationError(f"need mu_start >= mu_end > 0, got {self.mu_start}, {self.mu_end}")


@dataclass
class IterationRecord:
    k: int
    mu: float
    residual: float
    fidelity: float
    psnr: float | None = None


@dataclass
class AdmmState:
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    k: int = 0
    trace: list[IterationRecord] = field(default_factory=list)

    def residuals(self) -> list[float]:
        return [r.residual for r in self.trace]


class Denoiser(Protocol):
    network: KanNetwork | None

    def __call__(self, v: np.ndarray, k: int) -> np.ndarray: ...


class KanDenoiser:
    """Fine-tune-and-render denoiser that carries its network across calls."""

    def __init__(self, network: KanNetwork, cfg: DenoiseConfig | None = None):
        self.network = network
        self.cfg = cfg or DenoiseConfig()

    def __call__(self, v, k):
        x, self.network = apply_denoiser(self.network, v, self.cfg)
        return x


def mu_schedule(mu_start: float, mu_end: float, iterations: int) -> list[float]:
    """Geometric (log-linear) sequence from ``mu_start`` to ``mu_end`` inclusive."""
    if iterations < 1:
        raise ConfigurationError("schedule needs at least one iteration")
    if not (mu_start >= mu_end > 0):
        raise ConfigurationError(f"need mu_start >= mu_end > 0, got {mu_start}, {mu_end}")
    if iterations == 1:
        return [float(mu_start)]
    ratio = (mu_end / mu_start) ** (1.0 / (iterations - 1))
    out = [float(mu_start * ratio ** k) for k in range(iterations)]
    out[-1] = float(mu_end)
    return out


def _normalized_conv(img: np.ndarray) -> np.ndarray:
    # periodic 3x3 binomial smoothing
    w = np.array([0.25, 0.5, 0.25])
    out = sum(w[i] * np.roll(img, i - 1, axis=0) for i in range(3))
    return sum(w[i] * np.roll(out, i - 1, axis=1) for i in range(3))


def back_projection(op: ForwardOperator, y: np.ndarray) -> np.ndarray:
    """Lift a measurement into image space for initialization.

    Identity and pure blur return ``y``. Operators that decimate or mosaic
    use the gain-normalized adjoint ``S(A^T y) / S(A^T 1)`` where ``S`` is a
    small smoothing filter (applied only when ``A^T 1`` has zeros).
    """
    y = np.asarray(y, dtype=np.float64)
    if isinstance(op, (Identity, Blur)):
        return y.copy()
    num = op.adjoint(y).astype(np.float64)
    den = op.adjoint(np.ones(op.out_shape)).astype(np.float64)
    if np.min(den) <= 1e-12 * np.max(den):
        num = _normalized_conv(num)
        den = _normalized_conv(den)
    return num / den


def init_state(y: np.ndarray, op: ForwardOperator, net: KanNetwork | None = None) -> AdmmState:
    z0 = back_projection(op, y)
    if net is not None:
        x0 = render(net, z0.shape[0], z0.shape[1]).astype(np.float64)
        if x0.shape != z0.shape:
            raise ShapeError(f"network renders {x0.shape}, operator input is {z0.shape}")
    else:
        x0 = z0.copy()
    return AdmmState(x=x0, z=z0, u=np.zeros_like(z0))


def fidelity(op: ForwardOperator, y, z) -> float:
    r = op.apply(z) - y
    return float(np.sum(np.asarray(r, dtype=np.float64) ** 2))


def run_pnp_admm(y, op: ForwardOperator, prior, cfg: AdmmConfig | None = None,
                 ground_truth: np.ndarray | None = None, cg: CgConfig | None = None,
                 prox: Callable = prox_data_fidelity):
    """Run the three-step iteration for ``cfg.iterations`` steps.

    ``prior`` is a :class:`KanNetwork` (wrapped in :class:`KanDenoiser`) or
    any callable ``prior(v, k) -> x``. Returns ``(clip(z, 0, 1), state,
    network)`` where ``network`` is the prior's final network (``None`` for
    non-network priors).
    """
    cfg = cfg or AdmmConfig()
    y = np.asarray(y, dtype=np.float64)
    if y.shape != op.out_shape:
        raise ShapeError(f"measurement shape {y.shape} != operator output {op.out_shape}")
    if isinstance(prior, KanNetwork):
        denoiser = KanDenoiser(prior, cfg.denoise)
    else:
        denoiser = prior
    state = init_state(y, op, getattr(denoiser, "network", None))
    mus = mu_schedule(cfg.mu_start, cfg.mu_end, cfg.iterations)
    for k, mu in enumerate(mus):
        x = np.asarray(denoiser(state.z - state.u, k), dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"denoising step produced non-finite values at iteration {k}", step="denoise")
        z = prox(op, y, x + state.u, mu, cg)
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"data-fidelity step produced non-finite values at iteration {k}",
                                 step="data_fidelity")
        u = state.u + x - z
        if not np.all(np.isfinite(u)):
            raise NumericalError(f"dual update produced non-finite values at iteration {k}", step="dual")
        state.x, state.z, state.u, state.k = x, z, u, k + 1
        if cfg.record_trace:
            rec = IterationRecord(k, mu, float(np.linalg.norm(x - z)), fidelity(op, y, z))
            if ground_truth is not None:
                rec.psnr = psnr(ground_truth, np.clip(z, 0.0, 1.0))
            state.trace.append(rec)
    return np.clip(state.z, 0.0, 1.0), state, getattr(denoiser, "network", None)


def fixed_point_report(state: AdmmState, net: KanNetwork | None = None, n_pairs: int = 2000,
                       seed: int = 0) -> dict:
    """Consensus residuals and the penalty-versus-Lipschitz comparison."""
    residuals = state.residuals()
    mus = [r.mu for r in state.trace]
    report = {
        "residuals": residuals,
        "mu": mus,
        "residual_decreased": bool(residuals and residuals[-1] < residuals[0]),
        "residual_ratio": (residuals[-1] / residuals[0]) if residuals and residuals[0] > 0 else 0.0,
    }
    if net is not None:
        bound = lipschitz_upper_bound(net)
        emp = lipschitz_empirical(net, n_pairs, seed)
        report.update({
            "lipschitz_bound": bound,
            "lipschitz_empirical": emp,
            "mu_above_bound": [m > bound for m in mus],
            "mu_above_empirical": [m > emp for m in mus],
        })
    return report


def export_trace_csv(state: AdmmState, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "mu", "residual", "fidelity", "psnr"])
        for r in state.trace:
            writer.writerow([r.k, repr(r.mu), repr(r.residual), repr(r.fidelity),
                             "" if r.psnr is None else repr(r.psnr)])
    return path


def trace_to_json(state: AdmmState) -> str:
    return json.dumps([asdict(r) for r in state.trace])
