"""Single-instance training of a coordinate KAN and its use as a denoiser.

The network maps normalized pixel coordinates ``(row, col)`` to colors. The
denoising step of the ADMM loop cannot feed an image through such a network,
so it is realized as "fine-tune on the input image, then render".
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ShapeError
from .kan import KanNetwork, accumulate_gradients, evaluate


@dataclass(frozen=True)
class CoordGrid:
    coords: np.ndarray
    height: int
    width: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width


def coord_grid(height: int, width: int, dtype=np.float64) -> CoordGrid:
    """Row-major ``(row, col)`` coordinates in ``[-1, 1]``.

    A single sample along an axis sits at the domain start, ``-1``.
    """
    if height < 1 or width < 1:
        raise ConfigurationError(f"grid dimensions must be >= 1, got {(height, width)}")
    rows = np.linspace(-1.0, 1.0, height) if height > 1 else np.array([-1.0])
    cols = np.linspace(-1.0, 1.0, width) if width > 1 else np.array([-1.0])
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    coords = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(dtype)
    return CoordGrid(coords, height, width)


@dataclass
class TrainConfig:
    iterations: int = 100
    learning_rate: float = 1e-3
    noise_sigma: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")


@dataclass
class DenoiseConfig:
    inner_steps: int = 15
    inner_lr: float = 1e-3

    def __post_init__(self):
        if self.inner_steps < 0:
            raise ConfigurationError("inner_steps must be >= 0")
        if self.inner_lr <= 0:
            raise ConfigurationError("inner_lr must be > 0")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, lr: float, b1: float = 0.9, b2: float = 0.999,
              eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and Adam moments must have equal length")
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch in Adam update: {p.shape} vs {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_params.append((p - update).astype(p.dtype, copy=False))
        new_m.append(m.astype(p.dtype, copy=False))
        new_v.append(v.astype(p.dtype, copy=False))
    return new_params, AdamState(new_m, new_v, t)


def _as_image(img, net: KanNetwork) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ShapeError(f"expected an H x W x C image, got shape {arr.shape}")
    if arr.shape[2] != net.dims[-1]:
        raise ShapeError(f"image has {arr.shape[2]} channels but the network outputs {net.dims[-1]}")
    if net.dims[0] != 2:
        raise ShapeError("coordinate networks need input dimension 2")
    return arr.astype(net.dtype, copy=False)


def _mse_grad_fn(target_flat: np.ndarray):
    count = target_flat.size

    def fn(outputs, rows):
        diff = outputs - target_flat[rows]
        return float(np.sum(diff.astype(np.float64) ** 2)) / count, diff * (2.0 / count)

    return fn


def fit_steps(net: KanNetwork, grid: CoordGrid, target: np.ndarray, steps: int, lr: float,
              b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8, state: AdamState | None = None):
    """Full-batch Adam on the pixel MSE; returns ``(net, losses, state)``.

    ``losses[i]`` is the MSE of the parameters *before* update ``i``.
    """
    flat = target.reshape(-1, target.shape[-1])
    grad_fn = _mse_grad_fn(flat)
    params = net.parameters()
    state = state or AdamState.zeros_like(params)
    losses = []
    for _ in range(steps):
        loss, grads, _ = accumulate_gradients(net, grid.coords, grad_fn)
        losses.append(loss)
        params, state = adam_step(params, grads.as_list(), state, lr, b1, b2, eps)
        net = net.with_parameters(params)
    return net, losses, state


def render(net: KanNetwork, height: int, width: int) -> np.ndarray:
    grid = coord_grid(height, width, dtype=net.dtype)
    return evaluate(net, grid.coords).reshape(height, width, -1)


def pretrain_prior(net: KanNetwork, observed, cfg: TrainConfig | None = None):
    """Fit the network to a noisy copy of ``observed``.

    The target is ``clip(observed + N(0, sigma^2), 0, 1)`` drawn once from
    ``cfg.seed``. Returns the trained network and the per-iteration MSE.
    """
    cfg = cfg or TrainConfig()
    img = _as_image(observed, net)
    if cfg.iterations == 0:
        return net, []
    rng = np.random.default_rng(cfg.seed)
    noisy = img + cfg.noise_sigma * rng.standard_normal(img.shape)
    target = np.clip(noisy, 0.0, 1.0).astype(net.dtype)
    grid = coord_grid(img.shape[0], img.shape[1], dtype=net.dtype)
    net, losses, _ = fit_steps(net, grid, target, cfg.iterations, cfg.learning_rate,
                               cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return net, losses


def apply_denoiser(net: KanNetwork, target, cfg: DenoiseConfig | None = None):
    """Denoising step: fine-tune on ``target`` then render the network.

    Values of ``target`` are not clipped (ADMM iterates may leave [0, 1]).
    Adam does not guarantee descent, so if the fine-tuned render fits
    ``target`` worse than the starting network did, the starting network is
    kept. Returns ``(rendered_image, updated_network)``.
    """
    cfg = cfg or DenoiseConfig()
    img = _as_image(target, net)
    h, w = img.shape[:2]
    if cfg.inner_steps == 0:
        return render(net, h, w), net
    grid = coord_grid(h, w, dtype=net.dtype)
    tuned, losses, _ = fit_steps(net, grid, img, cfg.inner_steps, cfg.inner_lr)
    out = render(tuned, h, w)
    if _mse(out, img) > losses[0]:
        return render(net, h, w), net
    return out, tuned


def _mse(a, b) -> float:
    return float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))


def export_loss_trace(losses, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mse"])
        for i, loss in enumerate(losses):
            writer.writerow([i, repr(float(loss))])
    return path


def config_dict(cfg) -> dict:
    return asdict(cfg)
