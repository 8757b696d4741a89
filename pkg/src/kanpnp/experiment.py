"""End-to-end runs: degrade, pretrain, reconstruct, evaluate, write artifacts."""

from __future__ import annotations

import dataclasses
import enum
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .admm import AdmmConfig, back_projection, export_trace_csv, fixed_point_report, mu_schedule, run_pnp_admm
from .basis import BasisKind, BasisSpec
from .errors import ConfigurationError, KanPnPError, ShapeError
from .images import crop_divisible, load_image, resize_area, save_image
from .kan import DEFAULT_HIDDEN, init_network, save_network
from .metrics import psnr, ssim
from .operators import ForwardOperator, compose, gaussian_psf, load_psf, make_blur, make_downsample, make_mosaic
from .trainer import TrainConfig, export_loss_trace, pretrain_prior
from .tv import TVDenoiser

REPORT_SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "KANPNP_OUTPUT_ROOT"
DEFAULT_SIZE = (512, 384)  # width, height


class Task(str, enum.Enum):
    SR2 = "sr2"
    SR4 = "sr4"
    SR8 = "sr8"
    DECONV = "deconv"
    DEMOSAIC = "demosaic"
    JOINT = "joint"

    @property
    def sr_factor(self) -> int | None:
        return {"sr2": 2, "sr4": 4, "sr8": 8}.get(self.value)

    @property
    def divisor(self) -> int:
        # mosaic tasks need even sides
        return self.sr_factor or (2 if self in (Task.DEMOSAIC, Task.JOINT) else 1)


class Prior(str, enum.Enum):
    KAN_BSPLINE = "kan_bspline"
    KAN_FOURIER = "kan_fourier"
    TV = "tv"


class ExperimentError(KanPnPError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class OperatorConfig:
    blur_size: int = 5
    blur_std: float = 1.0
    psf_path: str | None = None
    bayer_pattern: str = "RGGB"
    sr_kernel_std: float | None = None
    sr_kernel_radius: int | None = None
    measurement_noise: float = 0.0


@dataclass
class ExperimentConfig:
    task: Task = Task.SR2
    ground_truth: str | None = None
    observation: str | None = None
    prior: Prior = Prior.KAN_BSPLINE
    train: TrainConfig = field(default_factory=TrainConfig)
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    size: tuple[int, int] | None = DEFAULT_SIZE
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    grid_size: int = 5
    spline_order: int = 3
    float32: bool = True
    tv_weight: float = 0.05
    tv_iters: int = 50
    output_dir: str | None = None
    name: str | None = None
    seed: int = 0

    def __post_init__(self):
        try:
            self.task = Task(self.task)
            self.prior = Prior(self.prior)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.admm, dict):
            self.admm = AdmmConfig(**self.admm)
        if isinstance(self.operator, dict):
            self.operator = OperatorConfig(**self.operator)
        if self.size is not None:
            self.size = tuple(int(v) for v in self.size)
            if len(self.size) != 2 or min(self.size) < 1:
                raise ConfigurationError(f"size must be (width, height), got {self.size}")
        self.hidden = tuple(int(v) for v in self.hidden)
        if self.tv_weight <= 0 or self.tv_iters < 1:
            raise ConfigurationError("tv_weight must be > 0 and tv_iters >= 1")
        if self.ground_truth is None and self.observation is None:
            raise ConfigurationError("need a ground-truth image or an observation")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["task"] = self.task.value
        d["prior"] = self.prior.value
        d["size"] = list(self.size) if self.size is not None else None
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def resolve_output_dir(self) -> Path:
        if self.output_dir is not None:
            return Path(self.output_dir)
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "kanpnp_runs"))
        stem = Path(self.ground_truth or self.observation).stem
        return root / (self.name or f"{stem}_{self.task.value}_{self.prior.value}")


# -- building blocks ------------------------------------------------------------


def build_operator(task: Task, height: int, width: int, channels: int,
                   opcfg: OperatorConfig | None = None) -> ForwardOperator:
    opcfg = opcfg or OperatorConfig()
    task = Task(task)
    if task.sr_factor:
        kernel = {}
        if opcfg.sr_kernel_std is not None:
            kernel["kernel_std"] = opcfg.sr_kernel_std
        if opcfg.sr_kernel_radius is not None:
            kernel["kernel_radius"] = opcfg.sr_kernel_radius
        return make_downsample(height, width, task.sr_factor, channels, **kernel)
    if task in (Task.DEMOSAIC, Task.JOINT) and channels != 3:
        raise ConfigurationError("demosaicing tasks need an RGB image")
    if task is Task.DEMOSAIC:
        return make_mosaic(height, width, opcfg.bayer_pattern)
    if opcfg.psf_path:
        psf = load_psf(opcfg.psf_path)
    else:
        psf = gaussian_psf(opcfg.blur_size, opcfg.blur_std)
    blur = make_blur(psf, height, width, channels)
    if task is Task.DECONV:
        return blur
    return compose(make_mosaic(height, width, opcfg.bayer_pattern), blur)


def prepare_ground_truth(img: np.ndarray, task: Task, size: tuple[int, int] | None) -> np.ndarray:
    """Area-resize to ``size`` (width, height), then crop to the task's divisor."""
    if size is not None:
        w, h = size
        d = Task(task).divisor
        img = resize_area(img, w - w % d or d, h - h % d or d)
    return crop_divisible(img, Task(task).divisor)


def synthesize(op: ForwardOperator, gt: np.ndarray, noise: float = 0.0, seed: int = 0) -> np.ndarray:
    y = op.apply(gt)
    if noise > 0:
        y = y + noise * np.random.default_rng(seed).standard_normal(y.shape)
    return y


def _keys(t, a=-0.5):
    t = np.abs(t)
    return np.where(t <= 1, (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1,
                    np.where(t < 2, a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a, 0.0))


def _upsample_axis(y, factor, axis):
    n = y.shape[axis]
    pos = np.arange(n * factor) / factor
    base = np.floor(pos).astype(int)
    out = 0.0
    for off in (-1, 0, 1, 2):
        idx = (base + off) % n
        w = _keys(pos - (base + off))
        shape = [1] * y.ndim
        shape[axis] = -1
        out = out + np.take(y, idx, axis=axis) * w.reshape(shape)
    return out


def bicubic_upsample(y: np.ndarray, factor: int) -> np.ndarray:
    """Keys bicubic (a = -0.5) interpolation, periodic, on the decimation grid.

    Low-resolution sample ``(i, j)`` sits at high-resolution pixel
    ``(f*i, f*j)``, matching how the downsampling operator decimates.
    """
    return _upsample_axis(_upsample_axis(np.asarray(y, np.float64), factor, 0), factor, 1)


def _metrics(gt, img) -> dict:
    img = np.clip(img, 0.0, 1.0)
    return {"psnr": psnr(gt, img), "ssim": ssim(gt, img)}


class _Stage:
    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, etype, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if isinstance(exc, Exception) and not isinstance(exc, ExperimentError):
            raise ExperimentError(self.name, exc) from exc
        return False


def _observation_space_image(path, task: Task):
    # an observation file holds y directly; its shape fixes the image size
    y = load_image(path)
    if task.sr_factor:
        f = task.sr_factor
        return y, (y.shape[0] * f, y.shape[1] * f, y.shape[2])
    if task in (Task.DEMOSAIC, Task.JOINT):
        if y.shape[2] != 1:
            raise ShapeError("a Bayer observation must be a single-channel image")
        return y, (y.shape[0], y.shape[1], 3)
    return y, y.shape


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Full pipeline; returns the JSON-serializable report (also written to disk)."""
    timings: dict[str, float] = {}
    t_start = time.perf_counter()
    out_dir = cfg.resolve_output_dir()

    with _Stage("load", timings):
        gt = None
        if cfg.ground_truth is not None:
            gt = prepare_ground_truth(load_image(cfg.ground_truth), cfg.task, cfg.size)
        if cfg.observation is not None:
            y, shape = _observation_space_image(cfg.observation, cfg.task)
            if gt is not None and gt.shape != shape:
                raise ShapeError(f"ground truth {gt.shape} does not match observation-implied {shape}")
        else:
            shape = gt.shape
        op = build_operator(cfg.task, shape[0], shape[1], shape[2], cfg.operator)
        if cfg.observation is None:
            y = synthesize(op, gt, cfg.operator.measurement_noise, cfg.seed)
        if y.shape != op.out_shape:
            raise ShapeError(f"observation {y.shape} does not match operator output {op.out_shape}")

    baselines = {}
    with _Stage("init", timings):
        z0 = back_projection(op, y)
        if gt is not None:
            baselines["back_projection"] = _metrics(gt, z0)
            if cfg.task.sr_factor:
                baselines["bicubic"] = _metrics(gt, bicubic_upsample(y, cfg.task.sr_factor))

    losses: list[float] = []
    net = None
    with _Stage("pretrain", timings):
        if cfg.prior is Prior.TV:
            prior = TVDenoiser(cfg.tv_weight, cfg.tv_iters)
        else:
            kind = BasisKind.BSPLINE if cfg.prior is Prior.KAN_BSPLINE else BasisKind.FOURIER
            basis = BasisSpec(kind, cfg.grid_size, cfg.spline_order, (-1.0, 1.0))
            dtype = np.float32 if cfg.float32 else np.float64
            net = init_network([2, *cfg.hidden, shape[2]], basis, seed=cfg.seed, dtype=dtype)
            net, losses = pretrain_prior(net, np.clip(z0, 0.0, 1.0), cfg.train)
            prior = net

    with _Stage("admm", timings):
        recon, state, final_net = run_pnp_admm(y, op, prior, cfg.admm, ground_truth=gt)

    with _Stage("report", timings):
        fp = fixed_point_report(state, final_net, seed=cfg.seed)
        report = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "package_version": __version__,
            "task": cfg.task.value,
            "prior": cfg.prior.value,
            "image_shape": list(shape),
            "measurement_shape": list(y.shape),
            "iterations": state.k,
            "mu_schedule": mu_schedule(cfg.admm.mu_start, cfg.admm.mu_end, cfg.admm.iterations),
            "residuals": fp["residuals"],
            "residual_ratio": fp["residual_ratio"],
            "residual_decreased": fp["residual_decreased"],
            "fidelity": [r.fidelity for r in state.trace],
            "pretrain_loss": {"first": losses[0], "last": losses[-1]} if losses else None,
            "seeds": {"network": cfg.seed, "train_noise": cfg.train.seed,
                      "measurement_noise": cfg.seed, "admm": cfg.admm.seed},
            "config": cfg.to_dict(),
        }
        if final_net is not None:
            report["lipschitz_bound"] = fp["lipschitz_bound"]
            report["lipschitz_empirical"] = fp["lipschitz_empirical"]
            report["mu_above_bound"] = fp["mu_above_bound"]
            report["mu_above_empirical"] = fp["mu_above_empirical"]
        if gt is not None:
            report.update(_metrics(gt, recon))
            report["psnr_trace"] = [r.psnr for r in state.trace]
            report["baselines"] = baselines
        if write:
            out_dir.mkdir(parents=True, exist_ok=True)
            files = {
                "reconstruction": save_image(recon, out_dir / "reconstruction.png"),
                "trace": export_trace_csv(state, out_dir / "trace.csv"),
            }
            if losses:
                files["loss_trace"] = export_loss_trace(losses, out_dir / "pretrain_loss.csv")
            if final_net is not None:
                files["network"] = save_network(final_net, out_dir / "network.npz")
            report["files"] = {k: str(v) for k, v in files.items()}

    timings["total"] = time.perf_counter() - t_start
    report["wall_time"] = timings
    if write:
        (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report
