"""Linear forward operators with exact adjoints.

Images are ``H x W x C`` float arrays. All convolutions are circular, which
makes blur diagonal in the 2-D DFT and gives the data-fidelity prox a closed
form for pure deconvolution.
"""

from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ShapeError


class OpKind(str, enum.Enum):
    IDENTITY = "identity"
    DOWNSAMPLE = "downsample"
    BLUR = "blur"
    MOSAIC = "mosaic"
    COMPOSED = "composed"


class ForwardOperator:
    """Base class: ``apply`` maps ``in_shape`` to ``out_shape``; ``adjoint`` back."""

    kind: OpKind

    def __init__(self, in_shape, out_shape):
        self.in_shape = tuple(int(s) for s in in_shape)
        self.out_shape = tuple(int(s) for s in out_shape)

    def apply(self, x: np.ndarray) -> np.ndarray:
        self._check(x, self.in_shape)
        return self._apply(x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        self._check(y, self.out_shape)
        return self._adjoint(y)

    def normal(self, x: np.ndarray) -> np.ndarray:
        """``A^T A x``."""
        return self.adjoint(self.apply(x))

    @staticmethod
    def _check(arr, shape):
        if np.shape(arr) != shape:
            raise ShapeError(f"expected array of shape {shape}, got {np.shape(arr)}")

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.in_shape} -> {self.out_shape})"


class Identity(ForwardOperator):
    kind = OpKind.IDENTITY

    def __init__(self, shape):
        super().__init__(shape, shape)

    def _apply(self, x):
        return np.array(x, copy=True)

    def _adjoint(self, y):
        return np.array(y, copy=True)

    def to_dict(self):
        return {"kind": self.kind.value, "shape": list(self.in_shape)}


def _embed_psf(psf: np.ndarray, height: int, width: int) -> np.ndarray:
    """Place the kernel center at pixel (0, 0), wrapping periodically."""
    kh, kw = psf.shape
    out = np.zeros((height, width))
    rows = (np.arange(kh) - kh // 2) % height
    cols = (np.arange(kw) - kw // 2) % width
    np.add.at(out, (rows[:, None], cols[None, :]), psf)
    return out


def gaussian_psf(size: int, std: float) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ConfigurationError(f"psf size must be odd and positive, got {size}")
    if std <= 0:
        raise ConfigurationError("psf std must be > 0")
    r = np.arange(size) - size // 2
    g = np.exp(-(r ** 2) / (2.0 * std ** 2))
    k = np.outer(g, g)
    return k / k.sum()


class Blur(ForwardOperator):
    """Per-channel circular convolution with a normalized PSF."""

    kind = OpKind.BLUR

    def __init__(self, psf, height: int, width: int, channels: int):
        psf = np.asarray(psf, dtype=np.float64)
        if psf.ndim != 2 or psf.shape[0] % 2 == 0 or psf.shape[1] % 2 == 0:
            raise ConfigurationError(f"psf must be 2-D with odd side lengths, got {psf.shape}")
        if abs(psf.sum() - 1.0) > 1e-6:
            raise ConfigurationError(f"psf must sum to 1, sums to {psf.sum():.8g}")
        shape = (height, width, channels)
        super().__init__(shape, shape)
        self.psf = psf
        self.otf = np.fft.rfft2(_embed_psf(psf, height, width))

    def _filter(self, x, otf):
        X = np.fft.rfft2(x, axes=(0, 1))
        out = np.fft.irfft2(X * otf[..., None], s=x.shape[:2], axes=(0, 1))
        return out.astype(np.result_type(x.dtype, np.float32), copy=False)

    def _apply(self, x):
        return self._filter(x, self.otf)

    def _adjoint(self, y):
        return self._filter(y, np.conj(self.otf))

    def apply_spatial(self, x: np.ndarray) -> np.ndarray:
        """Direct circular convolution, independent of the FFT path."""
        self._check(x, self.in_shape)
        kh, kw = self.psf.shape
        out = np.zeros(x.shape, dtype=np.float64)
        for a in range(kh):
            for b in range(kw):
                out += self.psf[a, b] * np.roll(x, (a - kh // 2, b - kw // 2), axis=(0, 1))
        return out

    def to_dict(self):
        return {"kind": self.kind.value, "psf": self.psf.tolist(), "shape": list(self.in_shape)}


class Downsample(ForwardOperator):
    """Gaussian anti-alias blur followed by keeping the top-left sample of each block."""

    kind = OpKind.DOWNSAMPLE

    def __init__(self, height: int, width: int, factor: int, channels: int,
                 kernel_std: float | None = None, kernel_radius: int | None = None):
        if factor < 1:
            raise ConfigurationError(f"factor must be >= 1, got {factor}")
        if height % factor or width % factor:
            raise ConfigurationError(f"image {height}x{width} is not divisible by factor {factor}")
        self.factor = int(factor)
        self.kernel_std = 0.5 * factor if kernel_std is None else float(kernel_std)
        self.kernel_radius = 2 * factor if kernel_radius is None else int(kernel_radius)
        psf = gaussian_psf(2 * self.kernel_radius + 1, self.kernel_std)
        self.blur = Blur(psf, height, width, channels)
        super().__init__((height, width, channels), (height // factor, width // factor, channels))

    def _apply(self, x):
        f = self.factor
        return np.ascontiguousarray(self.blur._apply(x)[::f, ::f])

    def _adjoint(self, y):
        f = self.factor
        up = np.zeros(self.in_shape, dtype=np.result_type(y.dtype, np.float32))
        up[::f, ::f] = y
        return self.blur._adjoint(up)

    def to_dict(self):
        return {"kind": self.kind.value, "factor": self.factor, "kernel_std": self.kernel_std,
                "kernel_radius": self.kernel_radius, "shape": list(self.in_shape)}


def bayer_mask(height: int, width: int, pattern: str = "RGGB") -> np.ndarray:
    if pattern != "RGGB":
        raise ConfigurationError(f"unsupported Bayer pattern {pattern!r}")
    mask = np.zeros((height, width, 3))
    mask[0::2, 0::2, 0] = 1.0
    mask[0::2, 1::2, 1] = 1.0
    mask[1::2, 0::2, 1] = 1.0
    mask[1::2, 1::2, 2] = 1.0
    return mask


class Mosaic(ForwardOperator):
    """RGB image to a single Bayer plane."""

    kind = OpKind.MOSAIC

    def __init__(self, height: int, width: int, pattern: str = "RGGB"):
        if height % 2 or width % 2:
            raise ConfigurationError(f"Bayer mosaic needs even dimensions, got {height}x{width}")
        self.pattern = pattern
        self.mask = bayer_mask(height, width, pattern)
        super().__init__((height, width, 3), (height, width, 1))

    def _apply(self, x):
        return np.sum(x * self.mask, axis=2, keepdims=True).astype(np.result_type(x.dtype, np.float32))

    def _adjoint(self, y):
        return (self.mask * y).astype(np.result_type(y.dtype, np.float32))

    def to_dict(self):
        return {"kind": self.kind.value, "pattern": self.pattern, "shape": list(self.in_shape)}


class Composed(ForwardOperator):
    """``outer(inner(x))``; children are stored innermost first."""

    kind = OpKind.COMPOSED

    def __init__(self, children):
        children = [c for c in children if not isinstance(c, Identity)]
        if len(children) < 2:
            raise ConfigurationError("use the child operator directly when fewer than two remain")
        for inner, outer in zip(children[:-1], children[1:]):
            if inner.out_shape != outer.in_shape:
                raise ShapeError(f"cannot compose {outer} after {inner}")
        self.children = tuple(children)
        super().__init__(children[0].in_shape, children[-1].out_shape)

    def _apply(self, x):
        for op in self.children:
            x = op._apply(x)
        return x

    def _adjoint(self, y):
        for op in reversed(self.children):
            y = op._adjoint(y)
        return y

    def to_dict(self):
        return {"kind": self.kind.value, "children": [c.to_dict() for c in self.children]}


def make_downsample(height: int, width: int, factor: int, channels: int = 3, **kernel) -> Downsample:
    if factor not in (2, 4, 8):
        raise ConfigurationError(f"super-resolution factor must be 2, 4 or 8, got {factor}")
    return Downsample(height, width, factor, channels, **kernel)


def make_blur(psf, height: int, width: int, channels: int = 3) -> Blur:
    return Blur(psf, height, width, channels)


def make_mosaic(height: int, width: int, pattern: str = "RGGB") -> Mosaic:
    return Mosaic(height, width, pattern)


def compose(outer: ForwardOperator, inner: ForwardOperator) -> ForwardOperator:
    """Operator applying ``inner`` first, then ``outer``."""
    if inner.out_shape != outer.in_shape:
        raise ShapeError(f"inner output {inner.out_shape} != outer input {outer.in_shape}")
    parts = []
    for op in (inner, outer):
        parts.extend(op.children if isinstance(op, Composed) else [op])
    parts = [p for p in parts if not isinstance(p, Identity)]
    if not parts:
        return Identity(inner.in_shape)
    if len(parts) == 1:
        return parts[0]
    return Composed(parts)


def op_apply(op: ForwardOperator, image: np.ndarray) -> np.ndarray:
    return op.apply(image)


def op_adjoint(op: ForwardOperator, measurement: np.ndarray) -> np.ndarray:
    return op.adjoint(measurement)


def adjoint_check(op: ForwardOperator, seed: int = 0, n_pairs: int = 20) -> float:
    """Largest relative mismatch of ``<Ax, y>`` and ``<x, A^T y>`` over random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        x = rng.standard_normal(op.in_shape)
        y = rng.standard_normal(op.out_shape)
        lhs = float(np.vdot(op.apply(x), y))
        rhs = float(np.vdot(x, op.adjoint(y)))
        scale = max(abs(lhs), abs(rhs), np.finfo(float).tiny)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def load_psf(path) -> np.ndarray:
    """Read a PSF stored as a whitespace-separated plain-text 2-D array."""
    psf = np.loadtxt(Path(path), ndmin=2)
    return psf


def contains(op: ForwardOperator, kind: OpKind) -> bool:
    if op.kind is kind:
        return True
    return isinstance(op, Composed) and any(c.kind is kind for c in op.children)
