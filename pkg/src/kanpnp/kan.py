"""Kolmogorov-Arnold network layers with hand-written forward and backward passes.

Each edge ``i -> j`` of a layer carries the univariate function

    phi_ji(x) = base_weights[j, i] * silu(x) + sum_m spline_coeffs[j, i, m] * B_m(clamp(x))

and output ``j`` sums its incoming edges. Networks are plain values: training
code builds new networks instead of mutating existing ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numba
import numpy as np
from scipy.special import expit

from .basis import BasisKind, BasisSpec, _fourier, bspline_design
from .errors import ConfigurationError, ShapeError, UsageError

DEFAULT_HIDDEN = (128, 32, 16)
FORMAT_VERSION = 1


def silu(x):
    return x * expit(x)


def silu_deriv(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


@numba.njit(cache=True, fastmath=True)
def _silu_pair(x, act, dact):
    # silu and its derivative in one pass; arrays are flat and contiguous.
    # The constant is typed like x so float32 stays float32.
    one = x.dtype.type(1.0)
    for n in range(x.shape[0]):
        s = one / (one + np.exp(-x[n]))
        act[n] = x[n] * s
        dact[n] = s * (one + x[n] * (one - s))


def _silu_and_deriv(x: np.ndarray):
    x = np.ascontiguousarray(x)
    act = np.empty_like(x)
    dact = np.empty_like(x)
    _silu_pair(x.reshape(-1), act.reshape(-1), dact.reshape(-1))
    return act, dact


@dataclass(frozen=True, eq=False)
class KanLayer:
    in_dim: int
    out_dim: int
    basis: BasisSpec
    spline_coeffs: np.ndarray
    base_weights: np.ndarray

    def __post_init__(self):
        nb = self.basis.n_basis
        if self.spline_coeffs.shape != (self.out_dim, self.in_dim, nb):
            raise ShapeError(
                f"spline_coeffs shape {self.spline_coeffs.shape} != {(self.out_dim, self.in_dim, nb)}"
            )
        if self.base_weights.shape != (self.out_dim, self.in_dim):
            raise ShapeError(f"base_weights shape {self.base_weights.shape} != {(self.out_dim, self.in_dim)}")
        if not (np.all(np.isfinite(self.spline_coeffs)) and np.all(np.isfinite(self.base_weights))):
            raise ConfigurationError("layer coefficients must be finite")

    @property
    def dtype(self):
        return self.spline_coeffs.dtype


@dataclass(frozen=True, eq=False)
class KanNetwork:
    layers: tuple[KanLayer, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ConfigurationError("a network needs at least one layer")
        for prev, nxt in zip(self.layers[:-1], self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def basis(self) -> BasisSpec:
        return self.layers[0].basis

    @property
    def dtype(self):
        return self.layers[0].dtype

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list ``[C_0, W_0, C_1, W_1, ...]``."""
        out = []
        for layer in self.layers:
            out += [layer.spline_coeffs, layer.base_weights]
        return out

    def with_parameters(self, params: Sequence[np.ndarray]) -> "KanNetwork":
        if len(params) != 2 * len(self.layers):
            raise ShapeError("parameter list length does not match the network")
        layers = [
            KanLayer(l.in_dim, l.out_dim, l.basis, params[2 * i], params[2 * i + 1])
            for i, l in enumerate(self.layers)
        ]
        return KanNetwork(tuple(layers), self.seed)

    def astype(self, dtype) -> "KanNetwork":
        return self.with_parameters([p.astype(dtype) for p in self.parameters()])

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


@dataclass
class GradientBundle:
    spline_grads: list[np.ndarray]
    base_grads: list[np.ndarray]
    input_grad: np.ndarray | None = None

    def as_list(self) -> list[np.ndarray]:
        out = []
        for c, w in zip(self.spline_grads, self.base_grads):
            out += [c, w]
        return out


@dataclass
class ForwardCache:
    net: KanNetwork
    inputs: list[np.ndarray] = field(default_factory=list)


def init_network(dims: Sequence[int], basis: BasisSpec | None = None, seed: int = 0,
                 dtype=np.float64) -> KanNetwork:
    """Random network with seeded coefficients.

    Spline coefficients are N(0, (0.1 / sqrt(n_basis))^2); base weights are
    U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    """
    dims = list(dims)
    if len(dims) < 2:
        raise ConfigurationError(f"dims needs at least two entries, got {dims}")
    if any(int(d) != d or d < 1 for d in dims):
        raise ConfigurationError(f"all dims must be positive integers, got {dims}")
    basis = basis or BasisSpec()
    rng = np.random.default_rng(seed)
    nb = basis.n_basis
    layers = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        coeffs = rng.normal(0.0, 0.1 / np.sqrt(nb), size=(n_out, n_in, nb))
        bound = 1.0 / np.sqrt(n_in)
        base = rng.uniform(-bound, bound, size=(n_out, n_in))
        layers.append(KanLayer(n_in, n_out, basis, coeffs.astype(dtype), base.astype(dtype)))
    return KanNetwork(tuple(layers), seed)


# -- single-layer kernels -----------------------------------------------------


@numba.njit(cache=True, fastmath=True)
def _gather_deriv(G, ders, first, x, a, b, out):
    # out[n] = sum_r G[n, first[n] + r] * ders[n, r], or 0 where x[n] was
    # clamped (the spline branch is flat outside the domain); G is (M, nb)
    width = ders.shape[1]
    zero = out.dtype.type(0.0)
    for n in range(ders.shape[0]):
        if x[n] < a or x[n] > b:
            out[n] = zero
            continue
        j = first[n]
        acc = zero
        for r in range(width):
            acc += G[n, j + r] * ders[n, r]
        out[n] = acc


def _basis_matrix(layer: KanLayer, x: np.ndarray):
    """Dense basis design matrix ``[N, in*nb]`` plus what backward needs."""
    basis = layer.basis
    a, b = basis.domain
    xc = np.clip(x, a, b)
    n, d = x.shape
    nb = basis.n_basis
    if basis.kind is BasisKind.FOURIER:
        B = _fourier(basis, xc, derivative=False).reshape(n, d * nb)
        dB = _fourier(basis, xc, derivative=True)
        return B, (xc, dB)
    B, ders, first = bspline_design(basis, xc.reshape(-1))
    return B.reshape(n, d * nb), (xc, ders, first)


def _layer_forward(layer: KanLayer, x: np.ndarray):
    B, ctx = _basis_matrix(layer, x)
    C = layer.spline_coeffs.reshape(layer.out_dim, -1)
    act, dact = _silu_and_deriv(x)
    out = B @ C.T
    out += act @ layer.base_weights.T
    return out, B, ctx + (act, dact)


def _layer_backward(layer: KanLayer, x: np.ndarray, B: np.ndarray, ctx, g: np.ndarray):
    n, d = x.shape
    nb = layer.basis.n_basis
    C = layer.spline_coeffs.reshape(layer.out_dim, -1)
    gC = (B.T @ g).T.reshape(layer.spline_coeffs.shape)
    act, dact = ctx[-2], ctx[-1]
    gW = (act.T @ g).T
    gB = g @ C  # [N, in*nb]
    a, b = layer.basis.domain
    if layer.basis.kind is BasisKind.FOURIER:
        dB = ctx[1]
        gx_spline = np.einsum("nim,nim->ni", gB.reshape(n, d, nb), dB)
        gx_spline = np.where((x >= a) & (x <= b), gx_spline, 0)
    else:
        ders, first = ctx[1], ctx[2]
        flat = np.empty(n * d, dtype=x.dtype)
        c = x.dtype.type
        _gather_deriv(gB.reshape(n * d, nb), ders, first, np.ascontiguousarray(x).reshape(-1), c(a), c(b), flat)
        gx_spline = flat.reshape(n, d)
    gx = (g @ layer.base_weights) * dact
    gx += gx_spline
    return gC, gW, gx


# -- network passes -------------------------------------------------------------


def _check_batch(net: KanNetwork, batch) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.ndim != 2 or batch.shape[1] != net.layers[0].in_dim:
        raise ShapeError(f"batch shape {batch.shape} incompatible with input dim {net.layers[0].in_dim}")
    if not np.all(np.isfinite(batch)):
        raise ConfigurationError("batch must be finite")
    return batch.astype(net.dtype, copy=False)


def forward(net: KanNetwork, batch) -> tuple[np.ndarray, ForwardCache]:
    x = _check_batch(net, batch)
    cache = ForwardCache(net)
    for layer in net.layers:
        cache.inputs.append(x)
        x, _, _ = _layer_forward(layer, x)
    return x, cache


def evaluate(net: KanNetwork, batch, chunk_size: int = 2048) -> np.ndarray:
    """Forward pass without a cache, processed in row chunks to bound memory."""
    x = _check_batch(net, batch)
    out = np.empty((x.shape[0], net.layers[-1].out_dim), dtype=x.dtype)
    for s in range(0, x.shape[0], chunk_size):
        h = x[s:s + chunk_size]
        for layer in net.layers:
            h, _, _ = _layer_forward(layer, h)
        out[s:s + chunk_size] = h
    return out


def backward(net: KanNetwork, cache: ForwardCache, out_grad) -> GradientBundle:
    """Gradients of ``sum(outputs * out_grad)`` for every parameter and the inputs."""
    if cache.net is not net or len(cache.inputs) != len(net.layers):
        raise UsageError("cache was produced by a different network")
    g = np.asarray(out_grad, dtype=net.dtype)
    n = cache.inputs[0].shape[0]
    if g.shape != (n, net.layers[-1].out_dim):
        raise ShapeError(f"out_grad shape {g.shape} != {(n, net.layers[-1].out_dim)}")
    spline_grads = [None] * len(net.layers)
    base_grads = [None] * len(net.layers)
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        x = cache.inputs[li]
        B, ctx = _basis_matrix(layer, x)
        ctx = ctx + _silu_and_deriv(x)
        spline_grads[li], base_grads[li], g = _layer_backward(layer, x, B, ctx, g)
    return GradientBundle(spline_grads, base_grads, g)


def accumulate_gradients(
    net: KanNetwork,
    batch: np.ndarray,
    out_grad_fn: Callable[[np.ndarray, slice], tuple[float, np.ndarray]],
    chunk_size: int = 1024,
) -> tuple[float, GradientBundle, np.ndarray]:
    """Chunked forward+backward over a large batch.

    ``out_grad_fn(outputs, rows)`` returns the chunk's additive loss share and
    the gradient of that share with respect to the chunk outputs. Chunks are
    reduced in ascending row order, so results do not depend on scheduling.
    Returns ``(loss, gradients, outputs)``; input gradients are not kept.
    """
    x_all = _check_batch(net, batch)
    spline_grads = [np.zeros_like(l.spline_coeffs) for l in net.layers]
    base_grads = [np.zeros_like(l.base_weights) for l in net.layers]
    outputs = np.empty((x_all.shape[0], net.layers[-1].out_dim), dtype=x_all.dtype)
    loss = 0.0
    for s in range(0, x_all.shape[0], chunk_size):
        rows = slice(s, min(s + chunk_size, x_all.shape[0]))
        h = x_all[rows]
        saved = []
        for layer in net.layers:
            out, B, ctx = _layer_forward(layer, h)
            saved.append((h, B, ctx))
            h = out
        outputs[rows] = h
        part, g = out_grad_fn(h, rows)
        loss += float(part)
        g = np.asarray(g, dtype=x_all.dtype)
        for li in range(len(net.layers) - 1, -1, -1):
            x, B, ctx = saved[li]
            gC, gW, g = _layer_backward(net.layers[li], x, B, ctx, g)
            spline_grads[li] += gC
            base_grads[li] += gW
        del saved
    return loss, GradientBundle(spline_grads, base_grads), outputs


# -- serialization ------------------------------------------------------------


def save_network(net: KanNetwork, path) -> Path:
    """Write a self-describing ``.npz`` file; reading it back is bit-exact."""
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "dims": net.dims,
        "seed": int(net.seed),
        "basis": net.basis.to_dict(),
        "dtype": np.dtype(net.dtype).name,
    }
    arrays = {"meta": np.array(json.dumps(meta))}
    for i, layer in enumerate(net.layers):
        arrays[f"spline_coeffs_{i}"] = layer.spline_coeffs
        arrays[f"base_weights_{i}"] = layer.base_weights
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_network(path) -> KanNetwork:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported network file version {meta.get('format_version')}")
        basis = BasisSpec.from_dict(meta["basis"])
        dims = meta["dims"]
        layers = []
        for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            layers.append(KanLayer(n_in, n_out, basis, data[f"spline_coeffs_{i}"].copy(),
                                   data[f"base_weights_{i}"].copy()))
    return KanNetwork(tuple(layers), meta["seed"])
