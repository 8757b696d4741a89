import numpy as np
import pytest

from kanpnp.basis import BasisKind, BasisSpec
from kanpnp.errors import ConfigurationError
from kanpnp.kan import KanLayer, KanNetwork, init_network
from kanpnp.lipschitz import (
    SILU_DERIV_SUP,
    edge_bounds,
    layer_bound,
    lipschitz_empirical,
    lipschitz_upper_bound,
)


def _single_edge(basis, coeffs, base=0.0):
    layer = KanLayer(1, 1, basis, np.asarray(coeffs, float).reshape(1, 1, -1), np.array([[base]]))
    return KanNetwork((layer,))


def test_silu_derivative_supremum():
    x = np.linspace(-20, 20, 400001)
    s = 1 / (1 + np.exp(-x))
    d = s * (1 + x * (1 - s))
    assert d.max() <= SILU_DERIV_SUP
    assert d.max() == pytest.approx(SILU_DERIV_SUP, abs=1e-9)


def test_zero_network():
    net = init_network([2, 4, 3], seed=0)
    net = net.with_parameters([np.zeros_like(p) for p in net.parameters()])
    assert lipschitz_upper_bound(net) == 0.0
    assert lipschitz_empirical(net, 200) == 0.0


def test_linear_spline_with_slope_two():
    basis = BasisSpec(BasisKind.BSPLINE, 1, 1, (0.0, 1.0))
    net = _single_edge(basis, [0.0, 2.0])
    assert lipschitz_upper_bound(net) == pytest.approx(2.0, abs=1e-12)
    assert lipschitz_empirical(net, 500) == pytest.approx(2.0, abs=1e-9)


def test_identity_spline_has_unit_constant():
    # least-squares fit of y = x by the cubic basis; splines reproduce linear functions
    basis = BasisSpec()
    from kanpnp.basis import basis_eval
    xs = np.linspace(-1, 1, 401)
    coeffs, *_ = np.linalg.lstsq(basis_eval(basis, xs), xs, rcond=None)
    net = _single_edge(basis, coeffs)
    assert lipschitz_empirical(net, 2000) == pytest.approx(1.0, abs=1e-3)
    assert lipschitz_upper_bound(net) == pytest.approx(1.0, abs=1e-9)


def test_fourier_edge_bound():
    basis = BasisSpec(BasisKind.FOURIER, 5, 2, (-1.0, 1.0))
    net = _single_edge(basis, [0.3, 1.0, -0.5, 0.25, 0.0], base=0.5)
    expected = np.pi * (1.0 + 0.5) + 2 * np.pi * 0.25 + 0.5 * SILU_DERIV_SUP
    np.testing.assert_allclose(edge_bounds(net.layers[0]), [[expected]], rtol=1e-14)


def test_composition_is_product_of_layer_bounds():
    net = init_network([3, 5, 2], seed=4)
    parts = [lipschitz_upper_bound(KanNetwork((layer,))) for layer in net.layers]
    assert lipschitz_upper_bound(net) == pytest.approx(parts[0] * parts[1], rel=1e-12)


def test_linf_bound_is_max_row_sum():
    layer = init_network([3, 4], seed=1).layers[0]
    assert layer_bound(layer, "linf") == pytest.approx(edge_bounds(layer).sum(axis=1).max())


def test_unknown_norm_and_bad_pairs():
    net = init_network([2, 3], seed=0)
    with pytest.raises(ConfigurationError):
        lipschitz_upper_bound(net, "l1")
    with pytest.raises(ConfigurationError):
        lipschitz_empirical(net, 0)


def test_empirical_is_deterministic():
    net = init_network([2, 6, 3], seed=0)
    assert lipschitz_empirical(net, 300, seed=5) == lipschitz_empirical(net, 300, seed=5)


def _random_net(rng, trial):
    kind = BasisKind.BSPLINE if trial % 2 == 0 else BasisKind.FOURIER
    basis = BasisSpec(kind, int(rng.integers(2, 9)), int(rng.integers(1, 4)), (-1.0, 1.0))
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, 4))] + [int(rng.integers(1, 7)) for _ in range(depth)]
    net = init_network(dims, basis, seed=trial)
    # larger coefficients so the spline branch matters relative to the base branch
    scale = rng.uniform(0.5, 20.0)
    params = [p * scale if n % 2 == 0 else p for n, p in enumerate(net.parameters())]
    return net.with_parameters(params)


@pytest.mark.parametrize("norm", ["l2", "linf"])
def test_bound_dominates_empirical_on_random_networks(norm):
    rng = np.random.default_rng(2024)
    violations = 0
    for trial in range(100):
        net = _random_net(rng, trial)
        emp = lipschitz_empirical(net, 400, seed=trial)
        if norm == "linf":
            # |h|_2 <= sqrt(m)|h|_inf and |x|_inf <= |x|_2 for m outputs
            bound = lipschitz_upper_bound(net, "linf") * np.sqrt(net.dims[-1])
        else:
            bound = lipschitz_upper_bound(net, "l2")
        violations += emp > bound * (1 + 1e-12)
    assert violations == 0
