import numpy as np
import pytest

from kanpnp.errors import ConfigurationError, ShapeError
from kanpnp.kan import init_network
from kanpnp.trainer import (
    AdamState,
    DenoiseConfig,
    TrainConfig,
    adam_step,
    apply_denoiser,
    coord_grid,
    export_loss_trace,
    fit_steps,
    pretrain_prior,
    render,
)


def _smooth_image(h=12, w=10):
    rr, cc = np.mgrid[0:h, 0:w]
    return np.stack([0.5 + 0.3 * np.sin(rr / 3), 0.5 + 0.3 * np.cos(cc / 4), (rr + cc) / (h + w)], -1)


def test_coord_grid_conventions():
    g = coord_grid(1, 1)
    np.testing.assert_array_equal(g.coords, [[-1.0, -1.0]])
    g = coord_grid(2, 2)
    np.testing.assert_array_equal(g.coords, [[-1, -1], [-1, 1], [1, -1], [1, 1]])
    g = coord_grid(3, 4)
    assert g.coords.shape == (12, 2) and g.shape == (3, 4)
    assert g.coords[4, 0] == 0.0  # middle row
    np.testing.assert_array_equal(g.coords[0], [-1, -1])
    np.testing.assert_array_equal(g.coords[-1], [1, 1])
    with pytest.raises(ConfigurationError):
        coord_grid(0, 3)


def test_adam_first_step_is_minus_lr():
    params, state = adam_step([np.array(0.0)], [np.array(1.0)], AdamState.zeros_like([np.array(0.0)]), lr=0.1)
    # m_hat = 1, v_hat = 1, update = lr / (1 + eps)
    assert float(params[0]) == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)
    assert state.step == 1


def test_adam_zero_gradient_keeps_params_and_decays_moments():
    p = [np.array([1.0, -2.0])]
    state = AdamState([np.array([0.5, 0.5])], [np.array([0.2, 0.2])], 3)
    new, st = adam_step(p, [np.zeros(2)], state, lr=0.1)
    # a zero gradient still moves by the decayed first moment, but not when moments are zero
    z, _ = adam_step(p, [np.zeros(2)], AdamState.zeros_like(p), lr=0.1)
    np.testing.assert_array_equal(z[0], p[0])
    np.testing.assert_allclose(st.m[0], 0.45)
    np.testing.assert_allclose(st.v[0], 0.2 * 0.999)
    assert new[0].shape == (2,)


def test_adam_constant_gradient_steps_approach_lr():
    p = [np.array(0.0)]
    state = AdamState.zeros_like(p)
    steps = []
    for _ in range(200):
        new, state = adam_step(p, [np.array(3.0)], state, lr=0.01)
        steps.append(float(p[0] - new[0]))
        p = new
    # with identical gradients m_hat = v_hat^(1/2) = g exactly, so every step is lr/(1 + eps/g)
    np.testing.assert_allclose(steps, 0.01, rtol=1e-7)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState.zeros_like([np.zeros(2)]), lr=0.1)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ConfigurationError):
        TrainConfig(noise_sigma=-1)
    with pytest.raises(ConfigurationError):
        DenoiseConfig(inner_steps=-1)


def test_pretrain_reduces_loss_and_is_deterministic():
    img = _smooth_image()
    net = init_network([2, 8, 3], seed=0)
    cfg = TrainConfig(iterations=30, learning_rate=1e-2)
    a, la = pretrain_prior(net, img, cfg)
    b, lb = pretrain_prior(net, img, cfg)
    assert len(la) == 30
    assert la[-1] < la[0]
    assert la == lb
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)


def test_pretrain_zero_iterations_is_identity():
    net = init_network([2, 4, 3], seed=0)
    out, losses = pretrain_prior(net, _smooth_image(), TrainConfig(iterations=0))
    assert out is net and losses == []


def test_pretrain_channel_mismatch():
    net = init_network([2, 4, 1], seed=0)
    with pytest.raises(ShapeError):
        pretrain_prior(net, _smooth_image(), TrainConfig(iterations=1))


def test_pretrain_target_is_noisy_observation():
    # with sigma = 0 the first loss is just the MSE of the initial render
    img = _smooth_image()
    net = init_network([2, 4, 3], seed=1)
    _, losses = pretrain_prior(net, img, TrainConfig(iterations=1, noise_sigma=0.0))
    assert losses[0] == pytest.approx(np.mean((render(net, *img.shape[:2]) - img) ** 2), rel=1e-12)


def test_denoiser_without_steps_is_pure_render():
    net = init_network([2, 6, 3], seed=0)
    a, n1 = apply_denoiser(net, _smooth_image(), DenoiseConfig(inner_steps=0))
    b, _ = apply_denoiser(net, np.zeros((12, 10, 3)), DenoiseConfig(inner_steps=0))
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, render(net, 12, 10))
    assert n1 is net


def test_denoiser_on_own_render_stays_put():
    net = init_network([2, 6, 3], seed=0)
    target = render(net, 12, 10)
    out, _ = apply_denoiser(net, target, DenoiseConfig(inner_steps=5))
    start = np.mean((render(net, 12, 10) - target) ** 2)
    assert np.mean((out - target) ** 2) <= start + 1e-8
    np.testing.assert_allclose(out, target, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_denoiser_never_increases_fit_error(seed):
    rng = np.random.default_rng(seed)
    net = init_network([2, 8, 3], seed=seed, dtype=np.float32)
    net, _ = pretrain_prior(net, _smooth_image(), TrainConfig(iterations=10, learning_rate=1e-2))
    target = _smooth_image() + 0.3 * rng.standard_normal((12, 10, 3))
    before = np.mean((render(net, 12, 10).astype(np.float64) - target.astype(np.float32)) ** 2)
    out, _ = apply_denoiser(net, target, DenoiseConfig())
    after = np.mean((out.astype(np.float64) - target.astype(np.float32)) ** 2)
    assert after <= before + 1e-8


def test_denoiser_is_deterministic():
    net = init_network([2, 6, 3], seed=0)
    target = _smooth_image()
    a, na = apply_denoiser(net, target)
    b, nb = apply_denoiser(net, target)
    np.testing.assert_array_equal(a, b)


def test_fit_steps_continues_adam_state():
    img = _smooth_image()
    net = init_network([2, 6, 3], seed=0)
    grid = coord_grid(12, 10)
    full, l_full, _ = fit_steps(net, grid, img, 6, 1e-2)
    half, l1, st = fit_steps(net, grid, img, 3, 1e-2)
    rest, l2, _ = fit_steps(half, grid, img, 3, 1e-2, state=st)
    assert l1 + l2 == l_full
    for p, q in zip(full.parameters(), rest.parameters()):
        assert np.array_equal(p, q)


def test_export_loss_trace(tmp_path):
    path = export_loss_trace([0.5, 0.25], tmp_path / "loss.csv")
    assert path.read_text().splitlines() == ["iteration,mse", "0,0.5", "1,0.25"]
