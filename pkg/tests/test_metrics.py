import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from skimage.metrics import structural_similarity

from kanpnp.errors import ConfigurationError, ShapeError
from kanpnp.metrics import PSNR_CAP, psnr, ssim


def test_psnr_of_mse_one_hundredth():
    a = np.zeros((10, 10))
    b = np.zeros((10, 10))
    b[::2] = 0.1
    b[1::2] = -0.1  # squared error 0.01 everywhere
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)


def test_uniform_offset_gives_twenty_db(rng):
    a = rng.uniform(0, 0.9, (16, 16, 3))
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-10)


def test_identical_images_hit_the_cap(rng):
    a = rng.uniform(size=(8, 8, 3))
    assert psnr(a, a) == PSNR_CAP


def test_psnr_peak_and_symmetry(rng):
    a = rng.uniform(size=(8, 8))
    b = rng.uniform(size=(8, 8))
    assert psnr(a, b) == psnr(b, a)
    assert psnr(255 * a, 255 * b, peak=255) == pytest.approx(psnr(a, b), abs=1e-10)
    with pytest.raises(ConfigurationError):
        psnr(a, b, peak=0)
    with pytest.raises(ShapeError):
        psnr(a, b[:4])


def test_psnr_decreases_with_noise(rng):
    a = rng.uniform(size=(32, 32, 3))
    n = rng.standard_normal(a.shape)
    values = [psnr(a, a + s * n) for s in (0.01, 0.05, 0.2)]
    assert values[0] > values[1] > values[2]


def test_ssim_identical_is_exactly_one(rng):
    a = rng.uniform(size=(20, 24, 3))
    assert ssim(a, a) == 1.0


def test_ssim_of_two_constants():
    a = np.full((16, 16), 0.25)
    b = np.full((16, 16), 0.75)
    c1 = 0.01 ** 2
    expected = (2 * 0.25 * 0.75 + c1) / (0.25 ** 2 + 0.75 ** 2 + c1)  # variance terms cancel
    assert ssim(a, b) == pytest.approx(expected, abs=1e-10)
    assert ssim(a, b) == pytest.approx(0.6001, abs=1e-4)


def test_ssim_of_negative_is_low():
    # a 32x32 fixture with no mid-gray: a checkerboard of 8x8 blocks plus ramps
    rr, cc = np.mgrid[0:32, 0:32]
    img = np.where(((rr // 8) + (cc // 8)) % 2 == 0, 0.1 + 0.002 * cc, 0.9 - 0.002 * rr)
    assert ssim(img, 1.0 - img) < 0.2


def test_ssim_matches_skimage_gaussian_valid(rng):
    # skimage's gaussian_weights mode with use_sample_covariance=False matches the definition;
    # it averages over a region cropped by the window radius, like the valid mode here
    a = rng.uniform(size=(40, 36))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    ref = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


def test_ssim_color_is_channel_mean(rng):
    a = rng.uniform(size=(24, 24, 3))
    b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
    per = [ssim(a[..., c], b[..., c]) for c in range(3)]
    assert ssim(a, b) == pytest.approx(np.mean(per), abs=1e-14)


def test_ssim_rejects_small_images():
    with pytest.raises(ConfigurationError):
        ssim(np.zeros((10, 20)), np.ones((10, 20)))


@settings(max_examples=30, deadline=None)
@given(st.integers(11, 30), st.integers(11, 30), st.integers(0, 2 ** 16))
def test_ssim_bounded_and_symmetric(h, w, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(h, w))
    b = rng.uniform(size=(h, w))
    s = ssim(a, b)
    assert -1.0 <= s <= 1.0
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
