import math

import numpy as np
import pytest

from filterfit.color import rgb_to_lab
from filterfit.errors import DimensionMismatchError, ImageTooSmallError
from filterfit.metrics import (
    DEFAULT_MSSSIM,
    LossWeights,
    MsssimConfig,
    effective_scales,
    l1_lab,
    lab_msssim_loss,
    msssim_core,
    msssim_l,
    psnr,
    ssim,
)
from msssim_oracle import msssim_oracle
from reference_values import MSSSIM_NOISY_GRADIENT, SSIM_REFERENCE_PAIR_VALUE


def _gradient_image(n=128):
    return np.tile(np.linspace(0, 1, n)[None, :, None], (n, 1, 3))


def _seeded_pair(n=64, sigma=0.05, seed=7):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n, 3))
    b = np.clip(a + rng.normal(0, sigma, a.shape), 0, 1)
    return a, b


# --- l1 ------------------------------------------------------------------

def test_l1_identical_zero(photo):
    assert l1_lab(photo, photo) == 0.0


def test_l1_white_black():
    white, black = np.ones((1, 1, 3)), np.zeros((1, 1, 3))
    assert l1_lab(white, black) == pytest.approx(100.0 / 3.0, abs=1e-9)


def test_l1_symmetry():
    a, b = _seeded_pair(16)
    assert l1_lab(a, b) == l1_lab(b, a)


def test_l1_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        l1_lab(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


# --- ms-ssim -------------------------------------------------------------

def test_msssim_self_similarity(photo):
    assert msssim_l(photo, photo) == pytest.approx(1.0, abs=1e-9)


def test_msssim_constant_images():
    c = np.full((64, 64, 3), 0.42)
    assert msssim_l(c, c.copy()) == pytest.approx(1.0, abs=1e-12)


def test_msssim_noisy_gradient_reference():
    g = _gradient_image()
    rng = np.random.default_rng(2024)
    noisy = np.clip(g + rng.normal(0, 0.01, g.shape), 0, 1)
    value = msssim_l(noisy, g)
    assert 0.9 < value < 1.0
    assert value == pytest.approx(MSSSIM_NOISY_GRADIENT, abs=1e-9)
    live = msssim_oracle(rgb_to_lab(noisy)[..., 0], rgb_to_lab(g)[..., 0], 100.0)
    assert value == pytest.approx(live, abs=1e-12)


def test_msssim_symmetry():
    a, b = _seeded_pair(80, sigma=0.03)
    assert abs(msssim_l(a, b) - msssim_l(b, a)) < 1e-12


def test_msssim_too_small():
    tiny = np.zeros((8, 8, 3))
    with pytest.raises(ImageTooSmallError):
        msssim_l(tiny, tiny)


def test_msssim_small_window_on_small_image():
    tiny, other = _seeded_pair(8, sigma=0.02)
    cfg = MsssimConfig(scales=1, weights=(1.0,), window_size=7)
    assert msssim_l(tiny, tiny, cfg) == pytest.approx(1.0, abs=1e-12)
    assert msssim_l(tiny, other, cfg) < 1.0


def test_effective_scales():
    assert effective_scales(352, DEFAULT_MSSSIM) == 5  # 11 * 2^4
    assert effective_scales(128, DEFAULT_MSSSIM) == 4
    assert effective_scales(64, DEFAULT_MSSSIM) == 3
    assert effective_scales(16, DEFAULT_MSSSIM) == 1
    assert effective_scales(11, DEFAULT_MSSSIM) == 1
    with pytest.raises(ImageTooSmallError):
        effective_scales(10, DEFAULT_MSSSIM)


def test_msssim_config_validation():
    with pytest.raises(ValueError):
        MsssimConfig(weights=(0.5, 0.5, 0.1), scales=3)
    with pytest.raises(ValueError):
        MsssimConfig(window_size=10)
    with pytest.raises(ValueError):
        MsssimConfig(scales=2, weights=(1.0,))


def test_msssim_grad_matches_fd():
    rng = np.random.default_rng(12)
    x = rng.random((32, 32))
    y = rng.random((32, 32))
    cfg = MsssimConfig()
    val, grad = msssim_core(x, y, cfg, 1.0, want_grad=True)
    eps = 1e-5
    for idx in [(0, 0), (3, 17), (16, 16), (31, 31), (10, 4)]:
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        fd = (msssim_core(xp, y, cfg, 1.0)[0] - msssim_core(xm, y, cfg, 1.0)[0]) / (2 * eps)
        # corner pixels carry ~1e-9 gradients, close to the FD noise floor
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=5e-10)


# --- combined loss -------------------------------------------------------

def test_loss_identical_zero(photo):
    assert lab_msssim_loss(photo, photo) == 0.0


def test_loss_positive_otherwise():
    a, b = _seeded_pair()
    assert lab_msssim_loss(a, b) > 0.0


def test_loss_msssim_weight_zero_is_pure_l1():
    a, b = _seeded_pair(16)
    w = LossWeights(w_lab=2.5, w_msssim=0.0)
    assert lab_msssim_loss(a, b, w) == 2.5 * l1_lab(a, b)


def test_loss_composition():
    a, b = _seeded_pair()
    w = LossWeights(w_lab=1.0, w_msssim=1e-3)
    hand = 1.0 * l1_lab(a, b) + 1e-3 * (1.0 - msssim_l(a, b))
    assert lab_msssim_loss(a, b, w) == hand


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(-1.0, 0.0)
    with pytest.raises(ValueError):
        LossWeights(1.0, math.inf)


# --- psnr ----------------------------------------------------------------

def test_psnr_identical_infinite(photo):
    assert psnr(photo, photo) == math.inf


def test_psnr_closed_forms():
    z = np.zeros((4, 4, 3))
    assert psnr(z, np.full_like(z, 0.1)) == pytest.approx(20.0, abs=1e-6)
    assert psnr(z, np.full_like(z, 0.5)) == pytest.approx(6.0206, abs=1e-4)
    assert psnr(z, np.full_like(z, 0.5)) == pytest.approx(10 * math.log10(4), abs=1e-9)


def test_psnr_decreases_with_noise(photo):
    rng = np.random.default_rng(17)
    noise = rng.normal(0, 1, photo.shape)
    values = [
        psnr(np.clip(photo + amp * noise, 0, 1), photo)
        for amp in (0.01, 0.02, 0.04, 0.08, 0.16)
    ]
    assert all(a > b for a, b in zip(values, values[1:]))


# --- ssim ----------------------------------------------------------------

def test_ssim_identical(photo):
    assert ssim(photo, photo) == pytest.approx(1.0, abs=1e-12)


def test_ssim_inverted_below_one():
    rng = np.random.default_rng(23)
    a = rng.random((32, 32, 3))
    assert ssim(a, 1.0 - a) < 1.0


def test_ssim_seeded_reference_frozen():
    a, b = _seeded_pair()
    assert ssim(a, b) == pytest.approx(SSIM_REFERENCE_PAIR_VALUE, abs=1e-6)


def test_ssim_matches_skimage_live():
    skm = pytest.importorskip("skimage.metrics")
    a, b = _seeded_pair(48, sigma=0.1, seed=31)
    ref = skm.structural_similarity(
        a, b, channel_axis=2, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False, data_range=1.0,
    )
    assert ssim(a, b) == pytest.approx(float(ref), abs=1e-9)


def test_ssim_symmetry():
    a, b = _seeded_pair(32, sigma=0.2)
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


# --- translation invariance ----------------------------------------------

def test_metrics_translation_invariance(photo):
    # crop-then-compare equals compare-then-crop on the shared region
    a, b = _seeded_pair()
    shifted_a, shifted_b = a[4:, 2:], b[4:, 2:]
    cropped_a, cropped_b = a[:-4, :-2], b[:-4, :-2]
    assert l1_lab(shifted_a, shifted_b) == pytest.approx(
        l1_lab(a[4:, 2:], b[4:, 2:]), abs=0)
    # interior SSIM unaffected by identical translation of both inputs
    assert ssim(cropped_a, cropped_b) == pytest.approx(
        ssim(a[:-4, :-2], b[:-4, :-2]), abs=1e-12)
    assert psnr(shifted_a, shifted_b) == psnr(a[4:, 2:], b[4:, 2:])
