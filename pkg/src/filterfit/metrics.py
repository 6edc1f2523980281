"""Training loss and evaluation metrics.

The training loss is a weighted sum of (a) the mean absolute CIELab
difference and (b) one minus the multi-scale structural similarity of the
L* channel. MS-SSIM follows the standard construction: Gaussian window
(11 taps, sigma 1.5), stability constants C1 = (0.01 R)^2, C2 = (0.03 R)^2,
contrast-structure at every scale, luminance at the coarsest, per-scale
weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333) as exponents, and 2x2
average-pool downsampling between scales.

Window smoothing is implemented as two banded-matrix products (valid
cross-correlation), which keeps the adjoint used by the gradient path an
exact transpose and the summation order fixed for determinism.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .color import rgb_to_lab
from .errors import ImageTooSmallError
from .image import require_same_shape, validate_image

log = logging.getLogger(__name__)

L_RANGE = 100.0  # dynamic range of the CIELab L* channel
RGB_RANGE = 1.0

# canonical per-scale weights; the published values sum to 1.0001, so they
# are normalized here to satisfy the sum-to-one contract exactly
_RAW_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WANG_WEIGHTS = tuple(w / sum(_RAW_WEIGHTS) for w in _RAW_WEIGHTS)


@dataclass(frozen=True)
class LossWeights:
    w_lab: float = 1.0
    w_msssim: float = 1e-3

    def __post_init__(self):
        for name in ("w_lab", "w_msssim"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class MsssimConfig:
    scales: int = 5
    weights: tuple = WANG_WEIGHTS
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.scales < 1 or len(self.weights) != self.scales:
            raise ValueError("need one weight per scale")
        if abs(sum(self.weights) - 1.0) > 1e-6:
            raise ValueError(f"scale weights must sum to 1, got {sum(self.weights)}")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and >= 3")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")


DEFAULT_MSSSIM = MsssimConfig()


@lru_cache(maxsize=None)
def _gauss_taps(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    taps = np.exp(-(x * x) / (2.0 * sigma * sigma))
    taps /= taps.sum()
    taps.setflags(write=False)
    return taps


@lru_cache(maxsize=None)
def _smooth_matrix(n: int, size: int, sigma: float) -> np.ndarray:
    """Banded matrix performing 1-D valid cross-correlation along length n."""
    taps = _gauss_taps(size, sigma)
    m = n - size + 1
    mat = np.zeros((m, n))
    for r in range(m):
        mat[r, r : r + size] = taps
    mat.setflags(write=False)
    return mat


def _smooth_valid(arr, sh, sw):
    return sh @ arr @ sw.T


def _smooth_adjoint(g, sh, sw):
    return sh.T @ g @ sw


def _avg_pool2(arr: np.ndarray) -> np.ndarray:
    h2, w2 = arr.shape[0] // 2, arr.shape[1] // 2
    t = arr[: 2 * h2, : 2 * w2]
    return t.reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _unpool2(g: np.ndarray, shape: tuple) -> np.ndarray:
    out = np.zeros(shape)
    h2, w2 = g.shape
    out[: 2 * h2, : 2 * w2] = np.repeat(np.repeat(g, 2, axis=0), 2, axis=1) / 4.0
    return out


_reported_reductions: set = set()


def effective_scales(min_dim: int, cfg: MsssimConfig) -> int:
    """Largest usable scale count for this image size (>= 1 or raise)."""
    if min_dim < cfg.window_size:
        raise ImageTooSmallError(
            f"min dimension {min_dim} below the {cfg.window_size}-tap window"
        )
    levels, d = 1, min_dim
    while levels < cfg.scales and d // 2 >= cfg.window_size:
        d //= 2
        levels += 1
    if levels < cfg.scales:
        key = (min_dim, cfg.window_size, cfg.scales)
        if key not in _reported_reductions:
            _reported_reductions.add(key)
            log.info(
                "ms-ssim scales reduced %d -> %d for min dimension %d",
                cfg.scales, levels, min_dim,
            )
    return levels


def msssim_core(x: np.ndarray, y: np.ndarray, cfg: MsssimConfig,
                data_range: float, want_grad: bool = False):
    """MS-SSIM of two single-channel images; optionally d(value)/dx.

    Per scale k the contrast-structure map is averaged into a scalar m_k;
    the coarsest scale uses the full luminance * cs map. The result is
    prod_k sign(m_k) |m_k|^{w_k} with the per-scale weights renormalized
    when fewer scales fit the image.
    """
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError(f"need matching 2-D arrays, got {x.shape} vs {y.shape}")
    c1 = (cfg.k1 * data_range) ** 2
    c2 = (cfg.k2 * data_range) ** 2
    levels = effective_scales(min(x.shape), cfg)
    w = np.asarray(cfg.weights[:levels], dtype=np.float64)
    if levels < cfg.scales:
        w = w / w.sum()

    per_scale = []
    means = np.empty(levels)
    for k in range(levels):
        if k > 0:
            x, y = _avg_pool2(x), _avg_pool2(y)
        sh = _smooth_matrix(x.shape[0], cfg.window_size, cfg.sigma)
        sw = _smooth_matrix(x.shape[1], cfg.window_size, cfg.sigma)
        mu_x = _smooth_valid(x, sh, sw)
        mu_y = _smooth_valid(y, sh, sw)
        sxx = _smooth_valid(x * x, sh, sw) - mu_x * mu_x
        syy = _smooth_valid(y * y, sh, sw) - mu_y * mu_y
        sxy = _smooth_valid(x * y, sh, sw) - mu_x * mu_y
        a2 = 2.0 * sxy + c2
        b2 = sxx + syy + c2
        cs_map = a2 / b2
        if k == levels - 1:
            a1 = 2.0 * mu_x * mu_y + c1
            b1 = mu_x * mu_x + mu_y * mu_y + c1
            l_map = a1 / b1
            means[k] = np.mean(l_map * cs_map)
        else:
            l_map = None
            means[k] = np.mean(cs_map)
        if want_grad:
            per_scale.append(
                (x, y, sh, sw, mu_x, mu_y, a1 if l_map is not None else None,
                 b1 if l_map is not None else None, a2, b2, cs_map, l_map)
            )

    value = float(np.prod(np.sign(means) * np.abs(means) ** w))
    if not want_grad:
        return value, None

    # d(value)/d(m_k) = value * w_k / m_k (sign-preserving power rule)
    with np.errstate(divide="ignore", invalid="ignore"):
        up = value * w / means

    # The factored forms below (g_sxx from g_sxy, the l-term numerator as a
    # difference of two products) make the backward cancel bit-exactly to
    # zero when x == y, so an identity fit sits at an exact stationary point.
    grad = None
    for k in range(levels - 1, -1, -1):
        (xk, yk, sh, sw, mu_x, mu_y, a1, b1, a2, b2, cs_map, l_map) = per_scale[k]
        q = up[k] / cs_map.size
        if l_map is None:
            q_cs = q  # scalar broadcast
            g_mu = np.zeros_like(cs_map)
        else:
            q_cs = q * l_map
            q_l = q * cs_map
            g_mu = q_l * 2.0 * (mu_y * b1 - a1 * mu_x) / (b1 * b1)
        g_sxy = q_cs * (2.0 / b2)
        g_sxx = -0.5 * (g_sxy * cs_map)
        g_mu = g_mu - g_sxy * mu_y - 2.0 * g_sxx * mu_x
        gx = (
            _smooth_adjoint(g_sxy, sh, sw) * yk
            + _smooth_adjoint(g_sxx, sh, sw) * (2.0 * xk)
            + _smooth_adjoint(g_mu, sh, sw)
        )
        grad = gx if grad is None else gx + _unpool2(grad, xk.shape)
    return value, grad


def l1_lab(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute CIELab difference over all channels and pixels."""
    pred = validate_image(pred, "pred")
    target = validate_image(target, "target")
    require_same_shape(pred, target)
    return float(np.mean(np.abs(rgb_to_lab(pred) - rgb_to_lab(target))))


def msssim_l(pred: np.ndarray, target: np.ndarray,
             cfg: MsssimConfig = DEFAULT_MSSSIM) -> float:
    """MS-SSIM of the L* channels, dynamic range 100."""
    pred = validate_image(pred, "pred")
    target = validate_image(target, "target")
    require_same_shape(pred, target)
    lp = rgb_to_lab(pred)[..., 0]
    lt = rgb_to_lab(target)[..., 0]
    value, _ = msssim_core(lp, lt, cfg, L_RANGE)
    return value


def loss_from_lab(lab_p: np.ndarray, lab_t: np.ndarray, weights: LossWeights,
                  cfg: MsssimConfig) -> float:
    """The combined loss given precomputed Lab images.

    Arithmetic is identical to w_lab * l1_lab + w_msssim * (1 - msssim_l),
    so callers holding Lab arrays can skip redundant conversions.
    """
    loss = (
        weights.w_lab * float(np.mean(np.abs(lab_p - lab_t)))
        if weights.w_lab != 0.0 else 0.0
    )
    if weights.w_msssim != 0.0:
        value, _ = msssim_core(lab_p[..., 0], lab_t[..., 0], cfg, L_RANGE)
        loss += weights.w_msssim * (1.0 - value)
    return float(loss)


def lab_msssim_loss(pred: np.ndarray, target: np.ndarray,
                    weights: LossWeights = LossWeights(),
                    cfg: MsssimConfig = DEFAULT_MSSSIM) -> float:
    """w_lab * L1(Lab) + w_msssim * (1 - MS-SSIM(L*)).

    The dissimilarity form keeps the loss non-negative and zero exactly for
    Lab-identical images, so minimizing improves both terms.
    """
    pred = validate_image(pred, "pred")
    target = validate_image(target, "target")
    require_same_shape(pred, target)
    return loss_from_lab(rgb_to_lab(pred), rgb_to_lab(target), weights, cfg)


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against peak 1.0 (inf when equal)."""
    pred = validate_image(pred, "pred")
    target = validate_image(target, "target")
    require_same_shape(pred, target)
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(pred: np.ndarray, target: np.ndarray,
         cfg: MsssimConfig = DEFAULT_MSSSIM) -> float:
    """Single-scale SSIM per RGB channel (dynamic range 1), averaged."""
    pred = validate_image(pred, "pred")
    target = validate_image(target, "target")
    require_same_shape(pred, target)
    single = MsssimConfig(
        scales=1, weights=(1.0,), window_size=cfg.window_size,
        sigma=cfg.sigma, k1=cfg.k1, k2=cfg.k2,
    )
    vals = [
        msssim_core(pred[..., c], target[..., c], single, RGB_RANGE)[0]
        for c in range(3)
    ]
    return float(np.mean(vals))
