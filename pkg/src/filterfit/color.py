"""sRGB <-> CIELab colorimetry (D65, 2 degree observer).

Conversions follow the IEC 61966-2-1 sRGB transfer function and the CIE
L*a*b* transform. The linear-RGB -> XYZ matrix uses the common 7-digit
sRGB/D65 coefficients; the reference white is taken as the matrix row sums
so that (1,1,1) maps to exactly L*=100, a*=b*=0.

All functions operate on (H, W, 3) float64 arrays. L* spans [0, 100] for
in-gamut input; a*, b* are unbounded in principle.
"""

import numpy as np

from .image import validate_image

# linear sRGB -> XYZ, D65
_M_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_M_XYZ2RGB = np.linalg.inv(_M_RGB2XYZ)

# white point = row sums, so a neutral axis stays exactly neutral
_WHITE = _M_RGB2XYZ @ np.ones(3)

_EPS = 216.0 / 24389.0  # (6/29)^3
_KAPPA = 24389.0 / 27.0
_F_EPS = 6.0 / 29.0  # f(_EPS)


def _srgb_decode(v: np.ndarray) -> np.ndarray:
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def _srgb_decode_deriv(v: np.ndarray) -> np.ndarray:
    return np.where(
        v <= 0.04045, 1.0 / 12.92, (2.4 / 1.055) * ((v + 0.055) / 1.055) ** 1.4
    )


def _srgb_encode(lin: np.ndarray) -> np.ndarray:
    lin = np.maximum(lin, 0.0)
    return np.where(
        lin <= 0.0031308, 12.92 * lin, 1.055 * lin ** (1.0 / 2.4) - 0.055
    )


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPS, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)


def _lab_f_deriv(t: np.ndarray) -> np.ndarray:
    safe = np.maximum(t, _EPS)
    return np.where(t > _EPS, np.cbrt(safe) / (3.0 * safe), _KAPPA / 116.0)


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Convert an sRGB image (values clamped to [0,1]) to CIELab."""
    rgb = np.clip(validate_image(img), 0.0, 1.0)
    lin = _srgb_decode(rgb)
    xyz = lin @ _M_RGB2XYZ.T
    f = _lab_f(xyz / _WHITE)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of rgb_to_lab for in-gamut colors; out-of-gamut is clamped."""
    lab = validate_image(lab, "lab")
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f > _F_EPS, f**3, (116.0 * f - 16.0) / _KAPPA)
    lin = (t * _WHITE) @ _M_XYZ2RGB.T
    return np.clip(_srgb_encode(lin), 0.0, 1.0)


def lab_backward(rgb: np.ndarray, g_lab: np.ndarray) -> np.ndarray:
    """Jacobian-transpose product of rgb_to_lab at `rgb`.

    `g_lab` holds per-pixel gradients w.r.t. (L*, a*, b*); the result holds
    gradients w.r.t. the sRGB channels. `rgb` must already lie in [0, 1]
    (the forward clamp is treated as pass-through there).
    """
    rgb = np.clip(validate_image(rgb), 0.0, 1.0)
    lin = _srgb_decode(rgb)
    t = (lin @ _M_RGB2XYZ.T) / _WHITE

    g_l, g_a, g_b = g_lab[..., 0], g_lab[..., 1], g_lab[..., 2]
    g_f = np.empty_like(g_lab)
    g_f[..., 0] = 500.0 * g_a
    g_f[..., 1] = 116.0 * g_l - 500.0 * g_a + 200.0 * g_b
    g_f[..., 2] = -200.0 * g_b

    g_xyz = g_f * _lab_f_deriv(t) / _WHITE
    g_lin = g_xyz @ _M_RGB2XYZ
    return g_lin * _srgb_decode_deriv(rgb)


def luminance_backward_factor(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel, per-channel dL*/dRGB at `rgb`, shape (H, W, 3)."""
    g_lab = np.zeros(rgb.shape[:2] + (3,))
    g_lab[..., 0] = 1.0
    return lab_backward(rgb, g_lab)
