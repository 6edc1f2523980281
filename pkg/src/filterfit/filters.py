"""Local parametric filters: graduated, elliptical, and cubic polynomial.

Each graduated/elliptical filter produces a per-channel scalar adjustment
field s(x, y) over normalized coordinates x, y in [0, 1]. The cubic filter
maps per-channel intensity directly. Strictly positive geometry parameters
(band offsets, ellipse semi-axes) are stored in an unconstrained "raw" form
and mapped through softplus(raw) + 1e-4 so optimizers can move freely.
"""

from dataclasses import dataclass, field

import numpy as np

from .image import coord_grid, validate_image

SOFTPLUS_FLOOR = 1e-4

CUBIC10 = "cubic10"
CUBIC20 = "cubic20"

#: cubic-10 monomials in (x, y), multiplied by intensity i. Canonical order:
#: degree-descending, x-major within degree.
CUBIC10_TERMS = ("x3", "x2y", "xy2", "y3", "x2", "xy", "y2", "x", "y", "1")

#: cubic-20 monomials in (x, y, i), the full trivariate cubic expansion,
#: in the coefficient order A..T.
CUBIC20_TERMS = (
    "x3", "x2y", "x2i", "x2", "xy2", "xyi", "xy", "xi2", "xi", "x",
    "y3", "y2i", "y2", "yi2", "yi", "y", "i3", "i2", "i", "1",
)

CUBIC10_IDENTITY_INDEX = CUBIC10_TERMS.index("1")  # J
CUBIC20_IDENTITY_INDEX = CUBIC20_TERMS.index("i")  # S


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_inv(y):
    """Inverse of softplus; requires y > 0."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise ValueError("softplus_inv requires positive input")
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def constrained(raw):
    """Map an unconstrained real to the strictly positive domain."""
    return softplus(raw) + SOFTPLUS_FLOOR


def constrained_inv(value):
    return softplus_inv(np.asarray(value, dtype=np.float64) - SOFTPLUS_FLOOR)


def constrained_deriv(raw):
    return sigmoid(raw)


def binarize_inversion(inv_raw: float) -> float:
    """Binary inversion flag: (sgn(v) + 1) / 2 with sgn(0) = +1.

    The forward value is exactly 0.0 or 1.0. Gradient engines treat the
    binarization as identity on the backward pass (straight-through).
    """
    return 1.0 if inv_raw >= 0.0 else 0.0


@dataclass
class GraduatedParams:
    """Graduated filter: three parallel lines around y = slope*x + intercept.

    scale_* are per-channel scaling factors; offset_top/offset_bottom are the
    distances (in intercept units) of the 100% and 0% lines from the central
    line, stored raw. inv_raw is the real-valued logit of the inversion flag
    that swaps which side holds the 100% area.
    """

    scale_r: float = 0.0
    scale_g: float = 0.0
    scale_b: float = 0.0
    slope: float = 0.0
    intercept: float = 0.5
    offset_top_raw: float = 0.0
    offset_bottom_raw: float = 0.0
    inv_raw: float = 0.1

    @classmethod
    def from_natural(cls, scale_r=0.0, scale_g=0.0, scale_b=0.0, slope=0.0,
                     intercept=0.5, offset_top=0.25, offset_bottom=0.25,
                     inv_raw=0.1):
        return cls(
            scale_r, scale_g, scale_b, slope, intercept,
            float(constrained_inv(offset_top)),
            float(constrained_inv(offset_bottom)),
            inv_raw,
        )

    @property
    def offset_top(self) -> float:
        return float(constrained(self.offset_top_raw))

    @property
    def offset_bottom(self) -> float:
        return float(constrained(self.offset_bottom_raw))

    @property
    def scales(self) -> np.ndarray:
        return np.array([self.scale_r, self.scale_g, self.scale_b])


@dataclass
class EllipticalParams:
    """Elliptical filter: maximal at (center_x, center_y), zero outside the
    ellipse with semi-axes (semi_major, semi_minor) rotated by angle."""

    scale_r: float = 0.0
    scale_g: float = 0.0
    scale_b: float = 0.0
    center_x: float = 0.5
    center_y: float = 0.5
    angle: float = 0.0
    semi_major_raw: float = 0.0
    semi_minor_raw: float = 0.0

    @classmethod
    def from_natural(cls, scale_r=0.0, scale_g=0.0, scale_b=0.0, center_x=0.5,
                     center_y=0.5, angle=0.0, semi_major=0.5, semi_minor=0.5):
        return cls(
            scale_r, scale_g, scale_b, center_x, center_y, angle,
            float(constrained_inv(semi_major)),
            float(constrained_inv(semi_minor)),
        )

    @property
    def semi_major(self) -> float:
        return float(constrained(self.semi_major_raw))

    @property
    def semi_minor(self) -> float:
        return float(constrained(self.semi_minor_raw))

    @property
    def scales(self) -> np.ndarray:
        return np.array([self.scale_r, self.scale_g, self.scale_b])


@dataclass
class CubicParams:
    """Per-channel cubic polynomial coefficients.

    coeffs has shape (3, 10) for cubic-10 (multiplicative in intensity) or
    (3, 20) for cubic-20 (full trivariate cubic in x, y, intensity).
    """

    variant: str = CUBIC20
    coeffs: np.ndarray = field(default_factory=lambda: identity_cubic_coeffs(CUBIC20))

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        n = cubic_coeff_count(self.variant)
        if self.coeffs.shape != (3, n):
            raise ValueError(
                f"{self.variant} expects coeffs of shape (3, {n}), "
                f"got {self.coeffs.shape}"
            )


def cubic_coeff_count(variant: str) -> int:
    if variant == CUBIC10:
        return 10
    if variant == CUBIC20:
        return 20
    raise ValueError(f"unknown cubic variant {variant!r}")


def identity_cubic_coeffs(variant: str) -> np.ndarray:
    """Coefficients that make the cubic filter the identity map."""
    coeffs = np.zeros((3, cubic_coeff_count(variant)))
    idx = CUBIC10_IDENTITY_INDEX if variant == CUBIC10 else CUBIC20_IDENTITY_INDEX
    coeffs[:, idx] = 1.0
    return coeffs


def _graduated_geometry(p: GraduatedParams):
    """cos(atan(slope)) and the two perpendicular band widths d1, d2."""
    cos_alpha = 1.0 / np.sqrt(1.0 + p.slope * p.slope)
    if abs(cos_alpha) < 1e-12:
        # unreachable for finite slope; kept for robustness
        raise ValueError("degenerate graduated geometry: |cos(atan(m))| ~ 0")
    return cos_alpha, p.offset_top * cos_alpha, p.offset_bottom * cos_alpha


def graduated_unit_field(p: GraduatedParams, width: int, height: int
                         ) -> np.ndarray:
    """Normalized graduated profile in [0, 1] (the field before scaling).

    With l(x,y) = y - (m*x + c) and the inversion-adjusted lt = +/- l, the
    profile is clamp(0.5 * (1 + lt/d), 0, 1) where d is the 100%-side width
    d2 for lt >= 0 and the 0%-side width d1 for lt < 0.
    """
    _, d1, d2 = _graduated_geometry(p)
    x, y = coord_grid(width, height)
    signed_dist = y - (p.slope * x + p.intercept)
    ghat = binarize_inversion(p.inv_raw)
    lt = signed_dist if ghat == 1.0 else -signed_dist
    d = np.where(lt >= 0.0, d2, d1)
    return np.clip(0.5 * (1.0 + lt / d), 0.0, 1.0)


def graduated_field(p: GraduatedParams, width: int, height: int,
                    channel: int) -> np.ndarray:
    """Per-channel graduated adjustment field of shape (height, width)."""
    return p.scales[channel] * graduated_unit_field(p, width, height)


def elliptical_unit_field(p: EllipticalParams, width: int, height: int,
                          coords: tuple[np.ndarray, np.ndarray] | None = None
                          ) -> np.ndarray:
    """Normalized elliptical profile max(0, 1 - Q) in [0, 1]."""
    if coords is None:
        coords = coord_grid(width, height)
    x, y = coords
    ct, st = np.cos(p.angle), np.sin(p.angle)
    dx, dy = x - p.center_x, y - p.center_y
    u = dx * ct + dy * st
    v = dx * st - dy * ct
    q = (u / p.semi_major) ** 2 + (v / p.semi_minor) ** 2
    return np.maximum(0.0, 1.0 - q)


def elliptical_field(p: EllipticalParams, width: int, height: int,
                     channel: int) -> np.ndarray:
    """Per-channel elliptical adjustment field of shape (height, width)."""
    return p.scales[channel] * elliptical_unit_field(p, width, height)


def cubic_basis(variant: str, x: np.ndarray, y: np.ndarray,
                intensity: np.ndarray | None = None) -> np.ndarray:
    """Stack of monomials, shape (n_coeffs, H, W).

    cubic-10 uses (x, y) only; cubic-20 additionally needs the channel
    intensity map.
    """
    if variant == CUBIC10:
        out = np.empty((10,) + x.shape)
        x2, y2 = x * x, y * y
        out[0] = x2 * x
        out[1] = x2 * y
        out[2] = x * y2
        out[3] = y2 * y
        out[4] = x2
        out[5] = x * y
        out[6] = y2
        out[7] = x
        out[8] = y
        out[9] = 1.0
        return out
    if variant == CUBIC20:
        if intensity is None:
            raise ValueError("cubic-20 basis needs the intensity map")
        i = intensity
        out = np.empty((20,) + x.shape)
        x2, y2, i2 = x * x, y * y, i * i
        xy = x * y
        out[0] = x2 * x
        out[1] = x2 * y
        out[2] = x2 * i
        out[3] = x2
        out[4] = x * y2
        out[5] = xy * i
        out[6] = xy
        out[7] = x * i2
        out[8] = x * i
        out[9] = x
        out[10] = y2 * y
        out[11] = y2 * i
        out[12] = y2
        out[13] = y * i2
        out[14] = y * i
        out[15] = y
        out[16] = i2 * i
        out[17] = i2
        out[18] = i
        out[19] = 1.0
        return out
    raise ValueError(f"unknown cubic variant {variant!r}")


def cubic_apply(p: CubicParams, img: np.ndarray) -> np.ndarray:
    """Apply the cubic polynomial filter per channel.

    cubic-10 computes i' = i * poly(x, y); cubic-20 computes i' as the full
    20-term cubic in (x, y, i). Output is intentionally unclamped.
    """
    arr = validate_image(img)
    h, w = arr.shape[:2]
    x, y = coord_grid(w, h)
    out = np.empty_like(arr)
    if p.variant == CUBIC10:
        basis = cubic_basis(CUBIC10, x, y)  # channel-independent
        for c in range(3):
            out[..., c] = arr[..., c] * np.tensordot(p.coeffs[c], basis, axes=1)
    else:
        for c in range(3):
            basis = cubic_basis(CUBIC20, x, y, arr[..., c])
            out[..., c] = np.tensordot(p.coeffs[c], basis, axes=1)
    return out
