"""Filter fusion and the forward enhancement pipeline.

Same-type filter instances fuse by elementwise product; the graduated and
elliptical branch maps add into a single scaling map S. The pipeline applies
the cubic filter to the input, multiplies by S, and adds the result back
through a residual connection:

    y1 = input
    y2 = cubic(y1)
    y3 = S (.) y2
    y  = clamp(y1 + y3, 0, 1)

The single clamp sits at the output; intermediates stay unclamped so
gradients remain exact.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .filters import (
    CubicParams,
    EllipticalParams,
    GraduatedParams,
    cubic_apply,
    cubic_coeff_count,
    elliptical_unit_field,
    graduated_unit_field,
)
from .image import validate_image

GRADUATED_PARAM_COUNT = 8
ELLIPTICAL_PARAM_COUNT = 8


@dataclass
class FilterStack:
    """One cubic filter plus any number of graduated/elliptical instances."""

    cubic: CubicParams = field(default_factory=CubicParams)
    graduated: list[GraduatedParams] = field(default_factory=list)
    elliptical: list[EllipticalParams] = field(default_factory=list)

    @property
    def param_count(self) -> int:
        return (
            3 * cubic_coeff_count(self.cubic.variant)
            + GRADUATED_PARAM_COUNT * len(self.graduated)
            + ELLIPTICAL_PARAM_COUNT * len(self.elliptical)
        )

    def to_vector(self) -> np.ndarray:
        """Flatten to the canonical parameter vector.

        Order: cubic coefficients channel-major, then graduated instances
        (scale_r, scale_g, scale_b, slope, intercept, offset_top_raw,
        offset_bottom_raw, inv_raw), then elliptical instances (scale_r,
        scale_g, scale_b, center_x, center_y, angle, semi_major_raw,
        semi_minor_raw). Constrained entries stay in raw form, so the
        round trip through from_vector is bit-exact.
        """
        parts = [self.cubic.coeffs.ravel()]
        for g in self.graduated:
            parts.append(np.array([
                g.scale_r, g.scale_g, g.scale_b, g.slope, g.intercept,
                g.offset_top_raw, g.offset_bottom_raw, g.inv_raw,
            ]))
        for e in self.elliptical:
            parts.append(np.array([
                e.scale_r, e.scale_g, e.scale_b, e.center_x, e.center_y,
                e.angle, e.semi_major_raw, e.semi_minor_raw,
            ]))
        return np.concatenate(parts) if parts else np.zeros(0)

    @classmethod
    def from_vector(cls, vec: np.ndarray, variant: str, n_graduated: int,
                    n_elliptical: int) -> "FilterStack":
        vec = np.asarray(vec, dtype=np.float64)
        nc = cubic_coeff_count(variant)
        expect = 3 * nc + 8 * n_graduated + 8 * n_elliptical
        if vec.shape != (expect,):
            raise ValueError(f"expected vector of length {expect}, got {vec.shape}")
        cubic = CubicParams(variant, vec[: 3 * nc].reshape(3, nc).copy())
        pos = 3 * nc
        graduated = []
        for _ in range(n_graduated):
            s = vec[pos : pos + 8]
            graduated.append(GraduatedParams(*s))
            pos += 8
        elliptical = []
        for _ in range(n_elliptical):
            s = vec[pos : pos + 8]
            elliptical.append(EllipticalParams(*s))
            pos += 8
        return cls(cubic, graduated, elliptical)

    def inversion_indices(self) -> list[int]:
        """Vector indices of the binary inversion logits (one per graduated)."""
        base = 3 * cubic_coeff_count(self.cubic.variant)
        return [base + 8 * j + 7 for j in range(len(self.graduated))]


@dataclass
class PipelineOutput:
    y1: np.ndarray      # backbone output (identity here)
    y2: np.ndarray      # after the cubic filter
    s_map: np.ndarray   # fused per-channel scaling map, (H, W, 3)
    y3: np.ndarray      # s_map (.) y2
    y_final: np.ndarray  # clamp(y1 + y3, 0, 1)


def fuse_same_type(fields: list[np.ndarray]) -> np.ndarray:
    """Elementwise product of same-type adjustment fields."""
    if not fields:
        raise ValueError("fuse_same_type needs at least one field")
    out = np.array(fields[0], dtype=np.float64, copy=True)
    for f in fields[1:]:
        if f.shape != out.shape:
            raise DimensionMismatchError(
                f"field shape mismatch: {f.shape} vs {out.shape}"
            )
        out *= f
    return out


def combine_branches(grad_map: np.ndarray, ellip_map: np.ndarray) -> np.ndarray:
    """Add the graduated and elliptical branch maps."""
    if grad_map.shape != ellip_map.shape:
        raise DimensionMismatchError(
            f"branch shape mismatch: {grad_map.shape} vs {ellip_map.shape}"
        )
    return grad_map + ellip_map


def instance_fields(stack: FilterStack, width: int, height: int
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Per-instance, per-channel fields for both branches.

    Returns (graduated, elliptical) arrays of shape (n, H, W, 3); a branch
    with no instances yields shape (0, H, W, 3).
    """
    grads = np.empty((len(stack.graduated), height, width, 3))
    for j, g in enumerate(stack.graduated):
        unit = graduated_unit_field(g, width, height)
        grads[j] = unit[..., None] * g.scales
    ellips = np.empty((len(stack.elliptical), height, width, 3))
    for j, e in enumerate(stack.elliptical):
        unit = elliptical_unit_field(e, width, height)
        ellips[j] = unit[..., None] * e.scales
    return grads, ellips


def scaling_map(stack: FilterStack, width: int, height: int) -> np.ndarray:
    """Fused scaling map S of shape (H, W, 3); disabled branches give zero."""
    grads, ellips = instance_fields(stack, width, height)
    gmap = (
        fuse_same_type(list(grads)) if len(grads)
        else np.zeros((height, width, 3))
    )
    emap = (
        fuse_same_type(list(ellips)) if len(ellips)
        else np.zeros((height, width, 3))
    )
    return combine_branches(gmap, emap)


def pipeline_forward(stack: FilterStack, img: np.ndarray) -> PipelineOutput:
    """Run the full filter pipeline on an image."""
    y1 = validate_image(img)
    h, w = y1.shape[:2]
    y2 = cubic_apply(stack.cubic, y1)
    s = scaling_map(stack, w, h)
    y3 = s * y2
    y_final = np.clip(y1 + y3, 0.0, 1.0)
    return PipelineOutput(y1=y1, y2=y2, s_map=s, y3=y3, y_final=y_final)
