"""Analytic gradients of the training loss w.r.t. all filter parameters.

The computation graph is static and shallow (parameters -> fields/cubic ->
scaling map -> residual output -> Lab -> loss), so the backward pass is
hand-derived reverse-mode accumulation rather than a general autodiff tape.
Conventions:

- the output clamp passes gradients through on the closed interval [0, 1]
  and blocks them outside, so exactly-saturated 8-bit values stay live;
- the binary inversion flag of the graduated filter receives a
  straight-through surrogate: the binarization backward is treated as
  identity, with the flag acting as a continuous mixing coefficient between
  the field and its mirror;
- softplus-constrained entries (band offsets, semi-axes) chain through
  sigmoid(raw).

Reductions use fixed numpy summation order, so results are deterministic.
"""

import numpy as np

from .color import lab_backward, rgb_to_lab
from .errors import NonFiniteError
from .filters import (
    CUBIC10,
    binarize_inversion,
    constrained_deriv,
    cubic_basis,
)
from .image import coord_grid, require_same_shape, validate_image
from .metrics import (
    DEFAULT_MSSSIM,
    L_RANGE,
    LossWeights,
    MsssimConfig,
    lab_msssim_loss,
    loss_from_lab,
    msssim_core,
)
from .pipeline import FilterStack, instance_fields, pipeline_forward

FD_SKIP = np.nan  # sentinel for coordinates finite differences cannot probe


def _leave_one_out(fields: np.ndarray) -> np.ndarray:
    """Products over all instances except each one, shape preserved.

    fields has shape (n, ...); entry j of the result is prod_{i != j}
    fields[i]. Computed with prefix/suffix products so zero-valued fields
    (zero scales) are handled exactly.
    """
    n = fields.shape[0]
    out = np.empty_like(fields)
    prefix = np.ones_like(fields[0])
    for j in range(n):
        out[j] = prefix
        prefix = prefix * fields[j]
    suffix = np.ones_like(fields[0])
    for j in range(n - 1, -1, -1):
        out[j] = out[j] * suffix
        suffix = suffix * fields[j]
    return out


def _graduated_backward(p, x, y, g_unit, g_field_ch):
    """Gradients of one graduated instance.

    g_unit is d(loss)/d(unit field) accumulated over channels (H, W);
    g_field_ch is d(loss)/d(field_c) per channel, used for the scales.
    Returns the 8 gradients in parameter order.
    """
    m = p.slope
    cos_a = 1.0 / np.sqrt(1.0 + m * m)
    o1, o2 = p.offset_top, p.offset_bottom
    d1, d2 = o1 * cos_a, o2 * cos_a
    dist = y - (m * x + p.intercept)
    ghat = binarize_inversion(p.inv_raw)
    sign = 1.0 if ghat == 1.0 else -1.0
    lt = sign * dist
    d_sel = np.where(lt >= 0.0, d2, d1)
    t = 0.5 * (1.0 + lt / d_sel)
    unit = np.clip(t, 0.0, 1.0)

    g_scales = np.array([float(np.sum(g_field_ch[..., c] * unit)) for c in range(3)])

    interior = (t > 0.0) & (t < 1.0)
    gt = g_unit * interior
    g_lt = gt * (0.5 / d_sel)
    g_dsel = gt * (-0.5 * lt / (d_sel * d_sel))
    g_d2 = float(np.sum(g_dsel[lt >= 0.0]))
    g_d1 = float(np.sum(g_dsel[lt < 0.0]))

    g_dist = sign * g_lt
    g_intercept = float(np.sum(-g_dist))
    dcos_dm = -m / (1.0 + m * m) ** 1.5
    g_slope = float(np.sum(-g_dist * x)) + (g_d1 * o1 + g_d2 * o2) * dcos_dm
    g_o1_raw = g_d1 * cos_a * float(constrained_deriv(p.offset_top_raw))
    g_o2_raw = g_d2 * cos_a * float(constrained_deriv(p.offset_bottom_raw))

    # straight-through surrogate: d(field)/d(ghat) = unit(+dist) - unit(-dist)
    d_plus = np.where(dist >= 0.0, d2, d1)
    d_minus = np.where(-dist >= 0.0, d2, d1)
    u_plus = np.clip(0.5 * (1.0 + dist / d_plus), 0.0, 1.0)
    u_minus = np.clip(0.5 * (1.0 - dist / d_minus), 0.0, 1.0)
    g_inv = float(np.sum(g_unit * (u_plus - u_minus)))

    return np.array([
        g_scales[0], g_scales[1], g_scales[2],
        g_slope, g_intercept, g_o1_raw, g_o2_raw, g_inv,
    ])


def _elliptical_backward(p, x, y, g_unit, g_field_ch):
    """Gradients of one elliptical instance, in parameter order."""
    ct, st = np.cos(p.angle), np.sin(p.angle)
    a, b = p.semi_major, p.semi_minor
    dx, dy = x - p.center_x, y - p.center_y
    u = dx * ct + dy * st
    v = dx * st - dy * ct
    q = (u / a) ** 2 + (v / b) ** 2
    unit = np.maximum(0.0, 1.0 - q)

    g_scales = np.array([float(np.sum(g_field_ch[..., c] * unit)) for c in range(3)])

    g_q = -g_unit * (q < 1.0)
    g_u = g_q * (2.0 * u / (a * a))
    g_v = g_q * (2.0 * v / (b * b))
    g_cx = float(np.sum(-g_u * ct - g_v * st))
    g_cy = float(np.sum(-g_u * st + g_v * ct))
    g_angle = float(np.sum(-g_u * v + g_v * u))
    g_a_raw = float(np.sum(g_q * (-2.0 * u * u / a**3))) * float(
        constrained_deriv(p.semi_major_raw)
    )
    g_b_raw = float(np.sum(g_q * (-2.0 * v * v / b**3))) * float(
        constrained_deriv(p.semi_minor_raw)
    )

    return np.array([
        g_scales[0], g_scales[1], g_scales[2],
        g_cx, g_cy, g_angle, g_a_raw, g_b_raw,
    ])


def loss_and_grad(stack: FilterStack, img: np.ndarray, target: np.ndarray,
                  weights: LossWeights = LossWeights(),
                  cfg: MsssimConfig = DEFAULT_MSSSIM):
    """Loss and its exact gradient in parameter-vector layout.

    The loss value equals pipeline_forward followed by lab_msssim_loss,
    bit for bit.
    """
    img = validate_image(img)
    target = validate_image(target, "target")
    require_same_shape(img, target)
    h, w = img.shape[:2]
    x, y = coord_grid(w, h)

    out = pipeline_forward(stack, img)
    pred = out.y_final
    lab_p = rgb_to_lab(pred)
    lab_t = rgb_to_lab(target)
    loss = loss_from_lab(lab_p, lab_t, weights, cfg)

    # d(loss)/d(output Lab), both loss terms
    g_lab = weights.w_lab * np.sign(lab_p - lab_t) / lab_p.size
    if weights.w_msssim != 0.0:
        _, g_lp = msssim_core(lab_p[..., 0], lab_t[..., 0], cfg, L_RANGE,
                              want_grad=True)
        g_lab[..., 0] += -weights.w_msssim * g_lp
    g_pred = lab_backward(pred, g_lab)

    # output clamp: pass-through on [0, 1], zero outside
    z = out.y1 + out.y3
    g_z = g_pred * ((z >= 0.0) & (z <= 1.0))
    g_s = g_z * out.y2
    g_y2 = g_z * out.s_map

    # cubic coefficients
    grad_cubic = np.empty_like(stack.cubic.coeffs)
    for c in range(3):
        i = out.y1[..., c]
        if stack.cubic.variant == CUBIC10:
            basis = cubic_basis(CUBIC10, x, y)
            grad_cubic[c] = np.tensordot(g_y2[..., c] * i, basis,
                                         axes=([0, 1], [1, 2]))
        else:
            basis = cubic_basis(stack.cubic.variant, x, y, i)
            grad_cubic[c] = np.tensordot(g_y2[..., c], basis,
                                         axes=([0, 1], [1, 2]))

    parts = [grad_cubic.ravel()]

    g_fields, e_fields = instance_fields(stack, w, h)
    for fields, params, backward in (
        (g_fields, stack.graduated, _graduated_backward),
        (e_fields, stack.elliptical, _elliptical_backward),
    ):
        if len(params) == 0:
            continue
        loo = _leave_one_out(fields)
        for j, p in enumerate(params):
            g_field = g_s * loo[j]  # (H, W, 3)
            g_unit = np.zeros((h, w))
            for c in range(3):
                g_unit += g_field[..., c] * p.scales[c]
            parts.append(backward(p, x, y, g_unit, g_field))

    grad = np.concatenate(parts)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError(
            "non-finite gradient entries (parameterization escape)"
        )
    return loss, grad


def finite_diff(f, theta: np.ndarray, eps: float,
                skip: tuple = ()) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector.

    Coordinates listed in `skip` get the FD_SKIP sentinel (used for binary
    flags whose forward value is piecewise constant).
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    skip_set = set(skip)
    for j in range(theta.size):
        if j in skip_set:
            grad[j] = FD_SKIP
            continue
        probe = theta.copy()
        probe[j] = theta[j] + eps
        f_plus = f(probe)
        probe[j] = theta[j] - eps
        f_minus = f(probe)
        grad[j] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def finite_diff_grad(stack: FilterStack, img: np.ndarray, target: np.ndarray,
                     weights: LossWeights = LossWeights(),
                     cfg: MsssimConfig = DEFAULT_MSSSIM,
                     eps: float = 1e-5) -> np.ndarray:
    """Finite-difference oracle for loss_and_grad, same vector layout.

    Inversion-flag coordinates are skipped (sentinel NaN): the forward pass
    is piecewise constant in them, so differences carry no information.
    """
    variant = stack.cubic.variant
    n_g, n_e = len(stack.graduated), len(stack.elliptical)

    def f(vec):
        s = FilterStack.from_vector(vec, variant, n_g, n_e)
        return lab_msssim_loss(pipeline_forward(s, img).y_final, target,
                               weights, cfg)

    return finite_diff(f, stack.to_vector(), eps,
                       skip=tuple(stack.inversion_indices()))
