"""Per-image filter fitting with Adam.

Instead of predicting filter parameters with a network, this module
optimizes them directly against a single (input, target) pair using the
same loss and analytic gradients. The best-loss iterate over the whole
trace is reported, since Adam oscillates on this nonconvex objective.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError
from .filters import (
    CUBIC20,
    CubicParams,
    EllipticalParams,
    GraduatedParams,
    constrained_inv,
    identity_cubic_coeffs,
)
from .grad import loss_and_grad
from .image import require_same_shape, validate_image
from .metrics import DEFAULT_MSSSIM, LossWeights, MsssimConfig, psnr, ssim
from .pipeline import FilterStack, pipeline_forward


@dataclass
class FitConfig:
    steps: int = 2000
    learning_rate: float = 1e-2  # 1e-4 matches the network-training setting
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    msssim: MsssimConfig = field(default_factory=lambda: DEFAULT_MSSSIM)
    variant: str = CUBIC20
    n_graduated: int = 3
    n_elliptical: int = 3
    seed: int = 0
    deterministic: bool = True
    init_params: np.ndarray | None = None  # warm start; overrides init_stack

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")

    def stack_of(self, vec: np.ndarray) -> FilterStack:
        return FilterStack.from_vector(
            vec, self.variant, self.n_graduated, self.n_elliptical
        )


@dataclass
class FitReport:
    loss_trace: list
    best_step: int
    best_params: np.ndarray
    best_loss: float
    initial_psnr: float
    initial_ssim: float
    final_psnr: float
    final_ssim: float
    best_psnr: float
    best_ssim: float
    seconds: float
    aborted: bool = False


class Adam:
    """Standard bias-corrected Adam over a flat parameter vector."""

    def __init__(self, n: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("non-finite gradient")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_stack(cfg: FitConfig, seed: int | None = None) -> np.ndarray:
    """Deterministic seeded initial parameter vector.

    The cubic starts at identity and the first instance of each branch at
    zero scale, so the pipeline output equals the input exactly. Later
    instances start at scale 1: with all scales zero the product fusion
    makes the init an exact stationary point of the loss (every
    leave-one-out product vanishes and the zero map gates the cubic), so
    a nonzero companion scale is required for gradients to flow at all.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    graduated = []
    for j in range(cfg.n_graduated):
        s = 0.0 if j == 0 else 1.0
        graduated.append(GraduatedParams(
            scale_r=s, scale_g=s, scale_b=s,
            slope=0.0,
            intercept=float(rng.uniform(0.25, 0.75)),
            offset_top_raw=float(constrained_inv(0.25)),
            offset_bottom_raw=float(constrained_inv(0.25)),
            inv_raw=0.1 if rng.integers(0, 2) else -0.1,
        ))
    elliptical = []
    for j in range(cfg.n_elliptical):
        s = 0.0 if j == 0 else 1.0
        elliptical.append(EllipticalParams(
            scale_r=s, scale_g=s, scale_b=s,
            center_x=float(rng.uniform(0.25, 0.75)),
            center_y=float(rng.uniform(0.25, 0.75)),
            angle=float(rng.uniform(0.0, np.pi)),
            semi_major_raw=float(constrained_inv(0.5)),
            semi_minor_raw=float(constrained_inv(0.5)),
        ))
    stack = FilterStack(
        cubic=CubicParams(cfg.variant, identity_cubic_coeffs(cfg.variant)),
        graduated=graduated,
        elliptical=elliptical,
    )
    return stack.to_vector()


def fit(img: np.ndarray, target: np.ndarray,
        cfg: FitConfig | None = None) -> FitReport:
    """Fit a filter stack to one (input, target) pair.

    Runs init -> [loss_and_grad -> adam step] x steps, tracking the best
    evaluated iterate. With cfg.deterministic the whole trace is a pure
    function of (inputs, cfg).
    """
    cfg = cfg if cfg is not None else FitConfig()
    img = validate_image(img)
    target = validate_image(target, "target")
    require_same_shape(img, target)
    t0 = time.perf_counter()

    params = (
        np.array(cfg.init_params, dtype=np.float64, copy=True)
        if cfg.init_params is not None
        else init_stack(cfg)
    )
    adam = Adam(params.size, cfg.learning_rate, cfg.beta1, cfg.beta2,
                cfg.adam_eps)

    trace: list[float] = []
    best_loss = math.inf
    best_step = -1
    best_params = params.copy()
    initial_out = None
    aborted = False

    for step in range(cfg.steps):
        stack = cfg.stack_of(params)
        try:
            loss, grad = loss_and_grad(stack, img, target, cfg.weights,
                                       cfg.msssim)
        except NonFiniteError:
            aborted = True
            break
        if not math.isfinite(loss):
            aborted = True
            break
        trace.append(loss)
        if step == 0:
            initial_out = pipeline_forward(stack, img).y_final
        if loss < best_loss:
            best_loss = loss
            best_step = step
            best_params = params.copy()
        try:
            params = adam.step(params, grad)
        except NonFiniteError:
            aborted = True
            break

    if initial_out is None:  # aborted before any evaluation
        initial_out = pipeline_forward(cfg.stack_of(best_params), img).y_final
        best_loss = math.nan
    best_out = pipeline_forward(cfg.stack_of(best_params), img).y_final
    final_out = pipeline_forward(cfg.stack_of(params), img).y_final
    seconds = time.perf_counter() - t0

    return FitReport(
        loss_trace=trace,
        best_step=best_step,
        best_params=best_params,
        best_loss=best_loss,
        initial_psnr=psnr(initial_out, target),
        initial_ssim=ssim(initial_out, target, cfg.msssim),
        final_psnr=psnr(final_out, target),
        final_ssim=ssim(final_out, target, cfg.msssim),
        best_psnr=psnr(best_out, target),
        best_ssim=ssim(best_out, target, cfg.msssim),
        seconds=seconds,
        aborted=aborted,
    )
