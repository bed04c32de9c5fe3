"""Forward corruption, training objective, and the hierarchical sampler.

The forward process couples noising with resolution destruction: step t
downsamples the clean field to the schedule shape (h_t, w_t) and adds
sigma_t-scaled Gaussian noise.  The reverse process walks t = T..1,
lifting the latent to full resolution, predicting and removing noise,
and projecting onto the next (finer) latent shape.  Under the identity
shape schedule the sampler reduces exactly to the plain churn sampler in
:func:`vanilla_sample`.

Two update rules are provided.  The default ``edm`` mode treats the
noise level additively (variance exploding) and uses the stochastic
Euler/churn update; the ``ddpm`` mode follows the variance-preserving
update with alpha_bar = 1/(1 + sigma^2) for fidelity to that convention.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .denoisers import Denoiser, ToyDenoiser
from .grid import Grid, Shape, downsample, resample_array, upsample
from .schedules import ChurnParams, NoiseSchedule, ShapeSchedule

__all__ = [
    "corrupt",
    "edm_weight",
    "hedm_loss",
    "TrainConfig",
    "TrainingDivergedError",
    "SamplingFailureError",
    "train",
    "SampleTrace",
    "count_pixels",
    "sample",
    "vanilla_sample",
]


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the last epoch that was finite."""

    def __init__(self, last_finite_epoch: int, curve):
        super().__init__(f"training diverged after epoch {last_finite_epoch}")
        self.last_finite_epoch = last_finite_epoch
        self.curve = list(curve)


class SamplingFailureError(RuntimeError):
    """Denoiser produced non-finite values; carries the failing step index."""

    def __init__(self, step: int, sigma: float):
        super().__init__(f"non-finite denoiser output at step t={step} (sigma={sigma:.6g})")
        self.step = step
        self.sigma = sigma


def corrupt(x0: Grid, t: int, noise_sched: NoiseSchedule, shape_sched: ShapeSchedule,
            rng: np.random.Generator, literal_alpha: bool = False):
    """Corrupt a clean field to step t: downsample, then add noise.

    Returns (z, eps) where z lives at the step's latent shape.  The
    default law is variance exploding, ``z = D_t(x0) + sigma_t * eps``;
    with ``literal_alpha`` the variance-preserving mix ``sqrt(ab) D_t(x0)
    + sqrt(1-ab) eps`` with ab = 1/(1+sigma^2) is used instead.
    """
    if noise_sched.T != shape_sched.T:
        raise ValueError("noise and shape schedules must have equal length")
    sigma = noise_sched.sigma_at(t)
    target = shape_sched.shape_at(t)
    xt = downsample(x0, target)
    eps = rng.standard_normal(xt.data.shape)
    if literal_alpha:
        alpha_bar = 1.0 / (1.0 + sigma**2)
        z = np.sqrt(alpha_bar) * xt.data + np.sqrt(1.0 - alpha_bar) * eps
    else:
        z = xt.data + sigma * eps
    return xt.with_data(z), xt.with_data(eps)


def edm_weight(sigma: float, sigma_data: float = 0.5) -> float:
    """Loss weight w(sigma) = (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2."""
    return (sigma**2 + sigma_data**2) / (sigma * sigma_data) ** 2


def _draw_corruption(x0: Grid, t: int, noise_sched: NoiseSchedule, shape_sched: ShapeSchedule,
                     rng: np.random.Generator, coarse_noise: bool = False):
    """Training corruption at step t; returns (noisy, eps_target, sigma, shape).

    With ``coarse_noise`` False the noise is drawn at full resolution and
    added after lifting (the loss-formula convention; one standard-normal
    draw at full resolution).  With True the latent is noised at its own
    shape before lifting, which is what the reverse process actually
    produces between steps; the regression target is then the lifted
    noise field.
    """
    sigma = noise_sched.sigma_at(t)
    target = shape_sched.shape_at(t)
    full = x0.shape
    if coarse_noise:
        xt = downsample(x0, target).data
        eps = rng.standard_normal(xt.shape)
        noisy = resample_array(xt + sigma * eps, full.h, full.w)
        eps_target = resample_array(eps, full.h, full.w)
        return noisy, eps_target, sigma, target
    lifted = upsample(downsample(x0, target), full)
    eps = rng.standard_normal(x0.data.shape)
    noisy = lifted.data + sigma * eps
    return noisy, eps, sigma, target


def hedm_loss(f: Denoiser, x0: Grid, conditioning: Grid | None, t: int,
              noise_sched: NoiseSchedule, shape_sched: ShapeSchedule,
              rng: np.random.Generator, sigma_data: float = 0.5) -> float:
    """Single-draw hierarchical noise-prediction loss at step t.

    ``w(sigma_t) * mean((eps - f(U_t(D_t(x0)) + sigma_t eps, sigma_t,
    s_t))^2)`` with eps drawn at full resolution from ``rng``.
    """
    if conditioning is not None and conditioning.data.shape[1:] != x0.data.shape[1:]:
        raise ValueError("conditioning resolution must match the target field")
    noisy, eps, sigma, target = _draw_corruption(x0, t, noise_sched, shape_sched, rng)
    pred = f.predict(x0.with_data(noisy), sigma, target, conditioning)
    resid = eps - pred.data
    return edm_weight(sigma, sigma_data) * float(np.mean(resid**2))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the stochastic-gradient training loop."""

    epochs: int
    batch_size: int
    learning_rate: float
    seed: int
    noise: NoiseSchedule
    shapes: ShapeSchedule
    sigma_data: float = 0.5
    #: noise the latent at its own shape before lifting (matches what the
    #: reverse process feeds the network); False reproduces the plain
    #: lifted-plus-white-noise loss convention
    coarse_noise: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.sigma_data <= 0:
            raise ValueError("sigma_data must be positive")
        if self.noise.T != self.shapes.T:
            raise ValueError("noise and shape schedules must have equal length")

    def digest(self) -> str:
        """Stable hash of the configuration, stored in checkpoints."""
        payload = {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "sigmas": list(self.noise.sigmas),
            "shapes": [(s.h, s.w) for s in self.shapes.shapes],
            "sigma_data": self.sigma_data,
            "coarse_noise": self.coarse_noise,
        }
        raw = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(raw).hexdigest()[:16]


def train(f: ToyDenoiser, dataset, cfg: TrainConfig):
    """Train a toy denoiser on (coarse, fine) grid pairs.

    Per sample: draw a step index t uniformly, corrupt the fine field,
    and take a plain SGD step on the noise-prediction loss conditioned on
    the bilinearly lifted coarse field.  Returns the trained denoiser and
    the per-epoch mean loss curve; raises
    :class:`TrainingDivergedError` if the loss goes non-finite.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    fines = [fine for _, fine in dataset]
    conds = [upsample(coarse, fine.shape).data for coarse, fine in dataset]
    shape0 = fines[0].data.shape
    if any(g.data.shape != shape0 for g in fines):
        raise ValueError("all fine grids must share one shape")
    T = cfg.noise.T
    n = len(dataset)
    curve = []
    for epoch in range(cfg.epochs):
        order = _rng.generator(cfg.seed, "train", "order", epoch).permutation(n)
        epoch_losses = []
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            draws = _rng.generator(cfg.seed, "train", "batch", epoch, b)
            batch = order[start : start + cfg.batch_size]
            acc = None
            for idx in batch:
                t = int(draws.integers(1, T + 1))
                noisy, eps, sigma, target = _draw_corruption(
                    fines[idx], t, cfg.noise, cfg.shapes, draws, cfg.coarse_noise
                )
                loss, grads = f.loss_and_grad(
                    noisy, sigma, target, conds[idx], eps, edm_weight(sigma, cfg.sigma_data)
                )
                epoch_losses.append(loss)
                if acc is None:
                    acc = grads
                else:
                    for a, g in zip(acc, grads):
                        a += g
            scale = cfg.learning_rate / len(batch)
            for p, g in zip(f.params, acc):
                p -= scale * g
        mean_loss = float(np.mean(epoch_losses))
        if not math.isfinite(mean_loss) or not all(np.all(np.isfinite(p)) for p in f.params):
            raise TrainingDivergedError(epoch, curve)
        curve.append(mean_loss)
    return f, curve


@dataclass
class SampleTrace:
    """Per-step instrumentation of one sampling run."""

    full: Shape | None = None
    steps: list = field(default_factory=list)  # (t, Shape, sigma) per network call

    def record(self, t: int, shape: Shape, sigma: float) -> None:
        self.steps.append((t, shape, sigma))


def count_pixels(trace: SampleTrace):
    """Total latent pixels consumed and the measured area fraction.

    The total is the sum of h_t * w_t over recorded network calls; the
    fraction divides by T * H * W and equals the schedule's normalized
    mean area exactly.
    """
    if trace.full is None:
        raise ValueError("trace was never attached to a run")
    total = sum(s.area for _, s, _ in trace.steps)
    alpha = total / (len(trace.steps) * trace.full.area)
    return total, alpha


def _output_names(f: Denoiser, conditioning: Grid):
    if conditioning.channels == f.channels:
        return conditioning.channel_names
    return tuple(f"v{i}" for i in range(f.channels))


def _predict(f: Denoiser, arr: np.ndarray, names, extent, sigma: float, s: Shape,
             cond: Grid, t: int) -> np.ndarray:
    """Run one network call, converting any failure into a step-indexed error."""
    try:
        out = f.predict(Grid(arr, names, extent), sigma, s, cond).data
    except ValueError as exc:
        raise SamplingFailureError(t, sigma) from exc
    if not np.all(np.isfinite(out)):
        raise SamplingFailureError(t, sigma)
    return out


def _alpha_bar(sigma: float) -> float:
    return 1.0 / (1.0 + sigma**2)


def sample(f: Denoiser, conditioning: Grid, noise_sched: NoiseSchedule,
           shape_sched: ShapeSchedule, churn: ChurnParams | None, seed: int,
           mode: str = "edm", trace: SampleTrace | None = None) -> Grid:
    """Draw one field by walking the shape ladder coarse to fine.

    The latent starts at the coarsest shape and is lifted to full
    resolution for every network call; after each update it is projected
    onto the next step's latent shape.  ``conditioning`` must already be
    at the full target resolution.  Deterministic given ``seed``.
    """
    if noise_sched.T != shape_sched.T:
        raise ValueError("noise and shape schedules must have equal length")
    full = shape_sched.full
    if conditioning.shape != full:
        raise ValueError(
            f"conditioning must be pre-upsampled to {full.h}x{full.w}, "
            f"got {conditioning.height}x{conditioning.width}"
        )
    if mode not in ("edm", "ddpm"):
        raise ValueError(f"unknown sampler mode {mode!r}")
    churn = churn or ChurnParams(s_churn=0.0)
    T = noise_sched.T
    g = _rng.generator(seed, "sample")
    if trace is not None:
        trace.full = full
        trace.steps.clear()

    names = _output_names(f, conditioning)
    extent = conditioning.extent
    coarsest = shape_sched.shape_at(T)
    init = g.standard_normal((f.channels, coarsest.h, coarsest.w))
    x = init * noise_sched.sigma_max if mode == "edm" else init

    for i in range(T):
        t = T - i
        sigma = noise_sched.sigmas[i]
        s_t = shape_sched.shape_at(t)
        xt = resample_array(x, full.h, full.w)
        if mode == "edm":
            gamma = churn.gamma(sigma, T)
            sigma_hat = sigma * (1.0 + gamma)
            if gamma > 0:
                extra = math.sqrt(sigma_hat**2 - sigma**2) * churn.s_noise
                xt = xt + extra * g.standard_normal(xt.shape)
            eps_hat = _predict(f, xt, names, extent, sigma_hat, s_t, conditioning, t)
            if trace is not None:
                trace.record(t, s_t, sigma_hat)
            sigma_next = noise_sched.sigmas[i + 1] if i + 1 < T else 0.0
            x_next = xt + (sigma_next - sigma_hat) * eps_hat
        else:
            eps_hat = _predict(f, xt, names, extent, sigma, s_t, conditioning, t)
            if trace is not None:
                trace.record(t, s_t, sigma)
            sigma_prev = noise_sched.sigmas[i + 1] if i + 1 < T else 0.0
            ab_t, ab_prev = _alpha_bar(sigma), _alpha_bar(sigma_prev)
            alpha_t = ab_t / ab_prev
            x_next = (xt - (1.0 - alpha_t) / math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(alpha_t)
            if t > 1:
                x_next = x_next + sigma * g.standard_normal(x_next.shape)
        if t > 1:
            s_prev = shape_sched.shape_at(t - 1)
            x = resample_array(x_next, s_prev.h, s_prev.w)
        else:
            x = x_next

    if not np.all(np.isfinite(x)):
        raise SamplingFailureError(0, 0.0)
    return Grid(x, names, extent)


def vanilla_sample(f: Denoiser, conditioning: Grid, noise_sched: NoiseSchedule,
                   churn: ChurnParams | None, seed: int, mode: str = "edm",
                   trace: SampleTrace | None = None) -> Grid:
    """Plain fixed-resolution reference sampler (no shape ladder).

    Kept as an independent code path so the identity-schedule reduction
    of :func:`sample` can be checked against it.
    """
    if mode not in ("edm", "ddpm"):
        raise ValueError(f"unknown sampler mode {mode!r}")
    churn = churn or ChurnParams(s_churn=0.0)
    full = conditioning.shape
    T = noise_sched.T
    g = _rng.generator(seed, "sample")
    if trace is not None:
        trace.full = full
        trace.steps.clear()
    names = _output_names(f, conditioning)
    extent = conditioning.extent

    init = g.standard_normal((f.channels, full.h, full.w))
    x = init * noise_sched.sigma_max if mode == "edm" else init

    for i in range(T):
        t = T - i
        sigma = noise_sched.sigmas[i]
        if mode == "edm":
            gamma = churn.gamma(sigma, T)
            sigma_hat = sigma * (1.0 + gamma)
            if gamma > 0:
                extra = math.sqrt(sigma_hat**2 - sigma**2) * churn.s_noise
                x = x + extra * g.standard_normal(x.shape)
            eps_hat = _predict(f, x, names, extent, sigma_hat, full, conditioning, t)
            if trace is not None:
                trace.record(t, full, sigma_hat)
            sigma_next = noise_sched.sigmas[i + 1] if i + 1 < T else 0.0
            x = x + (sigma_next - sigma_hat) * eps_hat
        else:
            eps_hat = _predict(f, x, names, extent, sigma, full, conditioning, t)
            if trace is not None:
                trace.record(t, full, sigma)
            sigma_prev = noise_sched.sigmas[i + 1] if i + 1 < T else 0.0
            ab_t, ab_prev = _alpha_bar(sigma), _alpha_bar(sigma_prev)
            alpha_t = ab_t / ab_prev
            x = (x - (1.0 - alpha_t) / math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(alpha_t)
            if t > 1:
                x = x + sigma * g.standard_normal(x.shape)

    if not np.all(np.isfinite(x)):
        raise SamplingFailureError(0, 0.0)
    return Grid(x, names, extent)
