"""Noise schedules, shape schedules, and the pixel-budget calculus.

The sampler couples a monotone noise ladder with a shape ladder: step
``t = 1`` is the finest resolution (the full grid) and ``t = T`` the
coarsest, while sigmas are listed in sampling order (sigma_max first).
The normalized mean area ``alpha = sum(A_t) / (T * H * W)`` measures the
fraction of full-resolution pixels a network call touches on average;
its reciprocal is the ideal pixel/FLOP speedup of a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .grid import Shape

__all__ = [
    "NoiseSchedule",
    "ShapeSchedule",
    "ChurnParams",
    "karras_sigmas",
    "equally_spaced_shapes",
    "unit_shrink_shapes",
    "tandem_shapes",
    "identity_shapes",
    "pixel_total",
    "area_fraction",
    "normalized_mean_area",
    "speedup",
    "unit_shrink_speedup_closed_form",
    "schedule_lines",
    "parse_schedule_lines",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing sigma ladder in sampling order."""

    sigmas: tuple
    sigma_min: float
    sigma_max: float
    rho: float = 7.0

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        object.__setattr__(self, "sigmas", sig)
        if len(sig) < 1:
            raise ValueError("noise schedule needs at least one sigma")
        if any(s <= 0 for s in sig):
            raise ValueError("sigmas must be positive")
        if any(b >= a for a, b in zip(sig, sig[1:])):
            raise ValueError("sigmas must be strictly decreasing in sampling order")
        if not math.isclose(sig[0], self.sigma_max, rel_tol=1e-12):
            raise ValueError(f"first sigma {sig[0]} != sigma_max {self.sigma_max}")
        if not math.isclose(sig[-1], self.sigma_min, rel_tol=1e-12):
            raise ValueError(f"last sigma {sig[-1]} != sigma_min {self.sigma_min}")

    @property
    def T(self) -> int:
        return len(self.sigmas)

    def sigma_at(self, t: int) -> float:
        """Sigma paired with 1-based schedule index t (t=1 is finest/last)."""
        if not 1 <= t <= self.T:
            raise ValueError(f"step index {t} outside 1..{self.T}")
        return self.sigmas[self.T - t]


@dataclass(frozen=True)
class ShapeSchedule:
    """Monotone non-increasing resolution ladder, shapes[0] being t=1 (finest)."""

    shapes: tuple
    full: Shape

    def __post_init__(self):
        shapes = tuple(self.shapes)
        object.__setattr__(self, "shapes", shapes)
        if not shapes:
            raise ValueError("shape schedule must be nonempty")
        if shapes[0] != self.full:
            raise ValueError(f"first shape {shapes[0]} must equal full {self.full}")
        for s in shapes:
            if not (1 <= s.h <= self.full.h and 1 <= s.w <= self.full.w):
                raise ValueError(f"shape {s} outside 1..full bounds")
        for a, b in zip(shapes, shapes[1:]):
            if b.h > a.h or b.w > a.w:
                raise ValueError("shapes must be non-increasing in both axes")

    @property
    def T(self) -> int:
        return len(self.shapes)

    def shape_at(self, t: int) -> Shape:
        """Shape at 1-based index t (t=1 finest, t=T coarsest)."""
        if not 1 <= t <= self.T:
            raise ValueError(f"step index {t} outside 1..{self.T}")
        return self.shapes[t - 1]


@dataclass(frozen=True)
class ChurnParams:
    """Stochasticity knobs of the churn sampler (defaults per the EDM recipe)."""

    s_churn: float = 1.0
    s_min: float = 0.0
    s_max: float = math.inf
    s_noise: float = 1.0

    def __post_init__(self):
        if self.s_churn < 0:
            raise ValueError("s_churn must be non-negative")
        if self.s_min > self.s_max:
            raise ValueError("s_min must be <= s_max")

    def gamma(self, sigma: float, steps: int) -> float:
        if self.s_churn > 0 and self.s_min <= sigma <= self.s_max:
            return min(self.s_churn / steps, math.sqrt(2.0) - 1.0)
        return 0.0


def karras_sigmas(sigma_min: float, sigma_max: float, rho: float, T: int) -> NoiseSchedule:
    """Rho-warped sigma ladder between sigma_max and sigma_min.

    sigma_i = (sigma_max^(1/rho) + (i/(T-1)) * (sigma_min^(1/rho) -
    sigma_max^(1/rho)))^rho for i = 0..T-1; the endpoints are pinned
    exactly.
    """
    if T < 2:
        raise ValueError("karras schedule needs T >= 2")
    if not (0 < sigma_min < sigma_max):
        raise ValueError("need 0 < sigma_min < sigma_max")
    if rho <= 0:
        raise ValueError("rho must be positive")
    lo = sigma_min ** (1.0 / rho)
    hi = sigma_max ** (1.0 / rho)
    ramp = np.arange(T) / (T - 1)
    sig = (hi + ramp * (lo - hi)) ** rho
    sig[0] = sigma_max
    sig[-1] = sigma_min
    return NoiseSchedule(tuple(sig), sigma_min=sigma_min, sigma_max=sigma_max, rho=rho)


def log_uniform_sigmas(sigma_min: float, sigma_max: float, T: int) -> NoiseSchedule:
    """Geometrically spaced sigma ladder (uniform in log space).

    Matches the practice of drawing training noise levels uniformly in
    log space when step indices are sampled uniformly.
    """
    if T < 2:
        raise ValueError("log-uniform schedule needs T >= 2")
    if not (0 < sigma_min < sigma_max):
        raise ValueError("need 0 < sigma_min < sigma_max")
    sig = np.exp(np.linspace(np.log(sigma_max), np.log(sigma_min), T))
    sig[0] = sigma_max
    sig[-1] = sigma_min
    return NoiseSchedule(tuple(sig), sigma_min=sigma_min, sigma_max=sigma_max, rho=1.0)


def _ramp_value(full: int, t: int, T: int) -> int:
    # linear ramp full -> 1, rounded to nearest (ties to even) and clamped
    if T == 1:
        return full
    x = full - (t - 1) / (T - 1) * (full - 1)
    return max(1, int(np.round(x)))


def equally_spaced_shapes(H: int, W: int, T: int) -> ShapeSchedule:
    """Linear ramp from (H, W) at t=1 down to (1, 1) at t=T."""
    if T < 2:
        raise ValueError("equally spaced schedule needs T >= 2")
    full = Shape(H, W)
    shapes = tuple(Shape(_ramp_value(H, t, T), _ramp_value(W, t, T)) for t in range(1, T + 1))
    return ShapeSchedule(shapes, full)


def unit_shrink_shapes(H: int, W: int, T: int) -> ShapeSchedule:
    """Both axes drop by one pixel per step, clamped at 1."""
    if T < 1:
        raise ValueError("schedule needs T >= 1")
    full = Shape(H, W)
    shapes = tuple(Shape(max(1, H - (t - 1)), max(1, W - (t - 1))) for t in range(1, T + 1))
    return ShapeSchedule(shapes, full)


def tandem_shapes(H: int, W: int, T: int, k: int) -> ShapeSchedule:
    """k denoise steps at each resolution level of a ceil(T/k)-level ramp.

    k=1 coincides with the equally spaced schedule; k=T keeps the full
    shape throughout (no dimension-reducing steps).
    """
    if T < 2:
        raise ValueError("tandem schedule needs T >= 2")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > T:
        raise ValueError(f"k={k} exceeds T={T}")
    levels = math.ceil(T / k)
    level_shapes = [
        Shape(_ramp_value(H, j, levels), _ramp_value(W, j, levels)) for j in range(1, levels + 1)
    ]
    shapes = []
    for s in level_shapes:
        shapes.extend([s] * k)
    return ShapeSchedule(tuple(shapes[:T]), Shape(H, W))


def identity_shapes(H: int, W: int, T: int) -> ShapeSchedule:
    """Constant full-resolution schedule; reduces the sampler to vanilla EDM."""
    if T < 1:
        raise ValueError("schedule needs T >= 1")
    full = Shape(H, W)
    return ShapeSchedule((full,) * T, full)


def pixel_total(sched: ShapeSchedule) -> int:
    """Sum of per-step areas A_t, exactly (integer arithmetic)."""
    return sum(s.area for s in sched.shapes)


def area_fraction(sched: ShapeSchedule) -> Fraction:
    """Exact rational alpha = sum(A_t) / (T * H * W)."""
    return Fraction(pixel_total(sched), sched.T * sched.full.area)


def normalized_mean_area(sched: ShapeSchedule) -> float:
    """Average fraction of full-resolution pixels per network call, in (0, 1]."""
    return pixel_total(sched) / (sched.T * sched.full.area)


def speedup(sched: ShapeSchedule) -> float:
    """Ideal pixel/FLOP speedup 1/alpha of a schedule (>= 1)."""
    return (sched.T * sched.full.area) / pixel_total(sched)


def unit_shrink_speedup_closed_form(H: int, W: int, T: int) -> float:
    """Closed-form speedup of the unit-shrink schedule, valid while no
    clamping is active (T <= min(H, W)):

        S = [1 - (T-1)(H+W)/(2A) + (T-1)(2T-1)/(6A)]^(-1),  A = H*W.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if T > min(H, W):
        raise ValueError(f"closed form invalid under clamping: T={T} > min(H, W)={min(H, W)}")
    A = H * W
    # multiply through by 6A to stay in exact integers
    denom = 6 * T * A - 3 * (T - 1) * T * (H + W) + (T - 1) * T * (2 * T - 1)
    return float(Fraction(6 * T * A, denom))


def schedule_lines(shapes: ShapeSchedule, noise: NoiseSchedule | None = None) -> str:
    """Render a schedule as audit text, one ``t h w sigma`` line per step."""
    if noise is not None and noise.T != shapes.T:
        raise ValueError(f"noise schedule length {noise.T} != shape schedule length {shapes.T}")
    out = []
    for t in range(1, shapes.T + 1):
        s = shapes.shape_at(t)
        sigma = noise.sigma_at(t) if noise is not None else float("nan")
        out.append(f"{t} {s.h} {s.w} {sigma:.12g}")
    return "\n".join(out) + "\n"


def parse_schedule_lines(text: str):
    """Parse audit text back into (t, h, w, sigma) tuples."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 't h w sigma', got {line!r}")
        rows.append((int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
    return rows
