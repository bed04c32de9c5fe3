"""Synthetic multiscale fields and deterministic fixtures.

Power-law fields are built in Fourier space: coefficient amplitudes are
set to f**(-beta/2) with uniform random phases, Hermitian-symmetrized so
the inverse transform is real, then rescaled to the requested first and
second moments.  The same machinery produces (coarse, fine) training
pairs and a toy monthly rainfall climatology for the seasonal metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .grid import Grid, Shape, UNIT_EXTENT, downsample
from .metrics import MonthlyClimatology

__all__ = ["PowerLawSpec", "powerlaw_field", "make_pairs", "monthly_toy_climatology"]


@dataclass(frozen=True)
class PowerLawSpec:
    """Parameters of a synthetic field with RAPSD ~ f**(-beta)."""

    beta: float
    height: int
    width: int
    channels: int = 1
    seed: int = 0
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.std <= 0:
            raise ValueError("std must be positive")
        if self.height < 4 or self.width < 4:
            raise ValueError("field must be at least 4x4")
        if self.channels < 1:
            raise ValueError("channels must be positive")


def _powerlaw_plane(beta: float, h: int, w: int, g: np.random.Generator) -> np.ndarray:
    """One real field whose spectral amplitudes follow f**(-beta/2)."""
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    f = np.hypot(fy, fx)
    amp = np.zeros_like(f)
    nonzero = f > 0
    amp[nonzero] = f[nonzero] ** (-beta / 2.0)

    phase = g.uniform(0.0, 2.0 * np.pi, size=f.shape)
    spec = amp * np.exp(1j * phase)

    # Hermitian symmetry within the self-conjugate columns of the rfft
    # layout (kx = 0 and, for even width, kx = w/2): X[-ky] = conj(X[ky]);
    # purely real entries at the DC/Nyquist rows.
    self_conj_cols = [0] + ([w // 2] if w % 2 == 0 else [])
    for col in self_conj_cols:
        for row in range(1, (h + 1) // 2):
            spec[h - row, col] = np.conj(spec[row, col])
        spec[0, col] = amp[0, col] * np.cos(phase[0, col])
        if h % 2 == 0:
            spec[h // 2, col] = amp[h // 2, col] * np.cos(phase[h // 2, col])
    spec[0, 0] = 0.0
    return np.fft.irfft2(spec, s=(h, w))


def powerlaw_field(spec: PowerLawSpec) -> Grid:
    """Generate a random field with the requested spectral slope and moments."""
    channels = []
    for c in range(spec.channels):
        g = _rng.generator(spec.seed, "powerlaw", c)
        plane = _powerlaw_plane(spec.beta, spec.height, spec.width, g)
        sd = plane.std()
        if sd == 0.0:
            raise ValueError("degenerate synthetic field (zero variance)")
        channels.append((plane - plane.mean()) / sd * spec.std + spec.mean)
    names = tuple(f"f{c}" for c in range(spec.channels))
    return Grid(np.stack(channels), names, UNIT_EXTENT)


def make_pairs(spec: PowerLawSpec, coarsening_factor: int, count: int):
    """Generate (coarse, fine) grid pairs for the downscaling task.

    Each fine field is an independent draw from ``spec`` (seeds split per
    pair); the coarse partner is its bilinear downsample by the given
    integer factor.
    """
    if coarsening_factor < 1:
        raise ValueError("coarsening factor must be >= 1")
    if spec.height < coarsening_factor or spec.width < coarsening_factor:
        raise ValueError("coarsening factor exceeds the fine field size")
    if count < 0:
        raise ValueError("count must be non-negative")
    coarse_shape = Shape(spec.height // coarsening_factor, spec.width // coarsening_factor)
    pairs = []
    for i in range(count):
        fine = powerlaw_field(
            PowerLawSpec(
                spec.beta, spec.height, spec.width, spec.channels,
                seed=_rng.derive_seed(spec.seed, "pair", i),
                mean=spec.mean, std=spec.std,
            )
        )
        pairs.append((downsample(fine, coarse_shape), fine))
    return pairs


def monthly_toy_climatology(seed: int, height: int, width: int, wet_month: int,
                            amplitude: float) -> MonthlyClimatology:
    """Sinusoidal annual rainfall cycle peaking at ``wet_month``.

    A seeded spatial texture modulates both the base rainfall and the
    seasonal swing; values are clipped at zero so the result is a valid
    rainfall climatology.
    """
    if not 1 <= wet_month <= 12:
        raise ValueError("wet_month must be in 1..12")
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    g = _rng.generator(seed, "toy-climatology")
    base = 2.0 + g.uniform(0.0, 1.0, size=(height, width))
    swing = amplitude * (0.75 + 0.5 * g.uniform(0.0, 1.0, size=(height, width)))
    months = np.arange(1, 13).reshape(12, 1, 1)
    cycle = np.cos(2.0 * np.pi * (months - wet_month) / 12.0)
    values = np.maximum(base[np.newaxis] + swing[np.newaxis] * cycle, 0.0)
    return MonthlyClimatology(values, UNIT_EXTENT)
