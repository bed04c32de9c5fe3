"""Radially-averaged power spectra and their analytic transformations.

The spectrum of a field is computed from the unnormalized 2-D DFT,
``P(k) = |X(k)|^2``, radially averaged over log-spaced annuli.  Radius is
measured in cycles per pixel along each axis, so the radial coordinate
is isotropic for non-square grids and tops out at the radial Nyquist
sqrt(2)/2.  Two closed-form predictions are provided: integer-factor
downsampling truncates and rescales the spectrum, and additive white
noise lifts it by a flat floor, whose crossing with the signal defines
the hinge frequency.

In the unnormalized-DFT convention used throughout, iid pixel noise of
variance ``sigma_n^2`` produces an expected floor of ``ny * nx *
sigma_n^2``; all noise-floor comparisons apply this scaling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid

__all__ = [
    "Spectrum",
    "rapsd",
    "fit_power_law",
    "predict_downsampled",
    "predict_noised",
    "hinge_frequency",
    "spectrum_csv",
]

#: radial Nyquist frequency (cycles per pixel, corner of the Fourier plane)
RADIAL_NYQUIST = math.sqrt(2.0) / 2.0


@dataclass(frozen=True)
class Spectrum:
    """Radially averaged power spectrum.

    ``bin_edges`` has one more entry than ``power``; annulus j covers
    [edges[j], edges[j+1]).  ``power`` is the arithmetic mean PSD over
    the annulus and ``counts`` the number of Fourier coefficients in it.
    The DC component is reported separately.
    """

    bin_edges: np.ndarray
    power: np.ndarray
    counts: np.ndarray
    dc_power: float
    ny: int
    nx: int

    def __post_init__(self):
        object.__setattr__(self, "bin_edges", np.asarray(self.bin_edges, dtype=np.float64))
        object.__setattr__(self, "power", np.asarray(self.power, dtype=np.float64))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        if self.bin_edges.size != self.power.size + 1:
            raise ValueError("need len(power) + 1 bin edges")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(self.power < 0):
            raise ValueError("power must be non-negative")
        if np.any(self.counts < 1):
            raise ValueError("reported bins must contain at least one coefficient")

    @property
    def centers(self) -> np.ndarray:
        """Geometric-mean frequency of each annulus."""
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    @property
    def nbins(self) -> int:
        return self.power.size


def _radial_frequencies(ny: int, nx: int) -> np.ndarray:
    fy = np.fft.fftfreq(ny)
    fx = np.fft.fftfreq(nx)
    return np.hypot(fy[:, None], fx[None, :])


def rapsd(g: Grid, channel=0, bins_per_decade: int = 12) -> Spectrum:
    """Radially averaged power spectrum of one channel.

    Annuli are log-spaced at ``bins_per_decade``; annuli that catch no
    Fourier coefficient are merged into their next neighbour so every
    reported bin is populated and every non-DC coefficient lands in
    exactly one annulus.
    """
    if g.height < 4 or g.width < 4:
        raise ValueError("rapsd needs a field of at least 4x4")
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be >= 1")
    x = g.channel(channel)
    ny, nx = x.shape
    spec2d = np.abs(np.fft.fft2(x)) ** 2

    # Parseval consistency of the unnormalized transform, checked before
    # any binning: sum |X|^2 == N * sum x^2 == N^2 * mean(x^2).
    total = float(spec2d.sum())
    expect = ny * nx * float(np.sum(x * x))
    if not math.isclose(total, expect, rel_tol=1e-9, abs_tol=1e-12):
        raise ArithmeticError(f"Parseval mismatch: {total} vs {expect}")

    freq = _radial_frequencies(ny, nx)
    dc_power = float(spec2d[0, 0])
    mask = freq > 0
    radii = freq[mask]
    powers = spec2d[mask]

    f_lo = float(radii.min())
    f_hi = float(radii.max())
    ratio = 10.0 ** (1.0 / bins_per_decade)
    nbins = max(1, int(math.ceil(math.log(f_hi / f_lo, ratio))))
    edges = f_lo * ratio ** np.arange(nbins + 1)
    edges[-1] = max(edges[-1], f_hi * (1.0 + 1e-12))  # keep the top radius inside

    idx = np.digitize(radii, edges) - 1
    counts = np.bincount(idx, minlength=nbins)
    sums = np.bincount(idx, weights=powers, minlength=nbins)

    # merge empty annuli into the next populated one
    keep = counts > 0
    merged_edges = [edges[0]]
    merged_counts, merged_sums = [], []
    acc_c, acc_s = 0, 0.0
    for j in range(nbins):
        acc_c += counts[j]
        acc_s += sums[j]
        if keep[j]:
            merged_edges.append(edges[j + 1])
            merged_counts.append(acc_c)
            merged_sums.append(acc_s)
            acc_c, acc_s = 0, 0.0
    power = np.array(merged_sums) / np.array(merged_counts)
    return Spectrum(np.array(merged_edges), power, np.array(merged_counts), dc_power, ny, nx)


def fit_power_law(s: Spectrum, f_lo: float, f_hi: float):
    """Least-squares log-log fit over [f_lo, f_hi].

    Returns (alpha, amplitude) such that power ~ amplitude * f**(-alpha).
    """
    centers = s.centers
    sel = (centers >= f_lo) & (centers <= f_hi) & (s.power > 0)
    if int(sel.sum()) < 3:
        raise ValueError("need at least 3 positive-power bins in the fit range")
    logf = np.log10(centers[sel])
    logp = np.log10(s.power[sel])
    slope, intercept = np.polyfit(logf, logp, 1)
    return -float(slope), float(10.0**intercept)


def predict_downsampled(s: Spectrum, factor: int) -> Spectrum:
    """Spectrum predicted after integer-factor downsampling.

    Power below the new Nyquist 1/(2*factor) is scaled by factor^2 (ideal
    low-pass assumption, conserving total variance); everything above is
    discarded.  factor=1 returns the spectrum unchanged.
    """
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    if factor == 1:
        return s
    cutoff = 1.0 / (2.0 * factor)
    below = s.centers < cutoff
    power = np.where(below, factor**2 * s.power, 0.0)
    return Spectrum(s.bin_edges, power, s.counts, factor**2 * s.dc_power, s.ny, s.nx)


def noise_floor(s: Spectrum, sigma_n: float) -> float:
    """Expected flat PSD level of iid pixel noise with std sigma_n."""
    return s.ny * s.nx * sigma_n**2


def predict_noised(s: Spectrum, sigma_n: float) -> Spectrum:
    """Spectrum predicted after adding iid N(0, sigma_n^2) pixel noise.

    Every bin (and DC) is lifted by the flat floor ny*nx*sigma_n^2.
    """
    if sigma_n < 0:
        raise ValueError("sigma_n must be non-negative")
    if sigma_n == 0:
        return s
    floor = noise_floor(s, sigma_n)
    return Spectrum(s.bin_edges, s.power + floor, s.counts, s.dc_power + floor, s.ny, s.nx)


def hinge_frequency(s: Spectrum, sigma_n: float) -> float:
    """Smallest bin-center frequency where the noise floor dominates.

    Returns +inf when the signal stays above the floor everywhere
    (including sigma_n = 0).  Warns if the spectrum is not non-increasing,
    in which case the crossing need not be unique.
    """
    if sigma_n < 0:
        raise ValueError("sigma_n must be non-negative")
    if s.nbins > 1 and np.any(np.diff(s.power) > 1e-9 * np.maximum(s.power[:-1], 1e-300)):
        warnings.warn("spectrum is not non-increasing; hinge frequency may not be unique",
                      stacklevel=2)
    floor = noise_floor(s, sigma_n)
    hit = np.nonzero(s.power <= floor)[0]
    if hit.size == 0:
        return math.inf
    return float(s.centers[hit[0]])


def spectrum_csv(s: Spectrum) -> str:
    """Render a spectrum as ``f,power,count`` CSV text."""
    lines = ["f,power,count"]
    for f, p, c in zip(s.centers, s.power, s.counts):
        lines.append(f"{f:.12g},{p:.12g},{int(c)}")
    return "\n".join(lines) + "\n"
