"""Pixelwise, ensemble, and seasonal-cycle rainfall metrics.

Alongside the standard RMSE/PSNR/CRPS accuracy measures, this module
implements the four minimum-standard rainfall metrics -- proportional
bias (MAPE), area-weighted spatial correlation (SCor), seasonal
amplitude error (NRMSE), and circular phase error (MAD) -- and a
scorecard that applies their benchmark thresholds with inclusive
comparisons: MAPE <= 0.75, SCor >= 0.7, NRMSE <= 0.6, MAD <= 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GeoExtent, Grid, UNIT_EXTENT

__all__ = [
    "MonthlyClimatology",
    "Scorecard",
    "rmse",
    "psnr",
    "crps",
    "mape",
    "scor",
    "amplitude_nrmse",
    "phase_mad",
    "evaluate_thresholds",
    "scorecard",
    "MAPE_THRESHOLD",
    "SCOR_THRESHOLD",
    "NRMSE_THRESHOLD",
    "MAD_THRESHOLD",
]

MAPE_THRESHOLD = 0.75
SCOR_THRESHOLD = 0.7
NRMSE_THRESHOLD = 0.6
MAD_THRESHOLD = 2.0

PSNR_CAP_DB = 200.0


class MonthlyClimatology:
    """Mean rainfall per calendar month: values[12][height][width], mm/day."""

    __slots__ = ("values", "extent")

    def __init__(self, values, extent: GeoExtent = UNIT_EXTENT):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 12:
            raise ValueError(f"climatology must be [12][h][w], got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("climatology values must be finite")
        if np.any(arr < 0):
            raise ValueError("rainfall climatology cannot be negative")
        arr = arr.copy()
        arr.setflags(write=False)
        self.values = arr
        self.extent = extent

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def annual_mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def amplitude(self) -> np.ndarray:
        """Seasonal amplitude per cell: max month minus annual mean."""
        return self.values.max(axis=0) - self.values.mean(axis=0)

    def phase(self) -> np.ndarray:
        """Month of maximum rainfall per cell, 1..12 (earliest wins ties)."""
        return np.argmax(self.values, axis=0) + 1

    @classmethod
    def from_grid(cls, g: Grid) -> "MonthlyClimatology":
        """Build from a 12-channel grid with channel names m01..m12."""
        expected = tuple(f"m{m:02d}" for m in range(1, 13))
        if g.channel_names != expected:
            raise ValueError("climatology grid needs channels m01..m12 in order")
        return cls(g.data, g.extent)


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def _weights_for(field: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        return np.ones(field.shape)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != field.shape:
        raise ValueError(f"weights shape {w.shape} does not match field {field.shape}")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    return w


def rmse(pred: Grid, obs: Grid) -> float:
    """Root-mean-square error over all channels and cells."""
    _check_same_shape(pred.data, obs.data)
    return float(np.sqrt(np.mean((pred.data - obs.data) ** 2)))


def psnr(pred: Grid, obs: Grid, data_range: float) -> float:
    """Peak signal-to-noise ratio in dB, capped at 200."""
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    err = rmse(pred, obs)
    if err == 0.0:
        return PSNR_CAP_DB
    return float(min(20.0 * np.log10(data_range / err), PSNR_CAP_DB))


def crps(ensemble, obs: Grid, weights=None) -> float:
    """Ensemble CRPS, energy form with identical pairs included.

    Per cell: mean_i |X_i - y| - 0.5 * mean_{i,i'} |X_i - X_{i'}| over all
    ordered member pairs; cells are then averaged with the given weights.
    """
    members = list(ensemble)
    if len(members) < 2:
        raise ValueError("CRPS needs at least 2 ensemble members")
    for m in members:
        _check_same_shape(m.data, obs.data)
    stack = np.stack([m.data for m in members])  # (m, c, h, w)
    m = stack.shape[0]
    skill = np.mean(np.abs(stack - obs.data[np.newaxis]), axis=0)
    # mean pairwise distance via the sorted (Gini) identity, O(m log m)
    srt = np.sort(stack, axis=0)
    k = np.arange(1, m + 1, dtype=np.float64).reshape(m, 1, 1, 1)
    pairwise = 2.0 * np.sum((2.0 * k - m - 1.0) * srt, axis=0) / (m * m)
    per_cell = skill - 0.5 * pairwise  # (c, h, w)
    w = _weights_for(per_cell[0], weights)
    return float(np.sum(per_cell * w[np.newaxis]) / (per_cell.shape[0] * np.sum(w)))


def mape(pred_annual: Grid, obs_annual: Grid, weights=None) -> float:
    """Area-weighted mean absolute percentage error, (1/W) sum w |P-O|/O."""
    _check_same_shape(pred_annual.data, obs_annual.data)
    p = pred_annual.data
    o = obs_annual.data
    zero = np.argwhere(o == 0.0)
    if zero.size:
        c, r, cc = zero[0]
        raise ZeroDivisionError(f"observed value is 0 at channel {c}, cell ({r}, {cc})")
    w = _weights_for(p[0], weights)[np.newaxis]
    return float(np.sum(w * np.abs((p - o) / o)) / (p.shape[0] * np.sum(w[0])))


def scor(pred_annual: Grid, obs_annual: Grid, weights=None) -> float:
    """Area-weighted Pearson correlation of the spatial patterns."""
    _check_same_shape(pred_annual.data, obs_annual.data)
    p = pred_annual.data.reshape(-1)
    o = obs_annual.data.reshape(-1)
    w = np.broadcast_to(
        _weights_for(pred_annual.data[0], weights)[np.newaxis], pred_annual.data.shape
    ).reshape(-1)
    wsum = np.sum(w)
    pm = np.sum(w * p) / wsum
    om = np.sum(w * o) / wsum
    pv = np.sum(w * (p - pm) ** 2)
    ov = np.sum(w * (o - om) ** 2)
    if pv == 0.0 or ov == 0.0:
        raise ValueError("spatial correlation undefined for a weighted-constant field")
    return float(np.sum(w * (p - pm) * (o - om)) / np.sqrt(pv * ov))


def amplitude_nrmse(pred: MonthlyClimatology, obs: MonthlyClimatology, weights=None,
                    rms_denominator: bool = False) -> float:
    """Normalised RMSE of seasonal amplitudes.

    Numerator is the weighted RMS of amplitude differences; the default
    denominator is the weighted mean of squared observed amplitudes (as
    benchmarked), which is dimensionally a squared rainfall.  Set
    ``rms_denominator`` to normalise by the weighted RMS amplitude
    instead.
    """
    ap = pred.amplitude()
    ao = obs.amplitude()
    _check_same_shape(ap, ao)
    w = _weights_for(ao, weights)
    wsum = np.sum(w)
    num = np.sqrt(np.sum(w * (ap - ao) ** 2) / wsum)
    denom = np.sum(w * ao**2) / wsum
    if denom == 0.0:
        raise ValueError("observed amplitudes are all zero")
    if rms_denominator:
        denom = np.sqrt(denom)
    return float(num / denom)


def circular_month_distance(a, b):
    """Shortest distance between months on the 12-month circle, in [0, 6]."""
    d = np.abs(np.asarray(a) - np.asarray(b))
    return np.minimum(d, 12 - d)


def phase_mad(pred: MonthlyClimatology, obs: MonthlyClimatology, weights=None) -> float:
    """Weighted mean absolute circular deviation of the wettest month."""
    mp = pred.phase()
    mo = obs.phase()
    _check_same_shape(mp, mo)
    w = _weights_for(mp.astype(np.float64), weights)
    return float(np.sum(w * circular_month_distance(mp, mo)) / np.sum(w))


@dataclass(frozen=True)
class Scorecard:
    """Benchmark metric values plus pass flags at the exact thresholds."""

    mape: float
    scor: float
    nrmse: float
    mad: float

    @property
    def mape_pass(self) -> bool:
        return self.mape <= MAPE_THRESHOLD

    @property
    def scor_pass(self) -> bool:
        return self.scor >= SCOR_THRESHOLD

    @property
    def nrmse_pass(self) -> bool:
        return self.nrmse <= NRMSE_THRESHOLD

    @property
    def mad_pass(self) -> bool:
        return self.mad <= MAD_THRESHOLD

    @property
    def passes(self) -> tuple:
        return (self.mape_pass, self.scor_pass, self.nrmse_pass, self.mad_pass)

    @property
    def overall(self) -> bool:
        return all(self.passes)

    def summary(self) -> str:
        return f"PASS {sum(self.passes)}/4"


def evaluate_thresholds(mape_value: float, scor_value: float, nrmse_value: float,
                        mad_value: float) -> Scorecard:
    """Assemble a scorecard from already-computed metric values."""
    return Scorecard(mape_value, scor_value, nrmse_value, mad_value)


def scorecard(pred: MonthlyClimatology, obs: MonthlyClimatology, weights=None) -> Scorecard:
    """Run all four benchmark metrics on a pair of climatologies.

    MAPE and SCor act on the annual-mean fields; NRMSE and MAD on the
    monthly amplitude and phase.
    """
    pred_annual = Grid(pred.annual_mean()[np.newaxis], ("annual",), pred.extent)
    obs_annual = Grid(obs.annual_mean()[np.newaxis], ("annual",), obs.extent)
    return evaluate_thresholds(
        mape(pred_annual, obs_annual, weights),
        scor(pred_annual, obs_annual, weights),
        amplitude_nrmse(pred, obs, weights),
        phase_mad(pred, obs, weights),
    )
