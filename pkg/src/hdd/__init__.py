"""Hierarchical diffusion downscaling toolkit.

A desk-scale implementation of a diffusion engine whose forward process
jointly adds noise and destroys spatial resolution along a shape
schedule, together with the supporting analysis stack: the pixel-budget
speedup calculus, a KL chain-rule verifier, radially averaged power
spectra with analytic predictions, climate benchmark metrics, synthetic
multiscale field generation, and energy/CO2 accounting.
"""

from .grid import GeoExtent, Grid, Shape, UNIT_EXTENT, area_weights, downsample, read_grid, upsample, write_grid
from .schedules import (
    ChurnParams,
    NoiseSchedule,
    ShapeSchedule,
    equally_spaced_shapes,
    identity_shapes,
    karras_sigmas,
    normalized_mean_area,
    speedup,
    tandem_shapes,
    unit_shrink_shapes,
    unit_shrink_speedup_closed_form,
)
from .denoisers import Denoiser, GaussianOracleDenoiser, ToyDenoiser, read_checkpoint, write_checkpoint
from .diffusion import (
    SampleTrace,
    TrainConfig,
    corrupt,
    count_pixels,
    hedm_loss,
    sample,
    train,
    vanilla_sample,
)
from .spectral import Spectrum, fit_power_law, hinge_frequency, predict_downsampled, predict_noised, rapsd
from .metrics import MonthlyClimatology, Scorecard, crps, mape, phase_mad, psnr, rmse, scor, scorecard
from .klcheck import CoarseningMap, DiscreteDist, chain_rule_residual, kl, pushforward, telescoping_check
from .synth import PowerLawSpec, make_pairs, monthly_toy_climatology, powerlaw_field
from .footprint import EmissionFactors, cpu_ksu_emissions, gpu_hours_emissions, run_emissions

__version__ = "0.1.0"
