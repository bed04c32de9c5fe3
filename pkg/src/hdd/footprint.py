"""Energy and CO2 accounting for CPU service units and GPU hours.

Device energy is power draw times data-centre PUE; emissions multiply by
the grid factor gamma (kg CO2 per kWh).  The shipped defaults reproduce
the reference accounting: PUE 1.3, gamma 0.73 (scope 2 + 3), A100 at
0.8125 kW, V100 at 0.40 kW, a CPU core at 14.2 W, and 9.25e-3 kWh per
CPU service unit (2 SU per core-hour, PUE included).  All factors are
configuration, not constants; regional grids differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "EmissionFactors",
    "DEFAULT_FACTORS",
    "gpu_hours_emissions",
    "cpu_ksu_emissions",
    "run_emissions",
]

_DEFAULT_POWER_KW = {
    "A100": 0.8125,
    "V100": 0.40,
    "cpu-core": 0.0142,
}

#: energy per CPU service unit (kWh), PUE already applied
_DEFAULT_SU_ENERGY_KWH = 9.25e-3


@dataclass(frozen=True)
class EmissionFactors:
    """Data-centre overhead, grid carbon intensity, and device powers."""

    pue: float = 1.3
    gamma: float = 0.73
    device_power_kw: dict = field(default_factory=lambda: dict(_DEFAULT_POWER_KW))
    su_energy_kwh: float = _DEFAULT_SU_ENERGY_KWH

    def __post_init__(self):
        if self.pue < 1.0:
            raise ValueError("PUE must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.su_energy_kwh <= 0:
            raise ValueError("per-SU energy must be positive")
        if any(p <= 0 for p in self.device_power_kw.values()):
            raise ValueError("device powers must be positive")


DEFAULT_FACTORS = EmissionFactors()


def gpu_hours_emissions(device: str, hours: float, factors: EmissionFactors = DEFAULT_FACTORS):
    """Energy (kWh) and emissions (kg CO2) of running a device for ``hours``."""
    if hours < 0:
        raise ValueError("hours must be non-negative")
    try:
        power = factors.device_power_kw[device]
    except KeyError:
        known = ", ".join(sorted(factors.device_power_kw))
        raise ValueError(f"unknown device {device!r} (known: {known})") from None
    kwh = power * factors.pue * hours
    return kwh, kwh * factors.gamma


def cpu_ksu_emissions(ksu: float, factors: EmissionFactors = DEFAULT_FACTORS):
    """Energy and emissions of ``ksu`` thousand CPU service units."""
    if ksu < 0:
        raise ValueError("kSU must be non-negative")
    kwh = 1000.0 * ksu * factors.su_energy_kwh
    return kwh, kwh * factors.gamma


def run_emissions(run_log, factors: EmissionFactors = DEFAULT_FACTORS,
                  overhead_fraction: float = 0.0) -> float:
    """Total kg CO2 of a run log of (device, hours) entries.

    ``overhead_fraction`` scales the device total to cover data handling
    and similar costs not captured by device hours.
    """
    if overhead_fraction < 0:
        raise ValueError("overhead fraction must be non-negative")
    total = 0.0
    for device, hours in run_log:
        _, kg = gpu_hours_emissions(device, float(hours), factors)
        total += kg
    return total * (1.0 + overhead_fraction)
