"""Synthetic detector response functions and systematic-error modulation.

Real response tables come from detector modeling codes and are rarely
shippable, so experiments here run on a parametric stand-in: for each
emission line, a Gaussian photopeak whose width follows scintillator
counting statistics (FWHM proportional to sqrt(E), anchored at one
calibration point) plus a flat continuum below the line's Compton edge.
The background pseudo-nuclide gets a strictly positive full-range
continuum so that every channel has nonzero mean under the no-shielding
model - a positivity requirement of the downstream inference.

``perturb_drf`` modulates columns by exp of an integrated random walk
generated from the high-energy end, mimicking slowly varying systematic
response errors that are largest at low energies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .model import DRFMatrix, NuclideLibrary

__all__ = ["DetectorSpec", "channel_energies", "synthesize_drf", "perturb_drf"]

ELECTRON_REST_MEV = 0.511
GAUSS_TRUNC_SIGMA = 5.0
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True)
class DetectorSpec:
    """Parameters of the synthetic detector.

    ``fwhm_ref_MeV`` is the full width at half maximum at ``ref_energy_MeV``;
    elsewhere FWHM(E) = fwhm_ref * sqrt(E / ref_energy).  ``continuum_fraction``
    is the share of each line's response placed in the flat continuum below
    its Compton edge.  ``gain`` scales every column (mean counts per unit
    intensity per unit time); with the default gain of 1 each column's total
    equals the line's branching ratio.  The two background knobs shape the
    background continuum: an exponential falloff with the given energy scale
    on top of a flat floor.
    """

    n_channels: int
    energy_max_MeV: float
    fwhm_ref_MeV: float
    ref_energy_MeV: float
    continuum_fraction: float = 0.35
    gain: float = 1.0
    background_scale_MeV: float = 0.7
    background_floor: float = 0.02

    def __post_init__(self):
        if self.n_channels < 16:
            raise UsageError("need at least 16 channels")
        if not 0 < self.fwhm_ref_MeV < self.energy_max_MeV:
            raise UsageError("fwhm_ref_MeV must be in (0, energy_max_MeV)")
        if not 0 < self.ref_energy_MeV < self.energy_max_MeV:
            raise UsageError("ref_energy_MeV must be in (0, energy_max_MeV)")
        if not 0 <= self.continuum_fraction < 1:
            raise UsageError("continuum_fraction must be in [0, 1)")
        if not self.gain > 0:
            raise UsageError("gain must be positive")
        if self.background_scale_MeV <= 0 or self.background_floor < 0:
            raise UsageError("invalid background continuum parameters")

    def fwhm_at(self, energy_MeV: float) -> float:
        return self.fwhm_ref_MeV * np.sqrt(energy_MeV / self.ref_energy_MeV)


def channel_energies(spec: DetectorSpec) -> np.ndarray:
    """Channel center energies on a linear 0..energy_max calibration."""
    step = spec.energy_max_MeV / spec.n_channels
    return (np.arange(spec.n_channels) + 0.5) * step


def compton_edge(energy_MeV: float) -> float:
    """Maximum energy transferred to an electron in a single scatter."""
    return energy_MeV * (1.0 - 1.0 / (1.0 + 2.0 * energy_MeV / ELECTRON_REST_MEV))


def _line_column(spec: DetectorSpec, energies: np.ndarray, line_energy: float):
    sigma = spec.fwhm_at(line_energy) * FWHM_TO_SIGMA
    dev = np.abs(energies - line_energy)
    peak = np.where(
        dev <= GAUSS_TRUNC_SIGMA * sigma,
        np.exp(-0.5 * (dev / sigma) ** 2),
        0.0,
    )
    total = peak.sum()
    if total == 0:
        # line so far off-grid that even the truncated peak misses every
        # channel center; put the peak mass in the nearest channel
        peak = np.zeros_like(energies)
        peak[np.argmin(dev)] = 1.0
        total = 1.0
    peak /= total

    cont = np.zeros_like(energies)
    below = energies <= compton_edge(line_energy)
    if below.any():
        cont[below] = 1.0 / below.sum()
    else:
        cont[0] = 1.0
    return (1.0 - spec.continuum_fraction) * peak + spec.continuum_fraction * cont


def _background_column(spec: DetectorSpec, energies: np.ndarray) -> np.ndarray:
    shape = np.exp(-energies / spec.background_scale_MeV) + spec.background_floor
    return shape / shape.sum()


def synthesize_drf(spec: DetectorSpec, library: NuclideLibrary) -> DRFMatrix:
    """Build a DRFMatrix for every (nuclide, line) column of the library.

    Each non-background column integrates to gain * branching_ratio exactly.
    The background column is a strictly positive continuum over the full
    channel range integrating to gain * branching_ratio of its single line.
    """
    energies = channel_energies(spec)
    columns = np.empty((spec.n_channels, library.n_columns))
    for j, l, nuc, line in library.columns():
        col = library.column_index(j, l)
        if j == library.background_index:
            shape = _background_column(spec, energies)
        else:
            if line.energy_MeV >= spec.energy_max_MeV:
                raise UsageError(
                    f"line {line.energy_MeV:g} MeV of {nuc.name} is at or above "
                    f"the detector range {spec.energy_max_MeV:g} MeV"
                )
            shape = _line_column(spec, energies, line.energy_MeV)
        columns[:, col] = spec.gain * line.branching_ratio * shape
    return DRFMatrix(channel_energies=energies, response=columns, library=library)


def integrated_walk(eta: np.ndarray) -> np.ndarray:
    """Integrated random walk m over channels 1..N, generated from the top.

    Solves m_i = 2 m_{i+1} - m_{i+2} + eta_i for i = N down to 1 with
    m_{N+1} = m_{N+2} = 0, i.e. the second difference along the direction
    of generation equals the innovation.  Equivalent to a double cumulative
    sum of the innovations taken from the high-channel end, so magnitudes
    grow toward channel 1.
    """
    return np.cumsum(np.cumsum(eta[::-1], axis=0), axis=0)[::-1]


def perturb_drf(
    drf: DRFMatrix,
    c_scale: float,
    seed,
    include_background: bool = True,
) -> DRFMatrix:
    """Modulate each response column by exp(m) with m an integrated walk.

    The walk of every column is rescaled so its sample standard deviation
    (ddof=1) across channels equals ``c_scale`` exactly.  ``c_scale = 0``
    returns the input unchanged without consuming random numbers.  By
    default the background column is modulated like any other; pass
    ``include_background=False`` to leave it untouched.
    """
    if c_scale < 0:
        raise UsageError("c_scale must be >= 0")
    if c_scale == 0:
        return drf
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, k = drf.response.shape
    bg_cols = {
        drf.library.column_index(drf.library.background_index, 0)
    } if not include_background else set()
    out = drf.response.copy()
    for col in range(k):
        eta = rng.standard_normal(n)
        if col in bg_cols:
            continue
        m = integrated_walk(eta)
        sd = m.std(ddof=1)
        if sd == 0:
            continue
        out[:, col] *= np.exp(m * (c_scale / sd))
    return DRFMatrix(
        channel_energies=drf.channel_energies, response=out, library=drf.library
    )
