"""Mass attenuation data: table ingestion, interpolation, matrix assembly.

Tables are interpolated with a monotone piecewise-cubic (PCHIP) in
log(E)-log(c) space, which reproduces power-law segments exactly and cannot
overshoot into negative coefficients.  Duplicate energies mark absorption
edges and split the table into independently interpolated segments.
Queries outside the tabulated range are a hard error; attenuation physics
is edge-dominated and extrapolating it silently is unsafe.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import EnergyRangeError, UsageError
from .model import AttenuationMatrix, NuclideLibrary

__all__ = [
    "MaterialTable",
    "ArtificialMaterial",
    "interpolate_coefficient",
    "artificial_material",
    "build_attenuation_matrix",
    "collinearity_report",
    "load_material_csv",
    "builtin_material",
    "BUILTIN_MATERIALS",
]

BUILTIN_MATERIALS = ("carbon", "concrete", "lead", "water", "artificial")


@dataclass(frozen=True)
class MaterialTable:
    """Tabulated mass attenuation coefficients for one material.

    Energies are nondecreasing; a repeated energy encodes the two-sided
    values at an absorption edge.
    """

    name: str
    energies_MeV: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies_MeV, dtype=float)
        c = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "energies_MeV", e)
        object.__setattr__(self, "coefficients", c)
        if e.ndim != 1 or e.shape != c.shape or e.size < 2:
            raise UsageError(f"material '{self.name}': need >= 2 (energy, coeff) pairs")
        if np.any(np.diff(e) < 0):
            raise UsageError(f"material '{self.name}': energies must be nondecreasing")
        if np.any(e <= 0) or np.any(c <= 0) or not np.all(np.isfinite(c)):
            raise UsageError(
                f"material '{self.name}': energies and coefficients must be positive"
            )
        object.__setattr__(self, "_segments", _build_segments(self.name, e, c))

    @property
    def energy_range(self) -> tuple[float, float]:
        return float(self.energies_MeV[0]), float(self.energies_MeV[-1])

    def coefficient(self, energy):
        """Interpolated mu/rho (cm^2/g) at one or more energies in MeV."""
        return interpolate_coefficient(self, energy)


def _build_segments(name, e, c):
    """Split at duplicated energies (edges) and fit log-log PCHIP per segment."""
    breaks = np.flatnonzero(np.diff(e) == 0)
    starts = np.concatenate(([0], breaks + 1))
    stops = np.concatenate((breaks + 1, [e.size]))
    segments = []
    for lo, hi in zip(starts, stops):
        if hi - lo < 2:
            raise UsageError(
                f"material '{name}': edge segment starting at "
                f"{e[lo]:g} MeV has fewer than 2 points"
            )
        if np.any(np.diff(e[lo:hi]) <= 0):
            raise UsageError(f"material '{name}': more than two points share an energy")
        interp = PchipInterpolator(np.log(e[lo:hi]), np.log(c[lo:hi]))
        segments.append((e[lo], e[hi - 1], interp))
    return tuple(segments)


def interpolate_coefficient(table: MaterialTable, energy):
    """Mass attenuation coefficient of ``table`` at ``energy`` (MeV).

    Exact at grid points; at a duplicated edge energy the below-edge value
    is returned.  Raises EnergyRangeError outside the tabulated range.
    """
    e = np.asarray(energy, dtype=float)
    scalar = e.ndim == 0
    e = np.atleast_1d(e)
    lo, hi = table.energy_range
    if np.any(e < lo) or np.any(e > hi):
        bad = e[(e < lo) | (e > hi)][0]
        raise EnergyRangeError(table.name, float(bad), lo, hi)
    out = np.empty_like(e)
    filled = np.zeros(e.shape, dtype=bool)
    for seg_lo, seg_hi, interp in table._segments:
        # half-open on the right so edge energies resolve to the lower branch
        mask = (~filled) & (e >= seg_lo) & (e <= seg_hi)
        if mask.any():
            out[mask] = np.exp(interp(np.log(e[mask])))
            filled[mask] = True
    return float(out[0]) if scalar else out


class ArtificialMaterial:
    """Nonphysical material with attenuation exp(sin(E)), any energy >= 0.

    Its attenuation function is deliberately uncorrelated with the broadly
    similar decreasing curves of real intervening materials.
    """

    name = "artificial"
    energy_range = (0.0, np.inf)

    def coefficient(self, energy):
        return artificial_material(energy)

    def __eq__(self, other):
        return isinstance(other, ArtificialMaterial)

    def __hash__(self):
        return hash("ArtificialMaterial")


def artificial_material(energy):
    """exp(sin(E)) in cm^2/g for E in MeV; defined for all energies >= 0."""
    e = np.asarray(energy, dtype=float)
    if np.any(e < 0):
        raise UsageError("energy must be >= 0")
    return np.exp(np.sin(e)) if e.ndim else float(np.exp(np.sin(e)))


def build_attenuation_matrix(library: NuclideLibrary, materials) -> AttenuationMatrix:
    """Coefficient matrix c_jlm for every library line and material.

    The background row is identically zero (the background is not shielded).
    Energy-range errors are re-raised with (nuclide, line, material) context.
    """
    materials = list(materials)
    coeffs = np.zeros((library.n_columns, len(materials)))
    for j, l, nuc, line in library.columns():
        if j == library.background_index:
            continue
        row = library.column_index(j, l)
        for m, mat in enumerate(materials):
            try:
                coeffs[row, m] = mat.coefficient(line.energy_MeV)
            except EnergyRangeError as exc:
                raise EnergyRangeError(
                    f"{mat.name} (line {l} of {nuc.name})",
                    line.energy_MeV,
                    *exc.bounds,
                ) from exc
    return AttenuationMatrix(
        coeffs=coeffs,
        line_counts=library.line_counts,
        background_index=library.background_index,
    )


def collinearity_report(materials, energy_grid) -> np.ndarray:
    """Pairwise correlation of material attenuation functions on a grid.

    Returns a symmetric matrix with unit diagonal; near-unit off-diagonal
    entries flag materials whose attenuation patterns are practically
    indistinguishable for testing purposes.
    """
    materials = list(materials)
    if len(materials) < 2:
        raise UsageError("need at least two materials to correlate")
    grid = np.asarray(energy_grid, dtype=float)
    if grid.size < 3:
        raise UsageError("energy grid needs at least 3 points")
    curves = np.vstack([np.atleast_1d(m.coefficient(grid)) for m in materials])
    return np.corrcoef(curves)


def load_material_csv(path, name: str | None = None) -> MaterialTable:
    """Read a two-column 'energy_MeV,mu_over_rho_cm2_per_g' CSV table.

    Lines starting with '#' are comments; a non-numeric first row is
    treated as a header.
    """
    energies, coeffs = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if len(row) < 2:
                raise UsageError(f"{path}: line {lineno}: expected two columns")
            try:
                e, c = float(row[0]), float(row[1])
            except ValueError:
                if not energies:
                    continue  # header row
                raise UsageError(f"{path}: line {lineno}: non-numeric value") from None
            energies.append(e)
            coeffs.append(c)
    if name is None:
        name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return MaterialTable(name, np.array(energies), np.array(coeffs))


def builtin_material(name: str):
    """One of the shipped materials: carbon, concrete, lead, water, artificial."""
    if name == "artificial":
        return ArtificialMaterial()
    if name not in BUILTIN_MATERIALS:
        raise UsageError(
            f"unknown material '{name}'; built-ins are {', '.join(BUILTIN_MATERIALS)}"
        )
    ref = resources.files("shieldscan").joinpath(f"data/{name}.csv")
    with resources.as_file(ref) as path:
        return load_material_csv(path, name=name)
