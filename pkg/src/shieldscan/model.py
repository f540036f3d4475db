"""Spectrum model: domain types, attenuated intensities, and mean spectra.

The pulse-height spectrum is modeled channelwise as independent Poisson
counts.  Each nuclide in the library emits a discrete set of gamma lines;
each line contributes a detector-response column scaled by an attenuated
intensity

    a_jl = b_j * tau * exp(-sum_m c_jlm * x_m),

where b_j is the unshielded per-unit-time intensity of nuclide j, tau the
detection time, c_jlm the mass attenuation coefficient of material m at the
line energy, and x_m the mass thickness (g/cm^2).  The background is carried
as a pseudo-nuclide with a single unattenuated "line" (its attenuation row
is identically zero).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateChannelError, UsageError

__all__ = [
    "EmissionLine",
    "Nuclide",
    "NuclideLibrary",
    "DRFMatrix",
    "ModelParams",
    "AttenuationMatrix",
    "Spectrum",
    "MeanSpectrum",
    "attenuated_intensity",
    "mean_spectrum",
    "load_library",
    "save_library",
    "read_drf_csv",
    "write_drf_csv",
    "read_spectrum_csv",
    "write_spectrum_csv",
]


@dataclass(frozen=True)
class EmissionLine:
    """A monoenergetic gamma emission: energy in MeV, emission probability."""

    energy_MeV: float
    branching_ratio: float

    def __post_init__(self):
        if not self.energy_MeV > 0:
            raise UsageError(f"line energy must be positive, got {self.energy_MeV}")
        if not 0 < self.branching_ratio <= 1:
            raise UsageError(
                f"branching ratio must be in (0, 1], got {self.branching_ratio}"
            )


@dataclass(frozen=True)
class Nuclide:
    name: str
    lines: tuple[EmissionLine, ...]

    def __post_init__(self):
        if not self.lines:
            raise UsageError(f"nuclide '{self.name}' has no emission lines")


@dataclass(frozen=True)
class NuclideLibrary:
    """Ordered nuclides plus the index of the background pseudo-nuclide.

    The background entry must have exactly one line; its response column is
    never attenuated.  Intensities are parameterized per nuclide, so line
    branching ratios are folded into the detector-response columns.
    """

    nuclides: tuple[Nuclide, ...]
    background_index: int

    def __post_init__(self):
        names = [n.name for n in self.nuclides]
        if len(set(names)) != len(names):
            raise UsageError("nuclide names must be unique")
        if not 0 <= self.background_index < len(self.nuclides):
            raise UsageError("background_index out of range")
        if len(self.background.lines) != 1:
            raise UsageError("background pseudo-nuclide must have exactly one line")
        if len(self.nuclides) < 2:
            raise UsageError("library needs at least one non-background nuclide")

    @property
    def background(self) -> Nuclide:
        return self.nuclides[self.background_index]

    @property
    def n_nuclides(self) -> int:
        return len(self.nuclides)

    @property
    def line_counts(self) -> tuple[int, ...]:
        """Number of emission lines p_j per nuclide, in library order."""
        return tuple(len(n.lines) for n in self.nuclides)

    @property
    def n_columns(self) -> int:
        return sum(self.line_counts)

    @property
    def column_nuclide(self) -> np.ndarray:
        """Nuclide index of each (nuclide, line) column, in library order."""
        return np.repeat(np.arange(self.n_nuclides), self.line_counts)

    def columns(self):
        """Iterate (nuclide_index, line_index, nuclide, line) in column order."""
        for j, nuc in enumerate(self.nuclides):
            for l, line in enumerate(nuc.lines):
                yield j, l, nuc, line

    def column_index(self, j: int, l: int) -> int:
        counts = self.line_counts
        if not 0 <= j < len(counts):
            raise UsageError(f"nuclide index {j} out of range")
        if not 0 <= l < counts[j]:
            raise UsageError(f"line index {l} out of range for nuclide {j}")
        return sum(counts[:j]) + l

    def line_energies(self) -> np.ndarray:
        return np.array([line.energy_MeV for _, _, _, line in self.columns()])


@dataclass(frozen=True)
class DRFMatrix:
    """Detector response: mean counts per unit intensity per unit time.

    One column per (nuclide, line) of the library, in library order; rows
    are the N energy channels.  Construction rejects channels with no
    coverage at all (those would have zero mean under every parameter value,
    breaking the positivity the inference relies on).
    """

    channel_energies: np.ndarray
    response: np.ndarray
    library: NuclideLibrary

    def __post_init__(self):
        e = np.asarray(self.channel_energies, dtype=float)
        r = np.asarray(self.response, dtype=float)
        object.__setattr__(self, "channel_energies", e)
        object.__setattr__(self, "response", r)
        if e.ndim != 1 or r.ndim != 2 or r.shape[0] != e.size:
            raise UsageError("response must be (n_channels, n_columns)")
        if not np.all(np.diff(e) > 0):
            raise UsageError("channel energies must be strictly increasing")
        if r.shape[1] != self.library.n_columns:
            raise UsageError(
                f"expected {self.library.n_columns} response columns "
                f"(one per library line), got {r.shape[1]}"
            )
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise UsageError("response entries must be finite and nonnegative")
        if np.any(r.max(axis=0) <= 0):
            bad = np.flatnonzero(r.max(axis=0) <= 0)
            raise UsageError(f"response columns {bad.tolist()} are identically zero")
        dead = np.flatnonzero(r.sum(axis=1) == 0)
        if dead.size:
            raise DegenerateChannelError(
                f"{dead.size} channel(s) have zero response in every column "
                f"(first few: {dead[:5].tolist()}); the mean spectrum would "
                "vanish there for every parameter value"
            )

    @property
    def n_channels(self) -> int:
        return self.channel_energies.size

    def column_labels(self) -> list[str]:
        return [
            f"{nuc.name}:{line.energy_MeV:.6f}"
            for _, _, nuc, line in self.library.columns()
        ]

    def nuclide_totals(self) -> np.ndarray:
        """Per-nuclide summed response S_ij. as an (N, J) array."""
        out = np.empty((self.n_channels, self.library.n_nuclides))
        col_j = self.library.column_nuclide
        for j in range(self.library.n_nuclides):
            out[:, j] = self.response[:, col_j == j].sum(axis=1)
        return out


@dataclass(frozen=True)
class ModelParams:
    """Mass thicknesses x (g/cm^2), intensities b (per unit time), and tau."""

    x: np.ndarray
    b: np.ndarray
    tau: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "b", b)
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise UsageError("mass thicknesses must be finite and >= 0")
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise UsageError("intensities must be finite and >= 0")
        if not self.tau > 0:
            raise UsageError("detection time tau must be positive")

    @property
    def n_materials(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class AttenuationMatrix:
    """Mass attenuation coefficients c_jlm, one row per library column.

    ``line_counts`` mirrors the library's per-nuclide line counts so that
    (nuclide, line) pairs can be mapped to rows; rows belonging to the
    background are identically zero.
    """

    coeffs: np.ndarray
    line_counts: tuple[int, ...]
    background_index: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2:
            raise UsageError("coeffs must be (n_columns, n_materials)")
        object.__setattr__(self, "coeffs", c)
        if c.shape[0] != sum(self.line_counts):
            raise UsageError("coeffs rows must match total line count")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise UsageError("attenuation coefficients must be finite and >= 0")
        for l in range(self.line_counts[self.background_index]):
            row = self.row_index(self.background_index, l)
            if np.any(c[row] != 0):
                raise UsageError("background attenuation row must be zero")

    @property
    def n_materials(self) -> int:
        return self.coeffs.shape[1]

    def row_index(self, j: int, l: int) -> int:
        if not 0 <= j < len(self.line_counts):
            raise UsageError(f"nuclide index {j} out of range")
        if not 0 <= l < self.line_counts[j]:
            raise UsageError(f"line index {l} out of range for nuclide {j}")
        return sum(self.line_counts[:j]) + l


@dataclass(frozen=True)
class Spectrum:
    """Observed photon counts per energy channel."""

    counts: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.counts))
        if not np.issubdtype(y.dtype, np.integer):
            yf = np.asarray(y, dtype=float)
            if np.any(yf != np.round(yf)):
                raise UsageError("counts must be integers")
            y = yf.astype(np.int64)
        object.__setattr__(self, "counts", y)
        if np.any(y < 0):
            raise UsageError("counts must be nonnegative")

    @property
    def n_channels(self) -> int:
        return self.counts.size


class MeanSpectrum(NamedTuple):
    """Mean spectrum mu and its unit-time version U = mu / tau."""

    mu: np.ndarray
    unit_rate: np.ndarray


def _check_model_dims(params: ModelParams, drf: DRFMatrix, atten: AttenuationMatrix):
    lib = drf.library
    if atten.line_counts != lib.line_counts:
        raise UsageError("attenuation rows do not match the library's line layout")
    if params.b.size != lib.n_nuclides:
        raise UsageError(
            f"b has {params.b.size} entries, library has {lib.n_nuclides} nuclides"
        )
    if params.x.size != atten.n_materials:
        raise UsageError(
            f"x has {params.x.size} entries, attenuation matrix has "
            f"{atten.n_materials} materials"
        )


def attenuation_factors(params: ModelParams, atten: AttenuationMatrix) -> np.ndarray:
    """exp(-sum_m c_jlm x_m) for every (nuclide, line) column."""
    return np.exp(-(atten.coeffs @ params.x))


def attenuated_intensity(
    params: ModelParams, atten: AttenuationMatrix, j: int, l: int
) -> float:
    """Attenuated intensity a_jl = b_j * tau * exp(-sum_m c_jlm x_m)."""
    if params.x.size != atten.n_materials:
        raise UsageError("x length does not match the attenuation matrix")
    row = atten.row_index(j, l)
    if not 0 <= j < params.b.size:
        raise UsageError(f"nuclide index {j} out of range for b")
    return float(params.b[j] * params.tau * np.exp(-(atten.coeffs[row] @ params.x)))


def mean_spectrum(
    params: ModelParams, drf: DRFMatrix, atten: AttenuationMatrix
) -> MeanSpectrum:
    """Mean spectrum mu_i = sum_j sum_l S_ijl a_jl and U = mu / tau.

    Linear in b for fixed x; with x = 0 it reduces to tau times the
    per-nuclide summed response weighted by b.
    """
    _check_model_dims(params, drf, atten)
    w = attenuation_factors(params, atten)
    a = params.b[drf.library.column_nuclide] * params.tau * w
    mu = drf.response @ a
    return MeanSpectrum(mu=mu, unit_rate=mu / params.tau)


# ---------------------------------------------------------------------------
# File formats: library JSON, DRF CSV, spectrum CSV
# ---------------------------------------------------------------------------


def save_library(library: NuclideLibrary, path) -> None:
    doc = {
        "nuclides": [
            {
                "name": nuc.name,
                "background": j == library.background_index,
                "lines": [
                    {"energy_MeV": ln.energy_MeV, "branching_ratio": ln.branching_ratio}
                    for ln in nuc.lines
                ],
            }
            for j, nuc in enumerate(library.nuclides)
        ]
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_library(path) -> NuclideLibrary:
    """Read a nuclide library from JSON (nuclides, lines, background flag)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "nuclides" not in doc:
        raise UsageError(f"{path}: expected an object with a 'nuclides' list")
    nuclides = []
    bg = []
    for entry in doc["nuclides"]:
        try:
            lines = tuple(
                EmissionLine(float(ln["energy_MeV"]), float(ln["branching_ratio"]))
                for ln in entry["lines"]
            )
            nuclides.append(Nuclide(str(entry["name"]), lines))
            if entry.get("background", False):
                bg.append(len(nuclides) - 1)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{path}: malformed nuclide entry ({exc})") from exc
    if len(bg) != 1:
        raise UsageError(f"{path}: exactly one nuclide must set 'background': true")
    return NuclideLibrary(tuple(nuclides), background_index=bg[0])


def write_drf_csv(drf: DRFMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel_energy_MeV"] + drf.column_labels())
        for i in range(drf.n_channels):
            writer.writerow(
                [f"{drf.channel_energies[i]:.9g}"]
                + [f"{v:.9g}" for v in drf.response[i]]
            )


def read_drf_csv(path, library: NuclideLibrary) -> DRFMatrix:
    """Read a DRF matrix from CSV, validating headers against the library."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UsageError(f"{path}: empty file") from None
        rows = list(reader)
    expected = ["channel_energy_MeV"] + [
        f"{nuc.name}:{line.energy_MeV:.6f}" for _, _, nuc, line in library.columns()
    ]
    if len(header) != len(expected):
        raise UsageError(
            f"{path}: expected {len(expected)} columns "
            f"({len(library.line_counts)} nuclides, {library.n_columns} lines), "
            f"got {len(header)}"
        )
    for k, (got, want) in enumerate(zip(header, expected)):
        name_got = got.split(":")[0]
        name_want = want.split(":")[0]
        if name_got != name_want:
            raise UsageError(f"{path}: column {k} is '{got}', expected '{want}'")
    try:
        data = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise UsageError(f"{path}: non-numeric value ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(expected):
        raise UsageError(f"{path}: ragged or empty data section")
    return DRFMatrix(
        channel_energies=data[:, 0], response=data[:, 1:], library=library
    )


def write_spectrum_csv(spectrum: Spectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel", "count"])
        for i, y in enumerate(spectrum.counts):
            writer.writerow([i, int(y)])


def read_spectrum_csv(path) -> Spectrum:
    """Read a spectrum from 'channel,count' CSV (header optional)."""
    counts = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue  # header
            if len(row) < 2:
                raise UsageError(f"{path}: line {lineno}: expected 'channel,count'")
            try:
                ch = int(row[0])
                y = int(float(row[1]))
            except ValueError:
                raise UsageError(
                    f"{path}: line {lineno}: non-numeric channel or count"
                ) from None
            if ch in counts:
                raise UsageError(f"{path}: line {lineno}: duplicate channel {ch}")
            counts[ch] = y
    if not counts:
        raise UsageError(f"{path}: no data rows")
    n = max(counts) + 1
    if sorted(counts) != list(range(n)):
        missing = sorted(set(range(n)) - set(counts))
        raise UsageError(f"{path}: missing channels (first few: {missing[:5]})")
    return Spectrum(np.array([counts[i] for i in range(n)], dtype=np.int64))
