"""Exception types shared across the package."""


class ShieldscanError(Exception):
    """Base class for all package-specific errors."""


class UsageError(ShieldscanError):
    """Invalid arguments, inconsistent dimensions, or malformed input files."""


class EnergyRangeError(ShieldscanError):
    """Energy query outside a material's tabulated range."""

    def __init__(self, material: str, energy: float, lo: float, hi: float):
        self.material = material
        self.energy = energy
        self.bounds = (lo, hi)
        super().__init__(
            f"energy {energy:g} MeV outside the tabulated range "
            f"[{lo:g}, {hi:g}] MeV of material '{material}' (no extrapolation)"
        )


class DegenerateChannelError(ShieldscanError):
    """Detector response has channels with no coverage (zero mean everywhere)."""


class SingularInformationError(ShieldscanError):
    """Fisher information block is singular; the linear-independence
    condition on nuclide signatures / material attenuation patterns fails."""


class NonConvergenceError(ShieldscanError):
    """An iterative fit failed to converge; carries the partial fit."""

    def __init__(self, message: str, fit=None):
        self.fit = fit
        super().__init__(message)
