"""Spectral models: source marginals, pair energy matching, and the
trigger-arm slit filter.

Width conventions: gaussian widths are 1/e FULL widths (the density at
center +- width/2 is 1/e of the peak); top-hat widths are full widths.
The slit is a top-hat convolved with a gaussian instrument blur whose
width is quoted as a FWHM.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError

GAUSSIAN = "gaussian"
TOP_HAT = "top-hat"

# 1/e full width W <-> gaussian sigma: density exp(-((x-c)/(W/2))^2 * ...)
# hits 1/e at |x-c| = W/2, i.e. W = 2*sqrt(2)*sigma.
_E_FULL_WIDTH_PER_SIGMA = 2.0 * math.sqrt(2.0)
_FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class SpectralShape:
    """Normalized spectral density of one light class."""

    family: str
    center_nm: float
    width_nm: float  # 1/e full width (gaussian) or full width (top-hat)

    def __post_init__(self):
        if self.family not in (GAUSSIAN, TOP_HAT):
            raise ValidationError(f"unknown spectral family {self.family!r}")
        if self.center_nm <= 0:
            raise ValidationError("spectral center must be positive")
        # width 0 is allowed as the degenerate delta limit
        if self.width_nm < 0:
            raise ValidationError("spectral width must be >= 0")

    @property
    def sigma_nm(self) -> float:
        if self.family != GAUSSIAN:
            raise ValidationError("sigma is defined for gaussian shapes only")
        return self.width_nm / _E_FULL_WIDTH_PER_SIGMA

    def density(self, wavelength_nm):
        """Normalized density evaluated at wavelength_nm (scalar or array)."""
        lam = np.asarray(wavelength_nm, dtype=float)
        if self.width_nm == 0.0:
            raise ValidationError("density of a zero-width shape is a delta")
        if self.family == GAUSSIAN:
            s = self.sigma_nm
            return np.exp(-0.5 * ((lam - self.center_nm) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        half = self.width_nm / 2.0
        return np.where(np.abs(lam - self.center_nm) <= half, 1.0 / self.width_nm, 0.0)


def sample_wavelength(shape: SpectralShape, rng: np.random.Generator, size=None):
    """Draw wavelengths from the shape's normalized density."""
    if shape.width_nm == 0.0:
        if size is None:
            return shape.center_nm
        return np.full(size, shape.center_nm)
    if shape.family == GAUSSIAN:
        return rng.normal(shape.center_nm, shape.sigma_nm, size=size)
    half = shape.width_nm / 2.0
    return rng.uniform(shape.center_nm - half, shape.center_nm + half, size=size)


def partner_wavelength(pump_wavelength_nm: float, trigger_wavelength_nm):
    """Wavelength of the pair partner fixed by energy conservation.

    1/lambda_signal = 1/lambda_pump - 1/lambda_trigger, exactly.
    """
    lam_t = np.asarray(trigger_wavelength_nm, dtype=float)
    if pump_wavelength_nm <= 0:
        raise ValidationError("pump wavelength must be positive")
    if np.any(lam_t <= pump_wavelength_nm):
        raise ValidationError(
            "trigger wavelength must exceed the pump wavelength (unphysical pair otherwise)")
    out = 1.0 / (1.0 / pump_wavelength_nm - 1.0 / lam_t)
    if np.ndim(trigger_wavelength_nm) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class SlitCalibration:
    """Affine slit position (um) -> wavelength (nm) map."""

    nm_per_um: float
    offset_nm: float

    def __post_init__(self):
        if self.nm_per_um == 0:
            raise ValidationError("calibration slope must be nonzero (monotonic map)")

    def to_wavelength(self, position_um):
        return self.nm_per_um * np.asarray(position_um, dtype=float) + self.offset_nm

    def to_position(self, wavelength_nm):
        return (np.asarray(wavelength_nm, dtype=float) - self.offset_nm) / self.nm_per_um


def position_to_wavelength(calibration: SlitCalibration, position_um):
    lam = calibration.to_wavelength(position_um)
    if np.ndim(position_um) == 0:
        return float(lam)
    return lam


@dataclass(frozen=True)
class SlitFilter:
    """Blurred top-hat transmission of the trigger-arm spectrometer slit.

    window_nm is the geometric passband full width; resolution_nm is the
    gaussian instrument blur quoted as FWHM.
    """

    center_nm: float
    window_nm: float
    resolution_nm: float
    calibration: SlitCalibration = field(
        default_factory=lambda: SlitCalibration(nm_per_um=1.0, offset_nm=0.0))

    def __post_init__(self):
        if self.window_nm < 0:
            raise ValidationError("slit window must be >= 0")
        if self.resolution_nm <= 0:
            raise ValidationError("slit resolution must be > 0")

    @property
    def blur_sigma_nm(self) -> float:
        return self.resolution_nm / _FWHM_PER_SIGMA

    def at_position(self, position_um: float) -> "SlitFilter":
        """The same slit recentered at a spectrometer position."""
        return SlitFilter(center_nm=float(self.calibration.to_wavelength(position_um)),
                          window_nm=self.window_nm,
                          resolution_nm=self.resolution_nm,
                          calibration=self.calibration)


def slit_transmission(filt: SlitFilter, wavelength_nm):
    """Transmission probability of the slit at wavelength_nm.

    Top-hat of width window_nm convolved with the gaussian blur; exact
    closed form via the normal CDF.
    """
    lam = np.asarray(wavelength_nm, dtype=float)
    s = filt.blur_sigma_nm
    lo = filt.center_nm - filt.window_nm / 2.0
    hi = filt.center_nm + filt.window_nm / 2.0
    t = ndtr((lam - lo) / s) - ndtr((lam - hi) / s)
    t = np.clip(t, 0.0, 1.0)
    if np.ndim(wavelength_nm) == 0:
        return float(t)
    return t


def gaussian_band_fraction(shape: SpectralShape, filt: SlitFilter) -> float:
    """E[slit_transmission(lambda)] for lambda drawn from a gaussian shape.

    Closed form: the blurred top-hat is a difference of normal CDFs, and a
    normal CDF averaged over a gaussian is again a normal CDF with the
    variances added.
    """
    if shape.family != GAUSSIAN:
        raise ValidationError("band fraction closed form requires a gaussian shape")
    s_eff = math.sqrt(shape.sigma_nm ** 2 + filt.blur_sigma_nm ** 2)
    lo = filt.center_nm - filt.window_nm / 2.0
    hi = filt.center_nm + filt.window_nm / 2.0
    return float(ndtr((shape.center_nm - lo) / s_eff) - ndtr((shape.center_nm - hi) / s_eff))
