import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from heraldsim.errors import ValidationError
from heraldsim.rng import substream
from heraldsim.spectra import (SlitCalibration, SlitFilter, SpectralShape,
                               gaussian_band_fraction, partner_wavelength,
                               position_to_wavelength, sample_wavelength,
                               slit_transmission)


def empirical_e_full_width(samples):
    # 1/e full width of a gaussian = 2*sqrt(2)*sigma
    return 2.0 * math.sqrt(2.0) * float(np.std(samples))


def slit_transmission_oracle(filt, lam):
    """Direct convolution of the geometric top-hat with the gaussian blur."""
    s = filt.blur_sigma_nm
    lo = filt.center_nm - filt.window_nm / 2.0
    hi = filt.center_nm + filt.window_nm / 2.0

    def kernel(x):
        return math.exp(-0.5 * ((lam - x) / s) ** 2) / (s * math.sqrt(2 * math.pi))

    val, _ = quad(kernel, lo, hi, limit=200)
    return val


class TestSpectralShape:
    def test_gaussian_density_hits_1_over_e_at_half_width(self):
        shape = SpectralShape("gaussian", 801.0, 50.0)
        peak = shape.density(801.0)
        assert shape.density(801.0 + 25.0) == pytest.approx(peak / math.e, rel=1e-12)
        assert shape.density(801.0 - 25.0) == pytest.approx(peak / math.e, rel=1e-12)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValidationError):
            SpectralShape("gaussian", -1.0, 50.0)
        with pytest.raises(ValidationError):
            SpectralShape("gaussian", 801.0, -5.0)
        with pytest.raises(ValidationError):
            SpectralShape("lorentzian", 801.0, 50.0)

    def test_zero_width_is_a_delta(self):
        shape = SpectralShape("gaussian", 801.0, 0.0)
        rng = substream(1, 0)
        assert sample_wavelength(shape, rng) == 801.0
        assert np.all(sample_wavelength(shape, rng, size=100) == 801.0)

    @pytest.mark.parametrize("width,tol", [(50.0, 1.0), (130.0, 3.0)])
    def test_sampled_e_full_width(self, width, tol):
        shape = SpectralShape("gaussian", 801.0, width)
        rng = substream(2, 0)
        lam = sample_wavelength(shape, rng, size=1_000_000)
        assert abs(empirical_e_full_width(lam) - width) < tol

    def test_top_hat_sampling_stays_in_support(self):
        shape = SpectralShape("top-hat", 801.0, 17.0)
        rng = substream(3, 0)
        lam = sample_wavelength(shape, rng, size=10_000)
        assert np.all(np.abs(lam - 801.0) <= 8.5)


class TestPartnerWavelength:
    def test_degenerate_point(self):
        assert partner_wavelength(400.5, 801.0) == pytest.approx(801.0, abs=1e-9)

    def test_off_degenerate_value(self):
        # oracle: exact rational arithmetic for 1/(1/400.5 - 1/790)
        expected = 1 / (Fraction(2, 801) - Fraction(1, 790))  # 632790/779
        assert float(expected) == pytest.approx(812.3106546854942, abs=1e-9)
        assert partner_wavelength(400.5, 790.0) == pytest.approx(float(expected), abs=1e-9)

    def test_unphysical_pair_rejected(self):
        with pytest.raises(ValidationError):
            partner_wavelength(400.5, 400.5)
        with pytest.raises(ValidationError):
            partner_wavelength(400.5, 399.0)

    @given(lam_p=st.floats(150.0, 1500.0),
           lam_t=st.floats(1.0001, 50.0))
    @settings(max_examples=200, deadline=None)
    def test_energy_conservation(self, lam_p, lam_t):
        lam_t = lam_p * lam_t  # trigger strictly above the pump
        lam_s = partner_wavelength(lam_p, lam_t)
        assert abs(1.0 / lam_s + 1.0 / lam_t - 1.0 / lam_p) < 1e-12

    def test_involution(self):
        lam_s = partner_wavelength(400.5, 780.0)
        assert partner_wavelength(400.5, lam_s) == pytest.approx(780.0, rel=1e-12)


class TestSlitTransmission:
    def setup_method(self):
        self.filt = SlitFilter(center_nm=801.0, window_nm=17.0, resolution_nm=2.0)

    def test_center_of_wide_window(self):
        assert slit_transmission(self.filt, 801.0) == pytest.approx(1.0, abs=1e-3)

    def test_half_transmission_at_edges(self):
        assert slit_transmission(self.filt, 801.0 + 8.5) == pytest.approx(0.5, abs=0.01)
        assert slit_transmission(self.filt, 801.0 - 8.5) == pytest.approx(0.5, abs=0.01)

    def test_blocked_wavelength_matches_blur_oracle(self):
        oracle = slit_transmission_oracle(self.filt, 790.0)
        got = slit_transmission(self.filt, 790.0)
        assert got < 0.01
        assert got == pytest.approx(oracle, abs=1e-9)

    def test_matches_convolution_oracle_across_profile(self):
        for lam in np.linspace(780.0, 822.0, 29):
            assert slit_transmission(self.filt, float(lam)) == pytest.approx(
                slit_transmission_oracle(self.filt, float(lam)), abs=1e-9)

    @given(center=st.floats(500.0, 1200.0), window=st.floats(0.0, 100.0),
           resolution=st.floats(0.1, 10.0), lam=st.floats(300.0, 1500.0))
    @settings(max_examples=200, deadline=None)
    def test_normalization(self, center, window, resolution, lam):
        filt = SlitFilter(center_nm=center, window_nm=window, resolution_nm=resolution)
        t = slit_transmission(filt, lam)
        assert 0.0 <= t <= 1.0

    @given(center=st.floats(700.0, 900.0), window=st.floats(0.0, 50.0),
           extra=st.floats(0.1, 50.0), lam=st.floats(650.0, 950.0))
    @settings(max_examples=200, deadline=None)
    def test_monotone_window(self, center, window, extra, lam):
        narrow = SlitFilter(center_nm=center, window_nm=window, resolution_nm=2.0)
        wide = SlitFilter(center_nm=center, window_nm=window + extra, resolution_nm=2.0)
        assert slit_transmission(wide, lam) >= slit_transmission(narrow, lam) - 1e-12

    def test_band_fraction_matches_quadrature(self):
        shape = SpectralShape("gaussian", 801.0, 50.0)

        def integrand(lam):
            return shape.density(lam) * slit_transmission(self.filt, lam)

        oracle, _ = quad(integrand, 600.0, 1000.0, limit=400)
        assert gaussian_band_fraction(shape, self.filt) == pytest.approx(oracle, abs=1e-9)


class TestCalibrationMap:
    def test_identity(self):
        calib = SlitCalibration(nm_per_um=1.0, offset_nm=0.0)
        assert position_to_wavelength(calib, 801.0) == pytest.approx(801.0)

    def test_affine_example(self):
        calib = SlitCalibration(nm_per_um=-0.05, offset_nm=841.0)
        assert position_to_wavelength(calib, 800.0) == pytest.approx(801.0, abs=1e-12)

    @given(a=st.floats(-2.0, 2.0).filter(lambda x: abs(x) > 1e-3),
           b=st.floats(-1000.0, 1000.0), pos=st.floats(-5000.0, 5000.0))
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, a, b, pos):
        calib = SlitCalibration(nm_per_um=a, offset_nm=b)
        back = calib.to_position(calib.to_wavelength(pos))
        assert back == pytest.approx(pos, rel=1e-9, abs=1e-9)

    def test_zero_slope_rejected(self):
        with pytest.raises(ValidationError):
            SlitCalibration(nm_per_um=0.0, offset_nm=841.0)

    def test_slit_recentering_uses_calibration(self):
        calib = SlitCalibration(nm_per_um=-0.05, offset_nm=841.0)
        filt = SlitFilter(center_nm=801.0, window_nm=2.0, resolution_nm=2.0,
                          calibration=calib)
        moved = filt.at_position(1220.0)
        assert moved.center_nm == pytest.approx(780.0)
        assert moved.window_nm == filt.window_nm
