"""Simulator and analysis toolkit for a pulse-pumped, waveguide-based
heralded single-photon source: stochastic emission, detection and counting
electronics, spectrally resolved scans, and background calibration."""

from .analysis import (AnalyticRates, CalibrationTarget, EfficiencyReport,
                       KlyshkoRow, ScanResult, ScanRow, Setup, WindowOptimum,
                       analytic_rates, brightness, build_report, calibrate,
                       conditional_efficiency, klyshko_check, optimize_window,
                       preparation_efficiency, run_counts, run_counts_both,
                       run_events, spectral_scan)
from .detection import (ArmConfig, ChannelEvents, DetectionResult,
                        DetectorModel, arm_transmittance, detect)
from .electronics import (CoincidenceMatcher, CountsSummary, GateConfig,
                          accidentals_analytic, count_run, gate_pass)
from .emission import (EmissionBatch, EmissionRecord, LightSpectra,
                       SourceConfig, emit_run, emit_run_per_pulse,
                       expected_rates)
from .errors import (BudgetExceededError, ExternalDataError, HeraldSimError,
                     NoConvergenceError, UndefinedRatioError, ValidationError)
from .spectra import (SlitCalibration, SlitFilter, SpectralShape,
                      partner_wavelength, position_to_wavelength,
                      sample_wavelength, slit_transmission)

__version__ = "0.1.0"
