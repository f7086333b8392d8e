//! Pair-correlation physics: masks, diffraction orders, the FFT oracle and rate equations.

mod config;
mod fourier;
mod grating;
mod mask;
mod rates;
mod shaped;

pub use config::{slm_envelope_area, OpticsConfig};
pub use fourier::{grating_coeff, parseval_sum, sinc, square_wave_coeff};
pub use grating::{
    analytic_grating_correlation, peak_separation, period_for_separation, thin_crystal_validity,
    thin_crystal_validity_with, OrderPeak, Validity,
};
pub use mask::{symmetrized_phase, symmetrized_phase_row, SamplingSpec, SlmMask};
pub use rates::{crossover_flux, tpa_rate, RateModelParams, TpaRegime, GM_CM4_S};
pub use shaped::{
    gaussian_cell_peak, shaped_correlation, solve_slm_envelope_area, CorrelationField,
    EDGE_CELLS, EDGE_MASS_TOLERANCE, MIN_STEPS_PER_PERIOD,
};
