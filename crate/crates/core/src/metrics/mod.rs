//! Peak values, uncertainties, fits, ratio curves and α calibration.

mod calibrate;
mod curve;
mod fit;
mod peaks;
mod ratio;
mod xi;

pub use calibrate::{calibrate_alpha, default_alpha_grid, AlphaCalibration};
pub use curve::{plateau, ratio_curve, RatioCurve, RatioPoint};
pub use fit::{fit_gaussian_pixels, fit_gaussian_variance, FitKind, GaussianFit};
pub use peaks::{fit_peak_pair, x_profile, PeakPairFit};
pub use ratio::{batch_ratios, paired_difference, ratio_error_quadrature, ratio_with_error};
pub use xi::{extract_xi, refine_peak_x, PeakMetric, XiMeasurement};
