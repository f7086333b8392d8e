use crate::constants::THIN_CRYSTAL_RATIO;
use crate::error::{invalid, Result};

use super::config::OpticsConfig;
use super::fourier::square_wave_coeff;

/// Separation of the ±1 diffraction-order peaks in the sample plane, `2λf/Λ`.
///
/// `period_mm` and `focal_length_mm` in mm, `wavelength_nm` in nm; returns mm.
pub fn peak_separation(period_mm: f64, wavelength_nm: f64, focal_length_mm: f64) -> f64 {
    2.0 * wavelength_nm * 1e-6 * focal_length_mm / period_mm
}

/// Grating period that gives peak separation `separation_mm`.
pub fn period_for_separation(separation_mm: f64, wavelength_nm: f64, focal_length_mm: f64) -> f64 {
    2.0 * wavelength_nm * 1e-6 * focal_length_mm / separation_mm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validity {
    pub valid: bool,
    /// `Λ_min / w_SLM`
    pub margin: f64,
}

/// Thin-crystal check: the grating must be coarse compared to the SLM-plane
/// correlation width. Valid iff `Λ_min >= 3·w_SLM`.
pub fn thin_crystal_validity(w_slm_mm: f64, period_min_mm: f64) -> Validity {
    thin_crystal_validity_with(w_slm_mm, period_min_mm, THIN_CRYSTAL_RATIO)
}

pub fn thin_crystal_validity_with(w_slm_mm: f64, period_min_mm: f64, threshold: f64) -> Validity {
    let margin = period_min_mm / w_slm_mm;
    Validity {
        valid: margin >= threshold,
        margin,
    }
}

/// One Gaussian component of the analytic grating correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderPeak {
    pub order: i64,
    /// Lag along x in mm.
    pub center_mm: f64,
    pub weight: f64,
}

/// Diffraction-order decomposition of an unshifted binary grating: peaks at
/// `m·λf/Λ` for odd `|m| <= n_max` with weights `a_m²`, renormalized.
/// Cross terms between orders are ignored. `period_mm = ∞` gives the flat mask.
pub fn analytic_grating_correlation(
    period_mm: f64,
    cfg: &OpticsConfig,
    n_max: i64,
) -> Result<Vec<OrderPeak>> {
    if n_max < 1 {
        return Err(invalid(format!("n_max must be at least 1, got {n_max}")));
    }
    if period_mm.is_infinite() {
        return Ok(vec![OrderPeak {
            order: 0,
            center_mm: 0.0,
            weight: 1.0,
        }]);
    }
    if !(period_mm > 0.0) {
        return Err(invalid(format!("grating period must be positive, got {period_mm}")));
    }
    let step = cfg.lambda_f() / period_mm;
    let mut peaks: Vec<OrderPeak> = (-n_max..=n_max)
        .filter(|m| m % 2 != 0)
        .map(|m| OrderPeak {
            order: m,
            center_mm: m as f64 * step,
            weight: square_wave_coeff(m).powi(2),
        })
        .collect();
    let total: f64 = peaks.iter().map(|p| p.weight).sum();
    for p in &mut peaks {
        p.weight /= total;
    }
    Ok(peaks)
}
