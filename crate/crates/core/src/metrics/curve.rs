use std::fmt::Write;

use crate::error::{invalid, Result};
use crate::measure::{peak_lag_pixels, run_batches, AnalysisSpec, BatchPlan, RunTemplate};
use crate::optics::{period_for_separation, thin_crystal_validity, SlmMask};

use super::peaks::fit_peak_pair;
use super::ratio::{ratio_error_quadrature, ratio_with_error};
use super::xi::{refine_peak_x, XiMeasurement};

pub const LOW_SNR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RatioPoint {
    pub delta_x_um: f64,
    pub ratio: f64,
    pub ratio_err: f64,
    pub ratio_err_quadrature: f64,
    /// SLM grating period; infinite for the flat-mask point.
    pub lambda_um: f64,
    pub frames: u64,
    pub xi: XiMeasurement,
    /// Refined δx of the positive peak, in lag pixels.
    pub measured_lag_px: f64,
    pub expected_lag_px: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioCurve {
    pub points: Vec<RatioPoint>,
    pub xi0: XiMeasurement,
}

impl RatioCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta_x_um,ratio,ratio_err,lambda_um,frames,flags\n");
        for p in &self.points {
            let lambda = if p.lambda_um.is_finite() {
                format!("{:.6}", p.lambda_um)
            } else {
                "inf".to_string()
            };
            writeln!(
                s,
                "{:.6},{:.9e},{:.9e},{},{},{}",
                p.delta_x_um,
                p.ratio,
                p.ratio_err,
                lambda,
                p.frames,
                p.flags.join(";")
            )
            .unwrap();
        }
        s
    }

    pub fn point_at(&self, delta_x_um: f64) -> Option<&RatioPoint> {
        self.points.iter().find(|p| (p.delta_x_um - delta_x_um).abs() < 1e-9)
    }

    pub fn last(&self) -> &RatioPoint {
        self.points.last().expect("curves are non-empty")
    }
}

/// Mean ratio and mean error over points with `Δx ≥ min_delta_x_um`.
pub fn plateau(curve: &RatioCurve, min_delta_x_um: f64) -> Option<(f64, f64)> {
    let pts: Vec<&RatioPoint> = curve.points.iter().filter(|p| p.delta_x_um >= min_delta_x_um).collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    Some((
        pts.iter().map(|p| p.ratio).sum::<f64>() / n,
        pts.iter().map(|p| p.ratio_err).sum::<f64>() / n,
    ))
}

/// ξ(Δx)/ξ₀ for each separation. Every grating point and the flat reference
/// share the template's seed.
pub fn ratio_curve(
    template: &RunTemplate,
    separations_um: &[f64],
    plan: &BatchPlan,
    analysis: &AnalysisSpec,
) -> Result<RatioCurve> {
    if separations_um.is_empty() {
        return Err(invalid("no separations given"));
    }
    if separations_um.windows(2).any(|w| w[1] <= w[0]) || separations_um[0] < 0.0 {
        return Err(invalid("separations must be non-negative and strictly increasing"));
    }
    let cfg = template.optics().clone();
    let periods: Vec<f64> = separations_um
        .iter()
        .map(|&dx| {
            if dx == 0.0 {
                return Ok(f64::INFINITY);
            }
            let period = period_for_separation(dx * 1e-3, cfg.wavelength_nm, cfg.focal_length_mm);
            let v = thin_crystal_validity(cfg.slm_correlation_width_mm, period);
            if !v.valid {
                return Err(invalid(format!(
                    "Δx = {dx} µm needs Λ = {:.1} µm, below the thin-crystal limit (margin {:.2})",
                    period * 1e3,
                    v.margin
                )));
            }
            Ok(period)
        })
        .collect::<Result<_>>()?;

    let flat = run_batches(&template.model(SlmMask::Flat)?, plan, analysis)?;
    let xi0 = flat.xi((0, 0), analysis)?;
    let mut points = Vec::with_capacity(separations_um.len());
    for (&dx, &period) in separations_um.iter().zip(&periods) {
        let (run, expected) = if period.is_finite() {
            let run = run_batches(&template.model(SlmMask::grating(period))?, plan, analysis)?;
            (run, peak_lag_pixels(dx * 1e-3, &cfg))
        } else {
            (flat.clone(), 0.0)
        };
        let center = (expected.round() as i64, 0);
        let xi = run.xi(center, analysis)?;
        let mut flags = Vec::new();
        if xi.snr() < LOW_SNR {
            flags.push("low_snr".to_string());
        }
        let measured = if period.is_finite() {
            let var = cfg.correlation_sigma_pixels().powi(2);
            fit_peak_pair(&run.combined, expected, var, analysis.half_width)
                .map(|f| f.side_center)
                .unwrap_or(f64::NAN)
        } else {
            refine_peak_x(&run.combined, 0, 2 * analysis.half_width as i64).unwrap_or(f64::NAN)
        };
        if !((measured - expected).abs() <= 1.0) {
            flags.push("peak_offset".to_string());
        }
        let (ratio, ratio_err) = if xi.mean > 0.0 {
            ratio_with_error(xi.mean, xi.std_error, xi0.mean, xi0.std_error)?
        } else {
            flags.push("nonpositive".to_string());
            (0.0, (xi.std_error / xi0.mean).abs())
        };
        points.push(RatioPoint {
            delta_x_um: dx,
            ratio,
            ratio_err,
            ratio_err_quadrature: if xi.mean > 0.0 {
                ratio_error_quadrature(xi.mean, xi.std_error, xi0.mean, xi0.std_error)
            } else {
                ratio_err
            },
            lambda_um: period * 1e3,
            frames: plan.total_frames(),
            xi,
            measured_lag_px: measured,
            expected_lag_px: expected,
            flags,
        });
    }
    Ok(RatioCurve { points, xi0 })
}
