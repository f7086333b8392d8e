use std::f64::consts::PI;
use std::fmt::Write;

use crate::error::{invalid, Error, Result};
use crate::measure::{run_batches, AnalysisSpec, BatchPlan, RunTemplate};
use crate::optics::SlmMask;

use super::xi::XiMeasurement;

/// `n` evenly spaced shifts over `[−π/2, π/2)`, one period of the zero-order response.
pub fn default_alpha_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI / 2.0 + PI * k as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCalibration {
    /// Applied shift and the zero-order ξ it produced.
    pub table: Vec<(f64, XiMeasurement)>,
    pub best_alpha: f64,
    pub best_index: usize,
}

impl AlphaCalibration {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha_rad,xi_zero_order\n");
        for (a, xi) in &self.table {
            writeln!(s, "{a:.9},{:.9e}", xi.mean).unwrap();
        }
        s
    }
}

/// Sweep the grating shift and pick the one that minimises the zero-order
/// peak. `planted_offset_rad` is the unknown lateral offset of the grating
/// relative to the beam, so the mask applied for shift `α` is `α − α₀`.
pub fn calibrate_alpha(
    template: &RunTemplate,
    period_mm: f64,
    alphas: &[f64],
    planted_offset_rad: f64,
    plan: &BatchPlan,
    analysis: &AnalysisSpec,
) -> Result<AlphaCalibration> {
    if alphas.len() < 5 {
        return Err(invalid(format!("α grid needs at least 5 points, got {}", alphas.len())));
    }
    let mut table = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mask = SlmMask::Grating {
            period_mm,
            shift_rad: alpha - planted_offset_rad,
        };
        let run = run_batches(&template.model(mask)?, plan, analysis)?;
        table.push((alpha, run.xi((0, 0), analysis)?));
    }
    let best_index = select_minimum(&table);
    let (lo, hi) = (
        &table[best_index].1,
        table
            .iter()
            .map(|(_, x)| x)
            .max_by(|a, b| a.mean.total_cmp(&b.mean))
            .expect("non-empty"),
    );
    let noise = (lo.std_error.powi(2) + hi.std_error.powi(2)).sqrt();
    if hi.mean - lo.mean <= 2.0 * noise {
        return Err(Error::Degenerate(format!(
            "zero-order peak varies by {:.3e} across the α grid, within noise {:.3e}; use more frames per point",
            hi.mean - lo.mean,
            noise
        )));
    }
    Ok(AlphaCalibration {
        best_alpha: table[best_index].0,
        best_index,
        table,
    })
}

/// Index of the smallest mean; ties go to the smallest |α|.
fn select_minimum(table: &[(f64, XiMeasurement)]) -> usize {
    (0..table.len())
        .min_by(|&i, &j| {
            table[i]
                .1
                .mean
                .total_cmp(&table[j].1.mean)
                .then(table[i].0.abs().total_cmp(&table[j].0.abs()))
        })
        .expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::PeakMetric;

    fn xi(v: f64) -> XiMeasurement {
        XiMeasurement::from_batches((0, 0), 1, PeakMetric::Height, vec![v]).unwrap()
    }

    #[test]
    fn grid_covers_half_open_period() {
        let g = default_alpha_grid(8);
        assert_eq!(g.len(), 8);
        assert!((g[0] + PI / 2.0).abs() < 1e-15);
        assert!((g[4]).abs() < 1e-15);
        assert!(g[7] < PI / 2.0);
    }

    #[test]
    fn ties_prefer_small_shift() {
        let t = vec![(-0.4, xi(1.0)), (-0.2, xi(0.5)), (0.2, xi(0.5)), (0.1, xi(0.5)), (0.6, xi(2.0))];
        assert_eq!(select_minimum(&t), 3);
    }

    #[test]
    fn short_grid_rejected() {
        let t = RunTemplate::new(crate::OpticsConfig::config1().with_roi(32, 32), 1);
        let a = AnalysisSpec::for_optics(t.optics());
        assert!(calibrate_alpha(&t, 2.0, &[0.0, 0.1], 0.0, &BatchPlan::new(2, 4), &a).is_err());
    }
}
