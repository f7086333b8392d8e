use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use super::config::OpticsConfig;
use super::grating::{thin_crystal_validity, Validity};
use super::mask::{symmetrized_phase, SamplingSpec, SlmMask};
use crate::error::{Error, Result};
use crate::fft2::fft2_inplace;

/// Fraction of total mass allowed within [`EDGE_CELLS`] of the grid edge.
pub const EDGE_MASS_TOLERANCE: f64 = 1e-4;
pub const EDGE_CELLS: usize = 2;
/// Minimum number of grid steps per grating period.
pub const MIN_STEPS_PER_PERIOD: f64 = 8.0;

/// Unit-mass pair-correlation density over sample-plane lags.
///
/// `values[[row, col]]` is the mass of the cell at lag
/// `((col - center)·spacing, (row - center)·spacing)`.
#[derive(Debug, Clone)]
pub struct CorrelationField {
    pub values: Array2<f64>,
    pub spacing_mm: f64,
    pub center: usize,
    pub validity: Option<Validity>,
}

impl CorrelationField {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn lag(&self, index: usize) -> f64 {
        (index as f64 - self.center as f64) * self.spacing_mm
    }

    /// Nearest grid index for a lag, if it is on the grid.
    pub fn index_of(&self, lag_mm: f64) -> Option<usize> {
        let k = (lag_mm / self.spacing_mm).round() as i64 + self.center as i64;
        (k >= 0 && (k as usize) < self.n()).then_some(k as usize)
    }

    pub fn mass(&self) -> f64 {
        self.values.sum()
    }

    /// Marginal over y (function of δx).
    pub fn marginal_x(&self) -> Vec<f64> {
        self.values.sum_axis(ndarray::Axis(0)).to_vec()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        self.values.sum_axis(ndarray::Axis(1)).to_vec()
    }

    /// Second moments `(var_x, var_y)` of the unit-mass field about the origin.
    pub fn moment_variance(&self) -> (f64, f64) {
        let m = self.mass();
        let vx: f64 = self
            .marginal_x()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.lag(i).powi(2))
            .sum();
        let vy: f64 = self
            .marginal_y()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.lag(i).powi(2))
            .sum();
        (vx / m, vy / m)
    }

    /// Largest relative deviation between `field(δ)` and `field(−δ)`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n();
        let c = self.center;
        let peak = self.values.iter().cloned().fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for r in 0..n {
            for col in 0..n {
                let (mr, mc) = (2 * c as i64 - r as i64, 2 * c as i64 - col as i64);
                if mr < 0 || mc < 0 || mr >= n as i64 || mc >= n as i64 {
                    continue;
                }
                let d = (self.values[[r, col]] - self.values[[mr as usize, mc as usize]]).abs();
                worst = worst.max(d / peak);
            }
        }
        worst
    }

    /// Lag (mm) of the largest value along the δy = 0 row within `[lo, hi]`.
    pub fn argmax_x_between(&self, lo_mm: f64, hi_mm: f64) -> Option<f64> {
        let row = self.values.row(self.center);
        (0..self.n())
            .filter(|&i| (lo_mm..=hi_mm).contains(&self.lag(i)))
            .max_by(|&a, &b| row[a].total_cmp(&row[b]))
            .map(|i| self.lag(i))
    }

    /// Mass in the δx band `[lo, hi]`, all δy.
    pub fn band_mass_x(&self, lo_mm: f64, hi_mm: f64) -> f64 {
        self.marginal_x()
            .iter()
            .enumerate()
            .filter(|(i, _)| (lo_mm..=hi_mm).contains(&self.lag(*i)))
            .map(|(_, w)| w)
            .sum()
    }

    /// Mass in the box `|δx − cx| ≤ hx`, `|δy| ≤ hy`.
    pub fn box_mass(&self, cx_mm: f64, hx_mm: f64, hy_mm: f64) -> f64 {
        let cols: Vec<usize> = (0..self.n()).filter(|&i| (self.lag(i) - cx_mm).abs() <= hx_mm).collect();
        (0..self.n())
            .filter(|&r| self.lag(r).abs() <= hy_mm)
            .map(|r| cols.iter().map(|&c| self.values[[r, c]]).sum::<f64>())
            .sum()
    }

    /// Local maxima along the δy = 0 row above `min_fraction` of the global maximum.
    pub fn row_peaks(&self, min_fraction: f64) -> Vec<f64> {
        let row = self.values.row(self.center);
        let top = row.iter().cloned().fold(0.0, f64::max);
        (1..self.n() - 1)
            .filter(|&i| row[i] > row[i - 1] && row[i] >= row[i + 1] && row[i] >= min_fraction * top)
            .map(|i| self.lag(i))
            .collect()
    }
}

/// Numerical pair-correlation density for a mask: transform
/// `exp(-r²/(4Σ_SLM))·e^{iψ(r)}`, square, normalize. Lag = λf·ν.
pub fn shaped_correlation(
    mask: &SlmMask,
    cfg: &OpticsConfig,
    grid: &SamplingSpec,
) -> Result<CorrelationField> {
    cfg.validate()?;
    grid.validate()?;
    mask.validate()?;
    let mut validity = None;
    if let SlmMask::Grating { period_mm, .. } = mask {
        if *period_mm < MIN_STEPS_PER_PERIOD * grid.dx_mm {
            return Err(Error::Aliasing {
                period_mm: *period_mm,
                detail: format!(
                    "period spans {:.2} grid steps, need at least {MIN_STEPS_PER_PERIOD}",
                    period_mm / grid.dx_mm
                ),
            });
        }
        validity = Some(thin_crystal_validity(cfg.slm_correlation_width_mm, *period_mm));
    }

    let psi = symmetrized_phase(mask, grid)?;
    let n = grid.n;
    let s = cfg.slm_envelope_area_mm2;
    let env_row: Vec<f64> = (0..n).map(|k| (-grid.x(k).powi(2) / (4.0 * s)).exp()).collect();
    let env_col: Vec<f64> = (0..n).map(|k| (-grid.y(k).powi(2) / (4.0 * s)).exp()).collect();
    let mut buf: Vec<Complex64> = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            buf.push(Complex64::from_polar(env_col[r] * env_row[c], psi[[r, c]]));
        }
    }
    drop(psi);
    fft2_inplace(&mut buf, n, n);

    // fftshift into lag order; the DFT index j maps to frequency (j - n/2)/(n dx)
    let half = n / 2;
    let mut values = Array2::<f64>::zeros((n, n));
    for r in 0..n {
        let sr = (r + half) % n;
        for c in 0..n {
            let sc = (c + half) % n;
            values[[sr, sc]] = buf[r * n + c].norm_sqr();
        }
    }
    drop(buf);
    let total = values.sum();
    values /= total;

    let edge = edge_mass(&values, EDGE_CELLS);
    if edge > EDGE_MASS_TOLERANCE {
        let period_mm = match mask {
            SlmMask::Grating { period_mm, .. } => *period_mm,
            _ => f64::INFINITY,
        };
        return Err(Error::Aliasing {
            period_mm,
            detail: format!("{edge:.3e} of the mass lies within {EDGE_CELLS} cells of the grid edge"),
        });
    }

    Ok(CorrelationField {
        values,
        spacing_mm: cfg.lambda_f() / grid.aperture_mm(),
        center: half,
        validity,
    })
}

fn edge_mass(values: &Array2<f64>, cells: usize) -> f64 {
    let n = values.nrows();
    let mut m = 0.0;
    for ((r, c), v) in values.indexed_iter() {
        if r < cells || c < cells || r >= n - cells || c >= n - cells {
            m += v;
        }
    }
    m
}

/// Solve for the Σ_SLM that gives a flat-mask correlation variance of A_e, by bisection.
pub fn solve_slm_envelope_area(cfg: &OpticsConfig, grid_size: usize) -> Result<f64> {
    let target = cfg.entanglement_area_mm2;
    let guess = super::config::slm_envelope_area(target, cfg.wavelength_nm, cfg.focal_length_mm);
    let variance_for = |s: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.slm_envelope_area_mm2 = s;
        let grid = SamplingSpec::for_envelope(s, grid_size);
        Ok(shaped_correlation(&SlmMask::Flat, &c, &grid)?.moment_variance().0)
    };
    // variance decreases with Σ_SLM; bisect in log space
    let (mut lo, mut hi) = (guess.ln() - 2.0, guess.ln() + 2.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if variance_for(mid.exp())? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Flat-mask peak value of a field on the same grid: `Δ²/(2πA_e)` for a unit-mass Gaussian.
pub fn gaussian_cell_peak(a_e: f64, spacing_mm: f64) -> f64 {
    spacing_mm * spacing_mm / (2.0 * PI * a_e)
}
