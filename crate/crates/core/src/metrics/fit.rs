use nalgebra::{Matrix5, Vector5};
use ndarray::ArrayView2;

use crate::error::{invalid, Error, Result};
use crate::optics::OpticsConfig;

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-8;
/// Target number of blocks per side when smoothing for the initial guess.
const GUESS_BLOCKS: usize = 64;

/// What the image is, which fixes how camera pixels map to the sample plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    /// Mean-frame intensity image (fitted variance is Σ).
    Intensity,
    /// Correlation image in lag pixels (fitted variance is A_e).
    Correlation,
}

/// `A·exp(−((x−x₀)²+(y−y₀)²)/(2V)) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub kind: FitKind,
    pub amplitude: f64,
    /// Sample-plane centre in mm, relative to the image centre.
    pub center_mm: (f64, f64),
    /// Sample-plane variance in mm².
    pub variance_mm2: f64,
    /// Variance in camera pixels².
    pub variance_px2: f64,
    pub offset: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GaussianFit {
    pub fn report(&self) -> String {
        format!(
            "kind = {}\namplitude = {:.6e}\ncenter_mm = {:.6e}, {:.6e}\nvariance_mm2 = {:.6e}\nvariance_px2 = {:.6}\noffset = {:.6e}\nresidual_norm = {:.6e}\niterations = {}\nconverged = {}\n",
            match self.kind {
                FitKind::Intensity => "intensity",
                FitKind::Correlation => "correlation",
            },
            self.amplitude,
            self.center_mm.0,
            self.center_mm.1,
            self.variance_mm2,
            self.variance_px2,
            self.offset,
            self.residual_norm,
            self.iterations,
            self.converged
        )
    }
}

struct Samples {
    x: Vec<f64>,
    y: Vec<f64>,
    v: Vec<f64>,
}

impl Samples {
    fn new(image: ArrayView2<f64>) -> Self {
        let (rows, cols) = image.dim();
        let (cx, cy) = ((cols as f64 - 1.0) / 2.0, (rows as f64 - 1.0) / 2.0);
        let mut s = Samples {
            x: Vec::with_capacity(rows * cols),
            y: Vec::with_capacity(rows * cols),
            v: Vec::with_capacity(rows * cols),
        };
        for ((r, c), &v) in image.indexed_iter() {
            s.x.push(c as f64 - cx);
            s.y.push(r as f64 - cy);
            s.v.push(v);
        }
        s
    }

    fn cost(&self, p: &Vector5<f64>) -> f64 {
        (0..self.v.len()).map(|i| (model(p, self.x[i], self.y[i]) - self.v[i]).powi(2)).sum()
    }

    fn normal_equations(&self, p: &Vector5<f64>) -> (Matrix5<f64>, Vector5<f64>) {
        let mut jtj = Matrix5::zeros();
        let mut jtr = Vector5::zeros();
        let (a, x0, y0, var) = (p[0], p[1], p[2], p[3]);
        for i in 0..self.v.len() {
            let (dx, dy) = (self.x[i] - x0, self.y[i] - y0);
            let rho2 = dx * dx + dy * dy;
            let e = (-rho2 / (2.0 * var)).exp();
            let r = a * e + p[4] - self.v[i];
            let j = Vector5::new(e, a * e * dx / var, a * e * dy / var, a * e * rho2 / (2.0 * var * var), 1.0);
            jtj.syger(1.0, &j, &j, 1.0);
            jtr += j * r;
        }
        jtj.fill_upper_triangle_with_lower_triangle();
        (jtj, jtr)
    }

    /// Height from the border median, centre and variance from the above-half-maximum
    /// region of a block-averaged copy, so single noisy pixels do not set the peak.
    fn initial_guess(&self, rows: usize, cols: usize) -> Result<Vector5<f64>> {
        let mut border: Vec<f64> = (0..self.v.len())
            .filter(|&i| {
                let (r, c) = (i / cols, i % cols);
                r == 0 || c == 0 || r == rows - 1 || c == cols - 1
            })
            .map(|i| self.v[i])
            .collect();
        border.sort_by(f64::total_cmp);
        let offset = border[border.len() / 2];

        let b = (rows.min(cols) / GUESS_BLOCKS).max(1);
        let (br, bc) = (rows / b, cols / b);
        let mut blocks = vec![0.0; br * bc];
        for (i, &v) in self.v.iter().enumerate() {
            let (r, c) = (i / cols / b, i % cols / b);
            if r < br && c < bc {
                blocks[r * bc + c] += v / (b * b) as f64;
            }
        }
        let peak = blocks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let amp = peak - offset;
        if !(amp > 0.0) {
            return Err(Error::Degenerate("image has no peak above its border level".into()));
        }
        let (cx, cy) = ((cols as f64 - 1.0) / 2.0, (rows as f64 - 1.0) / 2.0);
        let half_block = (b as f64 - 1.0) / 2.0;
        let (mut n, mut sx, mut sy, mut sw) = (0usize, 0.0, 0.0, 0.0);
        for (k, &v) in blocks.iter().enumerate() {
            let w = v - offset;
            if w > amp / 2.0 {
                let x = (k % bc * b) as f64 + half_block - cx;
                let y = (k / bc * b) as f64 + half_block - cy;
                n += b * b;
                sx += w * x;
                sy += w * y;
                sw += w;
            }
        }
        let var = (n as f64 / (2.0 * std::f64::consts::PI * std::f64::consts::LN_2)).max(0.25);
        Ok(Vector5::new(amp, sx / sw, sy / sw, var, offset))
    }
}

fn model(p: &Vector5<f64>, x: f64, y: f64) -> f64 {
    p[0] * (-((x - p[1]).powi(2) + (y - p[2]).powi(2)) / (2.0 * p[3])).exp() + p[4]
}

/// Fits the Gaussian in pixel units. Coordinates are relative to the image
/// centre `(n−1)/2`, which for a `(2L+1)²` lag image is lag zero.
pub fn fit_gaussian_pixels(image: ArrayView2<f64>) -> Result<(Vector5<f64>, f64, usize)> {
    let (rows, cols) = image.dim();
    if rows < 3 || cols < 3 {
        return Err(invalid("fit needs at least a 3×3 image"));
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(invalid("image contains non-finite values"));
    }
    let s = Samples::new(image);
    let mut p = s.initial_guess(rows, cols)?;
    let mut cost = s.cost(&p);
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITERATIONS {
        let (jtj, jtr) = s.normal_equations(&p);
        loop {
            let mut damped = jtj;
            for k in 0..5 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = damped.lu().solve(&(-jtr));
            let Some(step) = step else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break;
                }
                continue;
            };
            let trial = p + step;
            let trial_cost = if trial[3] > 0.0 && trial[0].is_finite() {
                s.cost(&trial)
            } else {
                f64::INFINITY
            };
            if trial_cost <= cost {
                let width = p[3].abs().sqrt();
                let scale = [p[0].abs(), width, width, p[3].abs(), p[0].abs()];
                let small = (0..5).all(|k| step[k].abs() <= STEP_TOLERANCE * (p[k].abs() + scale[k]))
                    || cost - trial_cost <= 1e-14 * cost;
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                if small {
                    return Ok((p, cost.sqrt(), iter));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                // no descent direction left: already at the minimum to machine precision
                return Ok((p, cost.sqrt(), iter));
            }
        }
    }
    Err(Error::FitDiverged {
        iterations: MAX_ITERATIONS,
        residual: cost.sqrt(),
    })
}

/// Fits and converts to the sample plane by dividing camera distances by the magnification.
pub fn fit_gaussian_variance(image: ArrayView2<f64>, kind: FitKind, cfg: &OpticsConfig) -> Result<GaussianFit> {
    let (p, residual, iterations) = fit_gaussian_pixels(image)?;
    let scale = cfg.sample_pixel_mm();
    Ok(GaussianFit {
        kind,
        amplitude: p[0],
        center_mm: (p[1] * scale, p[2] * scale),
        variance_mm2: p[3] * scale * scale,
        variance_px2: p[3],
        offset: p[4],
        residual_norm: residual,
        iterations,
        converged: true,
    })
}
