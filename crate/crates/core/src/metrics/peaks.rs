//! Grating-peak position from the δx profile of a correlation image.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::g2::CorrelationImage;

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-8;

/// Odd diffraction orders included in the model.
const ORDERS: [f64; 3] = [1.0, 3.0, 5.0];

/// Fit of `a₀·g(x; 0) + a₁·Σₙ n⁻²·[g(x; ns) + g(x; −ns)] + c` over odd `n` to
/// the δx profile, with `g(x; μ) = exp(−(x−μ)²/(2v))` and `v` fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakPairFit {
    pub zero_amplitude: f64,
    pub side_amplitude: f64,
    /// Lag of the positive first-order peak, in lag pixels.
    pub side_center: f64,
    pub offset: f64,
    pub iterations: usize,
}

/// Sum of the image over `|δy| ≤ band`, indexed by `δx + half_x`.
pub fn x_profile(img: &CorrelationImage, band: usize) -> Vec<f64> {
    let ly = img.window.half_y as i64;
    let lx = img.window.half_x as i64;
    let band = (band as i64).min(ly);
    (-lx..=lx)
        .map(|dx| (-band..=band).map(|dy| img.get(dx, dy).expect("inside the lag grid")).sum())
        .collect()
}

fn g(x: f64, mu: f64, v: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * v)).exp()
}

fn residuals(p: &DVector<f64>, v: f64, xs: &[f64], ys: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let (a0, a1, s, c) = (p[0], p[1], p[2], p[3]);
    let n = xs.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 4);
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let e0 = g(x, 0.0, v);
        let (mut side, mut ds) = (0.0, 0.0);
        for m in ORDERS {
            let (ep, em) = (g(x, m * s, v), g(x, -m * s, v));
            side += (ep + em) / (m * m);
            ds += (ep * (x - m * s) - em * (x + m * s)) / (m * v);
        }
        r[i] = a0 * e0 + a1 * side + c - y;
        j[(i, 0)] = e0;
        j[(i, 1)] = side;
        j[(i, 2)] = a1 * ds;
        j[(i, 3)] = 1.0;
    }
    (r, j)
}

/// Fit the central peak and the symmetric ±1 pair of a grating image.
///
/// `guess` is the expected lag of the positive peak and `peak_variance` the
/// variance of every order, both in lag pixels.
pub fn fit_peak_pair(img: &CorrelationImage, guess: f64, peak_variance: f64, band: usize) -> Result<PeakPairFit> {
    let prof = x_profile(img, band);
    let lx = img.window.half_x as f64;
    let xs: Vec<f64> = (0..prof.len()).map(|i| i as f64 - lx).collect();
    if !(guess > 0.0 && guess < lx) {
        return Err(Error::Window(format!("peak guess δx = {guess} is outside (0, {lx})")));
    }
    let mut edges: Vec<f64> = prof.iter().take(3).chain(prof.iter().rev().take(3)).copied().collect();
    edges.sort_by(f64::total_cmp);
    let c = 0.5 * (edges[2] + edges[3]);
    let at = |x: f64| prof[(x.round() + lx) as usize] - c;
    let a0 = at(0.0).max(f64::MIN_POSITIVE);
    let a1 = (at(guess) - a0 * g(guess, 0.0, peak_variance)).max(0.05 * a0);
    let mut p = DVector::from_vec(vec![a0, a1, guess, c]);
    let v = peak_variance;

    let cost_of = |p: &DVector<f64>| residuals(p, v, &xs, &prof).0.norm_squared();
    let valid = |p: &DVector<f64>| p[2] > 0.0 && p.iter().all(|v| v.is_finite());
    let mut cost = cost_of(&p);
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITERATIONS {
        let (r, j) = residuals(&p, v, &xs, &prof);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * r;
        loop {
            let mut damped = jtj.clone();
            for k in 0..4 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = damped.lu().solve(&(-&jtr));
            let trial = step.as_ref().map(|s| &p + s);
            let trial_cost = match &trial {
                Some(t) if valid(t) => cost_of(t),
                _ => f64::INFINITY,
            };
            if trial_cost <= cost {
                let step = step.expect("finite cost implies a step");
                let scale = [p[0].abs(), p[0].abs(), v.sqrt(), p[0].abs()];
                let small = (0..4).all(|k| step[k].abs() <= STEP_TOLERANCE * (p[k].abs() + scale[k]))
                    || cost - trial_cost <= 1e-14 * cost;
                p = trial.expect("finite cost implies a trial");
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                if small {
                    return Ok(done(&p, iter));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                return Ok(done(&p, iter));
            }
        }
    }
    Err(Error::FitDiverged {
        iterations: MAX_ITERATIONS,
        residual: cost.sqrt(),
    })
}

fn done(p: &DVector<f64>, iterations: usize) -> PeakPairFit {
    PeakPairFit {
        zero_amplitude: p[0],
        side_amplitude: p[1],
        side_center: p[2],
        offset: p[3],
        iterations,
    }
}
