use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft2::{fast_len, RealFft2};

/// Lag window half-sizes; the grid is `(2·half_y + 1) × (2·half_x + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagWindow {
    pub half_x: usize,
    pub half_y: usize,
}

impl LagWindow {
    pub const DEFAULT_HALF: usize = 64;

    pub fn square(half: usize) -> Self {
        LagWindow {
            half_x: half,
            half_y: half,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (2 * self.half_y + 1, 2 * self.half_x + 1)
    }

    /// Check the window fits an `nx × ny` frame.
    pub fn check(&self, nx: usize, ny: usize) -> Result<()> {
        if self.half_x >= nx || self.half_y >= ny {
            return Err(Error::Window(format!(
                "lag window ±({}, {}) does not fit a {nx}x{ny} frame",
                self.half_x, self.half_y
            )));
        }
        Ok(())
    }

    /// Padded transform size `(rows, cols)` free of wraparound for this window.
    pub fn padded_size(&self, nx: usize, ny: usize) -> (usize, usize) {
        (fast_len(ny + self.half_y), fast_len(nx + self.half_x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XcorrMode {
    Naive,
    #[default]
    Fast,
}

/// `C(δ) = Σ_r A(r+δ)·B(r)` with zero padding, for `|δx| <= half_x`, `|δy| <= half_y`.
///
/// Arrays are indexed `[row, col]` = `[y, x]`; the result is indexed
/// `[δy + half_y, δx + half_x]`.
pub fn xcorr_lags(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    window: LagWindow,
    mode: XcorrMode,
) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (ny, nx) = a.dim();
    window.check(nx, ny)?;
    Ok(match mode {
        XcorrMode::Naive => naive(a, b, window),
        XcorrMode::Fast => {
            let (pr, pc) = window.padded_size(nx, ny);
            let plan = RealFft2::new(pr, pc);
            let mut s = plan.scratch();
            let a_std = a.as_standard_layout();
            let b_std = b.as_standard_layout();
            let mut fa = vec![Complex64::default(); plan.spectrum_len()];
            let mut fb = vec![Complex64::default(); plan.spectrum_len()];
            plan.forward(a_std.as_slice().expect("standard layout"), ny, nx, &mut fa, &mut s);
            plan.forward(b_std.as_slice().expect("standard layout"), ny, nx, &mut fb, &mut s);
            for (x, y) in fa.iter_mut().zip(&fb) {
                *x *= y.conj();
            }
            let mut out = vec![0.0; pr * pc];
            plan.inverse(&mut fa, &mut out, &mut s);
            extract_lags(&out, pr, pc, window)
        }
    })
}

pub(crate) fn naive(a: ArrayView2<f64>, b: ArrayView2<f64>, window: LagWindow) -> Array2<f64> {
    let (ny, nx) = a.dim();
    let (lx, ly) = (window.half_x as i64, window.half_y as i64);
    let mut out = Array2::zeros(window.shape());
    for dy in -ly..=ly {
        for dx in -lx..=lx {
            let mut acc = 0.0;
            let y0 = 0.max(-dy) as usize;
            let y1 = (ny as i64).min(ny as i64 - dy) as usize;
            let x0 = 0.max(-dx) as usize;
            let x1 = (nx as i64).min(nx as i64 - dx) as usize;
            for y in y0..y1 {
                let ya = (y as i64 + dy) as usize;
                for x in x0..x1 {
                    acc += a[[ya, (x as i64 + dx) as usize]] * b[[y, x]];
                }
            }
            out[[(dy + ly) as usize, (dx + lx) as usize]] = acc;
        }
    }
    out
}

/// Pull lags `|δ| <= half` out of a circular correlation on a `rows × cols` grid.
pub(crate) fn extract_lags(circ: &[f64], rows: usize, cols: usize, window: LagWindow) -> Array2<f64> {
    let (lx, ly) = (window.half_x as i64, window.half_y as i64);
    Array2::from_shape_fn(window.shape(), |(r, c)| {
        let dy = r as i64 - ly;
        let dx = c as i64 - lx;
        let rr = dy.rem_euclid(rows as i64) as usize;
        let cc = dx.rem_euclid(cols as i64) as usize;
        circ[rr * cols + cc]
    })
}

/// Number of pixel pairs contributing to lag `(δx, δy)` in an `nx × ny` frame.
pub fn overlap_count(nx: usize, ny: usize, dx: i64, dy: i64) -> f64 {
    ((nx as i64 - dx.abs()).max(0) * (ny as i64 - dy.abs()).max(0)) as f64
}
