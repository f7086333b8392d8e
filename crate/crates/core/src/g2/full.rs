use ndarray::Array2;

use super::xcorr::LagWindow;
use crate::detector::Frame;
use crate::error::{Error, Result};

/// Largest ROI side accepted by [`g2_full`].
pub const MAX_FULL_SIDE: usize = 24;

/// Full `G²(i,j,k,l)` over a small ROI.
///
/// Pixel `(i, j)` is column `i`, row `j`. The first pixel comes from frame
/// `m`, the second from frame `m` (auto term) or `m+1` (cross term).
#[derive(Debug, Clone, PartialEq)]
pub struct G2Tensor {
    pub nx: usize,
    pub ny: usize,
    values: Vec<f64>,
}

impl G2Tensor {
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let n = self.nx * self.ny;
        (j * self.nx + i) * n + (l * self.nx + k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.values[self.idx(i, j, k, l)]
    }

    /// Value with zero outside the ROI.
    fn get_padded(&self, i: i64, j: i64, k: i64, l: i64) -> f64 {
        let inside = |x: i64, n: usize| x >= 0 && (x as usize) < n;
        if inside(i, self.nx) && inside(k, self.nx) && inside(j, self.ny) && inside(l, self.ny) {
            self.get(i as usize, j as usize, k as usize, l as usize)
        } else {
            0.0
        }
    }

    /// `Γ(δ) = Σ_r G²(r + δ, r)`.
    pub fn minus_projection(&self, window: LagWindow) -> Result<Array2<f64>> {
        window.check(self.nx, self.ny)?;
        let (lx, ly) = (window.half_x as i64, window.half_y as i64);
        Ok(Array2::from_shape_fn(window.shape(), |(r, c)| {
            let (dx, dy) = (c as i64 - lx, r as i64 - ly);
            let mut acc = 0.0;
            for l in 0..self.ny as i64 {
                for k in 0..self.nx as i64 {
                    acc += self.get_padded(k + dx, l + dy, k, l);
                }
            }
            acc
        }))
    }

    /// `Γ⁺(s) = Σ_{r1 + r2 = s} G²(r1, r2)`, indexed `[j + l, i + k]`.
    pub fn sum_projection(&self) -> Array2<f64> {
        let mut out = Array2::zeros((2 * self.ny - 1, 2 * self.nx - 1));
        for j in 0..self.ny {
            for i in 0..self.nx {
                for l in 0..self.ny {
                    for k in 0..self.nx {
                        out[[j + l, i + k]] += self.get(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// Smear-artifact rules on the 4D array, outside-ROI neighbours counted as zero:
    /// `G(i,j,i,j) ← [G(i,j,i+1,j) + G(i,j,i−1,j)]/2` and
    /// `G(i,j,i,j±1) ← [G(i,j,i−1,j±1) + G(i,j,i+1,j±1)]/2`.
    pub fn interpolate_paper(&self) -> G2Tensor {
        let mut out = self.clone();
        for j in 0..self.ny as i64 {
            for i in 0..self.nx as i64 {
                let v = 0.5 * (self.get_padded(i, j, i + 1, j) + self.get_padded(i, j, i - 1, j));
                let at = out.idx(i as usize, j as usize, i as usize, j as usize);
                out.values[at] = v;
                for s in [-1i64, 1] {
                    let l = j + s;
                    if l < 0 || l >= self.ny as i64 {
                        continue;
                    }
                    let v = 0.5 * (self.get_padded(i, j, i - 1, l) + self.get_padded(i, j, i + 1, l));
                    let at = out.idx(i as usize, j as usize, i as usize, l as usize);
                    out.values[at] = v;
                }
            }
        }
        out
    }

    pub fn max_swap_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.ny {
            for i in 0..self.nx {
                for l in 0..self.ny {
                    for k in 0..self.nx {
                        worst = worst.max((self.get(i, j, k, l) - self.get(k, l, i, j)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// `G² = (1/M) Σ_m I_m ⊗ I_m − (1/(M−1)) Σ_m I_m ⊗ I_{m+1}`.
pub fn g2_full(frames: &[Frame], offset: f64) -> Result<G2Tensor> {
    let first = frames.first().ok_or(Error::InsufficientFrames { needed: 2, got: 0 })?;
    let (nx, ny) = (first.width, first.height);
    if nx > MAX_FULL_SIDE || ny > MAX_FULL_SIDE {
        return Err(Error::InvalidParameter(format!(
            "full G² is limited to {MAX_FULL_SIDE}x{MAX_FULL_SIDE} ROIs, got {nx}x{ny}"
        )));
    }
    if frames.len() < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: frames.len() as u64,
        });
    }
    let n = nx * ny;
    let imgs: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            if (f.width, f.height) != (nx, ny) {
                Err(Error::DimensionMismatch {
                    expected: (nx, ny),
                    got: (f.width, f.height),
                })
            } else {
                Ok(f.data.iter().map(|&v| v as f64 - offset).collect())
            }
        })
        .collect::<Result<_>>()?;
    let mut auto = vec![0.0; n * n];
    let mut cross = vec![0.0; n * n];
    for (m, a) in imgs.iter().enumerate() {
        for p in 0..n {
            for q in 0..n {
                auto[p * n + q] += a[p] * a[q];
            }
        }
        if let Some(b) = imgs.get(m + 1) {
            for p in 0..n {
                for q in 0..n {
                    cross[p * n + q] += a[p] * b[q];
                }
            }
        }
    }
    let mm = imgs.len() as f64;
    let values = auto
        .iter()
        .zip(&cross)
        .map(|(a, c)| a / mm - c / (mm - 1.0))
        .collect();
    Ok(G2Tensor { nx, ny, values })
}
