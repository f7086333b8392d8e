use std::f64::consts::{FRAC_PI_4, PI};

use ndarray::Array2;

use crate::error::{invalid, Error, Result};

/// Phase pattern displayed on the SLM.
#[derive(Debug, Clone, PartialEq)]
pub enum SlmMask {
    Flat,
    /// Binary grating along x. `period_mm` in the SLM plane, `shift_rad` in grating phase.
    Grating { period_mm: f64, shift_rad: f64 },
    /// Constant phase on the x > 0 half.
    HalfPlane { phase_rad: f64 },
    /// Phase sampled on the same grid as the [`SamplingSpec`] it is used with.
    Custom { phase: Array2<f64> },
}

impl SlmMask {
    pub fn grating(period_mm: f64) -> Self {
        SlmMask::Grating {
            period_mm,
            shift_rad: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SlmMask::Flat => Ok(()),
            SlmMask::Grating {
                period_mm,
                shift_rad,
            } => {
                if !(period_mm.is_finite() && *period_mm > 0.0) {
                    return Err(invalid(format!("grating period must be positive, got {period_mm}")));
                }
                if !shift_rad.is_finite() {
                    return Err(invalid("grating shift must be finite"));
                }
                Ok(())
            }
            SlmMask::HalfPlane { phase_rad } => {
                if !(0.0..2.0 * PI).contains(phase_rad) {
                    return Err(invalid(format!("half-plane phase must lie in [0, 2π), got {phase_rad}")));
                }
                Ok(())
            }
            SlmMask::Custom { phase } => {
                if phase.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("custom phase grid contains non-finite values"));
                }
                Ok(())
            }
        }
    }

    /// True if the phase depends on x only.
    pub fn is_x_only(&self) -> bool {
        !matches!(self, SlmMask::Custom { .. })
    }

    /// Phase θ at SLM-plane position `(x, y)` in mm. Not defined for `Custom`.
    pub fn phase_at(&self, x: f64, _y: f64) -> f64 {
        match self {
            SlmMask::Flat | SlmMask::Custom { .. } => 0.0,
            SlmMask::Grating {
                period_mm,
                shift_rad,
            } => {
                let u = 2.0 * PI * x / period_mm + shift_rad;
                FRAC_PI_4 * (sgn(u.cos()) + 1.0)
            }
            SlmMask::HalfPlane { phase_rad } => {
                if x > 0.0 {
                    *phase_rad
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            SlmMask::Flat => "flat".into(),
            SlmMask::Grating {
                period_mm,
                shift_rad,
            } => format!("grating(period_mm={period_mm},shift_rad={shift_rad})"),
            SlmMask::HalfPlane { phase_rad } => format!("half-plane(phase_rad={phase_rad})"),
            SlmMask::Custom { phase } => format!("custom({}x{})", phase.ncols(), phase.nrows()),
        }
    }
}

pub(crate) fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Square SLM-plane sampling grid of `n × n` points spaced `dx_mm`.
///
/// Coordinates are `(k - (n-1)/2)·dx + offset`, so with zero offset every
/// point has its mirror image on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub n: usize,
    pub dx_mm: f64,
    pub offset_mm: (f64, f64),
}

impl SamplingSpec {
    pub const DEFAULT_SIZE: usize = 2048;
    /// Aperture side in units of √Σ_SLM.
    pub const APERTURE_FACTOR: f64 = 100.0;

    pub fn new(n: usize, dx_mm: f64) -> Self {
        SamplingSpec {
            n,
            dx_mm,
            offset_mm: (0.0, 0.0),
        }
    }

    /// Default grid for an envelope area: `n` points over `100·√Σ_SLM`.
    pub fn for_envelope(slm_envelope_area_mm2: f64, n: usize) -> Self {
        let aperture = Self::APERTURE_FACTOR * slm_envelope_area_mm2.sqrt();
        Self::new(n, aperture / n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(invalid(format!("sampling grid needs at least 8 points, got {}", self.n)));
        }
        if !(self.dx_mm.is_finite() && self.dx_mm > 0.0) {
            return Err(invalid(format!("grid spacing must be positive, got {}", self.dx_mm)));
        }
        if self.offset_mm != (0.0, 0.0) {
            return Err(Error::AsymmetricGrid(self.offset_mm));
        }
        Ok(())
    }

    pub fn coordinate(&self, k: usize, offset: f64) -> f64 {
        (k as f64 - (self.n as f64 - 1.0) / 2.0) * self.dx_mm + offset
    }

    pub fn x(&self, col: usize) -> f64 {
        self.coordinate(col, self.offset_mm.0)
    }

    pub fn y(&self, row: usize) -> f64 {
        self.coordinate(row, self.offset_mm.1)
    }

    pub fn aperture_mm(&self) -> f64 {
        self.n as f64 * self.dx_mm
    }
}

/// ψ(r) = θ(r) + θ(−r) on the grid. Rows index y, columns index x.
pub fn symmetrized_phase(mask: &SlmMask, grid: &SamplingSpec) -> Result<Array2<f64>> {
    grid.validate()?;
    mask.validate()?;
    let n = grid.n;
    if let SlmMask::Custom { phase } = mask {
        if phase.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: (n, n),
                got: phase.dim(),
            });
        }
        return Ok(Array2::from_shape_fn((n, n), |(r, c)| {
            phase[[r, c]] + phase[[n - 1 - r, n - 1 - c]]
        }));
    }
    let row = symmetrized_phase_row(mask, grid)?;
    Ok(Array2::from_shape_fn((n, n), |(_, c)| row[c]))
}

/// ψ(x) along one grid row, for masks that depend on x only.
pub fn symmetrized_phase_row(mask: &SlmMask, grid: &SamplingSpec) -> Result<Vec<f64>> {
    grid.validate()?;
    mask.validate()?;
    if !mask.is_x_only() {
        return Err(invalid("a phase row needs a mask that depends on x only"));
    }
    Ok((0..grid.n)
        .map(|c| {
            let x = grid.x(c);
            mask.phase_at(x, 0.0) + mask.phase_at(-x, 0.0)
        })
        .collect())
}
