//! Photon-pair positions per exposure in the low-gain regime.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::optics::{
    analytic_grating_correlation, shaped_correlation, symmetrized_phase_row, OpticsConfig,
    SamplingSpec, SlmMask,
};
use crate::rng::{stream_rng, Stream};

/// Sample-plane positions of the two photons of a pair, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub r1: [f64; 2],
    pub r2: [f64; 2],
}

impl PairEvent {
    pub fn difference(&self) -> [f64; 2] {
        [self.r1[0] - self.r2[0], self.r1[1] - self.r2[1]]
    }
}

/// Where the pairs are observed: image plane (positions correlated) or
/// Fourier plane (positions anti-correlated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairGeometry {
    #[default]
    ImagePlane,
    FourierPlane,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub center: [f64; 2],
    /// Per-axis variance in mm².
    pub variance: f64,
    pub weight: f64,
}

/// Discrete CDF over equally spaced cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf1d {
    cumulative: Vec<f64>,
    /// Lag of the first cell centre, mm.
    start: f64,
    spacing: f64,
}

impl Cdf1d {
    pub fn from_weights(weights: &[f64], start: f64, spacing: f64) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid("tabulated weights must be finite and non-negative"));
            }
            acc += w;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(invalid("tabulated weights sum to zero"));
        }
        for c in &mut cumulative {
            *c /= acc;
        }
        *cumulative.last_mut().expect("non-empty") = 1.0;
        Ok(Cdf1d {
            cumulative,
            start,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    fn index(&self, u: f64) -> usize {
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = self.index(rng.random::<f64>());
        let jitter: f64 = rng.random::<f64>() - 0.5;
        self.start + (k as f64 + jitter) * self.spacing
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LagTable {
    /// Tabulated δx marginal, Gaussian δy with the given variance.
    SeparableX { x: Cdf1d, y_variance: f64 },
    /// Full 2D table, row-major over `n × n` cells.
    Full { cells: Cdf1d, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MinusDistribution {
    Mixture(Vec<MixtureComponent>),
    Tabulated(LagTable),
}

/// Distribution of the pair difference `d = r1 − r2`.
///
/// A fraction `slm_efficiency` follows the mask; the rest follows the
/// unshaped Gaussian of variance A_e.
#[derive(Debug, Clone, PartialEq)]
pub struct MinusSampler {
    pub distribution: MinusDistribution,
    pub slm_efficiency: f64,
    pub flat_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerMode {
    /// Diffraction-order mixture, odd orders up to `n_max`.
    Analytic { n_max: i64 },
    /// Table from the FFT oracle on the given grid.
    Tabulated { grid: SamplingSpec },
}

impl SamplerMode {
    pub fn tabulated(cfg: &OpticsConfig) -> Self {
        SamplerMode::Tabulated {
            grid: SamplingSpec::for_envelope(cfg.slm_envelope_area_mm2, SamplingSpec::DEFAULT_SIZE),
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

impl MinusSampler {
    pub fn validate(&self) -> Result<()> {
        if !(self.slm_efficiency > 0.0 && self.slm_efficiency <= 1.0) {
            return Err(invalid(format!(
                "SLM efficiency must lie in (0, 1], got {}",
                self.slm_efficiency
            )));
        }
        if !(self.flat_variance > 0.0) {
            return Err(invalid("flat variance must be positive"));
        }
        if let MinusDistribution::Mixture(c) = &self.distribution {
            let total: f64 = c.iter().map(|m| m.weight).sum();
            if c.is_empty() || (total - 1.0).abs() > 1e-9 || c.iter().any(|m| !(m.variance > 0.0)) {
                return Err(invalid("mixture weights must sum to 1 with positive variances"));
            }
        }
        Ok(())
    }

    pub fn sample_difference<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let leak = self.slm_efficiency < 1.0 && rng.random::<f64>() >= self.slm_efficiency;
        if leak {
            let s = self.flat_variance.sqrt();
            return [s * normal(rng), s * normal(rng)];
        }
        match &self.distribution {
            MinusDistribution::Mixture(components) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = components.len() - 1;
                for (i, c) in components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let c = &components[pick];
                let s = c.variance.sqrt();
                [c.center[0] + s * normal(rng), c.center[1] + s * normal(rng)]
            }
            MinusDistribution::Tabulated(LagTable::SeparableX { x, y_variance }) => {
                let dx = x.sample(rng);
                [dx, y_variance.sqrt() * normal(rng)]
            }
            MinusDistribution::Tabulated(LagTable::Full { cells, n }) => {
                let k = cells.index(rng.random::<f64>());
                let (r, c) = (k / n, k % n);
                let half = (*n / 2) as f64;
                let jx: f64 = rng.random::<f64>() - 0.5;
                let jy: f64 = rng.random::<f64>() - 0.5;
                [
                    (c as f64 - half + jx) * cells.spacing,
                    (r as f64 - half + jy) * cells.spacing,
                ]
            }
        }
    }
}

/// Build the sampler of pair differences for a mask.
pub fn build_minus_sampler(
    mask: &SlmMask,
    cfg: &OpticsConfig,
    slm_efficiency: f64,
    mode: &SamplerMode,
) -> Result<MinusSampler> {
    cfg.validate()?;
    mask.validate()?;
    let a_e = cfg.entanglement_area_mm2;
    let distribution = match mode {
        SamplerMode::Analytic { n_max } => {
            let peaks = match mask {
                SlmMask::Flat => analytic_grating_correlation(f64::INFINITY, cfg, *n_max)?,
                SlmMask::Grating {
                    period_mm,
                    shift_rad,
                } if *shift_rad == 0.0 => analytic_grating_correlation(*period_mm, cfg, *n_max)?,
                other => {
                    return Err(invalid(format!(
                        "analytic sampling supports flat and unshifted gratings only, got {}",
                        other.label()
                    )))
                }
            };
            MinusDistribution::Mixture(
                peaks
                    .into_iter()
                    .map(|p| MixtureComponent {
                        center: [p.center_mm, 0.0],
                        variance: a_e,
                        weight: p.weight,
                    })
                    .collect(),
            )
        }
        SamplerMode::Tabulated { grid } => {
            if mask.is_x_only() {
                let (weights, spacing) = shaped_marginal_x(mask, cfg, grid)?;
                let n = weights.len();
                let start = -((n / 2) as f64) * spacing;
                MinusDistribution::Tabulated(LagTable::SeparableX {
                    x: Cdf1d::from_weights(&weights, start, spacing)?,
                    y_variance: a_e,
                })
            } else {
                let field = shaped_correlation(mask, cfg, grid)?;
                let n = field.n();
                let weights: Vec<f64> = field.values.iter().cloned().collect();
                MinusDistribution::Tabulated(LagTable::Full {
                    cells: Cdf1d::from_weights(&weights, 0.0, field.spacing_mm)?,
                    n,
                })
            }
        }
    };
    let sampler = MinusSampler {
        distribution,
        slm_efficiency,
        flat_variance: a_e,
    };
    sampler.validate()?;
    Ok(sampler)
}

/// δx marginal of the oracle for an x-only mask, via a 1D transform.
///
/// Returns cell masses in lag order (centre at index `n/2`) and the lag spacing.
/// Equals the x-marginal of [`shaped_correlation`] on the same grid.
pub fn shaped_marginal_x(
    mask: &SlmMask,
    cfg: &OpticsConfig,
    grid: &SamplingSpec,
) -> Result<(Vec<f64>, f64)> {
    if !mask.is_x_only() {
        return Err(invalid("x marginal needs a mask that depends on x only"));
    }
    grid.validate()?;
    if let SlmMask::Grating { period_mm, .. } = mask {
        if *period_mm < crate::optics::MIN_STEPS_PER_PERIOD * grid.dx_mm {
            return Err(Error::Aliasing {
                period_mm: *period_mm,
                detail: format!("period spans {:.2} grid steps", period_mm / grid.dx_mm),
            });
        }
    }
    let n = grid.n;
    let row_grid = SamplingSpec::new(n, grid.dx_mm);
    let psi = symmetrized_phase_row(mask, &row_grid)?;
    let s = cfg.slm_envelope_area_mm2;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let x = row_grid.x(k);
            Complex64::from_polar((-x * x / (4.0 * s)).exp(), psi[k])
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mut out = vec![0.0; n];
    for (j, v) in buf.iter().enumerate() {
        out[(j + half) % n] = v.norm_sqr();
    }
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    let edge: f64 = out[..crate::optics::EDGE_CELLS].iter().sum::<f64>()
        + out[n - crate::optics::EDGE_CELLS..].iter().sum::<f64>();
    if edge > crate::optics::EDGE_MASS_TOLERANCE {
        let period_mm = match mask {
            SlmMask::Grating { period_mm, .. } => *period_mm,
            _ => f64::INFINITY,
        };
        return Err(Error::Aliasing {
            period_mm,
            detail: format!("{edge:.3e} of the mass lies at the grid edge"),
        });
    }
    Ok((out, cfg.lambda_f() / grid.aperture_mm()))
}

/// Draw the pair difference, then the sum coordinate, and form the two positions.
pub fn sample_pair<R: Rng + ?Sized>(sampler: &MinusSampler, cfg: &OpticsConfig, rng: &mut R) -> PairEvent {
    let d = sampler.sample_difference(rng);
    let u = sample_sum(cfg, rng);
    combine(d, u, PairGeometry::ImagePlane)
}

/// Sum coordinate `u = r1 + r2`: per-axis variance `4Σ − A_e`, so the single-photon
/// intensity has variance Σ.
pub fn sample_sum<R: Rng + ?Sized>(cfg: &OpticsConfig, rng: &mut R) -> [f64; 2] {
    let s = (4.0 * cfg.beam_area_mm2 - cfg.entanglement_area_mm2).sqrt();
    [s * normal(rng), s * normal(rng)]
}

pub fn combine(d: [f64; 2], u: [f64; 2], geometry: PairGeometry) -> PairEvent {
    match geometry {
        PairGeometry::ImagePlane => PairEvent {
            r1: [(u[0] + d[0]) / 2.0, (u[1] + d[1]) / 2.0],
            r2: [(u[0] - d[0]) / 2.0, (u[1] - d[1]) / 2.0],
        },
        // narrow sum, broad difference
        PairGeometry::FourierPlane => PairEvent {
            r1: [(u[0] + d[0]) / 2.0, (u[1] + d[1]) / 2.0],
            r2: [(d[0] - u[0]) / 2.0, (d[1] - u[1]) / 2.0],
        },
    }
}

/// Pair source for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub pair_rate_hz: f64,
    pub exposure_s: f64,
    pub slm_efficiency: f64,
    pub mask: SlmMask,
    pub optics: OpticsConfig,
    pub seed: u64,
    pub geometry: PairGeometry,
}

impl SourceSpec {
    pub fn new(optics: OpticsConfig, mask: SlmMask, seed: u64) -> Self {
        SourceSpec {
            pair_rate_hz: crate::constants::NOMINAL_PAIR_RATE_HZ,
            exposure_s: crate::constants::EXPOSURE_S,
            slm_efficiency: 1.0,
            mask,
            optics,
            seed,
            geometry: PairGeometry::ImagePlane,
        }
    }

    pub fn mean_pairs(&self) -> f64 {
        self.pair_rate_hz * self.exposure_s
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mean_pairs();
        if !(m.is_finite() && m >= 0.0) {
            return Err(invalid(format!("pair rate x exposure must be finite and >= 0, got {m}")));
        }
        if !(self.slm_efficiency > 0.0 && self.slm_efficiency <= 1.0) {
            return Err(invalid(format!(
                "SLM efficiency must lie in (0, 1], got {}",
                self.slm_efficiency
            )));
        }
        self.optics.validate()?;
        self.mask.validate()
    }
}

/// Poisson number of pairs in one exposure.
pub fn draw_pair_count<R: Rng + ?Sized>(spec: &SourceSpec, rng: &mut R) -> u64 {
    let mean = spec.mean_pairs();
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    p.sample(rng) as u64
}

/// All pairs of exposure `index`, drawn from the per-exposure streams.
pub fn sample_exposure_pairs(spec: &SourceSpec, sampler: &MinusSampler, index: u64) -> Vec<PairEvent> {
    let mut count_rng = stream_rng(spec.seed, index, Stream::PairCount);
    let mut minus_rng = stream_rng(spec.seed, index, Stream::Minus);
    let mut sum_rng = stream_rng(spec.seed, index, Stream::Sum);
    let n = draw_pair_count(spec, &mut count_rng);
    (0..n)
        .map(|_| {
            let d = sampler.sample_difference(&mut minus_rng);
            let u = sample_sum(&spec.optics, &mut sum_rng);
            combine(d, u, spec.geometry)
        })
        .collect()
}
