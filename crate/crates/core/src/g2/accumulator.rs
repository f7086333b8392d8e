use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;

use super::image::{CorrelationImage, Interpolation};
use super::xcorr::{extract_lags, naive, LagWindow, XcorrMode};
use crate::detector::Frame;
use crate::error::{invalid, Error, Result};
use crate::fft2::{Fft2Scratch, RealFft2};

/// Shape and processing options shared by accumulators that may be merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccumulatorParams {
    /// `(nx, ny)`
    pub roi: (usize, usize),
    pub window: LagWindow,
    pub mode: XcorrMode,
    /// Subtracted from every pixel before correlating (detector bias).
    pub offset: f64,
}

impl AccumulatorParams {
    pub fn new(roi: (usize, usize), window: LagWindow) -> Self {
        AccumulatorParams {
            roi,
            window,
            mode: XcorrMode::Fast,
            offset: 0.0,
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_mode(mut self, mode: XcorrMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone)]
enum Sums {
    /// Sums of |F_m|² and F_{m-1}·conj(F_m) over the padded spectrum.
    Spectral {
        auto: Vec<f64>,
        cross: Vec<Complex64>,
    },
    Lag {
        auto: Array2<f64>,
        cross: Array2<f64>,
    },
}

#[derive(Debug, Clone)]
enum Held {
    Spectrum(Vec<Complex64>),
    Image(Array2<f64>),
}

/// Streaming estimator of the minus-coordinate projection
/// `Γ(δ) = S_auto(δ)/M − S_cross(δ)/(M−1)`.
///
/// Frames must arrive in exposure order. For parallel use, split the stream
/// into contiguous chunks, [`prime`](Self::prime) each chunk but the first
/// with the frame before it, and [`merge`](Self::merge) in chunk order.
#[derive(Debug, Clone)]
pub struct CorrAccumulator {
    params: AccumulatorParams,
    frames: u64,
    cross_pairs: u64,
    sums: Sums,
    held: Option<Held>,
    frame_sum: Vec<f64>,
    plan: Option<Arc<RealFft2>>,
    scratch: Option<Fft2Scratch>,
    image: Vec<f64>,
}

impl CorrAccumulator {
    pub fn new(params: AccumulatorParams) -> Result<Self> {
        let (nx, ny) = params.roi;
        params.window.check(nx, ny)?;
        let (sums, plan) = match params.mode {
            XcorrMode::Fast => {
                let (pr, pc) = params.window.padded_size(nx, ny);
                let plan = Arc::new(RealFft2::new(pr, pc));
                let n = plan.spectrum_len();
                (
                    Sums::Spectral {
                        auto: vec![0.0; n],
                        cross: vec![Complex64::default(); n],
                    },
                    Some(plan),
                )
            }
            XcorrMode::Naive => (
                Sums::Lag {
                    auto: Array2::zeros(params.window.shape()),
                    cross: Array2::zeros(params.window.shape()),
                },
                None,
            ),
        };
        Ok(CorrAccumulator {
            params,
            frames: 0,
            cross_pairs: 0,
            sums,
            held: None,
            frame_sum: vec![0.0; nx * ny],
            scratch: plan.as_ref().map(|p| p.scratch()),
            plan,
            image: vec![0.0; nx * ny],
        })
    }

    /// Share an FFT plan with another accumulator of identical parameters.
    pub fn sibling(&self) -> Self {
        let mut s = self.clone();
        s.frames = 0;
        s.cross_pairs = 0;
        s.held = None;
        s.frame_sum.fill(0.0);
        match &mut s.sums {
            Sums::Spectral { auto, cross } => {
                auto.fill(0.0);
                cross.fill(Complex64::default());
            }
            Sums::Lag { auto, cross } => {
                auto.fill(0.0);
                cross.fill(0.0);
            }
        }
        s
    }

    pub fn params(&self) -> &AccumulatorParams {
        &self.params
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn cross_pairs(&self) -> u64 {
        self.cross_pairs
    }

    fn load(&mut self, frame: &Frame) -> Result<()> {
        let (nx, ny) = self.params.roi;
        if (frame.width, frame.height) != (nx, ny) {
            return Err(Error::DimensionMismatch {
                expected: (nx, ny),
                got: (frame.width, frame.height),
            });
        }
        let off = self.params.offset;
        for (d, &v) in self.image.iter_mut().zip(&frame.data) {
            *d = v as f64 - off;
        }
        Ok(())
    }

    fn transform(&mut self) -> Held {
        let (nx, ny) = self.params.roi;
        match (&self.plan, self.params.mode) {
            (Some(plan), XcorrMode::Fast) => {
                let mut spec = vec![Complex64::default(); plan.spectrum_len()];
                plan.forward(&self.image, ny, nx, &mut spec, self.scratch.as_mut().expect("fast mode"));
                Held::Spectrum(spec)
            }
            _ => Held::Image(
                Array2::from_shape_vec((ny, nx), self.image.clone()).expect("consistent shape"),
            ),
        }
    }

    /// Hold `frame` as the predecessor of the next accumulated frame without
    /// counting it. Used for the one-frame overlap between chunks.
    pub fn prime(&mut self, frame: &Frame) -> Result<()> {
        self.load(frame)?;
        let held = self.transform();
        self.held = Some(held);
        Ok(())
    }

    pub fn accumulate(&mut self, frame: &Frame) -> Result<()> {
        self.load(frame)?;
        for (s, v) in self.frame_sum.iter_mut().zip(&self.image) {
            *s += v;
        }
        let current = self.transform();
        let window = self.params.window;
        match (&mut self.sums, &current) {
            (Sums::Spectral { auto, cross }, Held::Spectrum(f)) => {
                for (a, v) in auto.iter_mut().zip(f) {
                    *a += v.norm_sqr();
                }
                if let Some(Held::Spectrum(p)) = &self.held {
                    for ((c, pv), v) in cross.iter_mut().zip(p).zip(f) {
                        *c += pv * v.conj();
                    }
                    self.cross_pairs += 1;
                }
            }
            (Sums::Lag { auto, cross }, Held::Image(img)) => {
                *auto += &naive(img.view(), img.view(), window);
                if let Some(Held::Image(p)) = &self.held {
                    *cross += &naive(p.view(), img.view(), window);
                    self.cross_pairs += 1;
                }
            }
            _ => unreachable!("sum and held representations follow the mode"),
        }
        self.held = Some(current);
        self.frames += 1;
        Ok(())
    }

    /// Combine with the accumulator of the chunk that directly follows this one.
    pub fn merge(mut self, other: CorrAccumulator) -> Result<CorrAccumulator> {
        if self.params != other.params {
            return Err(Error::Incompatible(format!(
                "{:?} vs {:?}",
                self.params, other.params
            )));
        }
        match (&mut self.sums, &other.sums) {
            (Sums::Spectral { auto, cross }, Sums::Spectral { auto: a2, cross: c2 }) => {
                for (x, y) in auto.iter_mut().zip(a2) {
                    *x += y;
                }
                for (x, y) in cross.iter_mut().zip(c2) {
                    *x += y;
                }
            }
            (Sums::Lag { auto, cross }, Sums::Lag { auto: a2, cross: c2 }) => {
                *auto += a2;
                *cross += c2;
            }
            _ => return Err(Error::Incompatible("mixed accumulation modes".into())),
        }
        for (x, y) in self.frame_sum.iter_mut().zip(&other.frame_sum) {
            *x += y;
        }
        self.frames += other.frames;
        self.cross_pairs += other.cross_pairs;
        if other.frames > 0 {
            self.held = other.held;
        }
        Ok(self)
    }

    /// Raw lag grids `(S_auto, S_cross)`.
    pub fn lag_sums(&self) -> (Array2<f64>, Array2<f64>) {
        match &self.sums {
            Sums::Lag { auto, cross } => (auto.clone(), cross.clone()),
            Sums::Spectral { auto, cross } => {
                let plan = self.plan.as_ref().expect("fast mode has a plan");
                let mut s = plan.scratch();
                let (pr, pc) = (plan.rows(), plan.cols());
                let mut out = vec![0.0; pr * pc];
                let mut spec: Vec<Complex64> = auto.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                plan.inverse(&mut spec, &mut out, &mut s);
                let a = extract_lags(&out, pr, pc, self.params.window);
                let mut spec = cross.clone();
                plan.inverse(&mut spec, &mut out, &mut s);
                let c = extract_lags(&out, pr, pc, self.params.window);
                (a, c)
            }
        }
    }

    pub fn finalize(&self) -> Result<CorrelationImage> {
        if self.frames < 2 || self.cross_pairs == 0 {
            return Err(Error::InsufficientFrames {
                needed: 2,
                got: self.frames,
            });
        }
        let (auto, cross) = self.lag_sums();
        let m = self.frames as f64;
        let mc = self.cross_pairs as f64;
        let values = &auto / m - &cross / mc;
        Ok(CorrelationImage {
            values,
            window: self.params.window,
            frames: self.frames,
            roi: self.params.roi,
            interpolation: Interpolation::Off,
            overlap_normalized: false,
            source_hash: None,
        })
    }

    /// Null estimator from two accumulators fed with independently permuted
    /// copies of the same frames: `S_cross(a)/(M−1) − S_cross(b)/(M−1)`. Both
    /// terms pair distinct frames, so the result fluctuates around zero.
    pub fn null_against(&self, other: &CorrAccumulator) -> Result<CorrelationImage> {
        if self.params != other.params {
            return Err(invalid("null estimator needs matching accumulator parameters"));
        }
        if self.cross_pairs == 0 || other.cross_pairs == 0 {
            return Err(Error::InsufficientFrames {
                needed: 2,
                got: self.frames.min(other.frames),
            });
        }
        let (_, a) = self.lag_sums();
        let (_, b) = other.lag_sums();
        let values = &a / self.cross_pairs as f64 - &b / other.cross_pairs as f64;
        Ok(CorrelationImage {
            values,
            window: self.params.window,
            frames: self.frames,
            roi: self.params.roi,
            interpolation: Interpolation::Off,
            overlap_normalized: false,
            source_hash: None,
        })
    }

    /// Mean frame after offset subtraction, `ny × nx`.
    pub fn mean_image(&self) -> Array2<f64> {
        let (nx, ny) = self.params.roi;
        let m = self.frames.max(1) as f64;
        Array2::from_shape_fn((ny, nx), |(r, c)| self.frame_sum[r * nx + c] / m)
    }
}

/// Accumulate frames `range` of a generated stream in parallel chunks, merging
/// in chunk order. The result does not depend on the number of threads.
pub fn accumulate_range<F>(
    params: AccumulatorParams,
    start: u64,
    end: u64,
    chunk: u64,
    frame_at: F,
) -> Result<CorrAccumulator>
where
    F: Fn(u64) -> Frame + Sync,
{
    let proto = CorrAccumulator::new(params)?;
    let chunk = chunk.max(1);
    let bounds: Vec<(u64, u64)> = (start..end)
        .step_by(chunk as usize)
        .map(|s| (s, (s + chunk).min(end)))
        .collect();
    let parts: Vec<Result<CorrAccumulator>> = bounds
        .par_iter()
        .map(|&(s, e)| {
            let mut acc = proto.sibling();
            if s > start {
                acc.prime(&frame_at(s - 1))?;
            }
            for i in s..e {
                acc.accumulate(&frame_at(i))?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = proto;
    for p in parts {
        total = total.merge(p?)?;
    }
    Ok(total)
}

/// Single-threaded pass over in-memory frames.
pub fn accumulate_frames<'a, I>(params: AccumulatorParams, frames: I) -> Result<CorrAccumulator>
where
    I: IntoIterator<Item = &'a Frame>,
{
    let mut acc = CorrAccumulator::new(params)?;
    for f in frames {
        acc.accumulate(f)?;
    }
    Ok(acc)
}

/// View a frame as `f64` with an offset removed.
pub fn frame_as_f64(frame: &Frame, offset: f64) -> Array2<f64> {
    let v: ArrayView2<u16> = frame.view();
    v.mapv(|x| x as f64 - offset)
}
