//! Batched simulation and analysis runs.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::constants::{BATCHES, FRAMES_PER_BATCH};
use crate::detector::{simulate_exposure, DetectorSpec, ExposureModel, Frame};
use crate::error::{invalid, Error, Result};
use crate::g2::{
    accumulate_range, interpolate_artifacts, AccumulatorParams, CorrAccumulator, CorrelationImage, Interpolation,
    LagWindow, XcorrMode,
};
use crate::medium::MediumSpec;
use crate::metrics::{extract_xi, PeakMetric, XiMeasurement};
use crate::optics::{OpticsConfig, SlmMask};
use crate::sampler::{build_minus_sampler, SamplerMode, SourceSpec};

/// `batches` disjoint contiguous runs of `frames_per_batch` exposures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batches: usize,
    pub frames_per_batch: u64,
    pub first_exposure: u64,
}

impl Default for BatchPlan {
    fn default() -> Self {
        BatchPlan {
            batches: BATCHES,
            frames_per_batch: FRAMES_PER_BATCH as u64,
            first_exposure: 0,
        }
    }
}

impl BatchPlan {
    pub fn new(batches: usize, frames_per_batch: u64) -> Self {
        BatchPlan {
            batches,
            frames_per_batch,
            first_exposure: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches == 0 {
            return Err(invalid("at least one batch is required"));
        }
        if self.frames_per_batch < 2 {
            return Err(invalid(format!(
                "batches need at least 2 frames, got {}",
                self.frames_per_batch
            )));
        }
        Ok(())
    }

    pub fn total_frames(&self) -> u64 {
        self.batches as u64 * self.frames_per_batch
    }

    fn range(&self, b: usize) -> (u64, u64) {
        let s = self.first_exposure + b as u64 * self.frames_per_batch;
        (s, s + self.frames_per_batch)
    }
}

/// How correlation images are formed and reduced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSpec {
    pub window: LagWindow,
    pub interpolation: Interpolation,
    pub metric: PeakMetric,
    pub half_width: usize,
    pub overlap_normalize: bool,
    pub mode: XcorrMode,
    /// Frames per parallel work unit. Fixed so results do not depend on the thread count.
    pub chunk: u64,
}

impl AnalysisSpec {
    pub const DEFAULT_CHUNK: u64 = 250;
    pub const MAX_HALF_WINDOW: usize = 64;

    /// Lag window up to ±64 (limited by the ROI), peak window ≈ 1.4 σ of the flat peak.
    pub fn for_optics(cfg: &OpticsConfig) -> Self {
        let (nx, ny) = cfg.roi;
        let half = Self::MAX_HALF_WINDOW.min((nx.min(ny).saturating_sub(1)) / 2);
        AnalysisSpec {
            window: LagWindow::square(half),
            interpolation: Interpolation::FullColumn,
            metric: PeakMetric::Height,
            half_width: ((1.4 * cfg.correlation_sigma_pixels()).round() as usize).max(1),
            overlap_normalize: false,
            mode: XcorrMode::Fast,
            chunk: Self::DEFAULT_CHUNK,
        }
    }

    pub fn with_metric(mut self, metric: PeakMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_overlap_normalize(mut self, on: bool) -> Self {
        self.overlap_normalize = on;
        self
    }

    pub fn params(&self, roi: (usize, usize), offset: f64) -> AccumulatorParams {
        AccumulatorParams::new(roi, self.window)
            .with_offset(offset)
            .with_mode(self.mode)
    }

    /// Artifact interpolation followed by optional per-overlap normalisation.
    pub fn process(&self, img: &CorrelationImage) -> Result<CorrelationImage> {
        let out = interpolate_artifacts(img, self.interpolation)?;
        Ok(if self.overlap_normalize { out.per_overlap() } else { out })
    }
}

/// Everything but the mask, for runs that sweep masks.
#[derive(Debug, Clone)]
pub struct RunTemplate {
    pub source: SourceSpec,
    pub medium: MediumSpec,
    pub detector: DetectorSpec,
    pub sampler_mode: SamplerMode,
}

impl RunTemplate {
    pub fn new(optics: OpticsConfig, seed: u64) -> Self {
        RunTemplate {
            sampler_mode: SamplerMode::tabulated(&optics),
            source: SourceSpec::new(optics, SlmMask::Flat, seed),
            medium: MediumSpec::none(),
            detector: DetectorSpec::default(),
        }
    }

    pub fn optics(&self) -> &OpticsConfig {
        &self.source.optics
    }

    pub fn model(&self, mask: SlmMask) -> Result<ExposureModel> {
        let sampler = build_minus_sampler(
            &mask,
            &self.source.optics,
            self.source.slm_efficiency,
            &self.sampler_mode,
        )?;
        let model = ExposureModel {
            source: SourceSpec {
                mask,
                ..self.source.clone()
            },
            sampler,
            medium: self.medium.clone(),
            detector: self.detector.clone(),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Per-batch correlation images plus their combination.
#[derive(Debug, Clone)]
pub struct BatchRun {
    /// Processed image of each batch.
    pub images: Vec<CorrelationImage>,
    /// Processed image of all batches merged.
    pub combined: CorrelationImage,
    /// Mean frame after offset subtraction.
    pub mean_intensity: Array2<f64>,
    pub frames: u64,
}

impl BatchRun {
    fn from_accumulators(accs: Vec<CorrAccumulator>, analysis: &AnalysisSpec) -> Result<Self> {
        let images = accs
            .iter()
            .map(|a| analysis.process(&a.finalize()?))
            .collect::<Result<Vec<_>>>()?;
        let mut it = accs.into_iter();
        let mut total = it.next().ok_or_else(|| invalid("no batches"))?;
        for a in it {
            total = total.merge(a)?;
        }
        Ok(BatchRun {
            images,
            combined: analysis.process(&total.finalize()?)?,
            mean_intensity: total.mean_image(),
            frames: total.frames(),
        })
    }

    /// ξ of every batch at `center` (lag pixels).
    pub fn xi(&self, center: (i64, i64), analysis: &AnalysisSpec) -> Result<XiMeasurement> {
        let per_batch = self
            .images
            .iter()
            .map(|img| extract_xi(img, center, analysis.half_width, analysis.metric))
            .collect::<Result<Vec<_>>>()?;
        XiMeasurement::from_batches(center, analysis.half_width, analysis.metric, per_batch)
    }
}

/// Simulate and correlate each batch of `plan` without storing frames.
pub fn run_batches(model: &ExposureModel, plan: &BatchPlan, analysis: &AnalysisSpec) -> Result<BatchRun> {
    plan.validate()?;
    model.validate()?;
    let params = analysis.params(model.source.optics.roi, model.detector.bias);
    let accs = (0..plan.batches)
        .map(|b| {
            let (s, e) = plan.range(b);
            accumulate_range(params, s, e, analysis.chunk, |i| simulate_exposure(model, i).0)
        })
        .collect::<Result<Vec<_>>>()?;
    BatchRun::from_accumulators(accs, analysis)
}

/// Correlate a recorded stack batch by batch. Frames beyond `B·K` are ignored.
pub fn analyze_frames<I>(
    frames: I,
    roi: (usize, usize),
    offset: f64,
    plan: &BatchPlan,
    analysis: &AnalysisSpec,
) -> Result<BatchRun>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    plan.validate()?;
    let params = analysis.params(roi, offset);
    let mut it = frames.into_iter();
    let mut accs = Vec::with_capacity(plan.batches);
    let mut seen = 0u64;
    for _ in 0..plan.batches {
        let mut acc = CorrAccumulator::new(params)?;
        for _ in 0..plan.frames_per_batch {
            let frame = it.next().ok_or(Error::InsufficientFrames {
                needed: plan.total_frames(),
                got: seen,
            })??;
            acc.accumulate(&frame)?;
            seen += 1;
        }
        accs.push(acc);
    }
    BatchRun::from_accumulators(accs, analysis)
}

/// Shuffled-frame null of [`analyze_frames`]. Within each batch the frames are
/// put in two independent random orders, one for each term of the estimator, so
/// no term multiplies a frame with itself and Γ⁻ should vanish at every lag.
pub fn analyze_frames_null<R: Rng>(
    frames: &[Frame],
    roi: (usize, usize),
    offset: f64,
    plan: &BatchPlan,
    analysis: &AnalysisSpec,
    rng: &mut R,
) -> Result<BatchRun> {
    plan.validate()?;
    if (frames.len() as u64) < plan.total_frames() {
        return Err(Error::InsufficientFrames {
            needed: plan.total_frames(),
            got: frames.len() as u64,
        });
    }
    let params = analysis.params(roi, offset);
    let k = plan.frames_per_batch as usize;
    let mut pairs = Vec::with_capacity(plan.batches);
    for b in 0..plan.batches {
        let batch = &frames[b * k..(b + 1) * k];
        let mut accs = [CorrAccumulator::new(params)?, CorrAccumulator::new(params)?];
        for acc in &mut accs {
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(rng);
            for &i in &order {
                acc.accumulate(&batch[i])?;
            }
        }
        pairs.push(accs);
    }
    let images = pairs
        .iter()
        .map(|[a, b]| analysis.process(&a.null_against(b)?))
        .collect::<Result<Vec<_>>>()?;
    let mut it = pairs.into_iter();
    let [mut first, mut second] = it.next().ok_or_else(|| invalid("no batches"))?;
    for [a, b] in it {
        first = first.merge(a)?;
        second = second.merge(b)?;
    }
    Ok(BatchRun {
        images,
        combined: analysis.process(&first.null_against(&second)?)?,
        mean_intensity: first.mean_image(),
        frames: first.frames(),
    })
}

/// Lag-pixel position of the positive grating peak for a pair separation `Δx`.
pub fn peak_lag_pixels(delta_x_mm: f64, cfg: &OpticsConfig) -> f64 {
    cfg.mm_to_pixels(delta_x_mm / 2.0)
}

/// Mean photons per pixel per exposure reaching the ROI from the source,
/// for a Gaussian beam of variance Σ per axis centred on the ROI.
pub fn signal_photons_per_pixel(source: &SourceSpec) -> f64 {
    let o = &source.optics;
    let sigma = o.beam_area_mm2.sqrt();
    let inside = |n: usize| {
        let half = n as f64 * o.sample_pixel_mm() / 2.0;
        libm::erf(half / (sigma * std::f64::consts::SQRT_2))
    };
    2.0 * source.mean_pairs() * inside(o.roi.0) * inside(o.roi.1) / o.roi_pixels() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::simulate_stack;

    fn template() -> RunTemplate {
        let mut t = RunTemplate::new(OpticsConfig::config1().with_roi(32, 32), 5);
        t.source.pair_rate_hz = 2e5;
        t
    }

    #[test]
    fn in_memory_and_streamed_agree() {
        let t = template();
        let model = t.model(SlmMask::Flat).unwrap();
        let plan = BatchPlan::new(2, 40);
        let analysis = AnalysisSpec::for_optics(t.optics());
        let run = run_batches(&model, &plan, &analysis).unwrap();
        let mut frames: Vec<Frame> = Vec::new();
        simulate_stack(&model, 0, 80, &mut frames).unwrap();
        let again = analyze_frames(
            frames.into_iter().map(Ok),
            (32, 32),
            model.detector.bias,
            &plan,
            &analysis,
        )
        .unwrap();
        let scale = run.combined.max_abs();
        for (a, b) in run.images.iter().zip(&again.images) {
            let d = (&a.values - &b.values).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
            assert!(d <= 1e-12 * scale, "{d}");
        }
        assert_eq!(run.frames, 80);
    }

    #[test]
    fn short_stack_is_reported() {
        let t = template();
        let model = t.model(SlmMask::Flat).unwrap();
        let mut frames: Vec<Frame> = Vec::new();
        simulate_stack(&model, 0, 10, &mut frames).unwrap();
        let err = analyze_frames(
            frames.into_iter().map(Ok),
            (32, 32),
            100.0,
            &BatchPlan::new(2, 8),
            &AnalysisSpec::for_optics(t.optics()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientFrames { needed: 16, got: 10 }));
    }

    #[test]
    fn signal_level_matches_simulation() {
        let mut t = RunTemplate::new(OpticsConfig::config1().with_roi(40, 40), 2);
        t.detector = DetectorSpec::ideal();
        t.detector.quantum_efficiency = 1.0;
        t.detector.em_gain = 1000.0;
        t.detector.bias = 0.0;
        let model = t.model(SlmMask::Flat).unwrap();
        let expected = signal_photons_per_pixel(&model.source);
        let n = 400;
        let total: u64 = (0..n).map(|i| simulate_exposure(&model, i).0.total()).sum();
        let per_pixel = total as f64 / (1000.0 * n as f64 * 1600.0);
        // gain draws are exponential, so compare with a few standard errors of slack
        assert!((per_pixel / expected - 1.0).abs() < 0.05, "{per_pixel} vs {expected}");
    }

    #[test]
    fn default_windows() {
        let a = AnalysisSpec::for_optics(&OpticsConfig::config1());
        assert_eq!(a.window, LagWindow::square(64));
        assert_eq!(a.half_width, 7);
        let small = AnalysisSpec::for_optics(&OpticsConfig::config1().with_roi(64, 64));
        assert_eq!(small.window, LagWindow::square(31));
    }

    #[test]
    fn chunking_is_thread_independent() {
        let t = template();
        let model = t.model(SlmMask::Flat).unwrap();
        let plan = BatchPlan::new(1, 30);
        let mut analysis = AnalysisSpec::for_optics(t.optics());
        analysis.chunk = 7;
        let a = run_batches(&model, &plan, &analysis).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_batches(&model, &plan, &analysis)).unwrap();
        assert_eq!(a.combined.values, b.combined.values);
    }
}
