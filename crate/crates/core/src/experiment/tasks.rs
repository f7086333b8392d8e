//! One function per command: simulate, analyze, ratio curve, α calibration, area fits.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::detector::{
    remove_smear, simulate_exposure, simulate_stack, stack_metadata, BpfHeader, BpfReader, BpfWriter,
    ExposureModel, Frame, StackSummary,
};
use crate::error::{invalid, Error, Result};
use crate::measure::{analyze_frames, analyze_frames_null, peak_lag_pixels, run_batches, BatchRun};
use crate::metrics::{
    calibrate_alpha, default_alpha_grid, fit_gaussian_variance, ratio_curve, AlphaCalibration, FitKind,
    GaussianFit, RatioCurve, XiMeasurement,
};
use crate::optics::SlmMask;
use crate::rng::{stream_rng, Stream};

pub fn run_ratio_curve(cfg: &ExperimentConfig) -> Result<RatioCurve> {
    let template = cfg.template().map_err(|e| e.in_stage("configure"))?;
    ratio_curve(&template, &cfg.task.separations_um, &cfg.plan(), &cfg.analysis()).map_err(|e| e.in_stage("ratio-curve"))
}

pub fn run_calibration(cfg: &ExperimentConfig) -> Result<AlphaCalibration> {
    let template = cfg.template().map_err(|e| e.in_stage("configure"))?;
    calibrate_alpha(
        &template,
        cfg.task.calibration_period_um * 1e-3,
        &default_alpha_grid(cfg.task.alpha_points),
        cfg.task.planted_alpha_rad,
        &cfg.plan(),
        &cfg.analysis(),
    )
    .map_err(|e| e.in_stage("calibrate-alpha"))
}

/// Write `cfg.stack_frames()` exposures of the configured mask to a BPF1 file.
pub fn simulate_to_file(cfg: &ExperimentConfig, path: &Path) -> Result<(StackSummary, String)> {
    let model = cfg
        .template()
        .and_then(|t| t.model(cfg.mask.clone()))
        .map_err(|e| e.in_stage("configure"))?;
    let frames = cfg.stack_frames();
    let (nx, ny) = cfg.optics.roi;
    let header = BpfHeader {
        width: nx as u32,
        height: ny as u32,
        frame_count: u32::try_from(frames).map_err(|_| invalid("too many frames for one stack"))?,
        metadata: stack_metadata(&model, 0),
    };
    let mut writer = BpfWriter::create(path, header)?;
    let summary = simulate_stack(&model, 0, frames, &mut writer).map_err(|e| e.in_stage("simulate"))?;
    let hash = writer.finish()?;
    Ok((summary, hash))
}

/// Correlation analysis of a recorded stack.
#[derive(Debug, Clone)]
pub struct StackAnalysis {
    pub header: BpfHeader,
    pub run: BatchRun,
    /// ξ at δ = 0 followed by ξ at +Δx/2 for each non-zero configured separation.
    pub xi: Vec<(f64, XiMeasurement)>,
    pub shuffled: bool,
}

impl StackAnalysis {
    pub fn xi_report(&self) -> String {
        let mut s = String::from("delta_x_um,center_dx,center_dy,metric,xi,xi_err,batches\n");
        for (dx, m) in &self.xi {
            let _ = writeln!(
                s,
                "{dx:.6},{},{},{},{:.9e},{:.9e},{}",
                m.center.0,
                m.center.1,
                m.metric.name(),
                m.mean,
                m.std_error,
                m.per_batch.len()
            );
        }
        s
    }
}

/// Run the correlation pipeline and ξ extraction on a BPF1 stack. With
/// `shuffle`, the shuffled-frame null is computed instead (see
/// [`analyze_frames_null`]); it should show no correlation peak.
pub fn analyze_file(path: &Path, cfg: &ExperimentConfig, shuffle: bool) -> Result<StackAnalysis> {
    let mut reader = BpfReader::open(path)?;
    let header = reader.header().clone();
    let roi = (header.width as usize, header.height as usize);
    let offset = header
        .metadata
        .get("detector.bias")
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap_or(cfg.detector.bias);
    let plan = cfg.plan();
    let analysis = cfg.analysis();
    analysis
        .window
        .check(roi.0, roi.1)
        .map_err(|e| e.in_stage("analyze"))?;
    if (header.frame_count as u64) < plan.total_frames() {
        return Err(Error::InsufficientFrames {
            needed: plan.total_frames(),
            got: header.frame_count as u64,
        });
    }
    let (mut run, hash) = if shuffle {
        let frames: Vec<Frame> = reader.by_ref().collect::<Result<_>>()?;
        let hash = reader.source_hash();
        let mut rng = stream_rng(cfg.source.seed, 0, Stream::Shuffle);
        let run = analyze_frames_null(&frames, roi, offset, &plan, &analysis, &mut rng)?;
        (run, hash)
    } else {
        let run = analyze_frames(reader.by_ref(), roi, offset, &plan, &analysis)?;
        for f in reader.by_ref() {
            f?;
        }
        (run, reader.source_hash())
    };
    run.combined.source_hash = hash;
    let optics = cfg.optics.clone().with_roi(roi.0, roi.1);
    let mut xi = vec![(0.0, run.xi((0, 0), &analysis).map_err(|e| e.in_stage("xi"))?)];
    for &dx in cfg.task.separations_um.iter().filter(|&&d| d > 0.0) {
        let c = peak_lag_pixels(dx * 1e-3, &optics).round() as i64;
        xi.push((dx, run.xi((c, 0), &analysis).map_err(|e| e.in_stage("xi"))?));
    }
    Ok(StackAnalysis {
        header,
        run,
        xi,
        shuffled: shuffle,
    })
}

/// Mean offset-subtracted, smear-corrected frame over `frames` exposures.
pub fn mean_intensity(model: &ExposureModel, frames: u64) -> Array2<f64> {
    let (nx, ny) = model.source.optics.roi;
    // integer sums, so the parallel reduction order does not matter
    let sum = (0..frames)
        .into_par_iter()
        .map(|i| simulate_exposure(model, i).0.data.iter().map(|&v| v as u64).collect::<Vec<u64>>())
        .reduce(
            || vec![0u64; nx * ny],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut mean: Vec<f64> = sum
        .iter()
        .map(|&s| s as f64 / frames as f64 - model.detector.bias)
        .collect();
    remove_smear(&mut mean, nx, ny, model.detector.smear);
    Array2::from_shape_vec((ny, nx), mean).expect("consistent shape")
}

#[derive(Debug, Clone)]
pub struct AreaFits {
    /// Fit of the flat-mask correlation image; variance estimates A_e.
    pub correlation: GaussianFit,
    /// Fit of the mean intensity image; variance estimates Σ.
    pub intensity: GaussianFit,
    pub expected_a_e: f64,
    pub expected_sigma: f64,
}

impl AreaFits {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[correlation]");
        s.push_str(&self.correlation.report());
        let _ = writeln!(s, "expected_mm2 = {:.6e}", self.expected_a_e);
        let _ = writeln!(s, "relative_error = {:.6}", self.correlation.variance_mm2 / self.expected_a_e - 1.0);
        let _ = writeln!(s, "\n[intensity]");
        s.push_str(&self.intensity.report());
        let _ = writeln!(s, "expected_mm2 = {:.6e}", self.expected_sigma);
        let _ = writeln!(s, "relative_error = {:.6}", self.intensity.variance_mm2 / self.expected_sigma - 1.0);
        s
    }
}

/// Gaussian fits of the flat-mask correlation image (configured ROI, per-overlap
/// normalised) and of the mean intensity over a `fit_roi` square.
pub fn fit_areas(cfg: &ExperimentConfig) -> Result<AreaFits> {
    let template = cfg.template().map_err(|e| e.in_stage("configure"))?;
    let model = template.model(SlmMask::Flat)?;
    let analysis = cfg.analysis().with_overlap_normalize(true);
    let run = run_batches(&model, &cfg.plan(), &analysis).map_err(|e| e.in_stage("correlate"))?;
    let correlation = fit_gaussian_variance(run.combined.values.view(), FitKind::Correlation, &cfg.optics)
        .map_err(|e| e.in_stage("fit-correlation"))?;

    let wide = cfg.optics.clone().with_roi(cfg.task.fit_roi, cfg.task.fit_roi);
    let mut wide_template = template.clone();
    wide_template.source.optics = wide.clone();
    let wide_model = wide_template.model(SlmMask::Flat)?;
    let image = mean_intensity(&wide_model, cfg.task.fit_frames);
    let intensity =
        fit_gaussian_variance(image.view(), FitKind::Intensity, &wide).map_err(|e| e.in_stage("fit-intensity"))?;
    Ok(AreaFits {
        correlation,
        intensity,
        expected_a_e: cfg.optics.entanglement_area_mm2,
        expected_sigma: cfg.optics.beam_area_mm2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::parse_config;

    fn small() -> ExperimentConfig {
        parse_config(
            "[optics]\nroi = 24x24\n[source]\npair_rate_hz = 2e5\nseed = 4\n[task]\nbatches = 2\nframes_per_batch = 30\nlag_window = 10\n",
        )
        .unwrap()
        .config
    }

    #[test]
    fn simulate_then_analyze_matches_in_memory() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bpf");
        let (summary, hash) = simulate_to_file(&cfg, &path).unwrap();
        assert_eq!(summary.frames, 60);
        let a = analyze_file(&path, &cfg, false).unwrap();
        assert_eq!(a.run.combined.source_hash.as_deref(), Some(hash.as_str()));
        let model = cfg.template().unwrap().model(SlmMask::Flat).unwrap();
        let direct = run_batches(&model, &cfg.plan(), &cfg.analysis()).unwrap();
        let scale = direct.combined.max_abs();
        let diff = (&a.run.combined.values - &direct.combined.values)
            .mapv(f64::abs)
            .fold(0.0f64, |m, &v| m.max(v));
        assert!(diff <= 1e-12 * scale);
        assert_eq!(a.xi[0].1.per_batch, direct.xi((0, 0), &cfg.analysis()).unwrap().per_batch);
    }

    #[test]
    fn truncated_stack_names_counts() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bpf");
        simulate_to_file(&cfg, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 24 * 24 * 2 * 5 - 7]).unwrap();
        let e = analyze_file(&path, &cfg, false).unwrap_err();
        assert!(matches!(e, Error::Truncated { expected: 60, actual: 54, .. }), "{e:?}");
    }

    #[test]
    fn remove_smear_restores_mean_level() {
        let mut cfg = small();
        cfg.detector.smear = 0.01;
        let model = cfg.template().unwrap().model(SlmMask::Flat).unwrap();
        let img = mean_intensity(&model, 50);
        assert_eq!(img.dim(), (24, 24));
        assert!(img.iter().all(|v| v.is_finite()));
    }
}
