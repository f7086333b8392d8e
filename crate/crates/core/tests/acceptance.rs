//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p biphoton-core --test acceptance`. Criteria can be
//! selected by number: `cargo test --test acceptance -- 2 7`.

use std::f64::consts::PI;
use std::fmt::Display;
use std::time::Instant;

use biphoton_core::detector::{simulate_stack, Frame};
use biphoton_core::experiment::{
    fit_areas, preset_configs, run_calibration, run_preset, run_ratio_curve, ExperimentConfig, PresetId,
    PresetOptions, Scale,
};
use biphoton_core::g2::{
    accumulate_frames, accumulate_range, g2_full, AccumulatorParams, Interpolation, LagWindow, XcorrMode,
};
use biphoton_core::measure::{
    peak_lag_pixels, run_batches, signal_photons_per_pixel, AnalysisSpec, BatchPlan, RunTemplate,
};
use biphoton_core::medium::{MediumElement, MediumSpec};
use biphoton_core::metrics::{batch_ratios, fit_peak_pair, paired_difference, PeakMetric, RatioCurve, XiMeasurement};
use biphoton_core::optics::{
    grating_coeff, peak_separation, period_for_separation, shaped_correlation, OpticsConfig, SamplingSpec, SlmMask,
};
use biphoton_core::sampler::SamplerMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion.
struct Verdict {
    pass: bool,
    detail: String,
    /// Failure caused by the machine rather than the code (reported, not fatal).
    environmental: bool,
}

impl Verdict {
    fn new(pass: bool, detail: impl Display) -> Self {
        Verdict {
            pass,
            detail: detail.to_string(),
            environmental: false,
        }
    }
}

type Check = fn() -> Verdict;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks: [(u32, &str, Check); 14] = [
        (1, "Fourier coefficient c1", c1_fourier_coefficient),
        (2, "plateau oracle consistency", c2_plateau),
        (3, "peak positions over a decade of periods", c3_peak_positions),
        (4, "estimator oracles", c4_estimators),
        (5, "accidental rejection", c5_accidentals),
        (6, "robustness trio", c6_robustness),
        (7, "ETPA signature", c7_etpa),
        (8, "entanglement-area effect", c8_area_effect),
        (9, "area fits", c9_area_fits),
        (10, "alpha calibration", c10_alpha),
        (11, "half-plane phase", c11_half_plane),
        (12, "power and ROI scans", c12_scans),
        (13, "performance", c13_performance),
        (14, "determinism", c14_determinism),
    ];
    let mut fatal = Vec::new();
    for (n, name, check) in checks {
        if !args.is_empty() && !args.iter().any(|a| a == &n.to_string()) {
            continue;
        }
        let t = Instant::now();
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {n:>2} {name}: {} [{:.1} s]", v.detail, t.elapsed().as_secs_f64());
        if !v.pass && !v.environmental {
            fatal.push(n);
        }
    }
    if !fatal.is_empty() {
        eprintln!("failed criteria: {fatal:?}");
        std::process::exit(1);
    }
}

fn c1_fourier_coefficient() -> Verdict {
    let c1 = grating_coeff(1);
    let cm1 = grating_coeff(-1);
    let pass = (c1 - 1.0 / PI).abs() <= 1e-12 && (cm1 - c1).abs() <= 1e-15 && (c1 - 0.31831).abs() < 5e-6;
    Verdict::new(pass, format!("c1 = {c1:.12}, c-1 = {cm1:.12}"))
}

/// Oracle ratio of window sums: the grating window at the rounded peak lag
/// over the flat window at zero lag. A fraction `1 − eta` of pairs is unshaped
/// and contributes the flat field at the grating window.
fn oracle_window_ratio(cfg: &OpticsConfig, delta_x_um: f64, half_width: usize, eta: f64) -> f64 {
    let grid = SamplingSpec::for_envelope(cfg.slm_envelope_area_mm2, SamplingSpec::DEFAULT_SIZE);
    let px = cfg.sample_pixel_mm();
    let reach = (half_width as f64 + 0.5) * px;
    let window_sum = |mask: &SlmMask, cx: f64| -> f64 {
        let f = shaped_correlation(mask, cfg, &grid).unwrap();
        let n = f.values.nrows();
        let lag = |i: usize| (i as f64 - f.center as f64) * f.spacing_mm;
        let mut s = 0.0;
        for r in 0..n {
            if lag(r).abs() > reach {
                continue;
            }
            for c in 0..n {
                if (lag(c) - cx).abs() <= reach {
                    s += f.values[[r, c]];
                }
            }
        }
        s
    };
    let period = period_for_separation(delta_x_um * 1e-3, cfg.wavelength_nm, cfg.focal_length_mm);
    let centre = peak_lag_pixels(delta_x_um * 1e-3, cfg).round() * px;
    let flat0 = window_sum(&SlmMask::Flat, 0.0);
    (eta * window_sum(&SlmMask::grating(period), centre) + (1.0 - eta) * window_sum(&SlmMask::Flat, centre)) / flat0
}

fn plateau_points(cfg: &ExperimentConfig) -> Vec<f64> {
    let unit = cfg.optics.entanglement_area_mm2.sqrt() * 1e3;
    cfg.task.separations_um.iter().cloned().filter(|&d| d >= 5.0 * unit - 0.5).collect()
}

fn mean_ratio(curve: &RatioCurve, at: &[f64]) -> (f64, f64) {
    let pts: Vec<_> = at.iter().map(|&d| curve.point_at(d).unwrap()).collect();
    let n = pts.len() as f64;
    (
        pts.iter().map(|p| p.ratio).sum::<f64>() / n,
        pts.iter().map(|p| p.ratio_err).sum::<f64>() / n,
    )
}

fn c2_plateau() -> Verdict {
    let mut cfg = preset_configs(PresetId::Fig3a, 21, Scale::Desk).remove(0).1;
    cfg.task.frames_per_batch = 2000;
    let at = plateau_points(&cfg);
    let w = cfg.analysis().half_width;
    let n = at.len() as f64;
    let oracle: f64 = at.iter().map(|&d| oracle_window_ratio(&cfg.optics, d, w, 1.0)).sum::<f64>() / n;
    let eta = cfg.source.slm_efficiency;
    let oracle_eta: f64 = at.iter().map(|&d| oracle_window_ratio(&cfg.optics, d, w, eta)).sum::<f64>() / n;

    let mut ideal = cfg.clone();
    ideal.source.slm_efficiency = 1.0;
    let (r1, e1) = mean_ratio(&run_ratio_curve(&ideal).unwrap(), &at);
    let (rt, et) = mean_ratio(&run_ratio_curve(&cfg).unwrap(), &at);
    let rel = r1 / oracle - 1.0;
    let pass = rel.abs() <= 0.05 && (rt - 0.25).abs() <= 0.02;
    Verdict::new(
        pass,
        format!(
            "eta = 1: plateau {r1:.4} ± {e1:.4} vs oracle {oracle:.4} ({:+.1}%); eta = {eta}: plateau {rt:.4} ± {et:.4}, oracle {oracle_eta:.4} (target 0.25 ± 0.02)",
            100.0 * rel
        ),
    )
}

fn c3_peak_positions() -> Verdict {
    // long focal length and 3.5× demagnification: periods 1.3–13 mm put the
    // first orders between about 7 and 70 lag pixels
    let mut optics = OpticsConfig::config1();
    optics.focal_length_mm = 3000.0;
    optics.magnification /= 3.5;
    let optics = optics.with_consistent_envelope().with_roi(192, 192);
    let mut t = RunTemplate::new(optics.clone(), 31);
    // the orders are resolved at every period, where the analytic sampler is exact
    t.sampler_mode = SamplerMode::Analytic { n_max: 99 };
    let mut analysis = AnalysisSpec::for_optics(&optics).with_overlap_normalize(true);
    analysis.window = LagWindow::square(80);
    let plan = BatchPlan::new(2, 1000);
    let var = optics.correlation_sigma_pixels().powi(2);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for period in [1.3, 2.0, 3.5, 6.5, 13.0] {
        let expected = 2.0 * peak_lag_pixels(peak_separation(period, optics.wavelength_nm, optics.focal_length_mm), &optics);
        let run = run_batches(&t.model(SlmMask::grating(period)).unwrap(), &plan, &analysis).unwrap();
        let measured = match fit_peak_pair(&run.combined, expected / 2.0, var, analysis.half_width) {
            Ok(f) => 2.0 * f.side_center,
            Err(_) => f64::NAN,
        };
        let err = (measured - expected).abs();
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        parts.push(format!("{period} mm: {measured:.2}/{expected:.2}"));
    }
    Verdict::new(worst <= 1.0, format!("separation measured/expected px: {}; worst {worst:.2} px", parts.join(", ")))
}

fn max_abs_diff(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn c4_estimators() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let frames: Vec<Frame> = (0..100).map(|m| Frame::from_fn(16, 16, m, |_, _| rng.random_range(0..4000))).collect();
    let window = LagWindow::square(15);
    let params = AccumulatorParams::new((16, 16), window).with_offset(100.0);
    let fast = accumulate_frames(params.with_mode(XcorrMode::Fast), &frames).unwrap().finalize().unwrap().values;
    let naive = accumulate_frames(params.with_mode(XcorrMode::Naive), &frames).unwrap().finalize().unwrap().values;
    let full = g2_full(&frames, 100.0).unwrap().minus_projection(window).unwrap();
    let scale = naive.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d1 = max_abs_diff(&fast, &naive) / scale;
    let d2 = max_abs_diff(&full, &naive) / scale;
    Verdict::new(d1 <= 1e-9 && d2 <= 1e-9, format!("fast−naive {d1:.1e}, 4D−naive {d2:.1e} (relative to max |Γ|)"))
}

fn c5_accidentals() -> Verdict {
    // every pair is removed before the camera; stray photons at the signal level remain
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..10 {
        let mut t = RunTemplate::new(OpticsConfig::config1().with_roi(64, 64), 500 + seed);
        t.detector.stray_rate = signal_photons_per_pixel(&t.source);
        t.medium = MediumSpec::single(MediumElement::LinearLoss { transmission: 0.0 });
        let mut analysis = AnalysisSpec::for_optics(t.optics()).with_metric(PeakMetric::Area);
        analysis.interpolation = Interpolation::FullColumn;
        let run = run_batches(&t.model(SlmMask::Flat).unwrap(), &BatchPlan::new(20, 100), &analysis).unwrap();
        worst = worst.max(run.xi((0, 0), &analysis).unwrap().snr());
    }
    Verdict::new(worst < 4.0, format!("largest z at zero lag over 10 seeds: {worst:.2}"))
}

fn c6_robustness() -> Verdict {
    let configs = preset_configs(PresetId::Fig3b, 61, Scale::Desk);
    let curves: Vec<(String, RatioCurve)> =
        configs.iter().map(|(n, c)| (n.clone(), run_ratio_curve(c).unwrap())).collect();
    let air = &curves[0].1;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, curve) in &curves[1..] {
        let mut worst = 0.0f64;
        for (a, p) in air.points.iter().zip(&curve.points).filter(|(a, _)| a.delta_x_um > 0.0) {
            let sigma = (a.ratio_err.powi(2) + p.ratio_err.powi(2)).sqrt();
            worst = worst.max((p.ratio - a.ratio).abs() / sigma);
        }
        pass &= worst <= 2.0;
        parts.push(format!("{name} worst {worst:.2}σ"));
    }
    Verdict::new(pass, parts.join(", "))
}

/// Per-batch ratio at the largest separation.
fn last_batch_ratios(curve: &RatioCurve) -> Vec<f64> {
    batch_ratios(&curve.last().xi.per_batch, &curve.xi0.per_batch).unwrap()
}

fn last_only(mut cfg: ExperimentConfig) -> ExperimentConfig {
    let last = *cfg.task.separations_um.last().unwrap();
    cfg.task.separations_um = vec![0.0, last];
    cfg
}

fn c7_etpa() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in [71, 72, 73] {
        // 150² ROI: the weak absorber's lift is about 1σ on the 64² desk ROI
        let mut configs = preset_configs(PresetId::Fig3a, seed, Scale::Paper);
        for (_, c) in &mut configs {
            c.task.frames_per_batch = 2500;
        }
        let pick = |name: &str| {
            let cfg = configs.iter().find(|(n, _)| n == name).unwrap().1.clone();
            last_batch_ratios(&run_ratio_curve(&last_only(cfg)).unwrap())
        };
        let (air, rh6g, cdse) = (pick("air"), pick("rh6g"), pick("cdse"));
        let (d1, s1) = paired_difference(&rh6g, &air).unwrap();
        let (d2, s2) = paired_difference(&cdse, &rh6g).unwrap();
        let (z1, z2) = (d1 / s1, d2 / s2);
        pass &= z1 >= 3.0 && z2 >= 3.0;
        parts.push(format!("seed {seed}: rh6g−air {z1:.1}σ, cdse−rh6g {z2:.1}σ"));
    }
    Verdict::new(pass, parts.join("; "))
}

fn c8_area_effect() -> Verdict {
    let configs = preset_configs(PresetId::Fig4a, 81, Scale::Desk);
    let lift = |prefix: &str| -> (f64, f64) {
        let get = |suffix: &str| {
            let cfg = configs.iter().find(|(n, _)| *n == format!("{prefix}_{suffix}")).unwrap().1.clone();
            last_batch_ratios(&run_ratio_curve(&last_only(cfg)).unwrap())
        };
        paired_difference(&get("etpa"), &get("air")).unwrap()
    };
    let (l1, s1) = lift("config1");
    let (l2, s2) = lift("config2");
    let z = (l2 - l1) / (s1.powi(2) + s2.powi(2)).sqrt();
    Verdict::new(z >= 3.0, format!("lift config1 {l1:.4} ± {s1:.4}, config2 {l2:.4} ± {s2:.4}; difference {z:.1}σ"))
}

fn c9_area_fits() -> Verdict {
    let expected = [("config1", 1.72e-3, 1.92), ("config2", 69.2e-6, 0.0432)];
    let mut pass = true;
    let mut parts = Vec::new();
    for ((name, cfg), (_, a_e, sigma)) in preset_configs(PresetId::FigS2, 91, Scale::Desk).iter().zip(expected) {
        let f = fit_areas(cfg).unwrap();
        let (ra, rs) = (f.correlation.variance_mm2 / a_e, f.intensity.variance_mm2 / sigma);
        pass &= (ra - 1.0).abs() <= 0.1 && (rs - 1.0).abs() <= 0.1;
        parts.push(format!("{name}: A_e {:.4e} ({ra:.3}), Sigma {:.4e} ({rs:.3})", f.correlation.variance_mm2, f.intensity.variance_mm2));
    }
    Verdict::new(pass, parts.join("; "))
}

fn c10_alpha() -> Verdict {
    let cfg = preset_configs(PresetId::FigS4, 101, Scale::Desk).remove(0).1;
    let planted = cfg.task.planted_alpha_rad;
    let cal = run_calibration(&cfg).unwrap();
    let step = cal.table[1].0 - cal.table[0].0;
    let min = cal.table.iter().map(|(_, x)| x.mean).fold(f64::INFINITY, f64::min);
    let at_best = cal.table[cal.best_index].1.mean;
    let pass = (cal.best_alpha - planted).abs() <= step + 1e-12 && at_best == min;
    Verdict::new(pass, format!("planted {planted:.3}, recovered {:.3}, grid step {step:.3}", cal.best_alpha))
}

fn c11_half_plane() -> Verdict {
    let configs = preset_configs(PresetId::FigS5, 111, Scale::Desk);
    let mut xs: Vec<(f64, XiMeasurement)> = Vec::new();
    for (_, cfg) in &configs {
        let model = cfg.template().unwrap().model(cfg.mask.clone()).unwrap();
        let analysis = cfg.analysis();
        let phase = match cfg.mask {
            SlmMask::HalfPlane { phase_rad } => phase_rad,
            _ => unreachable!(),
        };
        xs.push((phase, run_batches(&model, &cfg.plan(), &analysis).unwrap().xi((0, 0), &analysis).unwrap()));
    }
    let mut worst = 0.0f64;
    for (i, (_, a)) in xs.iter().enumerate() {
        for (_, b) in &xs[i + 1..] {
            worst = worst.max((a.mean - b.mean).abs() / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt().max(f64::MIN_POSITIVE));
        }
    }
    // the shaped field itself: half-plane against flat
    let optics = &configs[0].1.optics;
    let grid = SamplingSpec::for_envelope(optics.slm_envelope_area_mm2, SamplingSpec::DEFAULT_SIZE);
    let flat = shaped_correlation(&SlmMask::Flat, optics, &grid).unwrap();
    let peak = flat.values.iter().cloned().fold(0.0, f64::max);
    let field = xs
        .iter()
        .map(|(phase_rad, _)| {
            let f = shaped_correlation(&SlmMask::HalfPlane { phase_rad: *phase_rad }, optics, &grid).unwrap();
            (&f.values - &flat.values).iter().fold(0.0f64, |m, v| m.max(v.abs())) / peak
        })
        .fold(0.0f64, f64::max);
    let spread: Vec<String> = xs.iter().map(|(p, x)| format!("{p:.3}: {:.4e}", x.mean)).collect();
    Verdict::new(
        worst <= 2.0,
        format!("xi0 by phase {}; largest pairwise gap {worst:.2}σ; oracle field difference {field:.1e}", spread.join(", ")),
    )
}

fn c12_scans() -> Verdict {
    let flux: Vec<RatioCurve> =
        preset_configs(PresetId::Fig3c, 121, Scale::Desk).iter().map(|(_, c)| run_ratio_curve(c).unwrap()).collect();
    let at40: Vec<_> = flux.iter().map(|c| c.last().clone()).collect();
    let mut flux_worst = 0.0f64;
    for (i, a) in at40.iter().enumerate() {
        for b in &at40[i + 1..] {
            flux_worst = flux_worst.max((a.ratio - b.ratio).abs() / (a.ratio_err.powi(2) + b.ratio_err.powi(2)).sqrt());
        }
    }

    let rois: Vec<RatioCurve> =
        preset_configs(PresetId::Fig3d, 122, Scale::Desk).iter().map(|(_, c)| run_ratio_curve(c).unwrap()).collect();
    let mut roi_worst = 0.0f64;
    for (i, a) in rois.iter().enumerate() {
        for b in &rois[i + 1..] {
            for (p, q) in a.points.iter().zip(&b.points).filter(|(p, _)| p.delta_x_um > 0.0) {
                roi_worst = roi_worst.max((p.ratio - q.ratio).abs() / (p.ratio_err.powi(2) + q.ratio_err.powi(2)).sqrt());
            }
        }
    }
    let mean_err: Vec<f64> = rois
        .iter()
        .map(|c| {
            let pts: Vec<_> = c.points.iter().filter(|p| p.delta_x_um > 0.0).collect();
            pts.iter().map(|p| p.ratio_err).sum::<f64>() / pts.len() as f64
        })
        .collect();
    let shrinking = mean_err.windows(2).all(|w| w[1] < w[0]);
    let pass = flux_worst <= 2.0 && roi_worst <= 2.0 && shrinking;
    let ratios: Vec<String> = at40.iter().map(|p| format!("{:.4} ± {:.4}", p.ratio, p.ratio_err)).collect();
    Verdict::new(
        pass,
        format!(
            "ratio at 40 µm by flux [{}], worst {flux_worst:.2}σ; ROI curves worst {roi_worst:.2}σ, mean errors {mean_err:.4?}",
            ratios.join(", ")
        ),
    )
}

fn c13_performance() -> Verdict {
    let t = RunTemplate::new(OpticsConfig::config1(), 131);
    let model = t.model(SlmMask::Flat).unwrap();
    let mut frames: Vec<Frame> = Vec::new();
    simulate_stack(&model, 0, 400, &mut frames).unwrap();
    let params = AccumulatorParams::new((150, 150), LagWindow::square(64)).with_offset(t.detector.bias);
    let start = Instant::now();
    let single = accumulate_frames(params, &frames).unwrap();
    let fps = frames.len() as f64 / start.elapsed().as_secs_f64();

    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let start = Instant::now();
        let acc = pool.install(|| accumulate_range(params, 0, 400, 100, |i| frames[i as usize].clone())).unwrap();
        (acc.finalize().unwrap().values, start.elapsed().as_secs_f64())
    };
    let (one, t1) = run(1);
    let (four, t4) = run(4);
    let reference = single.finalize().unwrap().values;
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let identical = max_abs_diff(&one, &four) <= 1e-12 * scale && max_abs_diff(&one, &reference) <= 1e-12 * scale;
    let speedup = t1 / t4;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let fast_enough = fps >= 100.0;
    let scaled = speedup >= 3.0;
    let mut v = Verdict::new(
        fast_enough && identical && scaled,
        format!(
            "{fps:.0} frames/s single thread (150², 129² lags); 4-way speedup {speedup:.2} on {cores} core(s); merged results identical: {identical}"
        ),
    );
    // the speedup needs four cores; on fewer it is reported but not fatal
    v.environmental = fast_enough && identical && !scaled && cores < 4;
    v
}

fn c14_determinism() -> Verdict {
    let mut pass = true;
    let mut compared = 0;
    for id in [PresetId::Fig3a, PresetId::Fig3c, PresetId::FigS5] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let opts = PresetOptions::new(Scale::Smoke);
        let out = run_preset(id, 141, a.path(), &opts).unwrap();
        run_preset(id, 141, b.path(), &opts).unwrap();
        for name in out.files.iter().filter(|f| f.ends_with(".csv")) {
            compared += 1;
            pass &= std::fs::read(a.path().join(name)).unwrap() == std::fs::read(b.path().join(name)).unwrap();
        }
    }
    Verdict::new(pass && compared > 0, format!("{compared} CSV files compared byte for byte"))
}
