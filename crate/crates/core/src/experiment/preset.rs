//! Named experiment presets. Each writes its configs, results and a manifest
//! into one directory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, OpticsPreset};
use super::output::OutputDir;
use super::tasks::{fit_areas, run_calibration, run_ratio_curve, simulate_to_file};
use crate::constants::{ETPA_STRENGTH_CDSE, ETPA_STRENGTH_RH6G, TUNED_SLM_EFFICIENCY};
use crate::error::{invalid, Result};
use crate::measure::{run_batches, signal_photons_per_pixel};
use crate::metrics::{plateau, PeakMetric, RatioCurve};
use crate::optics::{period_for_separation, shaped_correlation, OpticsConfig, SamplingSpec, SlmMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetId {
    Fig2b,
    Fig3a,
    Fig3b,
    Fig3c,
    Fig3d,
    Fig4a,
    FigS2,
    FigS4,
    FigS5,
}

impl PresetId {
    pub const ALL: [PresetId; 9] = [
        PresetId::Fig2b,
        PresetId::Fig3a,
        PresetId::Fig3b,
        PresetId::Fig3c,
        PresetId::Fig3d,
        PresetId::Fig4a,
        PresetId::FigS2,
        PresetId::FigS4,
        PresetId::FigS5,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PresetId::Fig2b => "fig2b",
            PresetId::Fig3a => "fig3a",
            PresetId::Fig3b => "fig3b",
            PresetId::Fig3c => "fig3c",
            PresetId::Fig3d => "fig3d",
            PresetId::Fig4a => "fig4a",
            PresetId::FigS2 => "figS2",
            PresetId::FigS4 => "figS4",
            PresetId::FigS5 => "figS5",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(s))
    }
}

/// Frame budget and ROI of a preset run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// 32² ROI, 2 × 250 frames: checks that everything runs.
    Smoke,
    /// 64² ROI, 4 × 1000 frames.
    Desk,
    /// 150² ROI, 4 × 10000 frames.
    Paper,
}

impl Scale {
    pub fn name(&self) -> &'static str {
        match self {
            Scale::Smoke => "smoke",
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Scale::Smoke, Scale::Desk, Scale::Paper]
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
    }

    fn roi(&self) -> usize {
        match self {
            Scale::Smoke => 32,
            Scale::Desk => 64,
            Scale::Paper => 150,
        }
    }

    fn budget(&self) -> (usize, u64) {
        match self {
            Scale::Smoke => (2, 250),
            Scale::Desk => (4, 1000),
            Scale::Paper => (4, 10_000),
        }
    }

    /// Separations in units of √A_e.
    fn multiples(&self) -> Vec<f64> {
        match self {
            Scale::Smoke => vec![0.0, 1.5, 3.0],
            _ => (0..=6).map(f64::from).collect(),
        }
    }
}

/// Separation of the flux scan.
pub const FIG3C_SEPARATION_UM: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetOptions {
    pub scale: Scale,
    /// Also write one BPF1 stack per config, with that config's mask.
    pub stacks: bool,
}

impl PresetOptions {
    pub fn new(scale: Scale) -> Self {
        PresetOptions { scale, stacks: false }
    }
}

#[derive(Debug, Clone)]
pub struct PresetOutcome {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub files: Vec<String>,
    pub summary: String,
}

fn separations(optics: &OpticsConfig, scale: Scale) -> Vec<f64> {
    let unit = optics.entanglement_area_mm2.sqrt() * 1e3;
    scale.multiples().iter().map(|k| (k * unit * 10.0).round() / 10.0).collect()
}

/// Shared settings for every preset run.
pub fn base_config(preset: OpticsPreset, seed: u64, scale: Scale) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(preset);
    let n = scale.roi();
    cfg.optics = cfg.optics.clone().with_roi(n, n);
    cfg.source.seed = seed;
    cfg.source.slm_efficiency = TUNED_SLM_EFFICIENCY;
    let (b, k) = scale.budget();
    cfg.task.batches = b;
    cfg.task.frames_per_batch = k;
    cfg.task.metric = PeakMetric::Area;
    cfg.task.overlap_normalize = true;
    cfg.task.separations_um = separations(&cfg.optics, scale);
    cfg
}

/// The named configs a preset runs, in output order.
pub fn preset_configs(id: PresetId, seed: u64, scale: Scale) -> Vec<(String, ExperimentConfig)> {
    let base = base_config(OpticsPreset::Config1, seed, scale);
    let named = |name: &str, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = base.clone();
        f(&mut c);
        (name.to_string(), c)
    };
    let unit_um = base.optics.entanglement_area_mm2.sqrt() * 1e3;
    match id {
        PresetId::Fig2b => {
            let mut out = vec![named("flat", &|_| {})];
            let ks: &[f64] = if scale == Scale::Smoke { &[1.5, 3.0] } else { &[3.0, 6.0] };
            for &k in ks {
                let dx = (k * unit_um * 10.0).round() / 10.0;
                let o = &base.optics;
                let period = period_for_separation(dx * 1e-3, o.wavelength_nm, o.focal_length_mm);
                out.push(named(&format!("grating_{k}"), &|c| c.mask = SlmMask::grating(period)));
            }
            out
        }
        PresetId::Fig3a => vec![
            named("air", &|_| {}),
            // no two-photon resonance at 814 nm: identical to air
            named("hexane", &|_| {}),
            named("rh6g", &|c| c.medium.etpa_strength = Some(ETPA_STRENGTH_RH6G)),
            named("cdse", &|c| c.medium.etpa_strength = Some(ETPA_STRENGTH_CDSE)),
        ],
        PresetId::Fig3b => {
            let stray = {
                let t = base.template().expect("preset configs are valid");
                signal_photons_per_pixel(&t.source)
            };
            vec![
                named("air", &|_| {}),
                named("loss", &|c| c.medium.loss_transmission = Some(0.5)),
                named("scatter", &|c| c.medium.scatter_probability = Some(0.5)),
                named("stray", &|c| c.detector.stray_rate = stray),
            ]
        }
        PresetId::Fig3c => [0.25, 0.5, 1.0]
            .iter()
            .map(|&s| {
                named(&format!("flux_{s}"), &|c| {
                    c.source.pair_rate_hz *= s;
                    c.task.separations_um = vec![0.0, FIG3C_SEPARATION_UM];
                })
            })
            .collect(),
        PresetId::Fig3d => {
            let rois: &[usize] = if scale == Scale::Smoke { &[32, 40, 48] } else { &[64, 100, 150] };
            rois.iter()
                .map(|&n| named(&format!("roi_{n}"), &|c| c.optics = c.optics.clone().with_roi(n, n)))
                .collect()
        }
        PresetId::Fig4a => {
            let kernel_um = OpticsConfig::config2().entanglement_area_mm2.sqrt() * 1e3;
            let mut out = Vec::new();
            for preset in [OpticsPreset::Config1, OpticsPreset::Config2] {
                let b = base_config(preset, seed, scale);
                let mut etpa = b.clone();
                etpa.medium.etpa_strength = Some(0.5);
                etpa.medium.etpa_kernel_um = Some((kernel_um * 100.0).round() / 100.0);
                out.push((format!("{}_air", preset.name()), b));
                out.push((format!("{}_etpa", preset.name()), etpa));
            }
            out
        }
        PresetId::FigS2 => [OpticsPreset::Config1, OpticsPreset::Config2]
            .into_iter()
            .map(|p| {
                let mut c = base_config(p, seed, scale);
                c.task.fit_frames = if scale == Scale::Smoke { 20 } else { 500 };
                (p.name().to_string(), c)
            })
            .collect(),
        PresetId::FigS4 => vec![named("alpha", &|c| {
            c.task.planted_alpha_rad = 0.2;
            c.task.separations_um = vec![0.0];
            // the zero-order minimum needs more frames than a smoke curve
            c.task.frames_per_batch = c.task.frames_per_batch.max(1000);
        })],
        PresetId::FigS5 => [0.0, PI / 8.0, PI / 4.0, PI / 2.0]
            .iter()
            .enumerate()
            .map(|(i, &phase)| {
                named(&format!("phase_{i}"), &|c| {
                    c.mask = SlmMask::HalfPlane { phase_rad: phase };
                    c.task.separations_um = vec![0.0];
                })
            })
            .collect(),
    }
}

fn curve_summary(name: &str, curve: &RatioCurve, plateau_from_um: f64) -> String {
    let mut s = format!("{name}: xi0 = {:.6e} ± {:.2e}", curve.xi0.mean, curve.xi0.std_error);
    if let Some((r, e)) = plateau(curve, plateau_from_um) {
        let _ = write!(s, ", plateau = {r:.4} ± {e:.4}");
    }
    let flagged = curve.points.iter().filter(|p| !p.flags.is_empty()).count();
    let _ = writeln!(s, ", flagged points = {flagged}");
    s
}

/// Run a preset into `out`. Results depend only on `(id, seed, options)`.
pub fn run_preset(id: PresetId, seed: u64, out: &Path, options: &PresetOptions) -> Result<PresetOutcome> {
    let scale = options.scale;
    let mut dir = OutputDir::new(out)?;
    let configs = preset_configs(id, seed, scale);
    let mut summary = format!("preset = {}\nscale = {}\nseed = {seed}\n", id.name(), scale.name());
    for (name, cfg) in &configs {
        let mut c = cfg.clone();
        c.output_dir = out.to_path_buf();
        dir.write(&format!("{name}.ini"), c.serialize().as_bytes())?;
        if options.stacks {
            let file = format!("{name}.bpf");
            let (_, hash) = simulate_to_file(cfg, &out.join(&file))?;
            dir.record(&file, hash);
        }
    }
    match id {
        PresetId::Fig2b => fig2b(&configs, &mut dir, &mut summary)?,
        PresetId::Fig3c => {
            let mut csv = String::from("flux_scale,pair_rate_hz,delta_x_um,ratio,ratio_err,frames,flags\n");
            for ((name, cfg), scale_factor) in configs.iter().zip([0.25, 0.5, 1.0]) {
                let curve = run_ratio_curve(cfg)?;
                for p in &curve.points {
                    let _ = writeln!(
                        csv,
                        "{scale_factor},{},{},{:.9},{:.9},{},{}",
                        cfg.source.pair_rate_hz,
                        p.delta_x_um,
                        p.ratio,
                        p.ratio_err,
                        p.frames,
                        p.flags.join(";")
                    );
                }
                summary.push_str(&curve_summary(name, &curve, plateau_start(cfg)));
            }
            dir.write("fig3c.csv", csv.as_bytes())?;
        }
        PresetId::FigS2 => {
            let mut text = String::new();
            for (name, cfg) in &configs {
                let fits = fit_areas(cfg)?;
                let _ = writeln!(text, "# {name}");
                text.push_str(&fits.report());
                text.push('\n');
                let _ = writeln!(
                    summary,
                    "{name}: A_e fit/expected = {:.4}, Sigma fit/expected = {:.4}",
                    fits.correlation.variance_mm2 / fits.expected_a_e,
                    fits.intensity.variance_mm2 / fits.expected_sigma
                );
            }
            dir.write("fits.txt", text.as_bytes())?;
        }
        PresetId::FigS4 => {
            let (name, cfg) = &configs[0];
            let cal = run_calibration(cfg)?;
            dir.write(&format!("{name}.csv"), cal.to_csv().as_bytes())?;
            let _ = writeln!(
                summary,
                "planted alpha = {}, best alpha = {:.6}",
                cfg.task.planted_alpha_rad, cal.best_alpha
            );
        }
        PresetId::FigS5 => {
            let mut csv = String::from("phase_rad,xi0,xi0_err\n");
            for (_, cfg) in &configs {
                let model = cfg.template()?.model(cfg.mask.clone())?;
                let analysis = cfg.analysis();
                let xi = run_batches(&model, &cfg.plan(), &analysis)?.xi((0, 0), &analysis)?;
                let phase = match cfg.mask {
                    SlmMask::HalfPlane { phase_rad } => phase_rad,
                    _ => 0.0,
                };
                let _ = writeln!(csv, "{phase:.9},{:.9e},{:.9e}", xi.mean, xi.std_error);
                let _ = writeln!(summary, "phase {phase:.4}: xi(0) = {:.6e} ± {:.2e}", xi.mean, xi.std_error);
            }
            dir.write("figS5.csv", csv.as_bytes())?;
        }
        _ => {
            for (name, cfg) in &configs {
                let curve = run_ratio_curve(cfg)?;
                dir.write(&format!("{name}.csv"), curve.to_csv().as_bytes())?;
                summary.push_str(&curve_summary(name, &curve, plateau_start(cfg)));
            }
        }
    }
    dir.write("summary.txt", summary.as_bytes())?;
    dir.manifest.set("preset", id.name());
    dir.manifest.set("scale", scale.name());
    dir.manifest.set("seed", seed);
    dir.manifest.set("version", env!("CARGO_PKG_VERSION"));
    let files = dir.manifest.artifacts.iter().map(|a| a.name.clone()).collect();
    let dir_path = dir.dir.clone();
    let manifest = dir.finish()?;
    Ok(PresetOutcome {
        dir: dir_path,
        manifest,
        files,
        summary,
    })
}

fn plateau_start(cfg: &ExperimentConfig) -> f64 {
    5.0 * cfg.optics.entanglement_area_mm2.sqrt() * 1e3 - 0.5
}

fn fig2b(configs: &[(String, ExperimentConfig)], dir: &mut OutputDir, summary: &mut String) -> Result<()> {
    let first = &configs.first().ok_or_else(|| invalid("empty preset"))?.1;
    let optics = &first.optics;
    let analysis = first.analysis();
    let grid = SamplingSpec::for_envelope(optics.slm_envelope_area_mm2, SamplingSpec::DEFAULT_SIZE);
    let reach_mm = analysis.window.half_x as f64 * optics.sample_pixel_mm();
    let mut marginals = Vec::new();
    for (name, cfg) in configs {
        let model = cfg.template()?.model(cfg.mask.clone())?;
        let run = run_batches(&model, &cfg.plan(), &analysis)?;
        dir.write(&format!("{name}_correlation.csv"), run.combined.to_csv().as_bytes())?;
        dir.write(&format!("{name}_correlation.txt"), run.combined.sidecar().as_bytes())?;
        let xi = run.xi((0, 0), &analysis)?;
        let _ = writeln!(summary, "{name}: xi(0) = {:.6e} ± {:.2e}", xi.mean, xi.std_error);
        let field = shaped_correlation(&cfg.mask, &cfg.optics, &grid)?;
        marginals.push((name.clone(), field));
    }
    let mut csv = String::from("delta_x_um");
    for (name, _) in &marginals {
        let _ = write!(csv, ",{name}");
    }
    csv.push('\n');
    let reference = &marginals[0].1;
    let cols: Vec<Vec<f64>> = marginals.iter().map(|(_, f)| f.marginal_x()).collect();
    for i in 0..reference.n() {
        let lag = reference.lag(i);
        if lag.abs() > reach_mm {
            continue;
        }
        let _ = write!(csv, "{:.4}", lag * 1e3);
        for c in &cols {
            let _ = write!(csv, ",{:.9e}", c[i]);
        }
        csv.push('\n');
    }
    dir.write("oracle_marginal_x.csv", csv.as_bytes())
        .map(|_| ())
}
