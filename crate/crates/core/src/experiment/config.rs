//! Sectioned key-value experiment configuration.
//!
//! ```text
//! [optics]
//! preset = config1
//! roi = 64x64
//!
//! [medium]
//! etpa_strength = 0.1
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::PathBuf;

use crate::detector::DetectorSpec;
use crate::error::{Error, Result};
use crate::g2::{Interpolation, LagWindow, XcorrMode};
use crate::measure::{AnalysisSpec, BatchPlan, RunTemplate};
use crate::medium::{MediumElement, MediumSpec};
use crate::metrics::PeakMetric;
use crate::optics::{OpticsConfig, SamplingSpec, SlmMask};
use crate::sampler::{PairGeometry, SamplerMode, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpticsPreset {
    Config1,
    Config2,
    Explicit,
}

impl OpticsPreset {
    pub fn name(&self) -> &'static str {
        match self {
            OpticsPreset::Config1 => "config1",
            OpticsPreset::Config2 => "config2",
            OpticsPreset::Explicit => "explicit",
        }
    }

    fn base(&self) -> OpticsConfig {
        match self {
            OpticsPreset::Config2 => OpticsConfig::config2(),
            _ => OpticsConfig::config1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerChoice {
    Tabulated { grid: usize },
    Analytic { n_max: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSettings {
    pub pair_rate_hz: f64,
    pub exposure_s: f64,
    pub slm_efficiency: f64,
    pub seed: u64,
    pub geometry: PairGeometry,
    pub sampler: SamplerChoice,
}

/// The medium as independent optional elements, applied ETPA → loss → scatter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MediumSettings {
    pub etpa_strength: Option<f64>,
    /// Defaults to √A_e when ETPA is on.
    pub etpa_kernel_um: Option<f64>,
    pub loss_transmission: Option<f64>,
    pub scatter_probability: Option<f64>,
    pub scatter_sigma_um: Option<f64>,
}

impl MediumSettings {
    pub fn spec(&self, optics: &OpticsConfig) -> MediumSpec {
        let mut elements = Vec::new();
        if let Some(strength) = self.etpa_strength {
            elements.push(MediumElement::EtpaAbsorber {
                strength,
                kernel_width_mm: self
                    .etpa_kernel_um
                    .map(|w| w * 1e-3)
                    .unwrap_or_else(|| optics.entanglement_area_mm2.sqrt()),
            });
        }
        if let Some(transmission) = self.loss_transmission {
            elements.push(MediumElement::LinearLoss { transmission });
        }
        if let Some(probability) = self.scatter_probability {
            elements.push(MediumElement::Scatterer {
                probability,
                displacement_mm: self
                    .scatter_sigma_um
                    .map(|w| w * 1e-3)
                    .unwrap_or_else(|| optics.entanglement_area_mm2.sqrt() / 2.0),
            });
        }
        MediumSpec { elements }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSettings {
    pub separations_um: Vec<f64>,
    pub batches: usize,
    pub frames_per_batch: u64,
    /// Stack length for `simulate`; defaults to batches × frames per batch.
    pub frames: Option<u64>,
    pub metric: PeakMetric,
    pub half_width: Option<usize>,
    pub lag_window: Option<usize>,
    pub interpolation: Interpolation,
    pub overlap_normalize: bool,
    pub chunk: u64,
    pub alpha_points: usize,
    pub planted_alpha_rad: f64,
    pub calibration_period_um: f64,
    pub fit_roi: usize,
    pub fit_frames: u64,
}

impl Default for TaskSettings {
    fn default() -> Self {
        TaskSettings {
            separations_um: vec![0.0],
            batches: crate::constants::BATCHES,
            frames_per_batch: crate::constants::FRAMES_PER_BATCH as u64,
            frames: None,
            metric: PeakMetric::Height,
            half_width: None,
            lag_window: None,
            interpolation: Interpolation::FullColumn,
            overlap_normalize: false,
            chunk: AnalysisSpec::DEFAULT_CHUNK,
            alpha_points: 8,
            planted_alpha_rad: 0.0,
            calibration_period_um: 1300.0,
            fit_roi: 512,
            fit_frames: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub optics_preset: OpticsPreset,
    pub optics: OpticsConfig,
    pub source: SourceSettings,
    pub mask: SlmMask,
    pub medium: MediumSettings,
    pub detector: DetectorSpec,
    pub task: TaskSettings,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(preset: OpticsPreset) -> Self {
        let optics = preset.base();
        ExperimentConfig {
            optics_preset: preset,
            source: SourceSettings {
                pair_rate_hz: crate::constants::NOMINAL_PAIR_RATE_HZ,
                exposure_s: crate::constants::EXPOSURE_S,
                slm_efficiency: 1.0,
                seed: 0,
                geometry: PairGeometry::ImagePlane,
                sampler: SamplerChoice::Tabulated {
                    grid: SamplingSpec::DEFAULT_SIZE,
                },
            },
            optics,
            mask: SlmMask::Flat,
            medium: MediumSettings::default(),
            detector: DetectorSpec::default(),
            task: TaskSettings::default(),
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.template()?.model(self.mask.clone())?;
        self.plan().validate()?;
        let a = self.analysis();
        a.window.check(self.optics.roi.0, self.optics.roi.1)
    }

    pub fn sampler_mode(&self) -> SamplerMode {
        match self.source.sampler {
            SamplerChoice::Tabulated { grid } => SamplerMode::Tabulated {
                grid: SamplingSpec::for_envelope(self.optics.slm_envelope_area_mm2, grid),
            },
            SamplerChoice::Analytic { n_max } => SamplerMode::Analytic { n_max },
        }
    }

    pub fn template(&self) -> Result<RunTemplate> {
        let s = &self.source;
        let t = RunTemplate {
            source: SourceSpec {
                pair_rate_hz: s.pair_rate_hz,
                exposure_s: s.exposure_s,
                slm_efficiency: s.slm_efficiency,
                mask: SlmMask::Flat,
                optics: self.optics.clone(),
                seed: s.seed,
                geometry: s.geometry,
            },
            medium: self.medium.spec(&self.optics),
            detector: self.detector.clone(),
            sampler_mode: self.sampler_mode(),
        };
        t.source.validate()?;
        t.medium.validate()?;
        t.detector.validate()?;
        Ok(t)
    }

    pub fn plan(&self) -> BatchPlan {
        BatchPlan::new(self.task.batches, self.task.frames_per_batch)
    }

    pub fn stack_frames(&self) -> u64 {
        self.task.frames.unwrap_or_else(|| self.plan().total_frames())
    }

    pub fn analysis(&self) -> AnalysisSpec {
        let mut a = AnalysisSpec::for_optics(&self.optics);
        if let Some(l) = self.task.lag_window {
            a.window = LagWindow::square(l);
        }
        if let Some(w) = self.task.half_width {
            a.half_width = w;
        }
        a.metric = self.task.metric;
        a.interpolation = self.task.interpolation;
        a.overlap_normalize = self.task.overlap_normalize;
        a.chunk = self.task.chunk;
        a.mode = XcorrMode::Fast;
        a
    }

    /// Canonical text form; `parse_config` of the result gives back `self`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let o = &self.optics;
        let _ = writeln!(s, "[optics]");
        let _ = writeln!(s, "preset = {}", self.optics_preset.name());
        let _ = writeln!(s, "wavelength_nm = {}", o.wavelength_nm);
        let _ = writeln!(s, "focal_length_mm = {}", o.focal_length_mm);
        let _ = writeln!(s, "A_e = {}", o.entanglement_area_mm2);
        let _ = writeln!(s, "Sigma = {}", o.beam_area_mm2);
        let _ = writeln!(s, "Sigma_SLM = {}", o.slm_envelope_area_mm2);
        let _ = writeln!(s, "w_slm_mm = {}", o.slm_correlation_width_mm);
        let _ = writeln!(s, "magnification = {}", o.magnification);
        let _ = writeln!(s, "pixel_pitch_um = {}", o.pixel_pitch_um);
        let _ = writeln!(s, "roi = {}x{}", o.roi.0, o.roi.1);

        let src = &self.source;
        let _ = writeln!(s, "\n[source]");
        let _ = writeln!(s, "pair_rate_hz = {}", src.pair_rate_hz);
        let _ = writeln!(s, "exposure_s = {}", src.exposure_s);
        let _ = writeln!(s, "slm_efficiency = {}", src.slm_efficiency);
        let _ = writeln!(s, "seed = {}", src.seed);
        let _ = writeln!(
            s,
            "geometry = {}",
            match src.geometry {
                PairGeometry::ImagePlane => "image",
                PairGeometry::FourierPlane => "fourier",
            }
        );
        match src.sampler {
            SamplerChoice::Tabulated { grid } => {
                let _ = writeln!(s, "sampler = tabulated\nsampler_grid = {grid}");
            }
            SamplerChoice::Analytic { n_max } => {
                let _ = writeln!(s, "sampler = analytic\nn_max = {n_max}");
            }
        }

        let _ = writeln!(s, "\n[mask]");
        match &self.mask {
            SlmMask::Flat => {
                let _ = writeln!(s, "type = flat");
            }
            SlmMask::Grating {
                period_mm,
                shift_rad,
            } => {
                let _ = writeln!(s, "type = grating\nperiod_um = {}\nshift_rad = {}", period_mm * 1e3, shift_rad);
            }
            SlmMask::HalfPlane { phase_rad } => {
                let _ = writeln!(s, "type = half-plane\nphase_rad = {phase_rad}");
            }
            SlmMask::Custom { .. } => {
                let _ = writeln!(s, "# custom masks are not representable; written as flat\ntype = flat");
            }
        }

        let m = &self.medium;
        let _ = writeln!(s, "\n[medium]");
        let opt = |s: &mut String, k: &str, v: Option<f64>| {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        };
        opt(&mut s, "etpa_strength", m.etpa_strength);
        opt(&mut s, "etpa_kernel_um", m.etpa_kernel_um);
        opt(&mut s, "loss_transmission", m.loss_transmission);
        opt(&mut s, "scatter_probability", m.scatter_probability);
        opt(&mut s, "scatter_sigma_um", m.scatter_sigma_um);

        let d = &self.detector;
        let _ = writeln!(s, "\n[detector]");
        let _ = writeln!(s, "quantum_efficiency = {}", d.quantum_efficiency);
        let _ = writeln!(s, "em_gain = {}", d.em_gain);
        let _ = writeln!(s, "read_noise = {}", d.read_noise);
        let _ = writeln!(s, "smear = {}", d.smear);
        let _ = writeln!(s, "stray_rate = {}", d.stray_rate);
        let _ = writeln!(s, "bias = {}", d.bias);
        let _ = writeln!(s, "saturation = {}", d.saturation);

        let t = &self.task;
        let _ = writeln!(s, "\n[task]");
        let list: Vec<String> = t.separations_um.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "separations_um = {}", list.join(", "));
        let _ = writeln!(s, "batches = {}", t.batches);
        let _ = writeln!(s, "frames_per_batch = {}", t.frames_per_batch);
        if let Some(f) = t.frames {
            let _ = writeln!(s, "frames = {f}");
        }
        let _ = writeln!(s, "metric = {}", t.metric.name());
        let auto = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_else(|| "auto".into());
        let _ = writeln!(s, "half_width = {}", auto(t.half_width));
        let _ = writeln!(s, "lag_window = {}", auto(t.lag_window));
        let _ = writeln!(s, "interpolation = {}", t.interpolation.name());
        let _ = writeln!(s, "overlap_normalize = {}", t.overlap_normalize);
        let _ = writeln!(s, "chunk = {}", t.chunk);
        let _ = writeln!(s, "alpha_points = {}", t.alpha_points);
        let _ = writeln!(s, "planted_alpha_rad = {}", t.planted_alpha_rad);
        let _ = writeln!(s, "calibration_period_um = {}", t.calibration_period_um);
        let _ = writeln!(s, "fit_roi = {}", t.fit_roi);
        let _ = writeln!(s, "fit_frames = {}", t.fit_frames);

        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output_dir.display());
        s
    }
}

/// A parsed config and the keys that took their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: ExperimentConfig,
    pub defaulted: Vec<String>,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "optics",
        &[
            "preset",
            "wavelength_nm",
            "focal_length_mm",
            "A_e",
            "Sigma",
            "Sigma_SLM",
            "w_slm_mm",
            "magnification",
            "pixel_pitch_um",
            "roi",
        ],
    ),
    (
        "source",
        &["pair_rate_hz", "exposure_s", "slm_efficiency", "seed", "geometry", "sampler", "sampler_grid", "n_max"],
    ),
    ("mask", &["type", "period_um", "shift_rad", "phase_rad"]),
    (
        "medium",
        &["etpa_strength", "etpa_kernel_um", "loss_transmission", "scatter_probability", "scatter_sigma_um"],
    ),
    (
        "detector",
        &["quantum_efficiency", "em_gain", "read_noise", "smear", "stray_rate", "bias", "saturation"],
    ),
    (
        "task",
        &[
            "separations_um",
            "batches",
            "frames_per_batch",
            "frames",
            "metric",
            "half_width",
            "lag_window",
            "interpolation",
            "overlap_normalize",
            "chunk",
            "alpha_points",
            "planted_alpha_rad",
            "calibration_period_um",
            "fit_roi",
            "fit_frames",
        ],
    ),
    ("output", &["dir"]),
];

/// Optional medium and task keys that have no default echo.
const SILENT: &[&str] = &[
    "medium.etpa_strength",
    "medium.etpa_kernel_um",
    "medium.loss_transmission",
    "medium.scatter_probability",
    "medium.scatter_sigma_um",
    "task.frames",
    "mask.period_um",
    "mask.shift_rad",
    "mask.phase_rad",
    "source.sampler_grid",
    "source.n_max",
];

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

struct Entries {
    values: BTreeMap<String, (String, usize)>,
    section_lines: BTreeMap<String, usize>,
    defaulted: Vec<String>,
    seen: BTreeSet<String>,
}

impl Entries {
    fn lex(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section_lines = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("malformed section header `{content}`")))?
                    .trim();
                let known = KEYS
                    .iter()
                    .find(|(s, _)| *s == name)
                    .ok_or_else(|| err(line, format!("unknown section [{name}]")))?;
                if section_lines.insert(known.0.to_string(), line).is_some() {
                    return Err(err(line, format!("section [{name}] appears twice")));
                }
                section = Some(known.0);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.ok_or_else(|| err(line, format!("key `{key}` outside any section")))?;
            let allowed = KEYS.iter().find(|(s, _)| *s == sec).expect("known section").1;
            if !allowed.contains(&key) {
                return Err(err(line, format!("unknown key `{key}` in [{sec}]")));
            }
            let full = format!("{sec}.{key}");
            if values.insert(full.clone(), (value.to_string(), line)).is_some() {
                return Err(err(line, format!("duplicate key `{full}`")));
            }
        }
        Ok(Entries {
            values,
            section_lines,
            defaulted: Vec::new(),
            seen: BTreeSet::new(),
        })
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.seen.insert(key.to_string());
        let v = self.values.get(key).cloned();
        if v.is_none() && !SILENT.contains(&key) {
            self.defaulted.push(key.to_string());
        }
        v
    }

    fn section_line(&self, key: &str) -> usize {
        let sec = key.split('.').next().unwrap_or("");
        self.section_lines.get(sec).copied().unwrap_or(0)
    }

    fn parsed<T>(&mut self, key: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<(T, usize)>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => parse(&v)
                .map(|x| Some((x, line)))
                .ok_or_else(|| err(line, format!("`{key}` expects {what}, got `{v}`"))),
        }
    }

    fn f64_checked(&mut self, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64> {
        match self.parsed(key, |s| s.parse::<f64>().ok(), "a number")? {
            None => Ok(default),
            Some((v, line)) if ok(v) => {
                let _ = line;
                Ok(v)
            }
            Some((v, line)) => Err(err(line, format!("`{key}` = {v} is out of range: must be {range}"))),
        }
    }

    fn opt_f64(&mut self, key: &str, ok: impl Fn(f64) -> bool, range: &str) -> Result<Option<f64>> {
        match self.parsed(key, |s| s.parse::<f64>().ok(), "a number")? {
            None => Ok(None),
            Some((v, _)) if ok(v) => Ok(Some(v)),
            Some((v, line)) => Err(err(line, format!("`{key}` = {v} is out of range: must be {range}"))),
        }
    }

    fn uint<T: std::str::FromStr + PartialOrd + Copy + std::fmt::Display>(&mut self, key: &str, default: T, min: T) -> Result<T> {
        match self.parsed(key, |s| s.parse::<T>().ok(), "a non-negative integer")? {
            None => Ok(default),
            Some((v, _)) if v >= min => Ok(v),
            Some((v, line)) => Err(err(line, format!("`{key}` = {v} is out of range: must be at least {min}"))),
        }
    }

    fn auto_usize(&mut self, key: &str, min: usize) -> Result<Option<usize>> {
        let parsed = self.parsed(
            key,
            |s| {
                if s == "auto" {
                    Some(None)
                } else {
                    s.parse::<usize>().ok().map(Some)
                }
            },
            "an integer or `auto`",
        )?;
        match parsed {
            None | Some((None, _)) => Ok(None),
            Some((Some(v), _)) if v >= min => Ok(Some(v)),
            Some((Some(v), line)) => Err(err(line, format!("`{key}` = {v} is out of range: must be at least {min}"))),
        }
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn parse_roi(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once(['x', 'X'])?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Parse and validate a config. Unknown sections or keys are errors; missing
/// keys take defaults and are listed in [`ParsedConfig::defaulted`].
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let mut e = Entries::lex(text)?;

    let preset = e
        .parsed(
            "optics.preset",
            |s| match s {
                "config1" => Some(OpticsPreset::Config1),
                "config2" => Some(OpticsPreset::Config2),
                "explicit" => Some(OpticsPreset::Explicit),
                _ => None,
            },
            "`config1`, `config2` or `explicit`",
        )?
        .map(|(p, _)| p)
        .unwrap_or(OpticsPreset::Config1);
    let mut c = ExperimentConfig::new(preset);
    let base = c.optics.clone();
    let o = &mut c.optics;
    o.wavelength_nm = e.f64_checked("optics.wavelength_nm", base.wavelength_nm, positive, "positive")?;
    o.focal_length_mm = e.f64_checked("optics.focal_length_mm", base.focal_length_mm, positive, "positive")?;
    o.entanglement_area_mm2 = e.f64_checked("optics.A_e", base.entanglement_area_mm2, positive, "positive (mm²)")?;
    o.beam_area_mm2 = e.f64_checked("optics.Sigma", base.beam_area_mm2, positive, "positive (mm²)")?;
    let envelope = e.opt_f64("optics.Sigma_SLM", positive, "positive (mm²)")?;
    o.slm_correlation_width_mm = e.f64_checked("optics.w_slm_mm", base.slm_correlation_width_mm, positive, "positive")?;
    o.magnification = e.f64_checked("optics.magnification", base.magnification, positive, "positive")?;
    o.pixel_pitch_um = e.f64_checked("optics.pixel_pitch_um", base.pixel_pitch_um, positive, "positive")?;
    if let Some((roi, line)) = e.parsed("optics.roi", parse_roi, "`<nx>x<ny>`")? {
        if roi.0 < 2 || roi.1 < 2 {
            return Err(err(line, format!("`optics.roi` = {}x{} is out of range: must be at least 2x2", roi.0, roi.1)));
        }
        o.roi = roi;
    }
    match envelope {
        Some(v) => o.slm_envelope_area_mm2 = v,
        None => *o = o.clone().with_consistent_envelope(),
    }
    if o.beam_area_mm2 <= o.entanglement_area_mm2 {
        return Err(err(e.section_line("optics.Sigma"), "Sigma must exceed A_e"));
    }

    let s = &mut c.source;
    s.pair_rate_hz = e.f64_checked("source.pair_rate_hz", s.pair_rate_hz, |v| v.is_finite() && v >= 0.0, "non-negative")?;
    s.exposure_s = e.f64_checked("source.exposure_s", s.exposure_s, positive, "positive")?;
    s.slm_efficiency = e.f64_checked("source.slm_efficiency", s.slm_efficiency, |v| v > 0.0 && v <= 1.0, "in (0, 1]")?;
    s.seed = e.uint("source.seed", s.seed, 0)?;
    if let Some((g, _)) = e.parsed(
        "source.geometry",
        |v| match v {
            "image" => Some(PairGeometry::ImagePlane),
            "fourier" => Some(PairGeometry::FourierPlane),
            _ => None,
        },
        "`image` or `fourier`",
    )? {
        s.geometry = g;
    }
    let kind = e
        .parsed(
            "source.sampler",
            |v| (v == "tabulated" || v == "analytic").then(|| v.to_string()),
            "`tabulated` or `analytic`",
        )?
        .map(|(k, _)| k)
        .unwrap_or_else(|| "tabulated".into());
    s.sampler = if kind == "analytic" {
        SamplerChoice::Analytic {
            n_max: e.uint("source.n_max", 7i64, 1)?,
        }
    } else {
        SamplerChoice::Tabulated {
            grid: e.uint("source.sampler_grid", SamplingSpec::DEFAULT_SIZE, 64)?,
        }
    };

    let mask_kind = e
        .parsed(
            "mask.type",
            |v| ["flat", "grating", "half-plane"].contains(&v).then(|| v.to_string()),
            "`flat`, `grating` or `half-plane`",
        )?;
    c.mask = match mask_kind.as_ref().map(|(k, _)| k.as_str()) {
        None | Some("flat") => SlmMask::Flat,
        Some("grating") => {
            let line = mask_kind.as_ref().map(|(_, l)| *l).unwrap_or(0);
            let period = e
                .opt_f64("mask.period_um", positive, "positive")?
                .ok_or_else(|| err(line, "grating mask needs `period_um`"))?;
            SlmMask::Grating {
                period_mm: period * 1e-3,
                shift_rad: e.f64_checked("mask.shift_rad", 0.0, f64::is_finite, "finite")?,
            }
        }
        Some(_) => SlmMask::HalfPlane {
            phase_rad: e.f64_checked(
                "mask.phase_rad",
                0.0,
                |v| (0.0..2.0 * std::f64::consts::PI).contains(&v),
                "in [0, 2π)",
            )?,
        },
    };

    let m = &mut c.medium;
    m.etpa_strength = e.opt_f64("medium.etpa_strength", unit, "in [0, 1]")?;
    m.etpa_kernel_um = e.opt_f64("medium.etpa_kernel_um", positive, "positive")?;
    m.loss_transmission = e.opt_f64("medium.loss_transmission", unit, "in [0, 1]")?;
    m.scatter_probability = e.opt_f64("medium.scatter_probability", unit, "in [0, 1]")?;
    m.scatter_sigma_um = e.opt_f64("medium.scatter_sigma_um", positive, "positive")?;

    let d = &mut c.detector;
    d.quantum_efficiency = e.f64_checked("detector.quantum_efficiency", d.quantum_efficiency, unit, "in [0, 1]")?;
    d.em_gain = e.f64_checked("detector.em_gain", d.em_gain, positive, "positive")?;
    d.read_noise = e.f64_checked("detector.read_noise", d.read_noise, |v| v.is_finite() && v >= 0.0, "non-negative")?;
    d.smear = e.f64_checked("detector.smear", d.smear, |v| (0.0..1.0).contains(&v), "in [0, 1)")?;
    d.stray_rate = e.f64_checked("detector.stray_rate", d.stray_rate, |v| v.is_finite() && v >= 0.0, "non-negative")?;
    d.bias = e.f64_checked("detector.bias", d.bias, |v| v.is_finite() && v >= 0.0, "non-negative")?;
    d.saturation = e.uint("detector.saturation", d.saturation, 1)?;

    let t = &mut c.task;
    if let Some((list, line)) = e.parsed(
        "task.separations_um",
        |v| v.split(',').map(|x| x.trim().parse::<f64>().ok()).collect::<Option<Vec<f64>>>(),
        "a comma-separated list of numbers",
    )? {
        if list.is_empty() || list[0] < 0.0 || list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(err(line, "`task.separations_um` must be non-negative and strictly increasing"));
        }
        t.separations_um = list;
    }
    t.batches = e.uint("task.batches", t.batches, 1)?;
    t.frames_per_batch = e.uint("task.frames_per_batch", t.frames_per_batch, 2)?;
    t.frames = match e.parsed("task.frames", |v| v.parse::<u64>().ok(), "an integer")? {
        None => None,
        Some((v, _)) if v >= 2 => Some(v),
        Some((v, line)) => return Err(err(line, format!("`task.frames` = {v} is out of range: must be at least 2"))),
    };
    if let Some((m, _)) = e.parsed("task.metric", PeakMetric::parse, "`height` or `area`")? {
        t.metric = m;
    }
    t.half_width = e.auto_usize("task.half_width", 0)?;
    t.lag_window = e.auto_usize("task.lag_window", 1)?;
    if let Some((i, _)) = e.parsed("task.interpolation", Interpolation::parse, "`off`, `paper` or `full-column`")? {
        t.interpolation = i;
    }
    if let Some((b, _)) = e.parsed("task.overlap_normalize", parse_bool, "`true` or `false`")? {
        t.overlap_normalize = b;
    }
    t.chunk = e.uint("task.chunk", t.chunk, 1)?;
    t.alpha_points = e.uint("task.alpha_points", t.alpha_points, 5)?;
    t.planted_alpha_rad = e.f64_checked("task.planted_alpha_rad", t.planted_alpha_rad, f64::is_finite, "finite")?;
    t.calibration_period_um =
        e.f64_checked("task.calibration_period_um", t.calibration_period_um, positive, "positive")?;
    t.fit_roi = e.uint("task.fit_roi", t.fit_roi, 8)?;
    t.fit_frames = e.uint("task.fit_frames", t.fit_frames, 1)?;

    if let Some((dir, _)) = e.parsed("output.dir", |v| (!v.is_empty()).then(|| PathBuf::from(v)), "a path")? {
        c.output_dir = dir;
    }

    let window = c.analysis().window;
    if let Err(problem) = window.check(c.optics.roi.0, c.optics.roi.1) {
        return Err(err(e.section_line("task.lag_window"), problem.to_string()));
    }
    debug_assert!(e.values.keys().all(|k| e.seen.contains(k)));
    Ok(ParsedConfig {
        config: c,
        defaulted: e.defaulted,
    })
}
