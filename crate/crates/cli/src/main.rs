use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biphoton_core::error::{Error, ErrorKind, Result};
use biphoton_core::experiment::{
    analyze_file, fit_areas, parse_config, run_calibration, run_preset, run_ratio_curve, simulate_to_file,
    ExperimentConfig, Manifest, OpticsPreset, OutputDir, PresetId, PresetOptions, Scale,
};
use biphoton_core::metrics::{fit_gaussian_variance, FitKind};
use clap::{Parser, Subcommand};

/// Photon-pair correlation simulator and analysis pipeline.
#[derive(Debug, Parser)]
#[command(name = "biphoton-lab", version, about)]
struct Cli {
    /// Experiment config (INI). Without it the config1 defaults are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the source seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use paper-scale frame budgets for presets.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Preset scale: smoke, desk or paper.
    #[arg(long, global = true, value_parser = parse_scale)]
    scale: Option<Scale>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a frame stack and write it as BPF1.
    Simulate {
        /// Number of frames (default: batches × frames per batch).
        #[arg(long)]
        frames: Option<u64>,
        /// Stack file name inside the output directory.
        #[arg(long, default_value = "stack.bpf")]
        name: String,
    },
    /// Correlate a BPF1 stack and measure ξ.
    Analyze {
        stack: PathBuf,
        /// Shuffled-frame null: each estimator term uses its own random frame order.
        #[arg(long)]
        shuffle: bool,
        /// Also fit a Gaussian to the correlation image.
        #[arg(long)]
        fit: bool,
    },
    /// ξ(Δx)/ξ₀ over the configured separations.
    RatioCurve,
    /// Sweep the grating shift and pick the zero-order minimum.
    CalibrateAlpha,
    /// Gaussian fits of the correlation and intensity images.
    FitAreas,
    /// Run a named preset experiment.
    Preset {
        /// fig2b, fig3a, fig3b, fig3c, fig3d, fig4a, figS2, figS4 or figS5.
        id: String,
        /// Also write the frame stacks.
        #[arg(long)]
        stacks: bool,
    },
    /// Check the artifacts listed in a manifest and print its entries.
    Report { manifest: PathBuf },
}

fn parse_scale(s: &str) -> std::result::Result<Scale, String> {
    Scale::parse(s).ok_or_else(|| format!("unknown scale '{s}' (smoke, desk, paper)"))
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Pipeline => 4,
    }
}

/// An error with the exit code it maps to.
struct Failure {
    error: Error,
    code: u8,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = exit_code(error.kind());
        Failure { error, code }
    }
}

fn config_failure(error: Error) -> Failure {
    Failure { error, code: 2 }
}

fn load_config(cli: &Cli) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_failure(Error::io(path, e)))?;
            let parsed = parse_config(&text)?;
            if !parsed.defaulted.is_empty() {
                eprintln!("defaults used: {}", parsed.defaulted.join(", "));
            }
            parsed.config
        }
        None => ExperimentConfig::new(OpticsPreset::Config1),
    };
    if let Some(seed) = cli.seed {
        cfg.source.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate().map_err(config_failure)?;
    Ok(cfg)
}

fn start_output(cfg: &ExperimentConfig, command: &str) -> Result<OutputDir> {
    let mut dir = OutputDir::new(&cfg.output_dir)?;
    dir.manifest.set("command", command);
    dir.manifest.set("seed", cfg.source.seed);
    dir.manifest.set("version", env!("CARGO_PKG_VERSION"));
    dir.write("config.ini", cfg.serialize().as_bytes())?;
    Ok(dir)
}

fn finish(dir: OutputDir) -> Result<()> {
    let path = dir.finish()?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn report(path: &Path) -> std::result::Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = Manifest::parse(&text)?;
    for (k, v) in &manifest.entries {
        println!("{k} = {v}");
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut bad = Vec::new();
    for (name, ok) in manifest.verify(dir)? {
        println!("{} {name}", if ok { "ok  " } else { "FAIL" });
        if !ok {
            bad.push(name);
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            error: Error::Format {
                offset: 0,
                message: format!("hash mismatch for {}", bad.join(", ")),
            },
            code: 3,
        })
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_failure(Error::InvalidParameter(format!("thread pool: {e}"))))?;
    }
    match &cli.command {
        Command::Report { manifest } => return report(manifest),
        Command::Preset { id, stacks } => {
            let preset = PresetId::parse(id).ok_or_else(|| {
                config_failure(Error::InvalidParameter(format!("unknown preset '{id}'")))
            })?;
            let scale = cli
                .scale
                .unwrap_or(if cli.paper_scale { Scale::Paper } else { Scale::Desk });
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(preset.name()));
            let options = PresetOptions { scale, stacks: *stacks };
            let outcome = run_preset(preset, cli.seed.unwrap_or(0), &out, &options)?;
            print!("{}", outcome.summary);
            println!("manifest: {}", outcome.manifest.display());
            return Ok(());
        }
        _ => {}
    }

    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate { frames, name } => {
            if frames.is_some() {
                cfg.task.frames = *frames;
            }
            let mut dir = start_output(&cfg, "simulate")?;
            let path = dir.dir.join(name);
            let (summary, hash) = simulate_to_file(&cfg, &path)?;
            dir.record(name, hash);
            dir.manifest.set("frames", summary.frames);
            dir.manifest.set("pairs", summary.tally.pairs);
            println!(
                "wrote {} frames to {} ({} pairs, {} photons past the medium)",
                summary.frames,
                path.display(),
                summary.tally.pairs,
                summary.tally.surviving_photons
            );
            finish(dir)?;
        }
        Command::Analyze { stack, shuffle, fit } => {
            let a = analyze_file(stack, &cfg, *shuffle)?;
            let mut dir = start_output(&cfg, "analyze")?;
            dir.manifest.set("stack", stack.display());
            if let Some(h) = &a.run.combined.source_hash {
                dir.manifest.set("stack_sha256", h);
            }
            dir.manifest.set("shuffled", a.shuffled);
            dir.write("correlation.csv", a.run.combined.to_csv().as_bytes())?;
            dir.write("correlation.txt", a.run.combined.sidecar().as_bytes())?;
            let xi = a.xi_report();
            dir.write("xi.csv", xi.as_bytes())?;
            print!("{xi}");
            if *fit {
                let optics = cfg
                    .optics
                    .clone()
                    .with_roi(a.header.width as usize, a.header.height as usize);
                let f = fit_gaussian_variance(a.run.combined.values.view(), FitKind::Correlation, &optics)
                    .map_err(|e| e.in_stage("fit"))?;
                dir.write("fits.txt", f.report().as_bytes())?;
                print!("{}", f.report());
            }
            finish(dir)?;
        }
        Command::RatioCurve => {
            let curve = run_ratio_curve(&cfg)?;
            let mut dir = start_output(&cfg, "ratio-curve")?;
            let csv = curve.to_csv();
            dir.write("ratio_curve.csv", csv.as_bytes())?;
            print!("{csv}");
            finish(dir)?;
        }
        Command::CalibrateAlpha => {
            let cal = run_calibration(&cfg)?;
            let mut dir = start_output(&cfg, "calibrate-alpha")?;
            dir.manifest.set("best_alpha_rad", cal.best_alpha);
            let csv = cal.to_csv();
            dir.write("alpha.csv", csv.as_bytes())?;
            print!("{csv}");
            println!("best alpha = {}", cal.best_alpha);
            finish(dir)?;
        }
        Command::FitAreas => {
            let fits = fit_areas(&cfg)?;
            let mut dir = start_output(&cfg, "fit-areas")?;
            let text = fits.report();
            dir.write("fits.txt", text.as_bytes())?;
            print!("{text}");
            finish(dir)?;
        }
        Command::Preset { .. } | Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let mut msg = f.error.to_string();
            let mut src = std::error::Error::source(&f.error);
            while let Some(s) = src {
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                src = s.source();
            }
            eprintln!("error: {msg}");
            ExitCode::from(f.code)
        }
    }
}
