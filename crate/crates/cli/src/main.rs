use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fidelity_core::experiment::{
    read_csv_column, run_experiment, separability_sweep, verify_theorem, Dqc1Settings,
    EstimatorKind, ExperimentConfig, PerturbationConfig, SystemConfig, CONFIDENCE_SIGMAS,
    MAX_SEPARABILITY_DIM, REFERENCE_RATE_COEFFICIENT,
};
use fidelity_core::fit::{default_window, fit_decay_values};
use fidelity_core::spinsys::GeneratorKind;
use fidelity_core::{Error, Result, StateSampler};

#[derive(Parser)]
#[command(name = "fidlab", version, about = "Average fidelity decay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selected estimators and write CSV plus JSON sidecar.
    Run(ConfigArgs),
    /// Fit an exponential decay rate to one column of a run CSV.
    Fit(FitArgs),
    /// Check the Haar-moment identity on random operators.
    VerifyTheorem(TheoremArgs),
    /// Certify separability of the probe-register state step by step.
    Separability(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    KickedTop,
    RandomUnitary,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    CollectiveZ,
    SpinZ,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Exact,
    Mc,
    Dqc1,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Haar,
    Basis,
}

/// Flags mirror the config file; any flag given overrides the file.
#[derive(Args)]
struct ConfigArgs {
    /// JSON config, or the sidecar of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    system: Option<SystemArg>,
    /// Spin quantum number of the kicked top (integer or half-integer).
    #[arg(long)]
    j: Option<f64>,
    /// Kick strength.
    #[arg(long)]
    k: Option<f64>,
    /// Dimension of the random unitary system.
    #[arg(long)]
    dim: Option<usize>,
    /// Seed of the random unitary system.
    #[arg(long)]
    unitary_seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, conflicts_with = "generator_file")]
    generator: Option<GeneratorArg>,
    /// Hermitian generator as JSON rows of [re, im] pairs.
    #[arg(long)]
    generator_file: Option<PathBuf>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Comma-separated subset of exact, mc, dqc1.
    #[arg(long, value_enum, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorArg>>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    readout_noise_sd: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive fit window as LO,HI.
    #[arg(long, value_parser = parse_window)]
    fit_window: Option<(usize, usize)>,
    /// CSV path; the sidecar goes next to it with a .json extension.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV written by `run`.
    input: PathBuf,
    #[arg(long, default_value = "exact")]
    column: String,
    /// Inclusive fit window as LO,HI; pre-saturation rule when absent.
    #[arg(long, value_parser = parse_window)]
    window: Option<(usize, usize)>,
    /// Hilbert-space dimension; read from the sidecar when absent.
    #[arg(long)]
    dim: Option<usize>,
    /// Perturbation strength for the reference-rate ratio; read from the sidecar when absent.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct TheoremArgs {
    #[arg(long)]
    ell: usize,
    #[arg(long = "dim")]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn parse_window(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::InvalidInput(format!("cannot read {}: {e}", path.display()))
                })?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };

        let system = match self.system {
            Some(SystemArg::KickedTop) => Some(true),
            Some(SystemArg::RandomUnitary) => Some(false),
            None => None,
        };
        cfg.system = match (system, cfg.system.clone()) {
            (Some(true) | None, SystemConfig::KickedTop { j, k }) => SystemConfig::KickedTop {
                j: self.j.unwrap_or(j),
                k: self.k.unwrap_or(k),
            },
            (Some(true), SystemConfig::RandomUnitary { .. }) => SystemConfig::KickedTop {
                j: self.j.unwrap_or(31.5),
                k: self.k.unwrap_or(12.0),
            },
            (Some(false) | None, SystemConfig::RandomUnitary { n, seed }) => {
                SystemConfig::RandomUnitary {
                    n: self.dim.unwrap_or(n),
                    seed: self.unitary_seed.unwrap_or(seed),
                }
            }
            (Some(false), SystemConfig::KickedTop { .. }) => SystemConfig::RandomUnitary {
                n: self.dim.unwrap_or(64),
                seed: self.unitary_seed.unwrap_or(0),
            },
        };
        match cfg.system {
            SystemConfig::KickedTop { .. } if self.dim.is_some() || self.unitary_seed.is_some() => {
                return Err(Error::InvalidInput(
                    "--dim and --unitary-seed apply to the random-unitary system".into(),
                ));
            }
            SystemConfig::RandomUnitary { .. } if self.j.is_some() || self.k.is_some() => {
                return Err(Error::InvalidInput(
                    "--j and --k apply to the kicked-top system".into(),
                ));
            }
            _ => {}
        }

        let PerturbationConfig { delta, generator } = cfg.perturbation;
        cfg.perturbation = PerturbationConfig {
            delta: self.delta.unwrap_or(delta),
            generator: match (self.generator, &self.generator_file) {
                (Some(GeneratorArg::CollectiveZ), _) => GeneratorKind::CollectiveZ,
                (Some(GeneratorArg::SpinZ), _) => GeneratorKind::SpinZ,
                (None, Some(path)) => GeneratorKind::Custom(path.to_string_lossy().into_owned()),
                (None, None) => generator,
            },
        };
        if let Some(n) = self.n_max {
            cfg.n_max = n;
        }
        if let Some(list) = &self.estimators {
            cfg.estimators = Vec::new();
            for e in list {
                let kind = match e {
                    EstimatorArg::Exact => EstimatorKind::Exact,
                    EstimatorArg::Mc => EstimatorKind::Mc,
                    EstimatorArg::Dqc1 => EstimatorKind::Dqc1,
                };
                if !cfg.estimators.contains(&kind) {
                    cfg.estimators.push(kind);
                }
            }
        }
        if let Some(m) = self.mc_samples {
            cfg.mc.samples = m;
        }
        if let Some(s) = self.sampler {
            cfg.mc.sampler = match s {
                SamplerArg::Haar => StateSampler::Haar,
                SamplerArg::Basis => StateSampler::Basis,
            };
        }
        let Dqc1Settings {
            gamma,
            shots,
            readout_noise_sd,
        } = cfg.dqc1;
        cfg.dqc1 = Dqc1Settings {
            gamma: self.gamma.unwrap_or(gamma),
            shots: self.shots.unwrap_or(shots),
            readout_noise_sd: self.readout_noise_sd.unwrap_or(readout_noise_sd),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.fit_window.is_some() {
            cfg.fit_window = self.fit_window;
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so an interrupted run never leaves a truncated file behind.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn cmd_run(args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let out = run_experiment(&cfg)?;
    match &cfg.output {
        Some(path) => {
            let sidecar = sidecar_path(path);
            if sidecar == *path {
                return Err(Error::InvalidInput(
                    "output must not use the .json extension".into(),
                ));
            }
            write_atomic(path, &out.csv)?;
            write_atomic(&sidecar, &out.sidecar_json()?)?;
            eprintln!("wrote {} and {}", path.display(), sidecar.display());
        }
        None => print!("{}", out.csv),
    }
    match (&out.sidecar.fit, &out.sidecar.fit_error) {
        (Some(f), _) => eprintln!(
            "fit on {}: gamma = {:.6e} over [{}, {}], ratio to {REFERENCE_RATE_COEFFICIENT} delta^2 = {:.4}",
            f.column, f.fit.gamma_fit, f.fit.fit_window.0, f.fit.fit_window.1, f.ratio_to_reference_rate
        ),
        (None, Some(e)) => eprintln!("fit skipped: {e}"),
        (None, None) => {}
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let csv = std::fs::read_to_string(&args.input)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", args.input.display())))?;
    let (ns, values) = read_csv_column(&csv, &args.column)?;
    let sidecar_cfg = std::fs::read_to_string(sidecar_path(&args.input))
        .ok()
        .and_then(|t| ExperimentConfig::from_json(&t).ok());
    let window = match args.window {
        Some(w) => w,
        None => {
            let dim = match (args.dim, &sidecar_cfg) {
                (Some(d), _) => d,
                (None, Some(cfg)) => cfg.dim()?,
                (None, None) => {
                    return Err(Error::InvalidInput(
                        "pass --dim or --window when the run sidecar is unavailable".into(),
                    ))
                }
            };
            default_window(&ns, &values, dim)?
        }
    };
    let fit = fit_decay_values(&ns, &values, window)?;
    let delta = args.delta.or(sidecar_cfg.map(|c| c.perturbation.delta));
    let mut report = serde_json::to_value(&fit)?;
    if let Some(d) = delta.filter(|d| *d != 0.0) {
        report["ratio_to_reference_rate"] = fit
            .ratio_to_quadratic_law(REFERENCE_RATE_COEFFICIENT, d)
            .into();
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_verify(args: &TheoremArgs) -> Result<()> {
    let report = verify_theorem(args.ell, args.dim, args.trials, args.samples, args.seed)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "ell = {}, N = {}, M = {}, seed = {}",
            report.ell, report.dim, report.samples, report.seed
        );
        for (i, t) in report.trials.iter().enumerate() {
            let closed = t
                .closed_form_error
                .map(|e| format!("  closed-form err {e:.1e}"))
                .unwrap_or_default();
            println!(
                "trial {i}: lhs = {:+.6}{:+.6}i  rhs = {:+.6}{:+.6}i  stderr = {:.2e}  ({:.2} sigma){closed}  {}",
                t.lhs[0],
                t.lhs[1],
                t.rhs[0],
                t.rhs[1],
                t.stderr,
                t.sigmas,
                if t.passed { "PASS" } else { "FAIL" }
            );
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(Error::Verification(format!(
            "identity not reproduced within {CONFIDENCE_SIGMAS} stderr"
        )))
    }
}

/// Agreement required between the two decoherence-factor routes.
const FACTOR_TOL: f64 = 1e-10;

fn cmd_separability(args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    if cfg.dim()? > MAX_SEPARABILITY_DIM {
        return Err(Error::Resource(format!(
            "separability check supports N <= {MAX_SEPARABILITY_DIM}, got {}",
            cfg.dim()?
        )));
    }
    let pair = cfg.build_pair()?;
    let steps = separability_sweep(&pair, cfg.n_max)?;
    println!("n,distance,separable,decoherence_factor,factor_from_fidelity");
    let mut ok = true;
    for s in &steps {
        let agree = (s.decoherence_factor - s.factor_from_fidelity).abs() <= FACTOR_TOL;
        ok &= s.passed && agree;
        println!(
            "{},{:.3e},{},{:.16e},{:.16e}",
            s.n, s.distance, s.passed, s.decoherence_factor, s.factor_from_fidelity
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Error::Verification(
            "separability or decoherence check failed".into(),
        ))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Fit(a) => cmd_fit(a),
        Command::VerifyTheorem(a) => cmd_verify(a),
        Command::Separability(a) => cmd_separability(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fidlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
