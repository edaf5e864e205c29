//! Experiment configuration and drivers behind the command-line runner.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dqc1::{
    decoherence_factor, dqc1_average_fidelity, separability_check, DQC1Config, ProbeRegisterState,
    ReadoutAxis,
};
use crate::error::{Error, Result};
use crate::fidelity::{
    average_fidelity_from_trace, exact_average_fidelity_series, haar_moment_lhs, haar_moment_rhs,
    haar_unitary, mc_average_fidelity, trace_series, two_operator_average, FidelitySeries,
    StateSampler,
};
use crate::fit::{default_window, fit_decay, DecayFit};
use crate::linalg::{CMatrix, MAX_DENSE_ENTRIES};
use crate::spinsys::{
    build_angular_momentum, collective_z_generator, make_map_pair, GeneratorKind, KickedTopSystem,
    MapPair, PerturbationSpec, Spin,
};

/// Largest Hilbert-space dimension a run will allocate dense operators for.
pub const MAX_RUN_DIM: usize = 4096;
/// Largest dimension the separability diagnostic accepts.
pub const MAX_SEPARABILITY_DIM: usize = 512;
/// Statistical agreement band, in standard errors.
pub const CONFIDENCE_SIGMAS: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    KickedTop { j: f64, k: f64 },
    RandomUnitary { n: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub delta: f64,
    #[serde(default = "default_generator")]
    pub generator: GeneratorKind,
}

fn default_generator() -> GeneratorKind {
    GeneratorKind::CollectiveZ
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Exact,
    Mc,
    Dqc1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
    #[serde(default)]
    pub sampler: StateSampler,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            sampler: StateSampler::Basis,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dqc1Settings {
    pub gamma: f64,
    pub shots: u64,
    #[serde(default)]
    pub readout_noise_sd: f64,
}

impl Default for Dqc1Settings {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            shots: 100_000,
            readout_noise_sd: 0.0,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub perturbation: PerturbationConfig,
    pub n_max: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub dqc1: Dqc1Settings,
    #[serde(default)]
    pub seed: u64,
    /// Inclusive `[n_lo, n_hi]`; the pre-saturation rule when absent.
    #[serde(default)]
    pub fit_window: Option<(usize, usize)>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// Chaotic kicked top with `N = 64`, `delta = 0.1`, 50 basis states.
    fn default() -> Self {
        Self {
            system: SystemConfig::KickedTop { j: 31.5, k: 12.0 },
            perturbation: PerturbationConfig {
                delta: 0.1,
                generator: GeneratorKind::CollectiveZ,
            },
            n_max: 100,
            estimators: vec![EstimatorKind::Exact, EstimatorKind::Mc],
            mc: McConfig::default(),
            dqc1: Dqc1Settings::default(),
            seed: 0,
            fit_window: None,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses either a bare config or a run sidecar (which carries the config
    /// under `"config"`).
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = match value.get("config") {
            Some(cfg) if value.get("columns").is_some() => cfg.clone(),
            _ => value,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::invalid("select at least one estimator"));
        }
        if !self.perturbation.delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        match self.system {
            SystemConfig::KickedTop { j, k } => {
                Spin::new(j)?;
                if !k.is_finite() {
                    return Err(Error::invalid("kick strength must be finite"));
                }
            }
            SystemConfig::RandomUnitary { n: 0, .. } => {
                return Err(Error::invalid("random unitary dimension must be positive"));
            }
            SystemConfig::RandomUnitary { .. } => {}
        }
        if self.dim()? > MAX_RUN_DIM {
            return Err(Error::Resource(format!(
                "dimension {} exceeds the dense-operator limit {MAX_RUN_DIM}",
                self.dim()?
            )));
        }
        if let GeneratorKind::Custom(path) = &self.perturbation.generator {
            if !Path::new(path).is_file() {
                return Err(Error::invalid(format!(
                    "generator file {path} does not exist"
                )));
            }
        }
        if self.estimators.contains(&EstimatorKind::Mc) && self.mc.samples < 2 {
            return Err(Error::invalid("Monte Carlo needs at least 2 samples"));
        }
        if self.estimators.contains(&EstimatorKind::Dqc1) {
            self.dqc1_config()?.validate()?;
        }
        if let Some((lo, hi)) = self.fit_window {
            if lo >= hi || hi > self.n_max {
                return Err(Error::invalid(format!(
                    "fit window [{lo}, {hi}] must satisfy lo < hi <= n_max"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> Result<usize> {
        match self.system {
            SystemConfig::KickedTop { j, .. } => Ok(Spin::new(j)?.dim()),
            SystemConfig::RandomUnitary { n, .. } => Ok(n),
        }
    }

    /// Seed of the Monte Carlo streams.
    pub fn mc_seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the shot-noise streams; distinct from the Monte Carlo seed.
    pub fn dqc1_seed(&self) -> u64 {
        self.seed ^ 0x9e37_79b9_7f4a_7c15
    }

    pub fn dqc1_config(&self) -> Result<DQC1Config> {
        let cfg = DQC1Config {
            gamma: self.dqc1.gamma,
            shots: self.dqc1.shots,
            seed: self.dqc1_seed(),
            readout_axis: ReadoutAxis::X,
            readout_noise_sd: self.dqc1.readout_noise_sd,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds `(U, U_p)` for the configured system and perturbation.
    pub fn build_pair(&self) -> Result<MapPair> {
        self.validate()?;
        let dim = self.dim()?;
        let (u, jz) = match self.system {
            SystemConfig::KickedTop { j, k } => {
                let sys = KickedTopSystem::new(Spin::new(j)?, k)?;
                (sys.unitary()?, sys.jz)
            }
            SystemConfig::RandomUnitary { n, seed } => {
                let u = haar_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed));
                let jz = if n > 1 {
                    build_angular_momentum(Spin::from_dim(n)?).2
                } else {
                    CMatrix::zeros(1, 1)
                };
                (u, jz)
            }
        };
        let generator = match &self.perturbation.generator {
            GeneratorKind::CollectiveZ => collective_z_generator(dim),
            GeneratorKind::SpinZ => jz,
            GeneratorKind::Custom(path) => load_generator(Path::new(path))?,
        };
        make_map_pair(
            u,
            &PerturbationSpec::new(self.perturbation.delta, generator)?,
        )
    }
}

/// Reads a Hermitian matrix stored as JSON rows of `[re, im]` pairs.
pub fn load_generator(path: &Path) -> Result<CMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_generator(&text)
}

pub fn parse_generator(text: &str) -> Result<CMatrix> {
    let rows: Vec<Vec<[f64; 2]>> = serde_json::from_str(text)?;
    let rows: Vec<Vec<Complex64>> = rows
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect()
        })
        .collect();
    let m = CMatrix::from_rows(&rows)?;
    if !m.is_square() || !m.is_hermitian(crate::linalg::HERMITIAN_TOL) {
        return Err(Error::invalid(
            "generator matrix must be square and Hermitian",
        ));
    }
    Ok(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct Seeds {
    pub mc: Option<u64>,
    pub dqc1: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    /// Column the fit was taken from.
    pub column: String,
    #[serde(flatten)]
    pub fit: DecayFit,
    /// `Gamma_fit / (2.5 delta^2)`, the golden-rule reference rate.
    pub ratio_to_reference_rate: f64,
}

/// JSON document written next to the CSV.
#[derive(Clone, Debug, Serialize)]
pub struct Sidecar {
    pub config: ExperimentConfig,
    pub dim: usize,
    pub columns: Vec<String>,
    pub seeds: Seeds,
    pub fit: Option<FitReport>,
    pub fit_error: Option<String>,
}

/// Golden-rule coefficient used for the reference rate `2.5 delta^2`.
pub const REFERENCE_RATE_COEFFICIENT: f64 = 2.5;

pub const CSV_HEADER: &str = "n,exact,mc_mean,mc_stderr,dqc1_mean,dqc1_stderr";

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub exact: Option<FidelitySeries>,
    pub mc: Option<FidelitySeries>,
    pub dqc1: Option<FidelitySeries>,
    pub csv: String,
    pub sidecar: Sidecar,
}

impl ExperimentOutput {
    pub fn sidecar_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(&self.sidecar)?;
        text.push('\n');
        Ok(text)
    }
}

/// Full double precision, 17 significant digits.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs every selected estimator and assembles the CSV and sidecar.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let pair = cfg.build_pair()?;
    run_experiment_with_pair(cfg, &pair)
}

pub fn run_experiment_with_pair(
    cfg: &ExperimentConfig,
    pair: &MapPair,
) -> Result<ExperimentOutput> {
    let wants = |e| cfg.estimators.contains(&e);
    let exact = wants(EstimatorKind::Exact).then(|| exact_average_fidelity_series(pair, cfg.n_max));
    let mc = wants(EstimatorKind::Mc)
        .then(|| {
            mc_average_fidelity(
                pair,
                cfg.n_max,
                cfg.mc.samples,
                cfg.mc_seed(),
                cfg.mc.sampler,
            )
        })
        .transpose()?;
    let dqc1 = wants(EstimatorKind::Dqc1)
        .then(|| dqc1_average_fidelity(pair, cfg.n_max, &cfg.dqc1_config()?))
        .transpose()?;

    let mut csv = String::with_capacity(64 * (cfg.n_max + 2));
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    let cell = |s: &Option<FidelitySeries>, n: usize, err: bool| {
        s.as_ref()
            .map(|s| format_value(if err { s.stderr[n] } else { s.mean[n] }))
            .unwrap_or_default()
    };
    for n in 0..=cfg.n_max {
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{}",
            cell(&exact, n, false),
            cell(&mc, n, false),
            cell(&mc, n, true),
            cell(&dqc1, n, false),
            cell(&dqc1, n, true),
        );
    }

    let dim = pair.dim();
    let (fit, fit_error) = match [("exact", &exact), ("mc_mean", &mc), ("dqc1_mean", &dqc1)]
        .into_iter()
        .find_map(|(name, s)| s.as_ref().map(|s| (name, s)))
    {
        Some((column, series)) => {
            let fitted = cfg
                .fit_window
                .map_or_else(|| default_window(&series.n_values, &series.mean, dim), Ok)
                .and_then(|w| fit_decay(series, w));
            match fitted {
                Ok(fit) => {
                    let ratio = fit
                        .ratio_to_quadratic_law(REFERENCE_RATE_COEFFICIENT, cfg.perturbation.delta);
                    (
                        Some(FitReport {
                            column: column.to_string(),
                            fit,
                            ratio_to_reference_rate: ratio,
                        }),
                        None,
                    )
                }
                Err(e) => (None, Some(e.to_string())),
            }
        }
        None => (None, None),
    };

    let columns = CSV_HEADER.split(',').map(str::to_string).collect();
    let sidecar = Sidecar {
        config: cfg.clone(),
        dim,
        columns,
        seeds: Seeds {
            mc: mc.as_ref().map(|_| cfg.mc_seed()),
            dqc1: dqc1.as_ref().map(|_| cfg.dqc1_seed()),
        },
        fit,
        fit_error,
    };
    Ok(ExperimentOutput {
        exact,
        mc,
        dqc1,
        csv,
        sidecar,
    })
}

/// Parses the CSV written by [`run_experiment`] into `(n, column)` pairs,
/// skipping empty cells.
pub fn read_csv_column(csv: &str, column: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::invalid("empty CSV"))?
        .split(',')
        .collect();
    let col = header
        .iter()
        .position(|h| *h == column)
        .ok_or_else(|| Error::invalid(format!("CSV has no column {column:?}")))?;
    let mut ns = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::invalid(format!(
                "CSV row {} has {} cells",
                i + 2,
                cells.len()
            )));
        }
        if cells[col].is_empty() {
            continue;
        }
        let bad = |what: &str| Error::invalid(format!("CSV row {}: bad {what}", i + 2));
        ns.push(cells[0].parse().map_err(|_| bad("step"))?);
        values.push(cells[col].parse().map_err(|_| bad("value"))?);
    }
    Ok((ns, values))
}

/// One trial of the Haar-moment identity.
#[derive(Clone, Debug, Serialize)]
pub struct TheoremTrial {
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub stderr: f64,
    /// `|lhs - rhs| / stderr`.
    pub sigmas: f64,
    /// Closed form `Tr A / N` (one operator) or `(Tr A Tr B + Tr AB)/(N^2+N)` (two).
    pub closed_form: Option<[f64; 2]>,
    pub closed_form_error: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremReport {
    pub ell: usize,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub trials: Vec<TheoremTrial>,
    pub passed: bool,
}

/// Closed-form agreement required of the exact side.
pub const CLOSED_FORM_TOL: f64 = 1e-10;

/// Compares the sampled and projector sides of the Haar-moment identity on
/// random complex Gaussian operators.
pub fn verify_theorem(
    ell: usize,
    dim: usize,
    trials: usize,
    samples: usize,
    seed: u64,
) -> Result<TheoremReport> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 << 32 | t as u64);
        let ops: Vec<CMatrix> = (0..ell)
            .map(|_| {
                CMatrix::from_fn(dim, dim, |_, _| {
                    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                })
            })
            .collect();
        let rhs = haar_moment_rhs(&ops)?;
        let lhs = haar_moment_lhs(&ops, samples, seed.wrapping_add(t as u64))?;
        let closed_form = match ell {
            1 => Some(ops[0].trace()? / dim as f64),
            2 => Some(two_operator_average(&ops[0], &ops[1])?),
            _ => None,
        };
        let closed_form_error = closed_form.map(|c| (c - rhs).norm());
        let stderr = lhs.stderr();
        let diff = (lhs.mean - rhs).norm();
        let passed = diff <= CONFIDENCE_SIGMAS * stderr
            && closed_form_error.is_none_or(|e| e <= CLOSED_FORM_TOL);
        out.push(TheoremTrial {
            lhs: [lhs.mean.re, lhs.mean.im],
            rhs: [rhs.re, rhs.im],
            stderr,
            sigmas: if stderr > 0.0 {
                diff / stderr
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            },
            closed_form: closed_form.map(|c| [c.re, c.im]),
            closed_form_error,
            passed,
        });
    }
    let passed = out.iter().all(|t| t.passed);
    Ok(TheoremReport {
        ell,
        dim,
        samples,
        seed,
        trials: out,
        passed,
    })
}

/// Separability and decoherence diagnostics at one step.
#[derive(Clone, Debug, Serialize)]
pub struct SeparabilityStep {
    pub n: usize,
    pub distance: f64,
    pub passed: bool,
    pub decoherence_factor: f64,
    /// `sqrt((F (N^2 + N) - N) / N^2)` from the exact average fidelity.
    pub factor_from_fidelity: f64,
}

/// Runs the probe circuit for `0..=n_max` steps and certifies separability
/// at each one.
pub fn separability_sweep(pair: &MapPair, n_max: usize) -> Result<Vec<SeparabilityStep>> {
    let dim = pair.dim();
    if dim > MAX_SEPARABILITY_DIM {
        return Err(Error::Resource(format!(
            "separability check supports N <= {MAX_SEPARABILITY_DIM}, got {dim}"
        )));
    }
    debug_assert!(4 * dim * dim <= MAX_DENSE_ENTRIES);
    let traces = trace_series(pair, n_max);
    let p = pair.u().dagger().matmul(pair.u_p())?;
    let mut state = ProbeRegisterState::new(dim);
    let nf = dim as f64;
    let mut out = Vec::with_capacity(n_max + 1);
    for (n, t) in traces.iter().enumerate() {
        if n > 0 {
            state.step(pair.u(), &p)?;
        }
        let report = separability_check(&state)?;
        let f = average_fidelity_from_trace(*t, dim);
        out.push(SeparabilityStep {
            n,
            distance: report.distance,
            passed: report.passed,
            decoherence_factor: decoherence_factor(&state),
            factor_from_fidelity: ((f * (nf * nf + nf) - nf) / (nf * nf)).max(0.0).sqrt(),
        });
    }
    Ok(out)
}
