//! The `slam` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::crlb::approx_crlb;
use crate::dictionary::{quantize_orientation, DaoaQuantizerMode, DictionaryConfig};
use crate::error::{Error, Result};
use crate::geometry::{angular_distance, observe, sample_scene, MultipathSet, ScenarioConfig, Scene};
use crate::localization::{solve_location_with, LocationEstimate};
use crate::montecarlo::{
    nearest_rank, run_trials, sweep, to_csv, Corruption, EstimatorSpec, ExperimentConfig, Metric, RecordRow,
};
use crate::orientation::{robust_locate, GroupingStrategy, OrientationInit, OrientationSolverConfig};

#[derive(Debug, Parser)]
#[command(name = "slam", version, about = "Single-anchor one-way multipath radio-SLAM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random scene and print it as JSON.
    Scene(SceneArgs),
    /// Locate the receiver from one scene or multipath file.
    Locate(LocateArgs),
    /// Monte Carlo trials, one CSV row per (trial, estimator).
    Simulate(SimulateArgs),
    /// Error percentiles versus DAoA dictionary size.
    Sweep(SweepArgs),
    /// DAoA-quantization position bound per scene and its percentiles.
    Crlb(CrlbArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (all cores if absent). Output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Paths per scene.
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Side of the square area [m].
    #[arg(long)]
    pub side: Option<f64>,
}

impl ScenarioArgs {
    fn apply(&self, s: &mut ScenarioConfig) {
        if let Some(n) = self.n_paths {
            s.n_paths = n;
        }
        if let Some(side) = self.side {
            s.side = side;
        }
    }
}

#[derive(Debug, Args)]
pub struct DictionaryArgs {
    /// Delay grid size over one cyclic prefix.
    #[arg(long)]
    pub k_tau: Option<usize>,
    /// AoD grid size.
    #[arg(long)]
    pub k_theta: Option<usize>,
    /// DAoA grid size.
    #[arg(long)]
    pub k_phi: Option<usize>,
    /// Orientation sensor levels over a full turn.
    #[arg(long)]
    pub n_q: Option<usize>,
    /// Cyclic prefix length [s].
    #[arg(long)]
    pub t_cp: Option<f64>,
}

impl DictionaryArgs {
    fn config(&self) -> Result<DictionaryConfig> {
        let d = DictionaryConfig::default();
        let cfg = DictionaryConfig {
            k_tau: self.k_tau.unwrap_or(d.k_tau),
            k_theta: self.k_theta.unwrap_or(d.k_theta),
            k_phi: self.k_phi.unwrap_or(d.k_phi),
            n_q: self.n_q.unwrap_or(d.n_q),
            t_cp: self.t_cp.unwrap_or(d.t_cp),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `none|daoa|daoa-sin|aod|tdoa` take their grid from the dictionary
    /// flags; `daoa:K` and friends are used verbatim.
    fn corruption(&self, spec: &str) -> Result<Corruption> {
        if spec.contains(':') {
            return spec.parse();
        }
        let d = self.config()?;
        let c = match spec {
            "none" => Corruption::None,
            "daoa" => Corruption::QuantizeDaoa {
                k: d.k_phi,
                quantizer: DaoaQuantizerMode::Uniform,
            },
            "daoa-sin" => Corruption::QuantizeDaoa {
                k: d.k_phi,
                quantizer: DaoaQuantizerMode::SinGrid,
            },
            "aod" => Corruption::QuantizeAod { k: d.k_theta },
            "tdoa" => Corruption::QuantizeTdoa {
                k_tau: d.k_tau,
                t_cp: d.t_cp,
            },
            other => return other.parse(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Estimator labels; `sensor` levels default to `--n-q`.
    fn estimator(&self, spec: &str) -> Result<EstimatorSpec> {
        let n_q = self.n_q.unwrap_or(DictionaryConfig::default().n_q);
        let full = if spec == "sensor" || spec.ends_with(":sensor") {
            format!("{spec}:{n_q}")
        } else {
            spec.to_string()
        };
        full.parse()
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Brute-force grid points over a full turn.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Refinement bracket width at convergence [rad].
    #[arg(long)]
    pub refine_tol: Option<f64>,
}

impl SolverArgs {
    fn apply(&self, s: &mut OrientationSolverConfig) {
        if let Some(g) = self.grid_points {
            s.grid_points = g;
        }
        if let Some(t) = self.refine_tol {
            s.refine_tolerance = t;
        }
    }
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
pub struct LocateArgs {
    /// Scene JSON, or `{"multipath": ..., "truth": ...}` with optional truth.
    #[arg(long)]
    pub input: PathBuf,
    /// Orientation: `known` (from truth), a number [rad], `robust`, or
    /// `sensor` (truth quantized to --n-q levels).
    #[arg(long, default_value = "robust", allow_hyphen_values = true)]
    pub phi0: String,
    /// Quantize the multipath first: none|daoa|daoa-sin|aod|tdoa or e.g. daoa:256.
    #[arg(long, default_value = "none")]
    pub corruption: String,
    /// Path grouping for orientation consensus (with --phi0 robust).
    #[arg(long, default_value = "d1", value_parser = ["3p", "d1"])]
    pub grouping: String,
    /// Orientation search start (with --phi0 robust); `sensor` quantizes the
    /// true orientation to --n-q levels.
    #[arg(long, default_value = "brute", value_parser = ["brute", "sensor"])]
    pub init: String,
    #[command(flatten)]
    pub dictionary: DictionaryArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output file (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Monte Carlo trials.
    #[arg(long)]
    pub n_sim: Option<usize>,
    /// Comma-separated estimators: known, sensor[:NQ], robust:{3p|d1}:brute,
    /// robust:{3p|d1}:sensor[:NQ], random.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub dictionary: DictionaryArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

impl ExperimentArgs {
    fn config(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = seed {
            cfg.master_seed = s;
        }
        if let Some(n) = self.n_sim {
            cfg.n_sim = n;
        }
        if let Some(list) = &self.estimators {
            cfg.estimators = list
                .iter()
                .map(|e| self.dictionary.estimator(e))
                .collect::<Result<_>>()?;
        }
        self.scenario.apply(&mut cfg.scenario);
        self.solver.apply(&mut cfg.solver);
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// none|daoa|daoa-sin|aod|tdoa (grid from the dictionary flags) or e.g. daoa:256.
    #[arg(long)]
    pub corruption: Option<String>,
    /// Also write per-estimator error percentiles to this CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated DAoA grid sizes.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
    pub k_phi_list: Vec<usize>,
    /// DAoA quantizer.
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "sin-grid"])]
    pub quantizer: String,
    /// Reported percentile in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    pub percentile: f64,
}

#[derive(Debug, Args)]
pub struct CrlbArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated DAoA grid sizes.
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub k_phi_list: Vec<usize>,
    /// Random scenes to evaluate.
    #[arg(long, default_value_t = 100)]
    pub n_scenes: usize,
    /// Evaluate this scene JSON instead of random scenes.
    #[arg(long, conflicts_with = "n_scenes")]
    pub input: Option<PathBuf>,
    /// Comma-separated percentiles in [0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.8,0.9")]
    pub percentiles: Vec<f64>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

/// Contents accepted by `locate --input`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LocateInput {
    Scene(Scene),
    Multipath {
        multipath: MultipathSet,
        #[serde(default)]
        truth: Option<Scene>,
    },
}

#[derive(Debug, Serialize)]
struct LocateOutput {
    #[serde(flatten)]
    estimate: LocationEstimate,
    orientation_source: String,
    position_error: Option<f64>,
    clock_error: Option<f64>,
    orientation_error: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CrlbRow {
    kind: &'static str,
    scene: Option<usize>,
    seed: Option<u64>,
    k_phi: usize,
    percentile: Option<f64>,
    approx_crlb: f64,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    estimator: String,
    metric: &'static str,
    unit: &'static str,
    percentile: f64,
    value: f64,
    n_ok: usize,
    n_failed: usize,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(bytes)?;
            s.flush()?;
        }
    }
    Ok(())
}

fn cmd_scene(a: &SceneArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::default();
    a.scenario.apply(&mut cfg);
    let scene = sample_scene(&cfg, a.common.seed.unwrap_or(0))?;
    let mut json = serde_json::to_vec_pretty(&scene)?;
    json.push(b'\n');
    emit(a.common.out.as_deref(), &json)
}

fn cmd_locate(a: &LocateArgs) -> Result<()> {
    let input: LocateInput = serde_json::from_str(&std::fs::read_to_string(&a.input)?)?;
    let (obs, truth) = match input {
        LocateInput::Scene(s) => (observe(&s)?, Some(s)),
        LocateInput::Multipath { multipath, truth } => (multipath, truth),
    };
    let obs = a.dictionary.corruption(&a.corruption)?.apply(&obs)?;
    let need_truth = || {
        truth
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("--phi0 {} needs a file with truth", a.phi0)))
    };
    let mut solver = OrientationSolverConfig::default();
    a.solver.apply(&mut solver);
    let n_q = a.dictionary.config()?.n_q;

    let (estimate, source) = match a.phi0.as_str() {
        "known" => (
            solve_location_with(&obs, need_truth()?.orientation, &solver.localization)?,
            "known",
        ),
        "sensor" => {
            let phi = quantize_orientation(need_truth()?.orientation, n_q);
            (solve_location_with(&obs, phi, &solver.localization)?, "sensor")
        }
        "robust" => {
            solver.init = match a.init.as_str() {
                "sensor" => OrientationInit::from_sensor(quantize_orientation(need_truth()?.orientation, n_q), n_q),
                _ => OrientationInit::BruteForce,
            };
            (
                robust_locate(&obs, &a.grouping.parse::<GroupingStrategy>()?, &solver)?.estimate,
                "robust",
            )
        }
        number => {
            let phi: f64 = number
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("--phi0 `{number}` is not known|sensor|robust|<rad>")))?;
            (solve_location_with(&obs, phi, &solver.localization)?, "given")
        }
    };
    let out = LocateOutput {
        position_error: truth.as_ref().map(|t| (estimate.rx_position - t.rx_position).norm()),
        clock_error: truth.as_ref().map(|t| (estimate.clock_offset - t.clock_offset).abs()),
        orientation_error: truth
            .as_ref()
            .map(|t| angular_distance(estimate.orientation, t.orientation)),
        orientation_source: source.into(),
        estimate,
    };
    let mut json = serde_json::to_vec_pretty(&out)?;
    json.push(b'\n');
    emit(a.out.as_deref(), &json)
}

const SUMMARY_PROBS: [f64; 3] = [0.5, 0.8, 0.9];

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = a.experiment.config(a.common.seed)?;
    if let Some(c) = &a.corruption {
        cfg.corruption = a.experiment.dictionary.corruption(c)?;
    }
    let records = run_trials(&cfg, a.common.threads)?;
    let rows: Vec<RecordRow> = records.iter().map(RecordRow::from).collect();
    emit(a.common.out.as_deref(), &to_csv(&rows)?)?;
    if let Some(path) = &a.summary {
        let mut summary = Vec::new();
        for spec in &cfg.estimators {
            let label = spec.to_string();
            let mine: Vec<_> = records.iter().filter(|r| r.estimator == label).cloned().collect();
            for metric in Metric::ALL {
                let Ok(d) = crate::montecarlo::cdf_and_percentiles(&mine, metric, &SUMMARY_PROBS) else {
                    continue;
                };
                for (p, v) in d.percentiles {
                    summary.push(SummaryRow {
                        estimator: label.clone(),
                        metric: metric.name(),
                        unit: metric.unit(),
                        percentile: p,
                        value: v,
                        n_ok: d.n_ok,
                        n_failed: d.n_failed,
                    });
                }
            }
        }
        std::fs::write(path, to_csv(&summary)?)?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = a.experiment.config(a.common.seed)?;
    let quantizer = a.quantizer.parse()?;
    let rows = sweep(&cfg, &a.k_phi_list, quantizer, a.percentile, a.common.threads)?;
    emit(a.common.out.as_deref(), &to_csv(&rows)?)
}

fn cmd_crlb(a: &CrlbArgs) -> Result<()> {
    if a.k_phi_list.is_empty() {
        return Err(Error::InvalidArgument("empty --k-phi-list".into()));
    }
    let scenes: Vec<(Option<u64>, Scene)> = match &a.input {
        Some(p) => vec![(None, serde_json::from_str(&std::fs::read_to_string(p)?)?)],
        None => {
            let mut cfg = ScenarioConfig::default();
            a.scenario.apply(&mut cfg);
            let master = a.common.seed.unwrap_or(0);
            (0..a.n_scenes)
                .map(|i| {
                    let seed = crate::montecarlo::trial_seed(master, i);
                    Ok((Some(seed), sample_scene(&cfg, seed)?))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut rows = Vec::new();
    for &k in &a.k_phi_list {
        let mut bounds = Vec::new();
        for (i, (seed, scene)) in scenes.iter().enumerate() {
            let b = approx_crlb(scene, k)?;
            bounds.push(b);
            rows.push(CrlbRow {
                kind: "scene",
                scene: Some(i),
                seed: *seed,
                k_phi: k,
                percentile: None,
                approx_crlb: b,
            });
        }
        bounds.sort_by(f64::total_cmp);
        for &p in &a.percentiles {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("percentile {p} outside [0, 1]")));
            }
            rows.push(CrlbRow {
                kind: "percentile",
                scene: None,
                seed: None,
                k_phi: k,
                percentile: Some(p),
                approx_crlb: nearest_rank(&bounds, p),
            });
        }
    }
    emit(a.common.out.as_deref(), &to_csv(&rows)?)
}

/// Runs the selected subcommand.
pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Scene(a) => cmd_scene(a),
        Command::Locate(a) => cmd_locate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Crlb(a) => cmd_crlb(a),
    }
}

/// Parses `argv` and runs it, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let kind = match &e {
                Error::InvalidArgument(_) | Error::InvalidConfig(_) => "invalid-input",
                Error::Io(_) => "io",
                _ => "estimation",
            };
            eprintln!("error[{kind}]: {e}");
            2
        }
    }
}
