//! Seeded Monte Carlo harness: scene ensembles, observation corruption,
//! estimator roster, error metrics and percentile sweeps.
//!
//! Trial `t` draws everything from its own seed, derived from
//! `(master_seed, t)`, so records do not depend on scheduling or on the
//! number of worker threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::approx_crlb;
use crate::dictionary::{
    quantize_delay, quantize_orientation, quantize_uniform_angle, AngleQuantizer, DaoaQuantizerMode,
};
use crate::error::{Error, Result};
use crate::geometry::{angular_distance, observe, sample_scene, MultipathSet, Provenance, ScenarioConfig, Scene};
use crate::localization::{solve_location_with, LocationEstimate};
use crate::orientation::{robust_locate, GroupingStrategy, OrientationInit, OrientationSolverConfig};

/// How the exact multipath is degraded before estimation. One mode per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Corruption {
    None,
    QuantizeDaoa { k: usize, quantizer: DaoaQuantizerMode },
    QuantizeAod { k: usize },
    QuantizeTdoa { k_tau: usize, t_cp: f64 },
}

impl Corruption {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Corruption::None => Ok(()),
            Corruption::QuantizeDaoa { k, quantizer } => AngleQuantizer::new(k, quantizer).map(|_| ()),
            Corruption::QuantizeAod { k } if k >= 2 => Ok(()),
            Corruption::QuantizeTdoa { k_tau, t_cp } if k_tau >= 2 && t_cp > 0.0 && t_cp.is_finite() => Ok(()),
            other => Err(Error::InvalidConfig(format!("invalid corruption {other}"))),
        }
    }

    pub fn apply(&self, obs: &MultipathSet) -> Result<MultipathSet> {
        let mut paths = obs.paths.clone();
        match *self {
            Corruption::None => return Ok(obs.clone()),
            Corruption::QuantizeDaoa { k, quantizer } => {
                let q = AngleQuantizer::new(k, quantizer)?;
                paths.iter_mut().for_each(|p| p.daoa = q.quantize(p.daoa));
            }
            Corruption::QuantizeAod { k } => paths.iter_mut().for_each(|p| p.aod = quantize_uniform_angle(p.aod, k)),
            Corruption::QuantizeTdoa { k_tau, t_cp } => paths
                .iter_mut()
                .for_each(|p| p.tdoa = quantize_delay(p.tdoa, k_tau, t_cp)),
        }
        Ok(MultipathSet::new(paths, Provenance::Quantized))
    }
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Corruption::None => write!(f, "none"),
            Corruption::QuantizeDaoa {
                k,
                quantizer: DaoaQuantizerMode::Uniform,
            } => write!(f, "daoa:{k}"),
            Corruption::QuantizeDaoa {
                k,
                quantizer: DaoaQuantizerMode::SinGrid,
            } => write!(f, "daoa-sin:{k}"),
            Corruption::QuantizeAod { k } => write!(f, "aod:{k}"),
            Corruption::QuantizeTdoa { k_tau, t_cp } => write!(f, "tdoa:{k_tau}:{t_cp}"),
        }
    }
}

/// `none`, `daoa:K`, `daoa-sin:K`, `aod:K`, `tdoa:K` or `tdoa:K:T_CP`
/// (cyclic prefix in seconds, default 1e-6).
impl FromStr for Corruption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("`{s}` needs a grid size")))?
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad grid size in `{s}`")))
        };
        let c = match parts[0] {
            "none" if parts.len() == 1 => Corruption::None,
            "daoa" if parts.len() == 2 => Corruption::QuantizeDaoa {
                k: num(1)?,
                quantizer: DaoaQuantizerMode::Uniform,
            },
            "daoa-sin" if parts.len() == 2 => Corruption::QuantizeDaoa {
                k: num(1)?,
                quantizer: DaoaQuantizerMode::SinGrid,
            },
            "aod" if parts.len() == 2 => Corruption::QuantizeAod { k: num(1)? },
            "tdoa" if parts.len() == 2 || parts.len() == 3 => Corruption::QuantizeTdoa {
                k_tau: num(1)?,
                t_cp: match parts.get(2) {
                    Some(t) => t
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad t_cp in `{s}`")))?,
                    None => 1e-6,
                },
            },
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown corruption `{s}` (none|daoa:K|daoa-sin:K|aod:K|tdoa:K[:T_CP])"
                )))
            }
        };
        c.validate()?;
        Ok(c)
    }
}

/// Orientation search start for the robust estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitSpec {
    BruteForce,
    Sensor { n_q: usize },
}

/// Estimator roster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorSpec {
    KnownOrientation,
    /// Linear solve at the `n_q`-level quantized true orientation.
    QuantizedSensor {
        n_q: usize,
    },
    Robust {
        grouping: GroupingStrategy,
        init: InitSpec,
    },
    /// Uniform position in the square, ignoring the observations.
    RandomGuess,
}

impl EstimatorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorSpec::QuantizedSensor { n_q }
            | EstimatorSpec::Robust {
                init: InitSpec::Sensor { n_q },
                ..
            } if *n_q < 2 => Err(Error::InvalidConfig(format!("sensor levels must be >= 2, got {n_q}"))),
            EstimatorSpec::Robust {
                grouping: GroupingStrategy::Custom(_),
                ..
            } => Err(Error::InvalidConfig(
                "custom grouping is not available in the harness".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Smallest path count the estimator can work with.
    fn min_paths(&self) -> usize {
        match self {
            EstimatorSpec::Robust {
                grouping: GroupingStrategy::ThreePath,
                ..
            } => 5,
            EstimatorSpec::Robust { .. } => 4,
            EstimatorSpec::RandomGuess => 0,
            _ => 3,
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::KnownOrientation => write!(f, "known"),
            EstimatorSpec::QuantizedSensor { n_q } => write!(f, "sensor:{n_q}"),
            EstimatorSpec::Robust {
                grouping,
                init: InitSpec::BruteForce,
            } => write!(f, "robust:{grouping}:brute"),
            EstimatorSpec::Robust {
                grouping,
                init: InitSpec::Sensor { n_q },
            } => {
                write!(f, "robust:{grouping}:sensor:{n_q}")
            }
            EstimatorSpec::RandomGuess => write!(f, "random"),
        }
    }
}

/// `known`, `sensor:NQ`, `robust:{3p|d1}:brute`, `robust:{3p|d1}:sensor:NQ`,
/// `random`.
impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown estimator `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        let levels = |p: &str| p.parse::<usize>().map_err(|_| bad());
        let spec = match parts.as_slice() {
            ["known"] => EstimatorSpec::KnownOrientation,
            ["sensor", n] => EstimatorSpec::QuantizedSensor { n_q: levels(n)? },
            ["random"] => EstimatorSpec::RandomGuess,
            ["robust", g, "brute"] => EstimatorSpec::Robust {
                grouping: g.parse()?,
                init: InitSpec::BruteForce,
            },
            ["robust", g, "sensor", n] => EstimatorSpec::Robust {
                grouping: g.parse()?,
                init: InitSpec::Sensor { n_q: levels(n)? },
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for EstimatorSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EstimatorSpec> for String {
    fn from(e: EstimatorSpec) -> String {
        e.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_sim: usize,
    pub scenario: ScenarioConfig,
    pub corruption: Corruption,
    pub estimators: Vec<EstimatorSpec>,
    pub master_seed: u64,
    /// Grid, tolerance and localization settings; `init` is set per estimator.
    pub solver: OrientationSolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_sim: 1000,
            scenario: ScenarioConfig::default(),
            corruption: Corruption::None,
            estimators: vec![
                EstimatorSpec::KnownOrientation,
                EstimatorSpec::QuantizedSensor { n_q: 64 },
                EstimatorSpec::Robust {
                    grouping: GroupingStrategy::DropOne,
                    init: InitSpec::Sensor { n_q: 64 },
                },
                EstimatorSpec::RandomGuess,
            ],
            master_seed: 0,
            solver: OrientationSolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sim == 0 {
            return Err(Error::InvalidConfig("n_sim must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators selected".into()));
        }
        self.scenario.validate()?;
        self.corruption.validate()?;
        self.solver.validate()?;
        for e in &self.estimators {
            e.validate()?;
            if self.scenario.n_paths < e.min_paths() {
                return Err(Error::InvalidConfig(format!(
                    "estimator {e} needs at least {} paths, scenario has {}",
                    e.min_paths(),
                    self.scenario.n_paths
                )));
            }
        }
        Ok(())
    }
}

/// Seed of trial `t`: first output of the ChaCha stream `t` keyed by the
/// master seed.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// Meters.
    pub position_error: f64,
    /// Meters, one per reflector the estimator mapped.
    pub mapping_errors: Vec<f64>,
    /// `|tau_e_hat - tau_e|`, seconds. Absent for the random guess.
    pub clock_error: Option<f64>,
    /// Circular distance, radians. Absent for the random guess.
    pub orientation_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "reason")]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub estimator: String,
    pub status: TrialStatus,
    pub metrics: Option<TrialMetrics>,
}

fn metrics_from(scene: &Scene, est: &LocationEstimate, orientation: f64) -> TrialMetrics {
    let mapping_errors = est
        .used_paths
        .iter()
        .zip(&est.reflectors)
        .map(|(&i, r)| (r - scene.reflectors[i]).norm())
        .collect();
    TrialMetrics {
        position_error: (est.rx_position - scene.rx_position).norm(),
        mapping_errors,
        clock_error: Some((est.clock_offset - scene.clock_offset).abs()),
        orientation_error: Some(angular_distance(orientation, scene.orientation)),
    }
}

fn run_estimator<R: Rng>(
    spec: &EstimatorSpec,
    scene: &Scene,
    obs: &MultipathSet,
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<TrialMetrics> {
    let loc = &cfg.solver.localization;
    match spec {
        EstimatorSpec::KnownOrientation => {
            let est = solve_location_with(obs, scene.orientation, loc)?;
            Ok(metrics_from(scene, &est, scene.orientation))
        }
        EstimatorSpec::QuantizedSensor { n_q } => {
            let phi = quantize_orientation(scene.orientation, *n_q);
            let est = solve_location_with(obs, phi, loc)?;
            Ok(metrics_from(scene, &est, phi))
        }
        EstimatorSpec::Robust { grouping, init } => {
            let init = match *init {
                InitSpec::BruteForce => OrientationInit::BruteForce,
                InitSpec::Sensor { n_q } => {
                    OrientationInit::from_sensor(quantize_orientation(scene.orientation, n_q), n_q)
                }
            };
            let solver = OrientationSolverConfig { init, ..cfg.solver };
            let r = robust_locate(obs, grouping, &solver)?;
            Ok(metrics_from(scene, &r.estimate, r.orientation))
        }
        EstimatorSpec::RandomGuess => {
            let side = cfg.scenario.side;
            let guess = Vector2::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
            Ok(TrialMetrics {
                position_error: (guess - scene.rx_position).norm(),
                mapping_errors: Vec::new(),
                clock_error: None,
                orientation_error: None,
            })
        }
    }
}

/// Runs every estimator on trial `t`; all of them see the same corrupted
/// observations.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Vec<TrialRecord> {
    let seed = trial_seed(cfg.master_seed, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prepared = crate::geometry::sample_scene_with(&cfg.scenario, &mut rng)
        .and_then(|scene| Ok((observe(&scene)?, scene)))
        .and_then(|(obs, scene)| Ok((cfg.corruption.apply(&obs)?, scene)));
    cfg.estimators
        .iter()
        .map(|spec| {
            let outcome = prepared
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|(obs, scene)| run_estimator(spec, scene, obs, cfg, &mut rng).map_err(|e| e.to_string()));
            let (status, metrics) = match outcome {
                Ok(m) => (TrialStatus::Ok, Some(m)),
                Err(reason) => (TrialStatus::Failed(reason), None),
            };
            TrialRecord {
                trial,
                seed,
                estimator: spec.to_string(),
                status,
                metrics,
            }
        })
        .collect()
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// All trials, ordered by (trial, estimator). `threads = None` uses every
/// core; the result is identical for any thread count.
pub fn run_trials(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let per_trial: Vec<Vec<TrialRecord>> = with_threads(threads, || {
        (0..cfg.n_sim).into_par_iter().map(|t| run_trial(cfg, t)).collect()
    })?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Error metric extracted from a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Position,
    /// Per-reflector errors pooled across trials.
    Mapping,
    Clock,
    Orientation,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Position, Metric::Mapping, Metric::Clock, Metric::Orientation];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Position => "position",
            Metric::Mapping => "mapping",
            Metric::Clock => "clock",
            Metric::Orientation => "orientation",
        }
    }

    /// Meters, seconds or radians.
    pub fn unit(&self) -> &'static str {
        match self {
            Metric::Position | Metric::Mapping => "m",
            Metric::Clock => "s",
            Metric::Orientation => "rad",
        }
    }

    fn values(&self, m: &TrialMetrics) -> Vec<f64> {
        match self {
            Metric::Position => vec![m.position_error],
            Metric::Mapping => m.mapping_errors.clone(),
            Metric::Clock => m.clock_error.into_iter().collect(),
            Metric::Orientation => m.orientation_error.into_iter().collect(),
        }
    }
}

/// Nearest-rank percentile of ascending `sorted`: the value at rank
/// `ceil(p * n)` (1-based), `p = 0` giving the minimum.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n_ok: usize,
    pub n_failed: usize,
    /// Ascending `(value, F(value))` steps of the empirical CDF.
    pub cdf: Vec<(f64, f64)>,
    pub percentiles: Vec<(f64, f64)>,
}

/// Empirical CDF and nearest-rank percentiles of `metric` over the ok
/// records. Failed records are only counted.
pub fn cdf_and_percentiles(records: &[TrialRecord], metric: Metric, probs: &[f64]) -> Result<Distribution> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    let n_failed = records.iter().filter(|r| r.status != TrialStatus::Ok).count();
    let mut values: Vec<f64> = records
        .iter()
        .filter_map(|r| r.metrics.as_ref())
        .flat_map(|m| metric.values(m))
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no {} values among ok trials",
            metric.name()
        )));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let cdf = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / n as f64))
        .collect();
    let percentiles = probs.iter().map(|&p| (p, nearest_rank(&values, p))).collect();
    Ok(Distribution {
        n_ok: records.len() - n_failed,
        n_failed,
        cdf,
        percentiles,
    })
}

/// Scene ensemble of a config, trial by trial.
pub fn scenes(cfg: &ExperimentConfig) -> Result<Vec<Scene>> {
    cfg.scenario.validate()?;
    (0..cfg.n_sim)
        .into_par_iter()
        .map(|t| sample_scene(&cfg.scenario, trial_seed(cfg.master_seed, t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k_phi: usize,
    pub estimator: String,
    pub metric: &'static str,
    pub unit: &'static str,
    pub percentile: f64,
    pub value: f64,
    /// Same percentile of the DAoA-only bound over the ensemble, meters.
    pub approx_crlb: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// DAoA quantization sweep: one row per (K_phi, estimator, metric). The
/// corruption of `cfg` is replaced by DAoA quantization at each K_phi.
pub fn sweep(
    cfg: &ExperimentConfig,
    k_phi_list: &[usize],
    quantizer: DaoaQuantizerMode,
    percentile: f64,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if k_phi_list.is_empty() {
        return Err(Error::InvalidArgument("empty K_phi list".into()));
    }
    let ensemble = with_threads(threads, || scenes(cfg))??;
    let mut rows = Vec::new();
    for &k in k_phi_list {
        let run = ExperimentConfig {
            corruption: Corruption::QuantizeDaoa { k, quantizer },
            ..cfg.clone()
        };
        let records = run_trials(&run, threads)?;
        let bounds: Vec<f64> = ensemble.iter().filter_map(|s| approx_crlb(s, k).ok()).collect();
        let bound = if bounds.is_empty() {
            f64::NAN
        } else {
            let mut b = bounds;
            b.sort_by(f64::total_cmp);
            nearest_rank(&b, percentile)
        };
        for spec in &cfg.estimators {
            let label = spec.to_string();
            let mine: Vec<TrialRecord> = records.iter().filter(|r| r.estimator == label).cloned().collect();
            for metric in Metric::ALL {
                let (value, n_ok, n_failed) = match cdf_and_percentiles(&mine, metric, &[percentile]) {
                    Ok(d) => (d.percentiles[0].1, d.n_ok, d.n_failed),
                    Err(Error::EmptyResult(_)) => continue,
                    Err(e) => return Err(e),
                };
                rows.push(SweepRow {
                    k_phi: k,
                    estimator: label.clone(),
                    metric: metric.name(),
                    unit: metric.unit(),
                    percentile,
                    value,
                    approx_crlb: bound,
                    n_ok,
                    n_failed,
                });
            }
        }
    }
    Ok(rows)
}

/// Flat per-trial CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordRow {
    pub trial: usize,
    pub seed: u64,
    pub estimator: String,
    pub status: String,
    pub position_error: Option<f64>,
    pub clock_error: Option<f64>,
    pub orientation_error: Option<f64>,
    pub mapping_error_median: Option<f64>,
    pub n_mapped: usize,
}

impl From<&TrialRecord> for RecordRow {
    fn from(r: &TrialRecord) -> Self {
        let m = r.metrics.as_ref();
        let median = m.and_then(|m| {
            let mut v = m.mapping_errors.clone();
            v.sort_by(f64::total_cmp);
            (!v.is_empty()).then(|| nearest_rank(&v, 0.5))
        });
        RecordRow {
            trial: r.trial,
            seed: r.seed,
            estimator: r.estimator.clone(),
            status: match &r.status {
                TrialStatus::Ok => "ok".into(),
                TrialStatus::Failed(reason) => format!("failed: {reason}"),
            },
            position_error: m.map(|m| m.position_error),
            clock_error: m.and_then(|m| m.clock_error),
            orientation_error: m.and_then(|m| m.orientation_error),
            mapping_error_median: median,
            n_mapped: m.map_or(0, |m| m.mapping_errors.len()),
        }
    }
}

/// Serializes rows with a header into a byte buffer.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}
