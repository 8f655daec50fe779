//! Orientation recovery by location consensus across path groups.
//!
//! For a candidate orientation every group of paths yields its own linear
//! solution `F_m = (x_o, y_o, l_e)`. At the true orientation all groups agree,
//! so the orientation estimate minimizes the spread
//! `sum_m |F_m - mean(F)|^2` over candidates: first on a uniform grid (or a
//! sensor bracket), then by golden-section refinement.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap, MultipathSet};
use crate::localization::{path_row, solve_location_with, solve_rows, LocalizationConfig, LocationEstimate};

/// How paths are grouped for the consensus cost. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingStrategy {
    /// Sliding windows `{m, m+1, m+2}`.
    ThreePath,
    /// All paths except the m-th, for every m.
    DropOne,
    Custom(Vec<Vec<usize>>),
}

impl std::str::FromStr for GroupingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "3p" | "three-path" => Ok(Self::ThreePath),
            "d1" | "drop-one" => Ok(Self::DropOne),
            other => Err(Error::InvalidArgument(format!("unknown grouping `{other}` (3p|d1)"))),
        }
    }
}

impl std::fmt::Display for GroupingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ThreePath => write!(f, "3p"),
            Self::DropOne => write!(f, "d1"),
            Self::Custom(g) => write!(f, "custom({})", g.len()),
        }
    }
}

/// Where the search starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationInit {
    /// Grid search over [0, 2pi), then refine between the neighbours of the
    /// grid minimum.
    BruteForce,
    /// Refine within `phi +/- half_width` of a sensor reading.
    Sensor { phi: f64, half_width: f64 },
}

impl OrientationInit {
    /// Bracket for a sensor with `n_q` levels: half a quantization step.
    pub fn from_sensor(phi: f64, n_q: usize) -> Self {
        Self::Sensor {
            phi,
            half_width: std::f64::consts::PI / n_q as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrientationSolverConfig {
    pub grid_points: usize,
    /// Refinement stops once the bracket is narrower than this, radians.
    pub refine_tolerance: f64,
    pub max_refine_iters: usize,
    pub init: OrientationInit,
    pub localization: LocalizationConfig,
}

impl Default for OrientationSolverConfig {
    fn default() -> Self {
        Self {
            grid_points: 100,
            refine_tolerance: 1e-9,
            max_refine_iters: 200,
            init: OrientationInit::BruteForce,
            localization: LocalizationConfig::default(),
        }
    }
}

impl OrientationSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 8 {
            return Err(Error::InvalidConfig(format!(
                "grid_points must be >= 8, got {}",
                self.grid_points
            )));
        }
        if !(self.refine_tolerance.is_finite() && self.refine_tolerance > 0.0) {
            return Err(Error::InvalidConfig("refine_tolerance must be > 0".into()));
        }
        if let OrientationInit::Sensor { phi, half_width } = self.init {
            if !(phi.is_finite() && half_width.is_finite() && half_width > 0.0) {
                return Err(Error::InvalidConfig(
                    "sensor init needs a finite positive bracket".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Splits `0..n_paths` into groups according to `strategy`.
pub fn make_groups(n_paths: usize, strategy: &GroupingStrategy) -> Result<Vec<Vec<usize>>> {
    let groups: Vec<Vec<usize>> = match strategy {
        GroupingStrategy::ThreePath => {
            if n_paths < 5 {
                return Err(Error::InvalidConfig(format!(
                    "three-path grouping needs at least 5 paths, got {n_paths}"
                )));
            }
            (0..n_paths - 2).map(|m| vec![m, m + 1, m + 2]).collect()
        }
        GroupingStrategy::DropOne => {
            if n_paths < 4 {
                return Err(Error::InvalidConfig(format!(
                    "drop-one grouping needs at least 4 paths, got {n_paths}"
                )));
            }
            (0..n_paths)
                .map(|m| (0..n_paths).filter(|&i| i != m).collect())
                .collect()
        }
        GroupingStrategy::Custom(groups) => {
            for g in groups {
                if g.len() < 3 {
                    return Err(Error::InvalidConfig("every group needs at least 3 paths".into()));
                }
                if let Some(&bad) = g.iter().find(|&&i| i >= n_paths) {
                    return Err(Error::InvalidConfig(format!(
                        "group index {bad} out of range for {n_paths} paths"
                    )));
                }
            }
            groups.clone()
        }
    };
    if groups.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "at least 3 groups are required, got {}",
            groups.len()
        )));
    }
    Ok(groups)
}

/// Linear solution of one group at a candidate orientation.
pub fn group_solution(
    group: &[usize],
    obs: &MultipathSet,
    phi_candidate: f64,
    cfg: &LocalizationConfig,
) -> Result<Vector3<f64>> {
    let rows: Vec<_> = group
        .iter()
        .filter_map(|&i| path_row(obs, i, phi_candidate, cfg.eps_sing))
        .collect();
    solve_rows(&rows, cfg.rank_tol).map(|(x, _)| x)
}

/// Consensus cost at one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEvaluation {
    /// `+inf` when fewer than 3 groups were solvable.
    pub cost: f64,
    pub valid_groups: usize,
}

impl CostEvaluation {
    pub fn is_feasible(&self) -> bool {
        self.cost.is_finite()
    }
}

/// `sum_m |F_m - mean(F)|^2` over the groups solvable at `phi_candidate`.
pub fn orientation_cost(
    phi_candidate: f64,
    groups: &[Vec<usize>],
    obs: &MultipathSet,
    cfg: &LocalizationConfig,
) -> CostEvaluation {
    // Coefficients depend only on the path, so compute each once.
    let rows: Vec<Option<(f64, f64, f64)>> = (0..obs.len())
        .map(|i| path_row(obs, i, phi_candidate, cfg.eps_sing))
        .collect();
    let mut solutions = Vec::with_capacity(groups.len());
    let mut group_rows = Vec::new();
    for g in groups {
        group_rows.clear();
        group_rows.extend(g.iter().filter_map(|&i| rows[i]));
        if let Ok((x, _)) = solve_rows(&group_rows, cfg.rank_tol) {
            if x.iter().all(|v| v.is_finite()) {
                solutions.push(x);
            }
        }
    }
    spread(&solutions)
}

fn spread(solutions: &[Vector3<f64>]) -> CostEvaluation {
    let valid_groups = solutions.len();
    if valid_groups < 3 {
        return CostEvaluation {
            cost: f64::INFINITY,
            valid_groups,
        };
    }
    let mean = solutions.iter().sum::<Vector3<f64>>() / valid_groups as f64;
    let cost = solutions.iter().map(|f| (f - mean).norm_squared()).sum();
    CostEvaluation { cost, valid_groups }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationDiagnostics {
    /// Grid minimizer (brute-force init only).
    pub grid_argmin: Option<f64>,
    /// Centre of the refinement bracket.
    pub start: f64,
    pub final_cost: f64,
    pub iterations: usize,
    /// Evaluated candidates with fewer than 3 solvable groups.
    pub invalid_candidates: usize,
}

/// Estimates the receiver orientation from the observations alone.
pub fn estimate_orientation(
    obs: &MultipathSet,
    strategy: &GroupingStrategy,
    cfg: &OrientationSolverConfig,
) -> Result<(f64, OrientationDiagnostics)> {
    cfg.validate()?;
    if obs.len() < 3 {
        return Err(Error::InsufficientPaths {
            usable: obs.len(),
            required: 3,
        });
    }
    let groups = make_groups(obs.len(), strategy)?;
    let mut invalid = 0usize;
    let mut eval = |phi: f64| {
        let c = orientation_cost(phi, &groups, obs, &cfg.localization);
        if !c.is_feasible() {
            invalid += 1;
        }
        c.cost
    };

    let (lo, hi, start, grid_argmin) = match cfg.init {
        OrientationInit::BruteForce => {
            let step = TAU / cfg.grid_points as f64;
            let mut best = 0usize;
            let mut best_cost = f64::INFINITY;
            for k in 0..cfg.grid_points {
                let c = eval(k as f64 * step);
                // Strict comparison keeps the smallest angle on ties.
                if c < best_cost {
                    best = k;
                    best_cost = c;
                }
            }
            if !best_cost.is_finite() {
                return Err(Error::OrientationUnrecoverable);
            }
            let centre = best as f64 * step;
            (centre - step, centre + step, centre, Some(centre))
        }
        OrientationInit::Sensor { phi, half_width } => (phi - half_width, phi + half_width, phi, None),
    };

    let result = golden_section(&mut eval, lo, hi, cfg.refine_tolerance, cfg.max_refine_iters);
    let (phi, cost) = match cfg.init {
        // Keep the grid point if refinement somehow ended higher.
        OrientationInit::BruteForce if !(result.fmin <= eval(start)) => (start, eval(start)),
        _ => (result.xmin, result.fmin),
    };
    if !cost.is_finite() {
        return Err(Error::OrientationUnrecoverable);
    }
    Ok((
        wrap(phi),
        OrientationDiagnostics {
            grid_argmin: grid_argmin.map(wrap),
            start: wrap(start),
            final_cost: cost,
            iterations: result.iterations,
            invalid_candidates: invalid,
        },
    ))
}

#[derive(Debug, Clone, Copy)]
struct GoldenResult {
    xmin: f64,
    fmin: f64,
    iterations: usize,
}

/// Golden-section minimization on `[lo, hi]`; returns the best evaluated point.
fn golden_section<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64, tol: f64, max_iters: usize) -> GoldenResult {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while b - a > tol && iterations < max_iters {
        iterations += 1;
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        GoldenResult {
            xmin: x1,
            fmin: f1,
            iterations,
        }
    } else {
        GoldenResult {
            xmin: x2,
            fmin: f2,
            iterations,
        }
    }
}

/// Location estimate with the recovered orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustEstimate {
    pub estimate: LocationEstimate,
    pub orientation: f64,
    pub diagnostics: OrientationDiagnostics,
}

/// Orientation recovery followed by the full solve over all paths.
pub fn robust_locate(
    obs: &MultipathSet,
    strategy: &GroupingStrategy,
    cfg: &OrientationSolverConfig,
) -> Result<RobustEstimate> {
    let (orientation, diagnostics) = estimate_orientation(obs, strategy, cfg)?;
    let estimate = solve_location_with(obs, orientation, &cfg.localization)?;
    Ok(RobustEstimate {
        estimate,
        orientation,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angular_distance, observe, sample_scene, ScenarioConfig, SPEED_OF_LIGHT};
    use crate::localization::solve_linear;
    use proptest::prelude::*;

    fn lcfg() -> LocalizationConfig {
        LocalizationConfig::default()
    }

    #[test]
    fn three_path_groups() {
        let g = make_groups(5, &GroupingStrategy::ThreePath).unwrap();
        assert_eq!(g, vec![vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4]]);
        assert!(matches!(
            make_groups(4, &GroupingStrategy::ThreePath),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn drop_one_groups() {
        let g = make_groups(4, &GroupingStrategy::DropOne).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.iter().all(|x| x.len() == 3));
        assert_eq!(g[1], vec![0, 2, 3]);
        assert!(make_groups(3, &GroupingStrategy::DropOne).is_err());
    }

    #[test]
    fn custom_groups_validated() {
        let ok = GroupingStrategy::Custom(vec![vec![0, 1, 2], vec![1, 2, 3], vec![0, 2, 3]]);
        assert_eq!(make_groups(4, &ok).unwrap().len(), 3);
        let short = GroupingStrategy::Custom(vec![vec![0, 1], vec![1, 2, 3], vec![0, 2, 3]]);
        assert!(make_groups(4, &short).is_err());
        let few = GroupingStrategy::Custom(vec![vec![0, 1, 2], vec![1, 2, 3]]);
        assert!(make_groups(4, &few).is_err());
        let range = GroupingStrategy::Custom(vec![vec![0, 1, 9], vec![1, 2, 3], vec![0, 2, 3]]);
        assert!(make_groups(4, &range).is_err());
    }

    #[test]
    fn groups_agree_at_true_orientation() {
        let s = sample_scene(&ScenarioConfig::default(), 17).unwrap();
        let obs = observe(&s).unwrap();
        let truth = Vector3::new(s.rx_position.x, s.rx_position.y, s.clock_length());
        for strategy in [GroupingStrategy::ThreePath, GroupingStrategy::DropOne] {
            for g in make_groups(obs.len(), &strategy).unwrap() {
                let f = group_solution(&g, &obs, s.orientation, &lcfg()).unwrap();
                assert!((f - truth).norm() < 1e-8, "{f:?}");
                let mut rev = g.clone();
                rev.reverse();
                let r = group_solution(&rev, &obs, s.orientation, &lcfg()).unwrap();
                assert!((f - r).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn cost_vanishes_at_truth_and_not_at_antipode() {
        for seed in 0..10 {
            let s = sample_scene(&ScenarioConfig::default(), seed).unwrap();
            let obs = observe(&s).unwrap();
            let groups = make_groups(obs.len(), &GroupingStrategy::DropOne).unwrap();
            let at_truth = orientation_cost(s.orientation, &groups, &obs, &lcfg());
            assert!(at_truth.cost < 1e-12, "{}", at_truth.cost);
            let anti = orientation_cost(s.orientation + std::f64::consts::PI, &groups, &obs, &lcfg());
            assert!(anti.cost > 1.0, "{}", anti.cost);
        }
    }

    #[test]
    fn cost_is_periodic() {
        let s = sample_scene(&ScenarioConfig::default(), 2).unwrap();
        let obs = observe(&s).unwrap();
        let groups = make_groups(obs.len(), &GroupingStrategy::ThreePath).unwrap();
        for phi in [0.1, 1.3, -2.0] {
            let a = orientation_cost(phi, &groups, &obs, &lcfg()).cost;
            let b = orientation_cost(phi + TAU, &groups, &obs, &lcfg()).cost;
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn identical_solutions_have_zero_spread() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(spread(&[v, v, v, v]).cost, 0.0);
        assert!(!spread(&[v, v]).is_feasible());
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let mut f = |x: f64| (x - 0.3).powi(2);
        let r = golden_section(&mut f, -1.0, 2.0, 1e-10, 500);
        assert!((r.xmin - 0.3).abs() < 1e-9);
    }

    #[test]
    fn brute_force_recovers_most_orientations() {
        // A 100-point grid can straddle a narrow basin, so only a large
        // majority is required; refinement must never lose to the grid.
        let cfg = OrientationSolverConfig::default();
        let mut hits = 0;
        for seed in 0..40 {
            let s = sample_scene(&ScenarioConfig::default(), seed).unwrap();
            let obs = observe(&s).unwrap();
            let (phi, diag) = estimate_orientation(&obs, &GroupingStrategy::DropOne, &cfg).unwrap();
            let grid = diag.grid_argmin.unwrap();
            let groups = make_groups(obs.len(), &GroupingStrategy::DropOne).unwrap();
            let at_grid = orientation_cost(grid, &groups, &obs, &lcfg()).cost;
            assert!(diag.final_cost <= at_grid, "seed {seed}");
            assert!(
                (orientation_cost(phi, &groups, &obs, &lcfg()).cost - diag.final_cost).abs() <= 1e-9 * at_grid.max(1.0)
            );
            if angular_distance(phi, s.orientation) < 1e-7 {
                hits += 1;
            }
        }
        assert!(hits >= 34, "{hits}/40");
    }

    #[test]
    fn cost_is_rotation_equivariant() {
        let s = sample_scene(&ScenarioConfig::default(), 11).unwrap();
        let delta = 0.7;
        let rotated = s.rotated(delta);
        let (a, b) = (observe(&s).unwrap(), observe(&rotated).unwrap());
        let groups = make_groups(a.len(), &GroupingStrategy::DropOne).unwrap();
        for phi in [-2.5, -0.4, 0.9, 2.2] {
            let ca = orientation_cost(phi, &groups, &a, &lcfg()).cost;
            let cb = orientation_cost(phi + delta, &groups, &b, &lcfg()).cost;
            assert!((ca - cb).abs() <= 1e-9 * ca.abs().max(1e-6), "{ca} {cb}");
        }
    }

    #[test]
    fn common_delay_shift_moves_only_clock_length() {
        let s = sample_scene(&ScenarioConfig::default(), 12).unwrap();
        let obs = observe(&s).unwrap();
        let shift = 3e-9;
        let mut shifted = obs.clone();
        shifted.paths.iter_mut().for_each(|p| p.tdoa += shift);
        let indices: Vec<usize> = (0..obs.len()).collect();
        let a = solve_linear(&obs, s.orientation, &indices, &lcfg()).unwrap().solution;
        let b = solve_linear(&shifted, s.orientation, &indices, &lcfg())
            .unwrap()
            .solution;
        assert!((a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6);
        assert!((b.z - a.z + SPEED_OF_LIGHT * shift).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn estimate_ignores_path_order(seed in 0u64..1000, rot in 0usize..20) {
            let s = sample_scene(&ScenarioConfig::default(), seed).unwrap();
            let obs = observe(&s).unwrap();
            let q = crate::dictionary::quantize_orientation(s.orientation, 64);
            let cfg = OrientationSolverConfig { init: OrientationInit::from_sensor(q, 64), ..Default::default() };
            let mut order: Vec<usize> = (0..obs.len()).collect();
            order.rotate_left(rot % obs.len());
            order.reverse();
            let a = robust_locate(&obs, &GroupingStrategy::DropOne, &cfg).unwrap();
            let b = robust_locate(&obs.select(&order), &GroupingStrategy::DropOne, &cfg).unwrap();
            prop_assert!(angular_distance(a.orientation, b.orientation) < 1e-6);
            prop_assert!((a.estimate.rx_position - b.estimate.rx_position).norm() < 1e-3);
        }
    }

    #[test]
    fn sensor_init_recovers_orientation() {
        let s = sample_scene(&ScenarioConfig::default(), 5).unwrap();
        let obs = observe(&s).unwrap();
        let q = crate::dictionary::quantize_orientation(s.orientation, 64);
        let cfg = OrientationSolverConfig {
            init: OrientationInit::from_sensor(q, 64),
            ..Default::default()
        };
        let r = robust_locate(&obs, &GroupingStrategy::DropOne, &cfg).unwrap();
        assert!(angular_distance(r.orientation, s.orientation) < 1e-7);
        assert!((r.estimate.rx_position - s.rx_position).norm() < 1e-4);
    }

    #[test]
    fn too_few_paths_propagate() {
        let s = sample_scene(&ScenarioConfig::default(), 5).unwrap();
        let cfg = OrientationSolverConfig::default();
        let obs = observe(&s).unwrap().select(&[0, 1]);
        assert!(matches!(
            robust_locate(&obs, &GroupingStrategy::DropOne, &cfg),
            Err(Error::InsufficientPaths { usable: 2, .. })
        ));
        let obs = observe(&s).unwrap().select(&[0, 1, 2]);
        assert!(matches!(
            robust_locate(&obs, &GroupingStrategy::DropOne, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn estimate_is_deterministic() {
        let s = sample_scene(&ScenarioConfig::default(), 8).unwrap();
        let obs = observe(&s).unwrap();
        let cfg = OrientationSolverConfig::default();
        let a = estimate_orientation(&obs, &GroupingStrategy::ThreePath, &cfg).unwrap();
        let b = estimate_orientation(&obs, &GroupingStrategy::ThreePath, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
