//! Clock-robust linear location with known (or hypothesized) orientation.
//!
//! Each path gives one linear equation in the unknowns `(x_o, y_o, l_e)`:
//!
//! ```text
//! x_o * P_i + y_o * Q_i - l_e = c * tdoa_i
//! ```
//!
//! where `P_i, Q_i` depend only on the path's AoD and absolute AoA. Stacking
//! three or more paths gives an over-determined system solved by least squares.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MultipathSet, SPEED_OF_LIGHT};
use crate::serde_vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationConfig {
    /// Paths with `|sin(aod - aoa)|` below this are dropped.
    pub eps_sing: f64,
    /// Relative singular-value threshold for the rank decision.
    pub rank_tol: f64,
    /// LoS slack, meters.
    pub eps_los: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            eps_sing: 1e-6,
            rank_tol: 1e-10,
            eps_los: 0.3,
        }
    }
}

/// Coefficients `(P, Q)` of one path's linear equation.
pub fn path_coefficients(theta: f64, phi: f64) -> Result<(f64, f64)> {
    path_coefficients_with(theta, phi, LocalizationConfig::default().eps_sing)
        .map_err(|sin_gap| Error::SingularPath { index: 0, sin_gap })
}

/// Returns the offending `sin(theta - phi)` on failure.
fn path_coefficients_with(theta: f64, phi: f64, eps_sing: f64) -> std::result::Result<(f64, f64), f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let s = st * cp - ct * sp;
    if !(s.abs() >= eps_sing) {
        return Err(s);
    }
    Ok((-(st + sp) / s, (cp + ct) / s))
}

/// Least squares over rows `(P_i, Q_i, c * tdoa_i)`; returns the solution
/// `(x_o, y_o, l_e)` and the residual norm.
pub(crate) fn solve_rows(rows: &[(f64, f64, f64)], rank_tol: f64) -> Result<(Vector3<f64>, f64)> {
    if rows.len() < 3 {
        return Err(Error::InsufficientPaths {
            usable: rows.len(),
            required: 3,
        });
    }
    let n = rows.len();
    let b = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => rows[r].0,
        1 => rows[r].1,
        _ => -1.0,
    });
    let rhs = DVector::from_iterator(n, rows.iter().map(|r| r.2));

    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > rank_tol * smax).count();
    if rank < 3 || !smax.is_finite() {
        return Err(Error::DegenerateConfiguration { rank, required: 3 });
    }
    let x = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let residual_norm = (&b * &x - &rhs).norm();
    Ok((Vector3::new(x[0], x[1], x[2]), residual_norm))
}

/// Row of the linear system for one path, or `None` when singular.
pub(crate) fn path_row(obs: &MultipathSet, index: usize, phi_o: f64, eps_sing: f64) -> Option<(f64, f64, f64)> {
    let p = obs.paths[index];
    path_coefficients_with(p.aod, p.daoa + phi_o, eps_sing)
        .ok()
        .map(|(pc, qc)| (pc, qc, SPEED_OF_LIGHT * p.tdoa))
}

/// Least-squares solution of a path subset.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    /// `(x_o, y_o, l_e)`.
    pub solution: Vector3<f64>,
    pub residual_norm: f64,
    pub used_paths: Vec<usize>,
    pub dropped_paths: Vec<usize>,
}

/// Solves the linear system over `indices` with `phi_i = daoa_i + phi_o`.
pub fn solve_linear(
    obs: &MultipathSet,
    phi_o: f64,
    indices: &[usize],
    cfg: &LocalizationConfig,
) -> Result<LinearSolution> {
    let mut rows: Vec<(f64, f64, f64)> = Vec::with_capacity(indices.len());
    let mut used = Vec::with_capacity(indices.len());
    let mut dropped = Vec::new();
    for &i in indices {
        match path_row(obs, i, phi_o, cfg.eps_sing) {
            Some(row) => {
                rows.push(row);
                used.push(i);
            }
            None => dropped.push(i),
        }
    }
    let (solution, residual_norm) = solve_rows(&rows, cfg.rank_tol)?;
    Ok(LinearSolution {
        solution,
        residual_norm,
        used_paths: used,
        dropped_paths: dropped,
    })
}

/// Receiver position, clock, LoS verdict and reflector map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationEstimate {
    #[serde(with = "serde_vec2")]
    pub rx_position: Vector2<f64>,
    /// Clock offset as a length, `c * tau_e`, meters.
    pub l_e: f64,
    /// Seconds.
    pub clock_offset: f64,
    /// Orientation the solve was conditioned on.
    pub orientation: f64,
    /// One reflector per entry of `used_paths`.
    #[serde(with = "serde_vec2::list")]
    pub reflectors: Vec<Vector2<f64>>,
    pub los: bool,
    pub residual_norm: f64,
    pub used_paths: Vec<usize>,
    pub dropped_paths: Vec<usize>,
}

pub fn solve_location(obs: &MultipathSet, phi_o: f64) -> Result<LocationEstimate> {
    solve_location_with(obs, phi_o, &LocalizationConfig::default())
}

pub fn solve_location_with(obs: &MultipathSet, phi_o: f64, cfg: &LocalizationConfig) -> Result<LocationEstimate> {
    let all: Vec<usize> = (0..obs.len()).collect();
    let lin = solve_linear(obs, phi_o, &all, cfg)?;
    let mut est = LocationEstimate {
        rx_position: Vector2::new(lin.solution.x, lin.solution.y),
        l_e: lin.solution.z,
        clock_offset: lin.solution.z / SPEED_OF_LIGHT,
        orientation: phi_o,
        reflectors: Vec::new(),
        los: false,
        residual_norm: lin.residual_norm,
        used_paths: lin.used_paths,
        dropped_paths: lin.dropped_paths,
    };
    let mapped = map_reflectors(&est, obs, phi_o);
    est.reflectors = est.used_paths.iter().filter_map(|&i| mapped[i]).collect();
    if est.reflectors.len() != est.used_paths.len() {
        // A used path with a non-finite reflector: only possible with
        // non-finite inputs that slipped past the coefficient check.
        return Err(Error::InvalidArgument("reflector mapping failed".into()));
    }
    let (clock, los) = clock_and_los_with(&est, obs, cfg.eps_los);
    est.clock_offset = clock;
    est.los = los;
    Ok(est)
}

/// Reflector positions for every path of `obs`, index-aligned; paths not
/// used by the estimate (or singular) are `None`.
///
/// Each reflector lies on the AoD ray at range
/// `r_i = (y_o cos(phi_i) - x_o sin(phi_i)) / sin(theta_i - phi_i)`.
pub fn map_reflectors(estimate: &LocationEstimate, obs: &MultipathSet, phi_o: f64) -> Vec<Option<Vector2<f64>>> {
    let d = estimate.rx_position;
    let mut out = vec![None; obs.len()];
    for &i in &estimate.used_paths {
        let p = obs.paths[i];
        let (st, ct) = p.aod.sin_cos();
        let (sp, cp) = (p.daoa + phi_o).sin_cos();
        let s = st * cp - ct * sp;
        let r = (d.y * cp - d.x * sp) / s;
        let v = Vector2::new(r * ct, r * st);
        if v.x.is_finite() && v.y.is_finite() {
            out[i] = Some(v);
        }
    }
    out
}

/// Clock offset and LoS verdict with the default LoS slack.
pub fn clock_and_los(estimate: &LocationEstimate, obs: &MultipathSet) -> (f64, bool) {
    clock_and_los_with(estimate, obs, LocalizationConfig::default().eps_los)
}

/// `tau_e = min_i l_i / c - min_i tdoa_i` with `l_i = l_e + c * tdoa_i`;
/// LoS when `|d_o| >= min_i l_i - eps_los`.
pub fn clock_and_los_with(estimate: &LocationEstimate, obs: &MultipathSet, eps_los: f64) -> (f64, bool) {
    let min_tdoa = estimate
        .used_paths
        .iter()
        .map(|&i| obs.paths[i].tdoa)
        .fold(f64::INFINITY, f64::min);
    let min_len = estimate.l_e + SPEED_OF_LIGHT * min_tdoa;
    let clock = min_len / SPEED_OF_LIGHT - min_tdoa;
    let los = estimate.rx_position.norm() >= min_len - eps_los;
    (clock, los)
}
