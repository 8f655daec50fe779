//! Dictionary grids and the quantizers that model on-grid estimation error.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wrap;

/// Grid sizes of the (TDoA, AoD, DAoA) dictionary and the orientation sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryConfig {
    pub k_tau: usize,
    pub k_theta: usize,
    pub k_phi: usize,
    /// Cyclic prefix duration, seconds.
    pub t_cp: f64,
    /// Orientation sensor levels.
    pub n_q: usize,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            k_tau: 1024,
            k_theta: 256,
            k_phi: 256,
            t_cp: 1e-6,
            n_q: 64,
        }
    }
}

impl DictionaryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_tau < 2 || self.n_q < 2 {
            return Err(Error::InvalidConfig("grid sizes must be >= 2".into()));
        }
        check_angle_count(self.k_theta)?;
        check_angle_count(self.k_phi)?;
        if !(self.t_cp.is_finite() && self.t_cp > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_cp must be positive, got {}",
                self.t_cp
            )));
        }
        Ok(())
    }

    pub fn delay_step(&self) -> f64 {
        self.t_cp / self.k_tau as f64
    }
}

fn check_angle_count(k: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "angle grid size must be even and >= 2, got {k}"
        )));
    }
    Ok(())
}

/// `{0, 1, ..., K-1} * T_cp / K`.
pub fn delay_grid(k_tau: usize, t_cp: f64) -> Result<Vec<f64>> {
    if k_tau < 2 {
        return Err(Error::InvalidConfig(format!("k_tau must be >= 2, got {k_tau}")));
    }
    if !(t_cp.is_finite() && t_cp > 0.0) {
        return Err(Error::InvalidConfig(format!("t_cp must be positive, got {t_cp}")));
    }
    let step = t_cp / k_tau as f64;
    Ok((0..k_tau).map(|i| i as f64 * step).collect())
}

/// `asin((2/K) * {-K/2, ..., K/2 - 1})`, ascending in [-pi/2, pi/2).
pub fn angle_grid(k: usize) -> Result<Vec<f64>> {
    check_angle_count(k)?;
    let half = (k / 2) as i64;
    Ok((-half..half).map(|n| (2.0 * n as f64 / k as f64).asin()).collect())
}

/// Nearest point of the uniform grid `n * pi / K` on (-pi, pi].
///
/// The error is at most `pi / (2K)`; on uniform inputs its variance is
/// `(pi/K)^2 / 12`.
///
/// # Panics
/// If `k < 2`.
pub fn quantize_uniform_angle(x: f64, k: usize) -> f64 {
    assert!(k >= 2, "quantizer needs k >= 2");
    let step = PI / k as f64;
    let k = k as i64;
    let mut n = (x / step).round() as i64;
    n = n.rem_euclid(2 * k);
    if n > k {
        n -= 2 * k;
    }
    if n == k {
        PI
    } else {
        n as f64 * step
    }
}

/// Projection onto [`angle_grid`] in circular angle distance; ties go to the
/// lower grid index. Angles behind the array land on the +/- pi/2 ends.
pub fn quantize_sin_grid(x: f64, grid: &[f64]) -> f64 {
    let x = wrap(x);
    let mut best = grid[0];
    let mut best_dist = f64::INFINITY;
    for &g in grid {
        let d = wrap(x - g).abs();
        if d < best_dist {
            best = g;
            best_dist = d;
        }
    }
    best
}

/// Orientation sensor `Q_{N_Q}`: returns `n * 2pi / N_Q` with `n` minimizing the
/// circular distance to `phi`, ties broken toward the smaller `n`.
///
/// # Panics
/// If `n_q < 2`.
pub fn quantize_orientation(phi: f64, n_q: usize) -> f64 {
    assert!(n_q >= 2, "orientation sensor needs n_q >= 2");
    let step = TAU / n_q as f64;
    let u = phi.rem_euclid(TAU) / step;
    let lo = (u.floor() as usize) % n_q;
    let hi = (lo + 1) % n_q;
    let level = |n: usize| n as f64 * step;
    let d_lo = wrap(phi - level(lo)).abs();
    let d_hi = wrap(phi - level(hi)).abs();
    let n = if d_hi < d_lo || (d_hi == d_lo && hi < lo) {
        hi
    } else {
        lo
    };
    level(n)
}

/// Nearest point of the delay lattice `n * T_cp / K_tau`.
///
/// The lattice is not clamped to `[0, T_cp)`: TDoAs are measured against an
/// unsynchronized reference and may be negative.
pub fn quantize_delay(x: f64, k_tau: usize, t_cp: f64) -> f64 {
    let step = t_cp / k_tau as f64;
    (x / step).round() * step
}

/// How DAoA measurements are snapped to the dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaoaQuantizerMode {
    /// Step `pi/K` over the full circle.
    #[default]
    Uniform,
    /// Projection onto the asin dictionary grid.
    SinGrid,
}

impl std::str::FromStr for DaoaQuantizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "sin-grid" => Ok(Self::SinGrid),
            other => Err(Error::InvalidArgument(format!("unknown quantizer mode `{other}`"))),
        }
    }
}

/// A quantizer bound to one grid size and mode.
#[derive(Debug, Clone)]
pub struct AngleQuantizer {
    k: usize,
    grid: Option<Vec<f64>>,
}

impl AngleQuantizer {
    pub fn new(k: usize, mode: DaoaQuantizerMode) -> Result<Self> {
        check_angle_count(k)?;
        let grid = match mode {
            DaoaQuantizerMode::Uniform => None,
            DaoaQuantizerMode::SinGrid => Some(angle_grid(k)?),
        };
        Ok(Self { k, grid })
    }

    pub fn quantize(&self, x: f64) -> f64 {
        match &self.grid {
            None => quantize_uniform_angle(x, self.k),
            Some(g) => quantize_sin_grid(x, g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delay_grid_values() {
        let g = delay_grid(4, 400e-9).unwrap();
        let expected = [0.0, 100e-9, 200e-9, 300e-9];
        for (a, b) in g.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-21);
        }
        assert_eq!(delay_grid(17, 3e-7).unwrap()[0], 0.0);
        assert!(matches!(delay_grid(1, 1e-6), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn angle_grid_values() {
        let g = angle_grid(4).unwrap();
        let expected = [-PI / 2.0, -PI / 6.0, 0.0, PI / 6.0];
        for (a, b) in g.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        for k in [2, 8, 64, 256] {
            let g = angle_grid(k).unwrap();
            assert_eq!(g.len(), k);
            assert_eq!(g[k / 2], 0.0);
            assert!(g.windows(2).all(|w| w[0] < w[1]));
            assert!(g[0] >= -PI / 2.0 && *g.last().unwrap() < PI / 2.0);
        }
        assert!(matches!(angle_grid(3), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn uniform_quantizer_is_projection() {
        let k = 64;
        let step = PI / k as f64;
        for n in -63..=64 {
            let x = n as f64 * step;
            let q = quantize_uniform_angle(x, k);
            assert_abs_diff_eq!(q, if n == 64 { PI } else { x }, epsilon = 0.0);
            assert_eq!(quantize_uniform_angle(q, k), q);
        }
        assert_eq!(quantize_uniform_angle(-PI, k), PI);
    }

    #[test]
    fn uniform_quantizer_error_bound_halves_with_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [16usize, 32, 256] {
            let mut worst: f64 = 0.0;
            for _ in 0..20_000 {
                let x = rng.random_range(-PI..PI);
                let q = quantize_uniform_angle(x, k);
                assert!(q > -PI && q <= PI);
                worst = worst.max(wrap(q - x).abs());
            }
            assert!(worst <= PI / (2.0 * k as f64) + 1e-15);
            assert!(worst > 0.9 * PI / (2.0 * k as f64));
        }
    }

    #[test]
    fn uniform_quantizer_error_variance() {
        let k = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let errs: Vec<f64> = (0..n)
            .map(|_| {
                let x = rng.random_range(-PI..PI);
                wrap(quantize_uniform_angle(x, k) - x)
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let model = (PI / k as f64).powi(2) / 12.0;
        assert!((var / model - 1.0).abs() < 0.05, "var {var} model {model}");
    }

    #[test]
    fn uniform_quantizer_error_passes_ks() {
        let k = 128;
        let half = PI / (2.0 * k as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let mut u: Vec<f64> = (0..n)
            .map(|_| {
                let x = rng.random_range(-PI..PI);
                (wrap(quantize_uniform_angle(x, k) - x) + half) / (2.0 * half)
            })
            .collect();
        u.sort_by(f64::total_cmp);
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let lo = v - i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64 - v;
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at alpha = 0.01.
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }

    fn brute_force_orientation(phi: f64, n_q: usize) -> f64 {
        let step = TAU / n_q as f64;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for n in 0..n_q {
            let d = wrap(phi - n as f64 * step).abs();
            if d < best_d {
                best = n;
                best_d = d;
            }
        }
        best as f64 * step
    }

    #[test]
    fn orientation_quantizer_examples() {
        assert_eq!(quantize_orientation(0.0, 64), 0.0);
        assert_eq!(quantize_orientation(PI / 64.0, 64), 0.0);
        assert_eq!(quantize_orientation(TAU - 1e-6, 64), 0.0);
        assert_eq!(brute_force_orientation(TAU - 1e-6, 64), 0.0);
    }

    #[test]
    fn orientation_quantizer_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let phi = rng.random_range(-10.0..10.0);
            for n_q in [2, 7, 64] {
                assert_eq!(quantize_orientation(phi, n_q), brute_force_orientation(phi, n_q));
            }
        }
    }

    #[test]
    fn sin_grid_quantizer_is_projection() {
        let grid = angle_grid(16).unwrap();
        for &g in &grid {
            assert_eq!(quantize_sin_grid(g, &grid), g);
        }
        assert_eq!(quantize_sin_grid(0.01, &grid), 0.0);
        // Behind the array: the nearer end of the grid wins, circularly.
        assert_eq!(quantize_sin_grid(2.0, &grid), *grid.last().unwrap());
        assert_eq!(quantize_sin_grid(3.0, &grid), grid[0]);
    }

    #[test]
    fn delay_quantizer_keeps_negative_tdoas() {
        assert_abs_diff_eq!(quantize_delay(-2.6e-9, 1000, 1e-6), -3e-9, epsilon = 1e-21);
        assert_abs_diff_eq!(quantize_delay(7.4e-9, 1000, 1e-6), 7e-9, epsilon = 1e-21);
    }

    #[test]
    fn config_validation() {
        DictionaryConfig::default().validate().unwrap();
        let bad = DictionaryConfig {
            k_phi: 255,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
