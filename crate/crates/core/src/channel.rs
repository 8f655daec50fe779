//! OFDM hybrid-beamforming observation model.
//!
//! Observations are indexed `(s, k, r)` = (symbol, subcarrier, RF chain) and
//! stacked as `s * N_k * N_rf + k * N_rf + r`. A path with gain `alpha`,
//! delay `tau`, AoD `theta` and DAoA `phi` contributes
//! `alpha * (w^H a_r(phi)) * (a_t(theta)^T x) * exp(-j 2 pi k df tau)`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dictionary::{angle_grid, delay_grid, DictionaryConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformConfig {
    /// Subcarriers.
    pub n_k: usize,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    /// Cyclic prefix, seconds.
    pub t_cp: f64,
    pub n_t: usize,
    pub n_r: usize,
    pub n_rf_t: usize,
    pub n_rf_r: usize,
    /// Pilot symbols.
    pub n_s: usize,
    /// Per-antenna noise variance.
    pub sigma2: f64,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig {
            n_k: 64,
            delta_f: 15.625e3,
            t_cp: 1e-6,
            n_t: 32,
            n_r: 32,
            n_rf_t: 1,
            n_rf_r: 4,
            n_s: 8,
            sigma2: 1.0,
        }
    }
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_k", self.n_k),
            ("n_t", self.n_t),
            ("n_r", self.n_r),
            ("n_rf_t", self.n_rf_t),
            ("n_rf_r", self.n_rf_r),
            ("n_s", self.n_s),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.n_rf_r > self.n_r {
            return Err(Error::InvalidConfig("n_rf_r exceeds n_r".into()));
        }
        if self.n_rf_t > self.n_t {
            return Err(Error::InvalidConfig("n_rf_t exceeds n_t".into()));
        }
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::InvalidConfig("delta_f must be positive".into()));
        }
        if !(self.t_cp > 0.0 && self.t_cp * self.delta_f <= 1.0) {
            return Err(Error::InvalidConfig("t_cp must lie in (0, 1/delta_f]".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidConfig("sigma2 must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.n_s * self.n_k
    }

    pub fn n_obs(&self) -> usize {
        self.n_blocks() * self.n_rf_r
    }

    pub fn index(&self, s: usize, k: usize, r: usize) -> usize {
        (s * self.n_k + k) * self.n_rf_r + r
    }
}

/// Normalized ULA response with half-wavelength spacing.
pub fn steering(n: usize, angle: f64) -> DVector<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let s = angle.sin();
    DVector::from_fn(n, |i, _| Complex64::from_polar(scale, PI * i as f64 * s))
}

/// Derivative of [`steering`] with respect to the angle.
pub fn steering_derivative(n: usize, angle: f64) -> DVector<Complex64> {
    let c = angle.cos();
    let mut a = steering(n, angle);
    for (i, v) in a.iter_mut().enumerate() {
        *v *= Complex64::new(0.0, PI * i as f64 * c);
    }
    a
}

/// Combiners `W_{s,k}` (`N_r x N_rf_r`) and precoded pilots `x_{s,k}`
/// (length `N_t`), block `b = s * N_k + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotFrame {
    pub combiners: Vec<DMatrix<Complex64>>,
    pub pilots: Vec<DVector<Complex64>>,
}

fn random_phase(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    Complex64::from_polar(scale, rng.random_range(0.0..2.0 * PI))
}

impl PilotFrame {
    /// Unit-modulus random phases, each combiner column and pilot normalized.
    pub fn random(cfg: &WaveformConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wc = 1.0 / (cfg.n_r as f64).sqrt();
        let xc = 1.0 / (cfg.n_t as f64).sqrt();
        let mut combiners = Vec::with_capacity(cfg.n_blocks());
        let mut pilots = Vec::with_capacity(cfg.n_blocks());
        for _ in 0..cfg.n_blocks() {
            combiners.push(DMatrix::from_fn(cfg.n_r, cfg.n_rf_r, |_, _| random_phase(&mut rng, wc)));
            pilots.push(DVector::from_fn(cfg.n_t, |_, _| random_phase(&mut rng, xc)));
        }
        Ok(PilotFrame { combiners, pilots })
    }

    pub fn check(&self, cfg: &WaveformConfig) -> Result<()> {
        cfg.validate()?;
        let ok = self.combiners.len() == cfg.n_blocks()
            && self.pilots.len() == cfg.n_blocks()
            && self.combiners.iter().all(|w| w.shape() == (cfg.n_r, cfg.n_rf_r))
            && self.pilots.iter().all(|x| x.len() == cfg.n_t);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("pilot frame does not match the waveform".into()))
        }
    }
}

/// One propagation path in the signal domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPath {
    pub gain: Complex64,
    pub delay: f64,
    pub aod: f64,
    pub daoa: f64,
}

/// Per-block array responses for one path geometry.
struct Responses {
    /// `a_t(theta)^T x` per block.
    tx: Vec<Complex64>,
    /// `W^H a_r(phi)` per block.
    rx: Vec<DVector<Complex64>>,
}

fn tx_response(frame: &PilotFrame, a: &DVector<Complex64>) -> Vec<Complex64> {
    frame.pilots.iter().map(|x| a.dot(x)).collect()
}

fn rx_response(frame: &PilotFrame, a: &DVector<Complex64>) -> Vec<DVector<Complex64>> {
    frame.combiners.iter().map(|w| w.ad_mul(a)).collect()
}

fn responses(frame: &PilotFrame, cfg: &WaveformConfig, aod: f64, daoa: f64) -> Responses {
    Responses {
        tx: tx_response(frame, &steering(cfg.n_t, aod)),
        rx: rx_response(frame, &steering(cfg.n_r, daoa)),
    }
}

fn delay_phase(cfg: &WaveformConfig, k: usize, tau: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * k as f64 * cfg.delta_f * tau)
}

fn assemble(cfg: &WaveformConfig, tau: f64, tx: &[Complex64], rx: &[DVector<Complex64>]) -> DVector<Complex64> {
    let mut out = DVector::zeros(cfg.n_obs());
    for s in 0..cfg.n_s {
        for k in 0..cfg.n_k {
            let b = s * cfg.n_k + k;
            let f = tx[b] * delay_phase(cfg, k, tau);
            for r in 0..cfg.n_rf_r {
                out[cfg.index(s, k, r)] = rx[b][r] * f;
            }
        }
    }
    out
}

/// Noise-free response of a unit-gain path.
pub fn dictionary_column(
    frame: &PilotFrame,
    cfg: &WaveformConfig,
    delay: f64,
    aod: f64,
    daoa: f64,
) -> Result<DVector<Complex64>> {
    frame.check(cfg)?;
    let resp = responses(frame, cfg, aod, daoa);
    Ok(assemble(cfg, delay, &resp.tx, &resp.rx))
}

/// Noise-free observation of a set of paths.
pub fn mean_observation(paths: &[ChannelPath], frame: &PilotFrame, cfg: &WaveformConfig) -> Result<DVector<Complex64>> {
    frame.check(cfg)?;
    let mut y = DVector::zeros(cfg.n_obs());
    for p in paths {
        let resp = responses(frame, cfg, p.aod, p.daoa);
        y += assemble(cfg, p.delay, &resp.tx, &resp.rx) * p.gain;
    }
    Ok(y)
}

/// Observation with combined noise `W^H z`, `z ~ CN(0, sigma2 I)`.
pub fn synthesize(
    paths: &[ChannelPath],
    frame: &PilotFrame,
    cfg: &WaveformConfig,
    noise_seed: u64,
) -> Result<DVector<Complex64>> {
    let mut y = mean_observation(paths, frame, cfg)?;
    if cfg.sigma2 > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let sd = (cfg.sigma2 / 2.0).sqrt();
        for s in 0..cfg.n_s {
            for k in 0..cfg.n_k {
                let b = s * cfg.n_k + k;
                let z = DVector::from_fn(cfg.n_r, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re * sd, im * sd)
                });
                let zc = frame.combiners[b].ad_mul(&z);
                for r in 0..cfg.n_rf_r {
                    y[cfg.index(s, k, r)] += zc[r];
                }
            }
        }
    }
    Ok(y)
}

/// Block-diagonal whitening `R` with `R^H R = (W^H W)^-1` per block, so that
/// `R^H R Sigma_z = sigma2 I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub blocks: Vec<DMatrix<Complex64>>,
    n_rf: usize,
}

impl Whitener {
    pub fn new(frame: &PilotFrame, cfg: &WaveformConfig) -> Result<Self> {
        frame.check(cfg)?;
        let mut blocks = Vec::with_capacity(cfg.n_blocks());
        for (b, w) in frame.combiners.iter().enumerate() {
            let rank_err = || Error::RankDeficientCombiner {
                symbol: b / cfg.n_k,
                subcarrier: b % cfg.n_k,
            };
            let gram = w.ad_mul(w);
            let svals = gram.singular_values();
            if svals.min() <= 1e-12 * svals.max() {
                return Err(rank_err());
            }
            let inv = Cholesky::new(gram).ok_or_else(rank_err)?.inverse();
            let inv = (&inv + inv.adjoint()) * Complex64::new(0.5, 0.0);
            let l = Cholesky::new(inv).ok_or_else(rank_err)?.unpack();
            blocks.push(l.adjoint());
        }
        Ok(Whitener {
            blocks,
            n_rf: cfg.n_rf_r,
        })
    }

    /// Applies `R` to a stacked observation vector.
    pub fn apply(&self, y: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.n_rf;
        let mut out = DVector::zeros(y.len());
        for (b, r) in self.blocks.iter().enumerate() {
            let seg = r * y.rows(b * n, n);
            out.rows_mut(b * n, n).copy_from(&seg);
        }
        out
    }

    /// Applies `R` to every column of a stacked matrix.
    pub fn apply_columns(&self, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = m.clone();
        for (j, col) in m.column_iter().enumerate() {
            out.set_column(j, &self.apply(&col.into_owned()));
        }
        out
    }
}

/// Greedy recovery stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyStop {
    pub max_paths: usize,
    /// Stop once the squared residual norm falls below this.
    pub residual_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPath {
    pub gain: Complex64,
    pub delay: f64,
    pub aod: f64,
    pub daoa: f64,
    /// Dictionary indices `(tau, theta, phi)`.
    pub atom: (usize, usize, usize),
}

fn least_squares(a: &DMatrix<Complex64>, y: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    a.clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Orthogonal matching pursuit over the `(delay, AoD, DAoA)` grid.
///
/// Atoms are scored by whitened, normalized correlation; ties go to the
/// smallest flat index `(i_tau * K_theta + i_theta) * K_phi + i_phi`. After
/// each pick all gains are refitted by whitened least squares. The output is
/// sorted by decreasing gain magnitude.
pub fn greedy_recover(
    y: &DVector<Complex64>,
    frame: &PilotFrame,
    cfg: &WaveformConfig,
    dict: &DictionaryConfig,
    stop: &GreedyStop,
) -> Result<Vec<RecoveredPath>> {
    dict.validate()?;
    frame.check(cfg)?;
    if y.len() != cfg.n_obs() {
        return Err(Error::InvalidArgument(format!(
            "observation has {} entries, expected {}",
            y.len(),
            cfg.n_obs()
        )));
    }
    let taus = delay_grid(dict.k_tau, dict.t_cp)?;
    let thetas = angle_grid(dict.k_theta)?;
    let phis = angle_grid(dict.k_phi)?;
    let whitener = Whitener::new(frame, cfg)?;
    let nb = cfg.n_blocks();
    let nrf = cfg.n_rf_r;

    // Whitened receive responses per DAoA atom, tx responses per AoD atom.
    let rx_atoms: Vec<Vec<DVector<Complex64>>> = phis
        .iter()
        .map(|&p| {
            rx_response(frame, &steering(cfg.n_r, p))
                .iter()
                .zip(&whitener.blocks)
                .map(|(v, r)| r * v)
                .collect()
        })
        .collect();
    let tx_atoms: Vec<Vec<Complex64>> = thetas
        .iter()
        .map(|&t| tx_response(frame, &steering(cfg.n_t, t)))
        .collect();
    let phase: Vec<Vec<Complex64>> = taus
        .iter()
        .map(|&t| (0..cfg.n_k).map(|k| delay_phase(cfg, k, t).conj()).collect())
        .collect();
    // Atom norms do not depend on the delay.
    let rx_energy: Vec<Vec<f64>> = rx_atoms
        .iter()
        .map(|blocks| blocks.iter().map(|v| v.norm_squared()).collect())
        .collect();
    let norms: Vec<f64> = (0..thetas.len() * phis.len())
        .map(|tp| {
            let (it, ip) = (tp / phis.len(), tp % phis.len());
            (0..nb)
                .map(|b| tx_atoms[it][b].norm_sqr() * rx_energy[ip][b])
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    let yw = whitener.apply(y);
    let mut residual_w = yw.clone();
    let mut residual_sq = y.norm_squared();
    let mut picked: Vec<(usize, usize, usize)> = Vec::new();
    let mut raw_cols: Vec<DVector<Complex64>> = Vec::new();
    let mut gains = DVector::<Complex64>::zeros(0);

    while picked.len() < stop.max_paths && residual_sq >= stop.residual_threshold {
        // g[ip][b] = <whitened rx atom, residual block>
        let g: Vec<Vec<Complex64>> = rx_atoms
            .iter()
            .map(|blocks| {
                blocks
                    .iter()
                    .enumerate()
                    .map(|(b, v)| v.dotc(&residual_w.rows(b * nrf, nrf)))
                    .collect()
            })
            .collect();
        let mut best: Option<(f64, (usize, usize, usize))> = None;
        let mut h = vec![Complex64::new(0.0, 0.0); cfg.n_k];
        for it in 0..thetas.len() {
            for ip in 0..phis.len() {
                let norm = norms[it * phis.len() + ip];
                if norm == 0.0 {
                    continue;
                }
                h.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for s in 0..cfg.n_s {
                    for (k, hk) in h.iter_mut().enumerate() {
                        let b = s * cfg.n_k + k;
                        *hk += tx_atoms[it][b].conj() * g[ip][b];
                    }
                }
                for (itau, ph) in phase.iter().enumerate() {
                    let atom = (itau, it, ip);
                    if picked.contains(&atom) {
                        continue;
                    }
                    let c: Complex64 = ph.iter().zip(&h).map(|(p, v)| p * v).sum();
                    let score = c.norm() / norm;
                    let better = match best {
                        None => true,
                        Some((bs, ba)) => score > bs || (score == bs && flat(atom, dict) < flat(ba, dict)),
                    };
                    if better {
                        best = Some((score, atom));
                    }
                }
            }
        }
        let Some((_, atom)) = best else { break };
        picked.push(atom);
        raw_cols.push(dictionary_column(
            frame,
            cfg,
            taus[atom.0],
            thetas[atom.1],
            phis[atom.2],
        )?);

        let a_raw = DMatrix::from_columns(&raw_cols);
        let a_w = whitener.apply_columns(&a_raw);
        gains = least_squares(&a_w, &yw)?;
        residual_w = &yw - &a_w * &gains;
        residual_sq = (y - &a_raw * &gains).norm_squared();
    }

    let mut out: Vec<RecoveredPath> = picked
        .iter()
        .zip(gains.iter())
        .map(|(&(i, j, k), &gain)| RecoveredPath {
            gain,
            delay: taus[i],
            aod: thetas[j],
            daoa: phis[k],
            atom: (i, j, k),
        })
        .collect();
    out.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
    Ok(out)
}

fn flat(atom: (usize, usize, usize), dict: &DictionaryConfig) -> usize {
    (atom.0 * dict.k_theta + atom.1) * dict.k_phi + atom.2
}

/// Derivatives of the noise-free observation with respect to
/// `(aod_i, daoa_i, delay_i)` for each path, as `3 N_p` columns.
pub fn mean_derivatives(paths: &[ChannelPath], frame: &PilotFrame, cfg: &WaveformConfig) -> Result<DMatrix<Complex64>> {
    frame.check(cfg)?;
    let mut d = DMatrix::zeros(cfg.n_obs(), 3 * paths.len());
    for (i, p) in paths.iter().enumerate() {
        let resp = responses(frame, cfg, p.aod, p.daoa);
        let dtx = tx_response(frame, &steering_derivative(cfg.n_t, p.aod));
        let drx = rx_response(frame, &steering_derivative(cfg.n_r, p.daoa));
        let col_aod = assemble(cfg, p.delay, &dtx, &resp.rx) * p.gain;
        let col_daoa = assemble(cfg, p.delay, &resp.tx, &drx) * p.gain;
        let mut col_tau = assemble(cfg, p.delay, &resp.tx, &resp.rx) * p.gain;
        for s in 0..cfg.n_s {
            for k in 0..cfg.n_k {
                let f = Complex64::new(0.0, -2.0 * PI * k as f64 * cfg.delta_f);
                for r in 0..cfg.n_rf_r {
                    col_tau[cfg.index(s, k, r)] *= f;
                }
            }
        }
        d.set_column(3 * i, &col_aod);
        d.set_column(3 * i + 1, &col_daoa);
        d.set_column(3 * i + 2, &col_tau);
    }
    Ok(d)
}

/// Fisher information of `(aod_i, daoa_i, delay_i)` per path:
/// `(2 / sigma2) Re{D^H R^H R D}`.
pub fn measurement_fim(paths: &[ChannelPath], frame: &PilotFrame, cfg: &WaveformConfig) -> Result<DMatrix<f64>> {
    if !(cfg.sigma2 > 0.0) {
        return Err(Error::InvalidArgument("sigma2 must be positive for a FIM".into()));
    }
    let whitener = Whitener::new(frame, cfg)?;
    let dw = whitener.apply_columns(&mean_derivatives(paths, frame, cfg)?);
    let g = dw.ad_mul(&dw);
    let j = g.map(|v| 2.0 * v.re / cfg.sigma2);
    Ok((&j + j.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WaveformConfig {
        WaveformConfig {
            n_k: 8,
            delta_f: 1.0 / 1e-6 / 8.0,
            t_cp: 1e-6,
            n_t: 8,
            n_r: 8,
            n_rf_t: 1,
            n_rf_r: 2,
            n_s: 2,
            sigma2: 0.01,
        }
    }

    fn path(gain: (f64, f64), delay: f64, aod: f64, daoa: f64) -> ChannelPath {
        ChannelPath {
            gain: Complex64::new(gain.0, gain.1),
            delay,
            aod,
            daoa,
        }
    }

    #[test]
    fn steering_is_unit_norm() {
        for a in [-3.0, -1.0, 0.0, 0.3, 2.5] {
            assert!((steering(16, a).norm() - 1.0).abs() < 1e-14);
        }
        assert_eq!(steering(4, 0.0)[3], Complex64::new(0.5, 0.0));
    }

    #[test]
    fn index_layout() {
        let c = small();
        assert_eq!(c.index(0, 0, 1), 1);
        assert_eq!(c.index(0, 1, 0), 2);
        assert_eq!(c.index(1, 0, 0), 16);
        assert_eq!(c.n_obs(), 32);
    }

    #[test]
    fn observation_is_linear_in_gains() {
        let c = small();
        let f = PilotFrame::random(&c, 1).unwrap();
        let a = path((1.0, 0.5), 1e-7, 0.3, -0.7);
        let b = path((-0.2, 0.9), 3e-7, -1.1, 0.4);
        let ya = mean_observation(&[a], &f, &c).unwrap();
        let yb = mean_observation(&[b], &f, &c).unwrap();
        let yab = mean_observation(&[a, b], &f, &c).unwrap();
        assert!((&ya + &yb - &yab).norm() < 1e-12);
        let mut a2 = a;
        a2.gain *= 3.0;
        let y2 = mean_observation(&[a2], &f, &c).unwrap();
        assert!((&ya * Complex64::new(3.0, 0.0) - y2).norm() < 1e-12);
    }

    #[test]
    fn noise_is_seeded() {
        let c = small();
        let f = PilotFrame::random(&c, 1).unwrap();
        let p = [path((1.0, 0.0), 1e-7, 0.3, -0.7)];
        assert_eq!(synthesize(&p, &f, &c, 5).unwrap(), synthesize(&p, &f, &c, 5).unwrap());
        assert_ne!(synthesize(&p, &f, &c, 5).unwrap(), synthesize(&p, &f, &c, 6).unwrap());
    }

    #[test]
    fn noise_covariance_matches_combiner_gram() {
        let mut c = small();
        c.sigma2 = 2.0;
        let f = PilotFrame::random(&c, 3).unwrap();
        let trials = 4000;
        let mut acc = DMatrix::<Complex64>::zeros(c.n_rf_r, c.n_rf_r);
        for t in 0..trials {
            let y = synthesize(&[], &f, &c, t).unwrap();
            let seg = y.rows(0, c.n_rf_r).into_owned();
            acc += &seg * seg.adjoint();
        }
        let emp = acc / Complex64::new(trials as f64, 0.0);
        let expect = f.combiners[0].ad_mul(&f.combiners[0]) * Complex64::new(c.sigma2, 0.0);
        assert!((emp - &expect).norm() < 0.1 * expect.norm());
    }

    #[test]
    fn whitening_inverts_noise_covariance() {
        let c = small();
        let f = PilotFrame::random(&c, 2).unwrap();
        let w = Whitener::new(&f, &c).unwrap();
        for (r, wb) in w.blocks.iter().zip(&f.combiners) {
            let sigma = wb.ad_mul(wb) * Complex64::new(c.sigma2, 0.0);
            let prod = r.adjoint() * r * sigma;
            let eye = DMatrix::<Complex64>::identity(c.n_rf_r, c.n_rf_r) * Complex64::new(c.sigma2, 0.0);
            assert!((prod - eye).norm() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_combiner_is_reported() {
        let c = small();
        let mut f = PilotFrame::random(&c, 2).unwrap();
        let col = f.combiners[3].column(0).into_owned();
        f.combiners[3].set_column(1, &col);
        assert!(matches!(
            Whitener::new(&f, &c),
            Err(Error::RankDeficientCombiner {
                symbol: 0,
                subcarrier: 3
            })
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let c = small();
        let f = PilotFrame::random(&c, 4).unwrap();
        let paths = [path((1.0, 0.2), 2e-7, 0.4, -0.9), path((0.3, -0.5), 5e-7, -1.2, 0.6)];
        let d = mean_derivatives(&paths, &f, &c).unwrap();
        // Delay is stepped in units of the sampling period.
        let units = [1.0, 1.0, 1.0 / (c.n_k as f64 * c.delta_f)];
        for i in 0..paths.len() {
            for (m, unit) in units.iter().enumerate() {
                let h = 1e-7 * unit;
                let shift = |sgn: f64| {
                    let mut p = paths;
                    match m {
                        0 => p[i].aod += sgn * h,
                        1 => p[i].daoa += sgn * h,
                        _ => p[i].delay += sgn * h,
                    }
                    mean_observation(&p, &f, &c).unwrap()
                };
                let fd = (shift(1.0) - shift(-1.0)) / Complex64::new(2.0 * h, 0.0);
                let an = d.column(3 * i + m);
                let rel = (&fd - an).norm() / an.norm();
                assert!(rel < 1e-5, "path {i} param {m}: rel {rel}");
            }
        }
    }

    #[test]
    fn fim_is_symmetric_psd_and_quadratic_in_gain() {
        let c = small();
        let f = PilotFrame::random(&c, 5).unwrap();
        let mut paths = vec![path((1.0, 0.0), 2e-7, 0.4, -0.9), path((0.0, 0.7), 5e-7, -1.2, 0.6)];
        let j = measurement_fim(&paths, &f, &c).unwrap();
        assert!((&j - j.transpose()).norm() <= 1e-12 * j.norm());
        let eig = j.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-9 * eig.eigenvalues.max()));

        paths[0].gain *= 2.0;
        let j2 = measurement_fim(&paths, &f, &c).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((j2[(a, b)] - 4.0 * j[(a, b)]).abs() <= 1e-9 * j[(a, b)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn fim_rejects_zero_noise() {
        let mut c = small();
        c.sigma2 = 0.0;
        let f = PilotFrame::random(&c, 5).unwrap();
        assert!(measurement_fim(&[path((1.0, 0.0), 0.0, 0.0, 0.0)], &f, &c).is_err());
    }

    fn small_dict() -> DictionaryConfig {
        DictionaryConfig {
            k_tau: 8,
            k_theta: 8,
            k_phi: 8,
            t_cp: 1e-6,
            n_q: 64,
        }
    }

    fn brute_force_single(
        y: &DVector<Complex64>,
        f: &PilotFrame,
        c: &WaveformConfig,
        d: &DictionaryConfig,
    ) -> (usize, usize, usize) {
        let w = Whitener::new(f, c).unwrap();
        let yw = w.apply(y);
        let taus = delay_grid(d.k_tau, d.t_cp).unwrap();
        let ths = angle_grid(d.k_theta).unwrap();
        let phs = angle_grid(d.k_phi).unwrap();
        let mut best = (f64::NEG_INFINITY, (0, 0, 0));
        for (i, &tau) in taus.iter().enumerate() {
            for (j, &th) in ths.iter().enumerate() {
                for (k, &ph) in phs.iter().enumerate() {
                    let a = w.apply(&dictionary_column(f, c, tau, th, ph).unwrap());
                    let s = a.dotc(&yw).norm() / a.norm();
                    if s > best.0 {
                        best = (s, (i, j, k));
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn single_on_grid_path_is_recovered_exactly() {
        let c = small();
        let f = PilotFrame::random(&c, 6).unwrap();
        let d = small_dict();
        let taus = delay_grid(d.k_tau, d.t_cp).unwrap();
        let grid = angle_grid(8).unwrap();
        let p = path((0.8, -0.4), taus[3], grid[5], grid[2]);
        let y = mean_observation(&[p], &f, &c).unwrap();
        let stop = GreedyStop {
            max_paths: 3,
            residual_threshold: 1e-20,
        };
        let out = greedy_recover(&y, &f, &c, &d, &stop).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].atom, (3, 5, 2));
        assert!((out[0].gain - p.gain).norm() < 1e-10);
        assert_eq!(brute_force_single(&y, &f, &c, &d), (3, 5, 2));
    }

    #[test]
    fn greedy_first_pick_matches_exhaustive_search() {
        let c = small();
        let d = small_dict();
        for seed in 0..5 {
            let f = PilotFrame::random(&c, seed).unwrap();
            let paths = [
                path((1.0, 0.3), 1.3e-7, 0.37, -0.52),
                path((0.4, 0.0), 6.1e-7, -0.9, 1.1),
            ];
            let y = synthesize(&paths, &f, &c, seed).unwrap();
            let stop = GreedyStop {
                max_paths: 1,
                residual_threshold: 0.0,
            };
            let out = greedy_recover(&y, &f, &c, &d, &stop).unwrap();
            assert_eq!(out[0].atom, brute_force_single(&y, &f, &c, &d), "seed {seed}");
        }
    }

    #[test]
    fn two_on_grid_paths_are_separated() {
        let c = small();
        let f = PilotFrame::random(&c, 7).unwrap();
        let d = small_dict();
        let taus = delay_grid(d.k_tau, d.t_cp).unwrap();
        let grid = angle_grid(8).unwrap();
        let paths = [
            path((1.0, 0.0), taus[1], grid[6], grid[1]),
            path((0.0, 0.5), taus[4], grid[2], grid[4]),
        ];
        let y = mean_observation(&paths, &f, &c).unwrap();
        let stop = GreedyStop {
            max_paths: 4,
            residual_threshold: 1e-20,
        };
        let out = greedy_recover(&y, &f, &c, &d, &stop).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].atom, (1, 6, 1));
        assert_eq!(out[1].atom, (4, 2, 4));
    }

    #[test]
    fn zero_budget_returns_nothing() {
        let c = small();
        let f = PilotFrame::random(&c, 7).unwrap();
        let y = DVector::zeros(c.n_obs());
        let stop = GreedyStop {
            max_paths: 5,
            residual_threshold: 1e-3,
        };
        assert!(greedy_recover(&y, &f, &c, &small_dict(), &stop).unwrap().is_empty());
    }
}
