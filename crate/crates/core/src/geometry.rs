//! Ground-truth 2D scenes and the exact single-bounce forward model.
//!
//! The transmitter sits at the origin. Every reflector produces one path
//! tx -> reflector -> rx; no line-of-sight path is generated.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_vec2;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default minimum distance between a reflector and the tx or rx, meters.
pub const DEFAULT_MIN_SEPARATION: f64 = 1.0;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite angle {x}")));
    }
    Ok(wrap(x))
}

/// Infallible wrap for values already known to be finite.
pub(crate) fn wrap(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let mut r = x.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    // rem_euclid can return TAU itself for tiny negative inputs.
    if r <= -PI {
        r += TAU;
    }
    r
}

/// Circular distance between two angles, in [0, pi].
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(rename = "rx", with = "serde_vec2")]
    pub rx_position: Vector2<f64>,
    /// Receiver array orientation, radians in (-pi, pi].
    #[serde(rename = "phi0")]
    pub orientation: f64,
    /// Receiver time reference, seconds.
    #[serde(rename = "tau_e")]
    pub clock_offset: f64,
    #[serde(with = "serde_vec2::list")]
    pub reflectors: Vec<Vector2<f64>>,
}

impl Scene {
    pub fn new(rx_position: Vector2<f64>, orientation: f64, clock_offset: f64, reflectors: Vec<Vector2<f64>>) -> Self {
        Self {
            rx_position,
            orientation: wrap(orientation),
            clock_offset,
            reflectors,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.reflectors.len()
    }

    /// Clock offset expressed as a length, c * tau_e.
    pub fn clock_length(&self) -> f64 {
        SPEED_OF_LIGHT * self.clock_offset
    }

    /// Checks that no reflector is within `min_separation` of tx or rx.
    pub fn validate(&self, min_separation: f64) -> Result<()> {
        let values = [
            self.rx_position.x,
            self.rx_position.y,
            self.orientation,
            self.clock_offset,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("scene has non-finite fields".into()));
        }
        for (i, d) in self.reflectors.iter().enumerate() {
            if !(d.x.is_finite() && d.y.is_finite()) {
                return Err(Error::InvalidArgument(format!("reflector {i} is non-finite")));
            }
            if d.norm() < min_separation {
                return Err(Error::DegenerateGeometry(format!(
                    "reflector {i} within {min_separation} m of the transmitter"
                )));
            }
            if (d - self.rx_position).norm() < min_separation {
                return Err(Error::DegenerateGeometry(format!(
                    "reflector {i} within {min_separation} m of the receiver"
                )));
            }
        }
        Ok(())
    }

    /// Rotates the whole scene (positions and orientation) about the origin.
    pub fn rotated(&self, delta: f64) -> Scene {
        let rot = nalgebra::Rotation2::new(delta);
        Scene::new(
            rot * self.rx_position,
            self.orientation + delta,
            self.clock_offset,
            self.reflectors.iter().map(|d| rot * d).collect(),
        )
    }
}

/// Exact parameters of one single-bounce path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParameters {
    /// Absolute propagation delay tau_i, seconds.
    pub delay: f64,
    /// Delay relative to the receiver clock, tau_i - tau_e.
    pub tdoa: f64,
    pub aod: f64,
    pub aoa: f64,
    /// AoA minus receiver orientation, wrapped.
    pub daoa: f64,
    /// Path length, meters.
    pub length: f64,
}

impl PathParameters {
    pub fn observation(&self) -> PathObservation {
        PathObservation {
            tdoa: self.tdoa,
            aod: self.aod,
            daoa: self.daoa,
        }
    }
}

/// What the receiver measures for one path: (TDoA, AoD, DAoA).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct PathObservation {
    pub tdoa: f64,
    pub aod: f64,
    pub daoa: f64,
}

impl From<[f64; 3]> for PathObservation {
    fn from(v: [f64; 3]) -> Self {
        Self {
            tdoa: v[0],
            aod: v[1],
            daoa: v[2],
        }
    }
}

impl From<PathObservation> for [f64; 3] {
    fn from(p: PathObservation) -> Self {
        [p.tdoa, p.aod, p.daoa]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Exact,
    Quantized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathSet {
    pub paths: Vec<PathObservation>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl MultipathSet {
    pub fn new(paths: Vec<PathObservation>, provenance: Provenance) -> Self {
        Self { paths, provenance }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Subset of paths by index, keeping the given order.
    pub fn select(&self, indices: &[usize]) -> MultipathSet {
        MultipathSet {
            paths: indices.iter().map(|&i| self.paths[i]).collect(),
            provenance: self.provenance,
        }
    }
}

/// Maps a scene to its multipath parameters, one entry per reflector.
pub fn forward_model(scene: &Scene) -> Result<Vec<PathParameters>> {
    forward_model_with_separation(scene, DEFAULT_MIN_SEPARATION)
}

pub fn forward_model_with_separation(scene: &Scene, min_separation: f64) -> Result<Vec<PathParameters>> {
    scene.validate(min_separation)?;
    let rx = scene.rx_position;
    Ok(scene
        .reflectors
        .iter()
        .map(|d| {
            let from_rx = d - rx;
            let length = d.norm() + from_rx.norm();
            let delay = length / SPEED_OF_LIGHT;
            let aod = d.y.atan2(d.x);
            let aoa = from_rx.y.atan2(from_rx.x);
            PathParameters {
                delay,
                tdoa: delay - scene.clock_offset,
                aod,
                aoa,
                daoa: wrap(aoa - scene.orientation),
                length,
            }
        })
        .collect())
}

/// Exact observations of a scene.
pub fn observe(scene: &Scene) -> Result<MultipathSet> {
    Ok(MultipathSet::new(
        forward_model(scene)?.iter().map(PathParameters::observation).collect(),
        Provenance::Exact,
    ))
}

/// Random scene ensemble parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Side of the square [0, side]^2 holding rx and reflectors, meters.
    pub side: f64,
    pub n_paths: usize,
    /// tau_e - |d_o|/c is drawn from U(0, clock_excess_max), seconds.
    pub clock_excess_max: f64,
    pub min_separation: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            side: 100.0,
            n_paths: 20,
            clock_excess_max: 40e-9,
            min_separation: DEFAULT_MIN_SEPARATION,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 3 {
            return Err(Error::InvalidConfig(format!(
                "n_paths = {} but at least 3 paths are required",
                self.n_paths
            )));
        }
        if !(self.side.is_finite() && self.side > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "side must be positive, got {}",
                self.side
            )));
        }
        if !(self.clock_excess_max.is_finite() && self.clock_excess_max >= 0.0) {
            return Err(Error::InvalidConfig("clock_excess_max must be >= 0".into()));
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            return Err(Error::InvalidConfig("min_separation must be >= 0".into()));
        }
        // Rejection sampling needs room to place reflectors.
        if 2.0 * self.min_separation >= self.side {
            return Err(Error::InvalidConfig("min_separation too large for the square".into()));
        }
        Ok(())
    }
}

/// Draws a random scene; identical (config, seed) pairs give identical scenes.
pub fn sample_scene(config: &ScenarioConfig, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_scene_with(config, &mut rng)
}

pub fn sample_scene_with<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Scene> {
    config.validate()?;
    let side = config.side;
    let point = |rng: &mut R| Vector2::new(rng.random::<f64>() * side, rng.random::<f64>() * side);

    let rx = loop {
        let p = point(rng);
        if p.norm() >= config.min_separation {
            break p;
        }
    };
    let orientation = rng.random::<f64>() * TAU;
    let clock_offset = rx.norm() / SPEED_OF_LIGHT + rng.random::<f64>() * config.clock_excess_max;

    let mut reflectors = Vec::with_capacity(config.n_paths);
    while reflectors.len() < config.n_paths {
        let d = point(rng);
        if d.norm() >= config.min_separation && (d - rx).norm() >= config.min_separation {
            reflectors.push(d);
        }
    }
    Ok(Scene::new(rx, orientation, clock_offset, reflectors))
}
