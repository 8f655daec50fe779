//! End to end: synthesize a noisy OFDM hybrid-beamforming observation of a
//! scene, recover its paths greedily on a dictionary, then locate the
//! receiver from the recovered multipath.
//!
//!     cargo run --release --example greedy_channel

use num_complex::Complex64;
use radioslam::channel::{greedy_recover, synthesize, ChannelPath, GreedyStop, PilotFrame, WaveformConfig};
use radioslam::dictionary::{quantize_orientation, DictionaryConfig};
use radioslam::geometry::{
    forward_model, sample_scene, MultipathSet, PathObservation, Provenance, ScenarioConfig, Scene,
};
use radioslam::orientation::{robust_locate, GroupingStrategy, OrientationInit, OrientationSolverConfig};

/// A scene whose paths all lie in front of both linear arrays.
fn visible_scene(cfg: &ScenarioConfig) -> radioslam::Result<Scene> {
    for seed in 0.. {
        let s = sample_scene(cfg, seed)?;
        if forward_model(&s)?
            .iter()
            .all(|p| p.aod.abs() < 1.2 && p.daoa.abs() < 1.2)
        {
            return Ok(s);
        }
    }
    unreachable!()
}

fn main() -> radioslam::Result<()> {
    let scene = visible_scene(&ScenarioConfig {
        side: 40.0,
        n_paths: 6,
        ..Default::default()
    })?;
    let wf = WaveformConfig {
        n_k: 64,
        delta_f: 500e3,
        t_cp: 2e-6,
        n_t: 16,
        n_r: 16,
        n_rf_t: 1,
        n_rf_r: 4,
        n_s: 4,
        sigma2: 1e-4,
    };
    let dict = DictionaryConfig {
        k_tau: 256,
        k_theta: 128,
        k_phi: 128,
        t_cp: wf.t_cp,
        n_q: 64,
    };

    let truth = forward_model(&scene)?;
    // Negative TDoAs wrap around the cyclic prefix.
    let paths: Vec<ChannelPath> = truth
        .iter()
        .enumerate()
        .map(|(i, p)| ChannelPath {
            gain: Complex64::from_polar(10.0 / p.length, i as f64),
            delay: p.tdoa.rem_euclid(wf.t_cp),
            aod: p.aod,
            daoa: p.daoa,
        })
        .collect();
    let frame = PilotFrame::random(&wf, 7)?;
    let y = synthesize(&paths, &frame, &wf, 8)?;
    let stop = GreedyStop {
        max_paths: paths.len(),
        residual_threshold: 1.5 * wf.n_obs() as f64 * wf.sigma2,
    };
    let found = greedy_recover(&y, &frame, &wf, &dict, &stop)?;

    println!("{:>8} {:>9} {:>9} {:>9}", "|gain|", "tdoa ns", "aod", "daoa");
    for p in &truth {
        println!(
            "{:>8.4} {:>9.2} {:>9.4} {:>9.4}  true",
            10.0 / p.length,
            p.tdoa * 1e9,
            p.aod,
            p.daoa
        );
    }
    let recovered: Vec<PathObservation> = found
        .iter()
        .map(|r| {
            let tdoa = if r.delay > wf.t_cp / 2.0 {
                r.delay - wf.t_cp
            } else {
                r.delay
            };
            println!(
                "{:>8.4} {:>9.2} {:>9.4} {:>9.4}  recovered",
                r.gain.norm(),
                tdoa * 1e9,
                r.aod,
                r.daoa
            );
            PathObservation {
                tdoa,
                aod: r.aod,
                daoa: r.daoa,
            }
        })
        .collect();

    let obs = MultipathSet::new(recovered, Provenance::Quantized);
    let cfg = OrientationSolverConfig {
        init: OrientationInit::from_sensor(quantize_orientation(scene.orientation, 64), 64),
        ..Default::default()
    };
    let r = robust_locate(&obs, &GroupingStrategy::DropOne, &cfg)?;
    println!(
        "position error {:.3} m, clock error {:.2} ns, orientation error {:.4} rad",
        (r.estimate.rx_position - scene.rx_position).norm(),
        (r.estimate.clock_offset - scene.clock_offset).abs() * 1e9,
        radioslam::geometry::angular_distance(r.orientation, scene.orientation)
    );
    Ok(())
}
