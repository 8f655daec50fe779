//! Orientation recovery by group consensus: the cost landscape, then the
//! estimate from a brute-force grid and from a coarse sensor reading.

use std::f64::consts::TAU;

use radioslam::dictionary::quantize_orientation;
use radioslam::geometry::{angular_distance, observe, sample_scene, ScenarioConfig};
use radioslam::localization::LocalizationConfig;
use radioslam::orientation::{
    make_groups, orientation_cost, robust_locate, GroupingStrategy, OrientationInit, OrientationSolverConfig,
};

fn main() -> radioslam::Result<()> {
    let scene = sample_scene(&ScenarioConfig::default(), 5)?;
    let obs = observe(&scene)?;
    println!("true orientation {:.6} rad", scene.orientation);

    let groups = make_groups(obs.len(), &GroupingStrategy::DropOne)?;
    println!("D1 cost over a coarse grid:");
    for i in 0..24 {
        let phi = i as f64 * TAU / 24.0;
        let c = orientation_cost(phi, &groups, &obs, &LocalizationConfig::default());
        println!("  {phi:6.3} rad  {:>12.4e}", c.cost);
    }

    let sensor = quantize_orientation(scene.orientation, 64);
    let inits = [
        ("brute force", OrientationInit::BruteForce),
        ("sensor Q64", OrientationInit::from_sensor(sensor, 64)),
    ];
    for grouping in [GroupingStrategy::ThreePath, GroupingStrategy::DropOne] {
        for (name, init) in inits {
            let cfg = OrientationSolverConfig {
                init,
                ..Default::default()
            };
            let r = robust_locate(&obs, &grouping, &cfg)?;
            println!(
                "{grouping} {name:<11}: orientation error {:.2e} rad, position error {:.2e} m, {} iterations",
                angular_distance(r.orientation, scene.orientation),
                (r.estimate.rx_position - scene.rx_position).norm(),
                r.diagnostics.iterations
            );
        }
    }
    Ok(())
}
