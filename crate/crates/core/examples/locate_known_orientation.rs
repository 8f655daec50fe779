//! Receiver position, clock offset and reflector map when the array
//! orientation is known, on exact and on DAoA-quantized multipath.

use radioslam::geometry::{observe, sample_scene, ScenarioConfig};
use radioslam::localization::solve_location;
use radioslam::montecarlo::Corruption;

fn main() -> radioslam::Result<()> {
    let scene = sample_scene(&ScenarioConfig::default(), 11)?;
    let exact = observe(&scene)?;

    for corruption in ["none", "daoa:256", "daoa:1024"] {
        let obs = corruption.parse::<Corruption>()?.apply(&exact)?;
        let est = solve_location(&obs, scene.orientation)?;
        let worst_map = est
            .used_paths
            .iter()
            .zip(&est.reflectors)
            .map(|(&i, r)| (r - scene.reflectors[i]).norm())
            .fold(0.0, f64::max);
        println!(
            "{corruption:>9}: position error {:.3e} m, clock error {:.3e} s, worst reflector {:.3e} m, residual {:.2e}, los {}",
            (est.rx_position - scene.rx_position).norm(),
            (est.clock_offset - scene.clock_offset).abs(),
            worst_map,
            est.residual_norm,
            est.los
        );
    }
    Ok(())
}
