//! Draws a random scene and prints the multipath it produces.
//!
//!     cargo run --example forward_model -- 3

use radioslam::geometry::{forward_model, sample_scene, ScenarioConfig, SPEED_OF_LIGHT};

fn main() -> radioslam::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = ScenarioConfig {
        n_paths: 8,
        ..Default::default()
    };
    let scene = sample_scene(&cfg, seed)?;
    println!(
        "rx ({:.2}, {:.2}) m, orientation {:.4} rad, clock offset {:.2} ns",
        scene.rx_position.x,
        scene.rx_position.y,
        scene.orientation,
        scene.clock_offset * 1e9
    );
    println!(
        "{:>4} {:>10} {:>10} {:>9} {:>9} {:>9}",
        "path", "length m", "tdoa ns", "aod", "aoa", "daoa"
    );
    for (i, p) in forward_model(&scene)?.iter().enumerate() {
        println!(
            "{i:>4} {:>10.3} {:>10.3} {:>9.4} {:>9.4} {:>9.4}",
            p.length,
            p.tdoa * 1e9,
            p.aod,
            p.aoa,
            p.daoa
        );
    }
    // The earliest path arrives no sooner than the line of sight would.
    println!(
        "LoS length {:.3} m, clock length {:.3} m",
        scene.rx_position.norm(),
        scene.clock_offset * SPEED_OF_LIGHT
    );
    Ok(())
}
