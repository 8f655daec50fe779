//! 80%-ile errors versus DAoA dictionary size, with the approximate bound.
//!
//!     cargo run --release --example kphi_sweep -- 500

use radioslam::dictionary::DaoaQuantizerMode;
use radioslam::montecarlo::{sweep, ExperimentConfig};

fn main() -> radioslam::Result<()> {
    let n_sim = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let cfg = ExperimentConfig {
        n_sim,
        estimators: ["known", "sensor:64", "robust:3p:brute", "robust:d1:sensor:64"]
            .iter()
            .map(|e| e.parse())
            .collect::<radioslam::Result<_>>()?,
        ..Default::default()
    };
    let rows = sweep(&cfg, &[64, 128, 256, 512, 1024], DaoaQuantizerMode::Uniform, 0.8, None)?;
    println!(
        "{:>6} {:<22} {:<12} {:>10} {:<4} {:>10}",
        "K_phi", "estimator", "metric", "p80", "unit", "bound m"
    );
    for r in rows {
        println!(
            "{:>6} {:<22} {:<12} {:>10.3e} {:<4} {:>10.3e}",
            r.k_phi, r.estimator, r.metric, r.value, r.unit, r.approx_crlb
        );
    }
    Ok(())
}
