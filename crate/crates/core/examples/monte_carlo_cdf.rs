//! Location error distribution of every estimator, on exact multipath and
//! with DAoA quantization at K_phi = 256.
//!
//!     cargo run --release --example monte_carlo_cdf -- 1000

use radioslam::montecarlo::{cdf_and_percentiles, run_trials, ExperimentConfig, Metric};

fn main() -> radioslam::Result<()> {
    let n_sim = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let estimators = [
        "known",
        "sensor:64",
        "robust:3p:brute",
        "robust:3p:sensor:64",
        "robust:d1:brute",
        "robust:d1:sensor:64",
        "random",
    ];
    for corruption in ["none", "daoa:256"] {
        let cfg = ExperimentConfig {
            n_sim,
            corruption: corruption.parse()?,
            estimators: estimators.iter().map(|e| e.parse()).collect::<radioslam::Result<_>>()?,
            ..Default::default()
        };
        let records = run_trials(&cfg, None)?;
        println!("corruption {corruption}, {n_sim} trials, position error [m]");
        println!(
            "  {:<22} {:>10} {:>10} {:>10} {:>7}",
            "estimator", "p20", "p50", "p80", "failed"
        );
        for e in &cfg.estimators {
            let label = e.to_string();
            let mine: Vec<_> = records.iter().filter(|r| r.estimator == label).cloned().collect();
            let d = cdf_and_percentiles(&mine, Metric::Position, &[0.2, 0.5, 0.8])?;
            let p: Vec<f64> = d.percentiles.iter().map(|&(_, v)| v).collect();
            println!(
                "  {label:<22} {:>10.3e} {:>10.3e} {:>10.3e} {:>7}",
                p[0], p[1], p[2], d.n_failed
            );
        }
    }
    Ok(())
}
