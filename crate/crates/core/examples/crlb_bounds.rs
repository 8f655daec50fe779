//! Error bounds for one scene: the DAoA-quantization bound versus grid size
//! and the full location CRLB built from the OFDM measurement FIM.

use num_complex::Complex64;
use radioslam::channel::{measurement_fim, ChannelPath, PilotFrame, WaveformConfig};
use radioslam::crlb::{approx_crlb, location_fim, transform_matrix};
use radioslam::geometry::{forward_model, sample_scene, ScenarioConfig};

fn main() -> radioslam::Result<()> {
    let scene = sample_scene(&ScenarioConfig::default(), 3)?;

    for k in [64, 128, 256, 512, 1024] {
        println!("K_phi {k:>5}: approx bound {:.4} m", approx_crlb(&scene, k)?);
    }

    // Free-space amplitudes; only the relative SNR between paths matters here.
    let paths: Vec<ChannelPath> = forward_model(&scene)?
        .iter()
        .map(|p| ChannelPath {
            gain: Complex64::new(10.0 / p.length, 0.0),
            delay: p.tdoa,
            aod: p.aod,
            daoa: p.daoa,
        })
        .collect();
    let t = transform_matrix(&scene)?;
    for sigma2 in [1e-2, 1e-4, 1e-6] {
        let wf = WaveformConfig {
            sigma2,
            ..Default::default()
        };
        let frame = PilotFrame::random(&wf, 1)?;
        let jm = measurement_fim(&paths, &frame, &wf)?;
        let bound = location_fim(&jm, &t)?;
        println!(
            "noise variance {sigma2:.0e}: position bound {:.4e} m, clock bound {:.4e} s",
            bound.position_rms(),
            bound.covariance[(2, 2)].sqrt()
        );
    }
    Ok(())
}
