//! Phase estimation of a single-photon/vacuum superposition with an adaptive
//! receiver, compared with heterodyne.

use qtraj::analysis::phase_error_stats;
use qtraj::feedback::{mean_canonical_tv, phase_ensemble, AdaptivePhaseConfig, PhaseReceiver};

fn main() -> qtraj::Result<()> {
    let theta = 1.1;
    for eta in [1.0, 0.4] {
        for receiver in [PhaseReceiver::Adaptive, PhaseReceiver::Heterodyne] {
            let cfg = AdaptivePhaseConfig { eta, receiver, ..Default::default() };
            let runs = phase_ensemble(&cfg, theta, 300, 4, 0)?;
            let est: Vec<f64> = runs.iter().map(|r| r.estimate.theta).collect();
            let s = phase_error_stats(&est, theta)?;
            println!(
                "eta {eta:.1} {receiver:?}: circular variance {:.3}, mean TV to canonical {:.4}",
                s.circular_variance,
                mean_canonical_tv(&runs, 256)?
            );
        }
    }
    Ok(())
}
