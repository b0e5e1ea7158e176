//! Vacuum flowing into an even cat under two-photon pumping and loss, then
//! single-photon loss dephasing the parity.

use qtraj::feedback::{decay_rate, kerr_cat_stabilization, kerr_eigen_residual, KerrCatSetup};

fn main() -> qtraj::Result<()> {
    let setup = KerrCatSetup { k: 1.0, eps2: 4.0, kappa2: 1.0, kappa1: 0.02, n_max: 20, duration: 20.0, sample_dt: 0.25 };
    let run = kerr_cat_stabilization(&setup, None)?;
    println!("{:>5} {:>8} {:>8}", "t", "parity", "weight");
    for k in (0..run.times.len()).step_by(10) {
        println!("{:5.1} {:8.4} {:8.5}", run.times[k], run.parity[k], run.cat_weight[k]);
    }
    let alpha = setup.alpha()?;
    println!(
        "parity decay {:.4}, 2 kappa1 |alpha|^2 = {:.4}",
        decay_rate(&run.times, &run.parity, 5.0, 1e-3)?,
        2.0 * setup.kappa1 * alpha * alpha
    );
    for n_max in [20, 24, 28, 32] {
        println!("eigen-residual at n_max = {n_max}: {:.2e}", kerr_eigen_residual(setup.k, setup.eps2, n_max)?);
    }
    Ok(())
}
