//! Ensemble Rabi oscillations under sigma_z monitoring, with and without the
//! demodulating drive correction.

use qtraj::feedback::{rabi_ensemble, RabiConfig};

fn main() -> qtraj::Result<()> {
    let base = RabiConfig::default();
    let t_end = 20.0;
    let off = rabi_ensemble(&RabiConfig { gain: 0.0, ..base.clone() }, t_end, 2e-3, 100, 1, 0, 10)?;
    let on = rabi_ensemble(&base, t_end, 2e-3, 100, 1, 0, 10)?;
    println!("{:>6} {:>10} {:>10}", "window", "free", "stabilized");
    for t0 in [0.0, 5.0, 10.0, 15.0] {
        let (a, b) = (off.amplitude(base.omega_r, t0, t0 + 5.0), on.amplitude(base.omega_r, t0, t0 + 5.0));
        println!("{:>6} {a:10.3} {b:10.3}", format!("{t0}-{}", t0 + 5.0));
    }
    Ok(())
}
