//! Signal and idler gain of a degenerate parametric amplifier as the pump
//! approaches threshold.

use qtraj::models::{jpa_gain, jpa_quadrature_map, JpaParams};

fn main() -> qtraj::Result<()> {
    let kappa = 1.0;
    println!("{:>8} {:>10} {:>10} {:>14}", "2l/k", "|G_S|^2", "|G_I|^2", "difference");
    for frac in [0.0, 0.3, 0.6, 0.9, 0.99] {
        let params = JpaParams { lambda: 0.5 * kappa * frac, kappa, phi: 0.0, eta: 1.0, delta: 0.0 };
        let (gs, gi) = jpa_gain(&params)?;
        println!("{frac:8.2} {:10.3} {:10.3} {:14.2e}", gs.norm_sqr(), gi.norm_sqr(), gs.norm_sqr() - gi.norm_sqr());
    }
    let q = jpa_quadrature_map(1.0, 0.0)?;
    println!("squeezed x amplified quadrature gain for r = 1: {}", q.i_gain * q.q_gain);
    Ok(())
}
