//! Steady-state cavity fields for the two qubit states and the resulting
//! measurement-induced dephasing, swept over chi/kappa.

use qtraj::models::{dephasing_rate, pointer_states, DispersiveParams};

fn main() -> qtraj::Result<()> {
    println!("{:>8} {:>10} {:>10} {:>8}", "chi/k", "arg b_g", "arg b_e", "Gamma_D");
    for ratio in [0.1, 0.25, 0.5, 1.0, 2.0] {
        let p = DispersiveParams { omega_cav: 0.0, omega_q: 0.0, chi: ratio, kappa: 1.0, epsilon: 1.0 };
        let s = pointer_states(&p)?;
        println!(
            "{ratio:8.2} {:10.2} {:10.2} {:8.4}",
            s.b_out_g.arg().to_degrees(),
            s.b_out_e.arg().to_degrees(),
            dephasing_rate(s.alpha_g, s.alpha_e, p.chi)
        );
    }
    Ok(())
}
