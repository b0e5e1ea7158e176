//! Entanglement by half-parity measurement plus proportional feedback. Every
//! seed follows the same path towards |psi+>.

use qtraj::analysis::fidelity;
use qtraj::feedback::{analytic_half_parity_fidelity, psi_plus, run_half_parity};
use qtraj::sme::WienerStream;

fn main() -> qtraj::Result<()> {
    let gamma = 1.0;
    let target = psi_plus().to_density();
    let runs = (0..3)
        .map(|i| run_half_parity(gamma, 1.0, 6.0, 1e-3, &mut WienerStream::new(1, i), 1000))
        .collect::<qtraj::Result<Vec<_>>>()?;
    println!("{:>4} {:>8} {:>8} {:>8} {:>8}", "t", "seed 0", "seed 1", "seed 2", "closed");
    for k in 0..runs[0].states.len() {
        let t = runs[0].state_times[k];
        let f: Vec<f64> = runs.iter().map(|r| fidelity(&r.states[k], &target)).collect::<qtraj::Result<_>>()?;
        println!("{t:4.1} {:8.5} {:8.5} {:8.5} {:8.5}", f[0], f[1], f[2], analytic_half_parity_fidelity(gamma, t));
    }
    Ok(())
}
