//! Wigner function of even and odd cats along the real and imaginary axes.

use qtraj::analysis::{wigner, GridSpec};
use qtraj::hilbert::{cat_state, CatParity, C64};

fn main() -> qtraj::Result<()> {
    let alpha = C64::new(2.0, 0.0);
    for parity in [CatParity::Even, CatParity::Odd] {
        let rho = cat_state(alpha, parity, 24)?.to_density();
        let w = wigner(&rho, &GridSpec::square(3.5, 71))?;
        println!(
            "{parity:?}: W(0) = {:+.4}, min {:+.4}, max {:+.4}, integral {:.6}",
            w.values[(35, 35)],
            w.min(),
            w.max(),
            w.integral()
        );
        let slice: Vec<String> = (0..71).step_by(7).map(|j| format!("{:+.3}", w.values[(35, j)])).collect();
        println!("  Re = 0 column: {}", slice.join(" "));
    }
    Ok(())
}
