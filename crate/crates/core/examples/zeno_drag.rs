//! Dragging a qubit with a slowly rotating measurement axis, and the escape
//! rate from the pointer state.

use qtraj::analysis::survival_fit;
use qtraj::feedback::{zeno_retention, ZenoDragConfig};

fn main() -> qtraj::Result<()> {
    for ratio in [20.0, 40.0] {
        let nu = 1.0 / ratio;
        let duration = 1.0 / (nu * nu);
        let mut cfg = ZenoDragConfig::new(nu, 1.0, 1.0, duration)?;
        cfg.checkpoints = (0..9).map(|k| duration * k as f64 / 8.0).collect();
        let r = zeno_retention(&cfg, 1000, 9, 0)?;
        let fit = survival_fit(&cfg.checkpoints, &r)?;
        println!(
            "Gamma/nu = {ratio}: fitted {:.3e} [{:.3e}, {:.3e}], predicted {:.3e}",
            fit.rate,
            fit.ci_low,
            fit.ci_high,
            cfg.escape_rate()
        );
    }
    Ok(())
}
