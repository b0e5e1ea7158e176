//! A driven cavity blocked at N = 3 by a number-selective qubit drive.

use qtraj::analysis::{wigner, GridSpec};
use qtraj::feedback::{zeno_blockade, BlockadeConfig};

fn main() -> qtraj::Result<()> {
    let cfg = BlockadeConfig::default();
    let run = zeno_blockade(&cfg)?;
    let above = run.weight_at_or_above(cfg.n_block);
    let grid = GridSpec::square(3.0, 41);
    println!("{:>5} {:>7} {:>7} {:>7} {:>7} {:>9}", "t", "p0", "p1", "p2", "p>=3", "min W");
    for k in (0..run.times.len()).step_by(20) {
        let r = &run.cavity[k];
        let w = wigner(r, &grid)?.min();
        println!(
            "{:5.1} {:7.4} {:7.4} {:7.4} {:7.4} {w:9.4}",
            run.times[k],
            r.population(0),
            r.population(1),
            r.population(2),
            above[k]
        );
    }
    Ok(())
}
