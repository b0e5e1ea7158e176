//! Averages weakly measured trajectories and compares with the master equation.

use qtraj::analysis::bloch_vector;
use qtraj::hilbert::{DensityMatrix, SpaceShape};
use qtraj::sme::{
    lindblad_evolve, run_ensemble, simulate_trajectory, EnsembleMean, LindbladModel, MeasurementChannel, SimOptions,
};

fn main() -> qtraj::Result<()> {
    let (duration, dt, every) = (3.0, 1e-3, 100);
    let model = LindbladModel::free(SpaceShape::qubit()).with_channel(MeasurementChannel::qubit_dephasing(1.0, 0.4, 0.0)?)?;
    let rho0 = DensityMatrix::from_bloch(0.6, 0.0, 0.8)?;
    let opts = SimOptions { thinning: every, store_records: false, ..Default::default() };
    let runs = run_ensemble(500, 7, 0, |_, mut s| simulate_trajectory(&model, &rho0, duration, dt, &mut s, None, &opts))?;
    let mut acc = EnsembleMean::new();
    for r in &runs {
        acc.add(r)?;
    }
    let mean = acc.mean()?;
    let exact = lindblad_evolve(&model, &rho0, duration, dt, every)?;
    println!("{:>5} {:>9} {:>9} {:>9} {:>9}", "t", "x avg", "x exact", "z avg", "z exact");
    for ((t, m), (_, e)) in acc.times().iter().zip(&mean).zip(&exact).step_by(3) {
        let (a, b) = (bloch_vector(m)?, bloch_vector(e)?);
        println!("{t:5.1} {:9.4} {:9.4} {:9.4} {:9.4}", a.x, b.x, a.z, b.z);
    }
    Ok(())
}
