//! One qubit under continuous sigma_z monitoring, starting on the equator.
//! Prints the conditioned Bloch vector and the block-averaged record.

use qtraj::analysis::bloch_vector;
use qtraj::hilbert::{DensityMatrix, SpaceShape};
use qtraj::sme::{simulate_trajectory, LindbladModel, MeasurementChannel, SimOptions, WienerStream};

fn main() -> qtraj::Result<()> {
    let model = LindbladModel::free(SpaceShape::qubit()).with_channel(MeasurementChannel::qubit_dephasing(1.0, 1.0, 0.0)?)?;
    let rho0 = DensityMatrix::from_bloch(1.0, 0.0, 0.0)?;
    let opts = SimOptions { thinning: 250, ..Default::default() };
    let rec = simulate_trajectory(&model, &rho0, 5.0, 1e-3, &mut WienerStream::new(42, 0), None, &opts)?;

    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "t", "x", "y", "z", "<V>");
    for (k, (t, r)) in rec.state_times.iter().zip(&rec.states).enumerate() {
        let b = bloch_vector(r)?;
        // mean record over the block that ends at this sample
        let v = if k == 0 { 0.0 } else { rec.records[0][(k - 1) * 250..k * 250].iter().sum::<f64>() / 250.0 };
        println!("{t:6.2} {:8.4} {:8.4} {:8.4} {v:8.3}", b.x, b.y, b.z);
    }
    Ok(())
}
