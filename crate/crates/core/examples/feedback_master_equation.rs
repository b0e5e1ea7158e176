//! Record feedback on two qubits: trajectory ensemble against the averaged
//! feedback master equation.

use nalgebra::DMatrix;
use qtraj::feedback::{fme_step, FeedbackLaw, FeedbackSignal};
use qtraj::hilbert::{expectation, identity, pauli, tensor, Axis, DensityMatrix, C64};
use qtraj::sme::{
    run_ensemble, simulate_trajectory, ControlAction, Controller, LindbladModel, MeasurementChannel, Observation,
    SimOptions,
};

struct Fixed(FeedbackLaw);

impl Controller for Fixed {
    fn law(&mut self, _t: f64, _s: &DensityMatrix) -> Option<FeedbackLaw> {
        Some(self.0.clone())
    }
    fn observe(&mut self, _obs: &Observation<'_>) -> qtraj::Result<ControlAction> {
        Ok(ControlAction::default())
    }
}

fn main() -> qtraj::Result<()> {
    let i2 = identity(2)?;
    let z1 = tensor(&[&pauli(Axis::Z), &i2])?;
    let x2 = tensor(&[&i2, &pauli(Axis::X)])?;
    let model = LindbladModel::free(z1.shape().clone())
        .with_channel(MeasurementChannel::new(z1.scale(C64::new(0.7, 0.0)), 0.8, 0.0)?)?;
    let law = FeedbackLaw::new(
        vec![tensor(&[&pauli(Axis::Y), &pauli(Axis::X)])?, x2.clone()],
        vec![0.3, 0.0],
        DMatrix::from_row_slice(1, 2, &[0.4, -0.2]),
    )?
    .with_signal(FeedbackSignal::Record);
    let r0 = DensityMatrix::from_bloch(1.0, 0.0, 0.0)?.tensor(&DensityMatrix::from_bloch(0.0, 0.0, 1.0)?)?;
    let dt = 1e-3;
    let opts = SimOptions { thinning: 200, store_records: false, ..Default::default() };
    let runs = run_ensemble(400, 3, 0, |_, mut s| {
        simulate_trajectory(&model, &r0, 1.0, dt, &mut s, Some(&mut Fixed(law.clone())), &opts).map(|r| r.states)
    })?;
    let mut rho = r0.clone();
    println!("{:>4} {:>10} {:>10}", "t", "<Z1> traj", "<Z1> fme");
    for k in 1..runs[0].len() {
        for _ in 0..200 {
            rho = fme_step(&model, &law, &rho, dt)?;
        }
        let avg = runs.iter().map(|r| expectation(&z1, &r[k]).map(|c| c.re)).sum::<qtraj::Result<f64>>()? / runs.len() as f64;
        println!("{:4.1} {avg:10.4} {:10.4}", k as f64 * 0.2, expectation(&z1, &rho)?.re);
    }
    Ok(())
}
