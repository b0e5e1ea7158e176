//! Deterministic entanglement by half-parity measurement and proportional
//! feedback about `H = (sigma_y1 + sigma_y2)/2`.
//!
//! Each step the gain is chosen so the feedback diffusion `-i A [H, rho] dW`
//! cancels the measurement diffusion `sqrt(eta) H[M] rho dW` as well as a
//! single real number can (least squares in the Hilbert-Schmidt inner
//! product). At `eta = 1` from the uniform superposition the cancellation is
//! exact and the state follows a record-independent path.

use nalgebra::DMatrix;

use super::FeedbackLaw;
use crate::error::{Error, Result};
use crate::hilbert::{hermitize, identity, pauli, tensor, Axis, DensityMatrix, Operator, PureState, SpaceShape, C64, I};
use crate::models::half_parity_operator;
use crate::sme::{
    commutator_mat, dissipator_mat, innovation_mat, simulate_trajectory, step_count, ControlAction, Controller, Integrator, LindbladModel,
    MeasurementChannel, NoiseSource, Observation, Provenance, SimOptions, TrajectoryRecord,
};

/// `(sigma_y x I + I x sigma_y)/2`.
pub fn half_parity_feedback_hamiltonian() -> Operator {
    let y = pauli(Axis::Y);
    let i2 = identity(2).expect("dimension 2");
    let h = &tensor(&[&y, &i2]).expect("two qubits") + &tensor(&[&i2, &y]).expect("two qubits");
    h.scale(C64::new(0.5, 0.0))
}

/// Two qubits monitored through the half-parity operator.
pub fn half_parity_model(gamma: f64, eta: f64) -> Result<LindbladModel> {
    let m = half_parity_operator(gamma)?;
    let channel = MeasurementChannel::new(m, eta, 0.0)?.with_record_scale((0.5 * gamma).sqrt());
    LindbladModel::free(SpaceShape::new(vec![2, 2])?).with_channel(channel)
}

/// `|psi_0> = (|00> + |01> + |10> + |11>)/2`.
pub fn uniform_superposition() -> PureState {
    PureState::normalized(SpaceShape::new(vec![2, 2]).expect("two qubits"), nalgebra::DVector::from_element(4, C64::new(1.0, 0.0)))
        .expect("nonzero")
}

/// `|psi+> = (|01> + |10>)/sqrt 2`.
pub fn psi_plus() -> PureState {
    let s = C64::new(0.5f64.sqrt(), 0.0);
    let z = C64::new(0.0, 0.0);
    PureState::new(SpaceShape::new(vec![2, 2]).expect("two qubits"), nalgebra::DVector::from_vec(vec![z, s, s, z]))
        .expect("normalized")
}

/// `(1/sqrt 2)(e^{-Gamma t/4} |phi+> + sqrt(2 - e^{-Gamma t/2}) |psi+>)`.
pub fn analytic_half_parity_state(gamma: f64, t: f64) -> Result<PureState> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be >= 0")));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("Gamma = {gamma} must be positive")));
    }
    let a = (-0.25 * gamma * t).exp();
    let b = (2.0 - (-0.5 * gamma * t).exp()).sqrt();
    let h = 0.5;
    // |phi+> = (|00> + |11>)/sqrt 2, |psi+> = (|01> + |10>)/sqrt 2
    let amps = [a * h, b * h, b * h, a * h];
    PureState::new(
        SpaceShape::new(vec![2, 2])?,
        nalgebra::DVector::from_iterator(4, amps.iter().map(|&x| C64::new(x, 0.0))),
    )
}

/// Fidelity of the closed-form state to `|psi+>`: `(2 - e^{-Gamma t/2})/2`.
pub fn analytic_half_parity_fidelity(gamma: f64, t: f64) -> f64 {
    0.5 * (2.0 - (-0.5 * gamma * t).exp())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfParityGain {
    pub a: f64,
    /// The state commutes with the feedback Hamiltonian; `a` is set to 0.
    pub singular: bool,
}

fn hs_real(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Gain minimizing `|sqrt(eta) H[M] rho - A i[H, rho]|` in the Hilbert-Schmidt norm.
pub fn half_parity_gain(rho: &DensityMatrix, m: &Operator, eta: f64) -> Result<HalfParityGain> {
    if rho.shape().dims() != [2, 2] || m.shape() != rho.shape() {
        return Err(Error::ShapeMismatch(format!("half-parity gain needs two qubits, got {}", rho.shape())));
    }
    let h = half_parity_feedback_hamiltonian();
    let x = innovation_mat(m.matrix(), rho.matrix()) * C64::new(eta.sqrt(), 0.0);
    let y = commutator_mat(h.matrix(), rho.matrix()) * I;
    let yy = hs_real(&y, &y);
    if yy < 1e-24 {
        return Ok(HalfParityGain { a: 0.0, singular: true });
    }
    Ok(HalfParityGain { a: hs_real(&y, &x) / yy, singular: false })
}

/// Controller issuing the per-step half-parity law. Use with the Ito integrator.
pub struct HalfParityController {
    m: Operator,
    h: Operator,
    eta: f64,
    last: HalfParityGain,
}

impl HalfParityController {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        Ok(HalfParityController {
            m: half_parity_operator(gamma)?,
            h: half_parity_feedback_hamiltonian(),
            eta,
            last: HalfParityGain { a: 0.0, singular: false },
        })
    }

    pub fn last_gain(&self) -> HalfParityGain {
        self.last
    }
}

impl Controller for HalfParityController {
    fn law(&mut self, _t: f64, state: &DensityMatrix) -> Option<FeedbackLaw> {
        let gain = half_parity_gain(state, &self.m, self.eta).ok()?;
        self.last = gain;
        FeedbackLaw::new(vec![self.h.clone()], vec![0.0], DMatrix::from_element(1, 1, gain.a)).ok()
    }

    fn observe(&mut self, _obs: &Observation<'_>) -> Result<ControlAction> {
        Ok(ControlAction { log: vec![self.last.a, if self.last.singular { 1.0 } else { 0.0 }], ..Default::default() })
    }
}

fn drift(m: &DMatrix<C64>, h: &DMatrix<C64>, eta: f64, rho: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>, f64) {
    let x = innovation_mat(m, rho) * C64::new(eta.sqrt(), 0.0);
    let y = commutator_mat(h, rho) * I;
    let yy = hs_real(&y, &y);
    let a = if yy < 1e-24 { 0.0 } else { hs_real(&y, &x) / yy };
    let ah = h * C64::new(a, 0.0);
    let d = dissipator_mat(m, rho) + dissipator_mat(&ah, rho) + commutator_mat(&ah, &x) * (-I);
    (d, &x - &y * C64::new(a, 0.0), a)
}

/// One step of the half-parity feedback SME: RK4 on the drift, with the gain
/// re-evaluated at every stage, plus the Euler diffusion term. Returns the
/// new state and the gain used for the diffusion.
pub fn half_parity_step(
    m: &Operator,
    eta: f64,
    rho: &DensityMatrix,
    dw: f64,
    dt: f64,
) -> Result<(DensityMatrix, f64)> {
    let h = half_parity_feedback_hamiltonian();
    let (hm, mm) = (h.matrix(), m.matrix());
    let r0 = rho.matrix();
    let (k1, diff, a) = drift(mm, hm, eta, r0);
    let half = C64::new(0.5 * dt, 0.0);
    let (k2, _, _) = drift(mm, hm, eta, &(r0 + &k1 * half));
    let (k3, _, _) = drift(mm, hm, eta, &(r0 + &k2 * half));
    let (k4, _, _) = drift(mm, hm, eta, &(r0 + &k3 * C64::new(dt, 0.0)));
    let mut next = r0 + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
        + diff * C64::new(dw, 0.0);
    next = hermitize(&next);
    DensityMatrix::normalize_matrix(&mut next);
    let out = DensityMatrix::from_matrix_unchecked(rho.shape().clone(), next);
    if out.min_eigenvalue() < -1e-6 {
        return Err(Error::IntegrationUnstable { step: 0, defect: -out.min_eigenvalue() });
    }
    Ok((out, a))
}

/// One half-parity feedback trajectory from the uniform superposition, using
/// [`half_parity_step`]. The controller log holds the gain of each step.
pub fn run_half_parity<N: NoiseSource + Provenance>(
    gamma: f64,
    eta: f64,
    duration: f64,
    dt: f64,
    noise: &mut N,
    thinning: usize,
) -> Result<TrajectoryRecord> {
    let model = half_parity_model(gamma, eta)?;
    let ch = &model.channels()[0];
    let m = ch.operator().clone();
    let steps = step_count(duration, dt)?;
    let thinning = thinning.max(1);
    let mut rho = uniform_superposition().to_density();
    let (master_seed, trajectory_index) = noise.provenance();
    let mut rec = TrajectoryRecord {
        dt,
        times: Vec::with_capacity(steps),
        records: vec![Vec::with_capacity(steps)],
        increments: vec![Vec::with_capacity(steps)],
        controller_log: Vec::with_capacity(steps),
        states: vec![rho.clone()],
        state_times: vec![0.0],
        master_seed,
        trajectory_index,
    };
    for k in 0..steps {
        let dw = noise.increment(k as u64, dt);
        let dr = ch.record_increment(&rho, dw, dt);
        let (next, a) = half_parity_step(&m, eta, &rho, dw, dt).map_err(|e| e.at_step(k))?;
        rho = next;
        let t = (k + 1) as f64 * dt;
        rec.times.push(t);
        rec.records[0].push(if eta > 0.0 { ch.record_value(dr, dt)? } else { f64::NAN });
        rec.increments[0].push(dw);
        rec.controller_log.push(vec![a]);
        if (k + 1) % thinning == 0 || k + 1 == steps {
            rec.states.push(rho.clone());
            rec.state_times.push(t);
        }
    }
    Ok(rec)
}

/// Same protocol through the generic trajectory loop (Euler-Maruyama with
/// [`HalfParityController`]).
pub fn run_half_parity_euler<N: NoiseSource + Provenance>(
    gamma: f64,
    eta: f64,
    duration: f64,
    dt: f64,
    noise: &mut N,
    thinning: usize,
) -> Result<TrajectoryRecord> {
    let model = half_parity_model(gamma, eta)?;
    let mut controller = HalfParityController::new(gamma, eta)?;
    let opts = SimOptions { thinning, store_records: true, integrator: Integrator::Ito };
    simulate_trajectory(&model, &uniform_superposition().to_density(), duration, dt, noise, Some(&mut controller), &opts)
}
