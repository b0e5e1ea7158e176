//! Measurement-based feedback: the feedback master equation, proportional
//! feedback on trajectories, and the protocol implementations.
//!
//! A [`FeedbackLaw`] applies the Hamiltonians `H_j` with strengths
//! `B_j dt + sum_i A_ij s_i`, where `s_i` is either the Wiener increment
//! (`FeedbackSignal::Innovation`) or the full record increment
//! `dr_i = sqrt(eta_i) <c_i e^{i phi_i} + h.c.> dt + dW_i`
//! (`FeedbackSignal::Record`). Averaging record feedback over trajectories
//! gives a closed linear master equation; innovation feedback averages to the
//! same equation with `H[c] rho` in place of `c rho + rho c^dagger` in the
//! cross term.

pub mod blockade;
pub mod half_parity;
pub mod kerr_cat;
pub mod phase;
pub mod rabi;
pub mod zeno;

pub use half_parity::{
    analytic_half_parity_fidelity, analytic_half_parity_state, half_parity_gain, half_parity_model, psi_plus,
    half_parity_step, run_half_parity, run_half_parity_euler, uniform_superposition, HalfParityController, HalfParityGain,
};
pub use rabi::{rabi_ensemble, rabi_model, rabi_stabilization_controller, run_rabi, RabiConfig, RabiController, RabiEnsemble};
pub use zeno::{zeno_drag, zeno_kraus_update, zeno_mean_alignment, zeno_retention, ZenoDragConfig, ZenoDragRun};
pub use phase::{
    adaptive_phase_controller, mean_canonical_tv, phase_ensemble, run_phase_measurement, AdaptivePhaseConfig,
    AdaptivePhaseController, PhaseEstimate, PhaseReceiver, PhaseRun,
};
pub use blockade::{blockade_model, zeno_blockade, BlockadeConfig, BlockadeRun};
pub use kerr_cat::{decay_rate, kerr_cat_model, kerr_cat_stabilization, kerr_eigen_residual, KerrCatRun, KerrCatSetup};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{exp_hermitian, hermitize, DensityMatrix, Operator, C64, I};
use crate::sme::{
    check_rk4_step, commutator_mat, dissipator_mat, innovation_mat, Generator, LindbladModel, MeasurementChannel,
};

/// Which per-channel signal multiplies the proportional gains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FeedbackSignal {
    /// Wiener increment `dW_i`.
    #[default]
    Innovation,
    /// Record increment `dr_i`.
    Record,
}

/// Hamiltonians `H_j`, deterministic gains `B_j` and proportional gains
/// `A_ij` (rows are channels, columns are Hamiltonians).
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackLaw {
    hamiltonians: Vec<Operator>,
    b: Vec<f64>,
    a: DMatrix<f64>,
    signal: FeedbackSignal,
}

impl FeedbackLaw {
    pub fn new(hamiltonians: Vec<Operator>, b: Vec<f64>, a: DMatrix<f64>) -> Result<Self> {
        if b.len() != hamiltonians.len() || a.ncols() != hamiltonians.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} Hamiltonians, {} deterministic gains, gain matrix {}x{}",
                hamiltonians.len(),
                b.len(),
                a.nrows(),
                a.ncols()
            )));
        }
        for (j, h) in hamiltonians.iter().enumerate() {
            if !h.is_hermitian(1e-10 * (1.0 + h.max_row_sum())) {
                return Err(Error::NonHermitian(format!("feedback Hamiltonian {j}")));
            }
            if h.shape() != hamiltonians[0].shape() {
                return Err(Error::ShapeMismatch(format!("feedback Hamiltonian {j}")));
            }
        }
        if b.iter().chain(a.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite feedback gain".into()));
        }
        Ok(FeedbackLaw { hamiltonians, b, a, signal: FeedbackSignal::Innovation })
    }

    pub fn with_signal(mut self, signal: FeedbackSignal) -> Self {
        self.signal = signal;
        self
    }

    pub fn signal(&self) -> FeedbackSignal {
        self.signal
    }

    pub fn hamiltonians(&self) -> &[Operator] {
        &self.hamiltonians
    }

    pub fn deterministic_gains(&self) -> &[f64] {
        &self.b
    }

    pub fn proportional_gains(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n_channels(&self) -> usize {
        self.a.nrows()
    }

    /// `H~_i = sum_j A_ij H_j`.
    pub fn channel_hamiltonian(&self, i: usize) -> DMatrix<C64> {
        let n = self.hamiltonians.first().map_or(0, |h| h.dim());
        let mut out = DMatrix::zeros(n, n);
        for (j, h) in self.hamiltonians.iter().enumerate() {
            let g = self.a[(i, j)];
            if g != 0.0 {
                out += h.matrix() * C64::new(g, 0.0);
            }
        }
        out
    }

    fn b_hamiltonian(&self) -> Option<DMatrix<C64>> {
        let n = self.hamiltonians.first()?.dim();
        let mut out = DMatrix::zeros(n, n);
        for (h, &b) in self.hamiltonians.iter().zip(&self.b) {
            out += h.matrix() * C64::new(b, 0.0);
        }
        Some(out)
    }

    fn check_against(&self, channels: &[MeasurementChannel], dim: usize) -> Result<()> {
        if self.a.nrows() != channels.len() {
            return Err(Error::ShapeMismatch(format!(
                "gain matrix has {} rows for {} channels",
                self.a.nrows(),
                channels.len()
            )));
        }
        if let Some(h) = self.hamiltonians.first() {
            if h.dim() != dim {
                return Err(Error::ShapeMismatch(format!("feedback Hamiltonians act on {}", h.shape())));
            }
        }
        Ok(())
    }
}

/// Feedback contribution to an Ito step: drift `-i sum B_j [H_j, rho] dt +
/// sum_i (D[H~_i] + cross_i) dt` and diffusion `-i [H~_i, rho] dW_i`.
pub(crate) fn feedback_ito_terms(
    law: &FeedbackLaw,
    channels: &[MeasurementChannel],
    rho: &DMatrix<C64>,
    dw: &[f64],
    dt: f64,
) -> Result<DMatrix<C64>> {
    law.check_against(channels, rho.nrows())?;
    let mut out = feedback_drift(law, channels, rho) * C64::new(dt, 0.0);
    for (i, &w) in dw.iter().enumerate() {
        let ht = law.channel_hamiltonian(i);
        out += commutator_mat(&ht, rho) * (-I * w);
    }
    Ok(out)
}

/// Feedback part of the feedback master equation generator.
fn feedback_drift(law: &FeedbackLaw, channels: &[MeasurementChannel], rho: &DMatrix<C64>) -> DMatrix<C64> {
    let n = rho.nrows();
    let mut out = DMatrix::zeros(n, n);
    if let Some(hb) = law.b_hamiltonian() {
        out += commutator_mat(&hb, rho) * (-I);
    }
    for (i, ch) in channels.iter().enumerate() {
        let ht = law.channel_hamiltonian(i);
        if ht.iter().all(|z| z.norm() == 0.0) {
            continue;
        }
        out += dissipator_mat(&ht, rho);
        if ch.eta() > 0.0 {
            let ct = ch.operator().matrix() * C64::from_polar(1.0, ch.phi());
            let inner = match law.signal {
                FeedbackSignal::Innovation => innovation_mat(&ct, rho),
                FeedbackSignal::Record => &ct * rho + rho * ct.adjoint(),
            };
            out += commutator_mat(&ht, &inner) * (-I * ch.eta().sqrt());
        }
    }
    out
}

/// One RK4 step of the feedback master equation
/// `d rho/dt = L rho - i sum_j B_j [H_j, rho] + sum_i (D[H~_i] rho - i sqrt(eta_i) [H~_i, X_i rho])`
/// where `X_i rho` is `H[c_i] rho` for innovation feedback and
/// `c_i rho + rho c_i^dagger` for record feedback.
pub fn fme_step(model: &LindbladModel, law: &FeedbackLaw, rho: &DensityMatrix, dt: f64) -> Result<DensityMatrix> {
    fme_step_at(model, law, rho, 0.0, dt)
}

pub fn fme_step_at(model: &LindbladModel, law: &FeedbackLaw, rho: &DensityMatrix, t: f64, dt: f64) -> Result<DensityMatrix> {
    if rho.shape() != model.shape() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", rho.shape(), model.shape())));
    }
    let channels = model.channels_at(t + 0.5 * dt);
    law.check_against(&channels, rho.dim())?;
    let fb_rate: f64 = law
        .hamiltonians
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let a = (0..law.a.nrows()).map(|i| law.a[(i, j)].abs()).sum::<f64>();
            h.max_row_sum() * (law.b[j].abs() + a * a)
        })
        .sum();
    check_rk4_step(model.max_rate_at(t) + fb_rate, dt)?;
    let gen = Generator::for_model(model, t + 0.5 * dt);
    let f = |m: &DMatrix<C64>| gen.apply(m) + feedback_drift(law, &channels, m);
    let m = rho.matrix();
    let half = C64::new(0.5 * dt, 0.0);
    let k1 = f(m);
    let k2 = f(&(m + &k1 * half));
    let k3 = f(&(m + &k2 * half));
    let k4 = f(&(m + &k3 * C64::new(dt, 0.0)));
    let mut next = m + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    next = hermitize(&next);
    DensityMatrix::normalize_matrix(&mut next);
    Ok(DensityMatrix::from_matrix_unchecked(model.shape().clone(), next))
}

/// Conjugates the state by `exp(-i G)` with `G = sum_j (B_j dt + sum_i A_ij s_i) H_j`.
/// `signal` holds the per-channel increments matching the law's signal kind.
pub fn apply_feedback(rho: &DensityMatrix, law: &FeedbackLaw, signal: &[f64], dt: f64) -> Result<DensityMatrix> {
    let mut m = rho.matrix().clone();
    if let Some(h) = law.hamiltonians.first() {
        if h.shape() != rho.shape() {
            return Err(Error::ShapeMismatch(format!("{} vs {}", h.shape(), rho.shape())));
        }
    }
    apply_feedback_mat(&mut m, law, signal, dt)?;
    Ok(DensityMatrix::from_matrix_unchecked(rho.shape().clone(), m))
}

pub(crate) fn apply_feedback_mat(rho: &mut DMatrix<C64>, law: &FeedbackLaw, signal: &[f64], dt: f64) -> Result<()> {
    if signal.len() != law.a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} signal values for {} channels",
            signal.len(),
            law.a.nrows()
        )));
    }
    let n = rho.nrows();
    let mut g = DMatrix::<C64>::zeros(n, n);
    let mut any = false;
    for (j, h) in law.hamiltonians.iter().enumerate() {
        let u = law.b[j] * dt + (0..signal.len()).map(|i| law.a[(i, j)] * signal[i]).sum::<f64>();
        if u != 0.0 {
            g += h.matrix() * C64::new(u, 0.0);
            any = true;
        }
    }
    if any {
        let u = exp_hermitian(&g, C64::new(0.0, -1.0));
        let next = &u * &*rho * u.adjoint();
        *rho = hermitize(&next);
    }
    Ok(())
}
