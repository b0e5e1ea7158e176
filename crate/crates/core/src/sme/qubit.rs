//! Qubit-specific measurement updates for the `sigma_z` readout channel.

use nalgebra::DMatrix;

use super::{finish_ito, innovation_mat, MeasurementChannel};
use crate::error::{Error, Result};
use crate::hilbert::{pauli, Axis, DensityMatrix, SpaceShape, C64, I};

fn require_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.shape() != &SpaceShape::qubit() {
        return Err(Error::ShapeMismatch(format!("expected a qubit, got {}", rho.shape())));
    }
    Ok(())
}

/// Record value for one step: `V dt = sqrt(eta) <c e^{i phi} + h.c.> dt + dW`
/// rescaled by the channel's record scale.
pub fn generate_record(rho: &DensityMatrix, channel: &MeasurementChannel, dw: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    if rho.shape() != channel.operator().shape() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", rho.shape(), channel.operator().shape())));
    }
    if channel.eta() == 0.0 {
        return Err(Error::RecordUndefined);
    }
    channel.record_value(channel.record_increment(rho, dw, dt), dt)
}

/// `Omega(V) = exp[-(Gamma_D/2)(V - sigma_z)^2 dt]`, `rho' = Omega rho Omega / Tr`.
pub fn povm_update(rho: &DensityMatrix, v: f64, dt: f64, gamma_d: f64) -> Result<DensityMatrix> {
    povm_update_eta(rho, v, dt, gamma_d, 1.0)
}

/// Efficiency `eta < 1` splits the channel: the Kraus operator uses strength
/// `eta Gamma_D` and an unmonitored dephasing of strength `(1-eta) Gamma_D`
/// follows.
pub fn povm_update_eta(rho: &DensityMatrix, v: f64, dt: f64, gamma_d: f64, eta: f64) -> Result<DensityMatrix> {
    require_qubit(rho)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("efficiency {eta} outside [0, 1]")));
    }
    let g = eta * gamma_d;
    let oe = (-0.5 * g * (v - 1.0).powi(2) * dt).exp();
    let og = (-0.5 * g * (v + 1.0).powi(2) * dt).exp();
    let m = rho.matrix();
    let mut out = DMatrix::from_row_slice(
        2,
        2,
        &[m[(0, 0)] * (oe * oe), m[(0, 1)] * (oe * og), m[(1, 0)] * (oe * og), m[(1, 1)] * (og * og)],
    );
    let tr = out[(0, 0)].re + out[(1, 1)].re;
    if !(tr >= 1e-300) {
        return Err(Error::Underflow(format!("Tr[Omega rho Omega] = {tr}")));
    }
    let decay = (-(1.0 - eta) * gamma_d * dt).exp();
    out[(0, 1)] *= decay;
    out[(1, 0)] *= decay;
    DensityMatrix::normalize_matrix(&mut out);
    Ok(DensityMatrix::from_matrix_unchecked(SpaceShape::qubit(), out))
}

/// Posterior `(P(e), P(g))` after a time-averaged record `v_bar` over `t`;
/// likelihoods are Gaussian with means `+1`/`-1` and variance `1/(2 eta Gamma_D t)`.
pub fn bayesian_update(priors: (f64, f64), v_bar: f64, t: f64, eta: f64, gamma_d: f64) -> Result<(f64, f64)> {
    let (pe, pg) = priors;
    if pe < 0.0 || pg < 0.0 || !((pe + pg - 1.0).abs() <= 1e-9) {
        return Err(Error::InvalidParameter(format!("priors ({pe}, {pg}) do not sum to 1")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    let var = 1.0 / (2.0 * eta * gamma_d * t);
    bayes_with_variance(priors, v_bar, var)
}

/// Bayes rule with an explicit likelihood variance.
pub fn bayes_with_variance(priors: (f64, f64), v_bar: f64, var: f64) -> Result<(f64, f64)> {
    let (pe, pg) = priors;
    let le = -(v_bar - 1.0).powi(2) / (2.0 * var);
    let lg = -(v_bar + 1.0).powi(2) / (2.0 * var);
    let shift = le.max(lg);
    let we = pe * (le - shift).exp();
    let wg = pg * (lg - shift).exp();
    let z = we + wg;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Underflow("posterior normalization vanished".into()));
    }
    Ok((we / z, wg / z))
}

/// Euler-Maruyama step of the qubit SME with both quadrature terms:
/// `d rho = (Gamma_D/2) D[sigma_z] rho dt + sqrt(eta Gamma_D/2) cos(phi) H[sigma_z] rho dW
///          - i sqrt(eta Gamma_D/2) sin(phi) [sigma_z, rho] dW`.
pub fn sme_step_phase(rho: &DensityMatrix, gamma_d: f64, eta: f64, phi: f64, dw: f64, dt: f64) -> Result<DensityMatrix> {
    require_qubit(rho)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("efficiency {eta} outside [0, 1]")));
    }
    let z = pauli(Axis::Z).into_matrix();
    let m = rho.matrix();
    let amp = (eta * gamma_d / 2.0).sqrt();
    let deph = (&z * m * &z - m) * C64::new(0.5 * gamma_d * dt, 0.0);
    let info = innovation_mat(&z, m) * C64::new(amp * phi.cos() * dw, 0.0);
    let kick = (&z * m - m * &z) * (-I * (amp * phi.sin() * dw));
    let next = m + deph + info + kick;
    let (out, _) = finish_ito(next)?;
    Ok(DensityMatrix::from_matrix_unchecked(SpaceShape::qubit(), out))
}
