//! Circuit-QED model library: transmon and dispersive formulas, readout
//! pointer states, parametric amplifier gains, engineered measurement
//! operators and Kerr-cat Hamiltonians.
//!
//! Qubit-cavity operators act on `[2, n_max + 1]` with the qubit first.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, check_truncation, embed, identity, number, pauli, sigma_in_plane, tensor, Axis, DensityMatrix,
    Operator, SpaceShape, C64,
};
use crate::sme::{HamiltonianSegment, MeasurementChannel};

fn require_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} = {x} must be positive")));
    }
    Ok(())
}

fn require_finite(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} = {x} must be finite")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransmonParams {
    pub e_j: f64,
    pub e_c: f64,
    pub g: f64,
    pub delta: f64,
    /// Anharmonicity; `f64::INFINITY` selects the two-level limit.
    pub u: f64,
}

impl TransmonParams {
    /// `E_J/E_C >= 20`.
    pub fn in_transmon_regime(&self) -> bool {
        self.e_j / self.e_c >= 20.0
    }

    pub fn frequency(&self) -> Result<f64> {
        transmon_frequency(self.e_j, self.e_c)
    }

    pub fn chi(&self) -> Result<f64> {
        dispersive_chi(self.g, self.delta, self.u)
    }
}

/// `sqrt(8 E_J E_C)`.
pub fn transmon_frequency(e_j: f64, e_c: f64) -> Result<f64> {
    require_positive("E_J", e_j)?;
    require_positive("E_C", e_c)?;
    Ok((8.0 * e_j * e_c).sqrt())
}

/// `g^2/Delta * U/(U + Delta)`, or `g^2/Delta` when `u` is infinite.
pub fn dispersive_chi(g: f64, delta: f64, u: f64) -> Result<f64> {
    require_finite("g", g)?;
    require_finite("Delta", delta)?;
    if delta == 0.0 {
        return Err(Error::InvalidParameter("dispersive formulas need Delta != 0".into()));
    }
    let two_level = g * g / delta;
    if u.is_infinite() {
        return Ok(two_level);
    }
    if u.is_nan() {
        return Err(Error::InvalidParameter("anharmonicity is NaN".into()));
    }
    if u + delta == 0.0 {
        return Err(Error::StraddlingResonance);
    }
    Ok(two_level * u / (u + delta))
}

fn qubit_cavity(n_max: usize) -> Result<(Operator, Operator, SpaceShape)> {
    let a = annihilation(n_max)?;
    let shape = SpaceShape::qubit().concat(a.shape())?;
    Ok((embed(&pauli(Axis::Z), 0, &shape)?, embed(&a, 1, &shape)?, shape))
}

/// `omega_cav a^dag a + (omega_q/2) sigma_z + g (a sigma^+ + a^dag sigma^-)`.
pub fn jc_hamiltonian(g: f64, omega_cav: f64, omega_q: f64, n_max: usize) -> Result<Operator> {
    require_finite("g", g)?;
    let (sz, a, shape) = qubit_cavity(n_max)?;
    let sp = embed(&pauli(Axis::Plus), 0, &shape)?;
    let n = &a.dagger() * &a;
    let exchange = &(&a * &sp) + &(&a * &sp).dagger();
    Ok(&(&n.scale(C64::new(omega_cav, 0.0)) + &sz.scale(C64::new(0.5 * omega_q, 0.0)))
        + &exchange.scale(C64::new(g, 0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersiveParams {
    pub omega_cav: f64,
    pub omega_q: f64,
    pub chi: f64,
    pub kappa: f64,
    pub epsilon: f64,
}

/// `omega_cav a^dag a + (omega_q/2) sigma_z + chi a^dag a sigma_z`.
pub fn dispersive_hamiltonian(params: &DispersiveParams, n_max: usize) -> Result<Operator> {
    let (sz, a, _) = qubit_cavity(n_max)?;
    let n = &a.dagger() * &a;
    let h = &(&n.scale(C64::new(params.omega_cav, 0.0)) + &sz.scale(C64::new(0.5 * params.omega_q, 0.0)))
        + &(&n * &sz).scale(C64::new(params.chi, 0.0));
    Ok(h)
}

/// `alpha^* a + alpha a^dag` on a single oscillator.
pub fn drive_hamiltonian(alpha: C64, n_max: usize) -> Result<Operator> {
    let a = annihilation(n_max)?;
    Ok(&a.scale(alpha.conj()) + &a.dagger().scale(alpha))
}

/// Piecewise-constant segments of `alpha(t)^* a + alpha(t) a^dag` on
/// subsystem `index` of `shape`, sampled at segment midpoints.
pub fn drive_segments(
    alpha: impl Fn(f64) -> C64,
    duration: f64,
    segment: f64,
    shape: &SpaceShape,
    index: usize,
) -> Result<Vec<HamiltonianSegment>> {
    require_positive("duration", duration)?;
    require_positive("segment length", segment)?;
    let dim = *shape
        .dims()
        .get(index)
        .ok_or_else(|| Error::ShapeMismatch(format!("subsystem {index} out of range for {shape}")))?;
    let n = (duration / segment).ceil() as usize;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let start = k as f64 * segment;
        let end = ((k + 1) as f64 * segment).min(duration);
        let local = drive_hamiltonian(alpha(0.5 * (start + end)), dim - 1)?;
        out.push(HamiltonianSegment { start, end, op: embed(&local, index, shape)? });
    }
    Ok(out)
}

/// Steady-state cavity amplitudes and reflected fields for each qubit state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointerStates {
    pub alpha_g: C64,
    pub alpha_e: C64,
    pub b_out_g: C64,
    pub b_out_e: C64,
}

/// `alpha_{g/e} = sqrt(kappa) eps / (+-i chi - kappa/2)`,
/// `b_out = eps (1 + kappa / (+-i chi - kappa/2))`.
pub fn pointer_states(params: &DispersiveParams) -> Result<PointerStates> {
    require_positive("kappa", params.kappa)?;
    let k = params.kappa;
    let eps = C64::new(params.epsilon, 0.0);
    let den_g = C64::new(-0.5 * k, params.chi);
    let den_e = C64::new(-0.5 * k, -params.chi);
    Ok(PointerStates {
        alpha_g: eps * k.sqrt() / den_g,
        alpha_e: eps * k.sqrt() / den_e,
        b_out_g: eps * (1.0 + k / den_g),
        b_out_e: eps * (1.0 + k / den_e),
    })
}

/// `Gamma_D = 2 chi Im(alpha_g alpha_e^*)`.
pub fn dephasing_rate(alpha_g: C64, alpha_e: C64, chi: f64) -> f64 {
    2.0 * chi * (alpha_g * alpha_e.conj()).im
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JpaParams {
    pub lambda: f64,
    pub kappa: f64,
    pub phi: f64,
    pub eta: f64,
    pub delta: f64,
}

impl JpaParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("kappa", self.kappa)?;
        require_finite("lambda", self.lambda)?;
        require_finite("Delta", self.delta)?;
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("efficiency {} outside [0, 1]", self.eta)));
        }
        if self.lambda.abs() >= 0.5 * self.kappa {
            return Err(Error::AboveThreshold { lambda: self.lambda, half_kappa: 0.5 * self.kappa });
        }
        Ok(())
    }
}

/// Gains of the squeezed and amplified quadratures of a degenerate amplifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureGains {
    pub axis: f64,
    /// Amplitude gain of `I_phi`.
    pub i_gain: f64,
    /// Amplitude gain of `Q_phi`.
    pub q_gain: f64,
}

/// `I_phi -> e^{-r} I_phi`, `Q_phi -> e^{r} Q_phi`.
pub fn jpa_quadrature_map(r: f64, phi: f64) -> Result<QuadratureGains> {
    require_finite("r", r)?;
    Ok(QuadratureGains { axis: phi, i_gain: (-r).exp(), q_gain: r.exp() })
}

/// Signal and idler gains
/// `G_S = (kappa^2/4 + Delta^2 + |lambda|^2) / ((kappa/2 - i Delta)^2 - |lambda|^2)`,
/// `G_I = i e^{i arg G_S} sqrt(|G_S|^2 - 1)`.
pub fn jpa_gain(params: &JpaParams) -> Result<(C64, C64)> {
    params.validate()?;
    let (k, d, l2) = (params.kappa, params.delta, params.lambda * params.lambda);
    let num = 0.25 * k * k + d * d + l2;
    let half = C64::new(0.5 * k, -d);
    let den = half * half - l2;
    let gs = C64::new(num, 0.0) / den;
    // |G_S|^2 - 1 = kappa^2 lambda^2 / |den|^2 exactly; this form avoids cancellation near lambda = 0
    let gi = C64::new(0.0, 1.0) * C64::from_polar(1.0, gs.arg()) * (k * params.lambda.abs() / den.norm());
    Ok((gs, gi))
}

/// `sqrt(Gamma/2) (sigma_z x I + I x sigma_z)/2` on two qubits.
pub fn half_parity_operator(gamma: f64) -> Result<Operator> {
    require_positive("Gamma", gamma)?;
    let z = pauli(Axis::Z);
    let i2 = identity(2)?;
    let m = &tensor(&[&z, &i2])? + &tensor(&[&i2, &z])?;
    Ok(m.scale(C64::new(0.5 * (0.5 * gamma).sqrt(), 0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SidebandMode {
    /// Single red sideband: `a sigma^dag e^{i delta} + h.c.`.
    Cooling,
    /// Symmetric sideband pair: `(a + a^dag) sigma_delta`.
    Double,
}

impl FromStr for SidebandMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cooling" => Ok(SidebandMode::Cooling),
            "double" => Ok(SidebandMode::Double),
            other => Err(Error::InvalidParameter(format!("unknown sideband mode '{other}'"))),
        }
    }
}

impl fmt::Display for SidebandMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SidebandMode::Cooling => "cooling",
            SidebandMode::Double => "double",
        })
    }
}

/// Dressed-frame sideband drive. In the dressed basis index 0 is `|->` and
/// index 1 is `|+>`, so `sigma^dag = |-><+|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SidebandConfig {
    pub abar0: f64,
    pub delta: f64,
    pub chi: f64,
    pub kappa: f64,
    pub mode: SidebandMode,
}

impl SidebandConfig {
    fn validate(&self) -> Result<()> {
        if !(self.abar0 >= 0.0) || !self.abar0.is_finite() {
            return Err(Error::InvalidParameter(format!("sideband amplitude {} must be >= 0", self.abar0)));
        }
        require_finite("delta", self.delta)?;
        require_finite("chi", self.chi)?;
        require_positive("kappa", self.kappa)
    }
}

/// Effective sideband Hamiltonian on `[2, n_max + 1]`.
pub fn sideband_hamiltonian(config: &SidebandConfig, n_max: usize) -> Result<Operator> {
    config.validate()?;
    let (_, a, shape) = qubit_cavity(n_max)?;
    let g = C64::new(0.5 * config.chi * config.abar0, 0.0);
    let h = match config.mode {
        SidebandMode::Cooling => {
            let sp = embed(&pauli(Axis::Plus), 0, &shape)?;
            let t = (&a * &sp).scale(C64::from_polar(1.0, config.delta));
            &t + &t.dagger()
        }
        SidebandMode::Double => {
            let s = embed(&sigma_in_plane(config.delta), 0, &shape)?;
            &(&a + &a.dagger()) * &s
        }
    };
    Ok(h.scale(g))
}

/// `Gamma_D eta = 2 chi^2 abar0^2 eta / kappa`.
pub fn engineered_measurement_rate(config: &SidebandConfig, eta: f64) -> Result<f64> {
    config.validate()?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("efficiency {eta} outside [0, 1]")));
    }
    Ok(2.0 * config.chi * config.chi * config.abar0 * config.abar0 * eta / config.kappa)
}

/// Qubit channel `sqrt(Gamma_D/2) sigma_delta` produced by the double
/// sideband after eliminating the cavity.
pub fn engineered_channel(config: &SidebandConfig, eta: f64) -> Result<MeasurementChannel> {
    let rate = engineered_measurement_rate(config, 1.0)?;
    let op = sigma_in_plane(config.delta).scale(C64::new((0.5 * rate).sqrt(), 0.0));
    Ok(MeasurementChannel::new(op, eta, 0.0)?.with_record_scale((0.5 * rate).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KerrCatParams {
    pub k: f64,
    pub eps2: f64,
    pub g2: f64,
    pub eps_d: f64,
    pub chi_ms: f64,
    pub chi_mm: f64,
    pub chi_rr: f64,
    pub kappa_r: f64,
}

impl KerrCatParams {
    /// Kerr-cat parameters with the two-mode couplings switched off.
    pub fn kerr(k: f64, eps2: f64) -> Self {
        KerrCatParams { k, eps2, g2: 0.0, eps_d: 0.0, chi_ms: 0.0, chi_mm: 0.0, chi_rr: 0.0, kappa_r: 0.0 }
    }

    /// `sqrt(eps2/K)`.
    pub fn alpha(&self) -> Result<f64> {
        require_positive("K", self.k)?;
        if !(self.eps2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("two-photon pump {} must be >= 0", self.eps2)));
        }
        Ok((self.eps2 / self.k).sqrt())
    }
}

/// `-K a^dag^2 a^2 + eps2 (a^dag^2 + a^2)`.
pub fn kerr_cat_hamiltonian(k: f64, eps2: f64, n_max: usize) -> Result<Operator> {
    let alpha = KerrCatParams::kerr(k, eps2).alpha()?;
    check_truncation(alpha, n_max)?;
    let a = annihilation(n_max)?;
    let a2 = &a * &a;
    let ad2 = a2.dagger();
    Ok(&(&ad2 * &a2).scale(C64::new(-k, 0.0)) + &(&ad2 + &a2).scale(C64::new(eps2, 0.0)))
}

/// Memory/readout two-mode pumped Hamiltonian on `[n_max_m + 1, n_max_r + 1]`:
/// `g2 (a_m^2 a_r^dag + h.c.) + eps_d (a_r + a_r^dag) - chi_ms n_m n_r
///  - chi_mm a_m^dag^2 a_m^2 - chi_rr a_r^dag^2 a_r^2`.
pub fn two_mode_pump_hamiltonian(params: &KerrCatParams, n_max_m: usize, n_max_r: usize) -> Result<Operator> {
    for (name, x) in [
        ("g2", params.g2),
        ("eps_d", params.eps_d),
        ("chi_ms", params.chi_ms),
        ("chi_mm", params.chi_mm),
        ("chi_rr", params.chi_rr),
    ] {
        require_finite(name, x)?;
    }
    let am = annihilation(n_max_m)?;
    let ar = annihilation(n_max_r)?;
    let shape = am.shape().concat(ar.shape())?;
    let am = embed(&am, 0, &shape)?;
    let ar = embed(&ar, 1, &shape)?;
    let am2 = &am * &am;
    let ar2 = &ar * &ar;
    let pump = &am2 * &ar.dagger();
    let nm = &am.dagger() * &am;
    let nr = &ar.dagger() * &ar;
    let mut h = (&pump + &pump.dagger()).scale(C64::new(params.g2, 0.0));
    h = &h + &(&ar + &ar.dagger()).scale(C64::new(params.eps_d, 0.0));
    h = &h - &(&nm * &nr).scale(C64::new(params.chi_ms, 0.0));
    h = &h - &(&am2.dagger() * &am2).scale(C64::new(params.chi_mm, 0.0));
    h = &h - &(&ar2.dagger() * &ar2).scale(C64::new(params.chi_rr, 0.0));
    Ok(h)
}

/// Result of eliminating the fast mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Elimination {
    /// `kappa_2 = 4 g2^2 / kappa_r`.
    pub kappa2: f64,
    /// Memory-mode collapse operator is `sqrt(kappa_2) (a^2 - alpha_sq)`
    /// with `alpha_sq = -eps_d / g2` (zero when `g2 = 0`).
    pub alpha_sq: f64,
    /// False when `kappa_r < 10 |g2|`.
    pub regime_ok: bool,
}

pub fn adiabatic_elimination(params: &KerrCatParams) -> Result<Elimination> {
    require_positive("kappa_r", params.kappa_r)?;
    require_finite("g2", params.g2)?;
    require_finite("eps_d", params.eps_d)?;
    let kappa2 = 4.0 * params.g2 * params.g2 / params.kappa_r;
    let alpha_sq = if params.g2 == 0.0 { 0.0 } else { -params.eps_d / params.g2 };
    Ok(Elimination { kappa2, alpha_sq, regime_ok: params.kappa_r >= 10.0 * params.g2.abs() })
}

/// `p(phi) = <phi|rho|phi>` with `|phi> = (2 pi)^{-1/2} sum_n e^{i phi n} |n>`.
pub fn canonical_phase_distribution(rho: &DensityMatrix, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if rho.shape().n_subsystems() != 1 {
        return Err(Error::ShapeMismatch(format!("phase distribution needs a single mode, got {}", rho.shape())));
    }
    let m = rho.matrix();
    let n = m.nrows();
    // p(phi) = (1/2pi) [sum_n rho_nn + 2 Re sum_{k>0} e^{-i k phi} s_k], s_k = sum_n rho_{n+k, n}
    let mut s = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        for j in 0..n - k {
            s[k] += m[(j + k, j)];
        }
    }
    Ok(grid
        .iter()
        .map(|&phi| {
            let mut acc = s[0].re;
            for (k, sk) in s.iter().enumerate().skip(1) {
                acc += 2.0 * (C64::from_polar(1.0, -(k as f64) * phi) * sk).re;
            }
            acc / (2.0 * PI)
        })
        .collect())
}

/// `n` equally spaced angles on `[-pi, pi)`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

/// Number operator on subsystem `index` of `shape`.
pub fn number_on(shape: &SpaceShape, index: usize) -> Result<Operator> {
    let dim = *shape
        .dims()
        .get(index)
        .ok_or_else(|| Error::ShapeMismatch(format!("subsystem {index} out of range for {shape}")))?;
    embed(&number(dim - 1)?, index, shape)
}
