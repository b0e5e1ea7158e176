//! Open-system time evolution: Lindblad flow, diffusive stochastic master
//! equations, measurement records and the normalized Kraus (POVM) update.
//!
//! A channel `c` with efficiency `eta` and amplification angle `phi` produces
//! the record increment
//!
//! ```text
//! dr = sqrt(eta) <c e^{i phi} + h.c.> dt + dW
//! ```
//!
//! and the reported record value is `V = dr / (2 sqrt(eta) s dt)` where `s` is
//! the channel's record scale. For the qubit channel `sqrt(Gamma_D/2) sigma_z`
//! the scale is `sqrt(Gamma_D/2)`, so `V dt = <sigma_z> dt + dW / sqrt(2 eta Gamma_D)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{
    eigh, exp_hermitian, hermitize, pauli, trace_product, Axis, DensityMatrix, Operator, SpaceShape, C64, I,
    ONE, ZERO,
};

pub mod noise;
pub mod propagator;
pub mod qubit;
pub mod trajectory;

pub use noise::{splitmix64, trajectory_seed, NoiseSource, ReplayNoise, WienerStream};
pub use propagator::{liouvillian, steady_state, Propagator};
pub use qubit::{bayesian_update, generate_record, povm_update, povm_update_eta, sme_step_phase};
pub use trajectory::{
    ensemble_average, run_ensemble, simulate_trajectory, ControlAction, Controller, EnsembleMean, Integrator,
    Observation, Provenance, SimOptions, TrajectoryRecord,
};

/// Largest `dt * rate` accepted by the RK4 Lindblad step.
pub const RK4_STEP_LIMIT: f64 = 0.05;

/// Largest per-step trace defect accepted by the Euler-Maruyama step.
pub const ITO_DEFECT_LIMIT: f64 = 0.01;

/// One diffusive measurement channel.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementChannel {
    c: Operator,
    eta: f64,
    phi: f64,
    record_scale: f64,
}

impl MeasurementChannel {
    /// Generic channel; the record scale defaults to `1/2`, so `V` estimates
    /// `<c e^{i phi} + h.c.>`.
    pub fn new(c: Operator, eta: f64, phi: f64) -> Result<Self> {
        check_eta(eta)?;
        if !phi.is_finite() {
            return Err(Error::InvalidParameter(format!("phi = {phi}")));
        }
        Ok(MeasurementChannel { c, eta, phi, record_scale: 0.5 })
    }

    /// `sqrt(gamma_d/2) sigma_z` with record `V` normalized to `<sigma_z>`.
    pub fn qubit_dephasing(gamma_d: f64, eta: f64, phi: f64) -> Result<Self> {
        if !(gamma_d > 0.0) || !gamma_d.is_finite() {
            return Err(Error::InvalidParameter(format!("Gamma_D = {gamma_d} must be positive")));
        }
        let s = (gamma_d / 2.0).sqrt();
        let c = pauli(Axis::Z).scale(C64::new(s, 0.0));
        Ok(MeasurementChannel::new(c, eta, phi)?.with_record_scale(s))
    }

    pub fn with_record_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0, "record scale must be positive");
        self.record_scale = scale;
        self
    }

    pub fn operator(&self) -> &Operator {
        &self.c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn record_scale(&self) -> f64 {
        self.record_scale
    }

    pub fn set_phi(&mut self, phi: f64) {
        self.phi = phi;
    }

    pub fn set_eta(&mut self, eta: f64) -> Result<()> {
        check_eta(eta)?;
        self.eta = eta;
        Ok(())
    }

    /// Replaces the collapse operator (same shape required).
    pub fn set_operator(&mut self, c: Operator) -> Result<()> {
        if c.shape() != self.c.shape() {
            return Err(Error::ShapeMismatch(format!("{} vs {}", c.shape(), self.c.shape())));
        }
        self.c = c;
        Ok(())
    }

    /// `c e^{i phi}`.
    pub fn rotated(&self) -> Operator {
        self.c.scale(C64::from_polar(1.0, self.phi))
    }

    /// `dr = 2 sqrt(eta) Re(e^{i phi} <c>) dt + dW` for the given state.
    pub fn record_increment(&self, rho: &DensityMatrix, dw: f64, dt: f64) -> f64 {
        record_increment_mat(self.c.matrix(), self.eta, self.phi, rho.matrix(), dw, dt)
    }

    /// Record value `V` for a record increment.
    pub fn record_value(&self, dr: f64, dt: f64) -> Result<f64> {
        if self.eta == 0.0 {
            return Err(Error::RecordUndefined);
        }
        Ok(dr / (2.0 * self.eta.sqrt() * self.record_scale * dt))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("efficiency {eta} outside [0, 1]")));
    }
    Ok(())
}

pub(crate) fn record_increment_mat(c: &DMatrix<C64>, eta: f64, phi: f64, rho: &DMatrix<C64>, dw: f64, dt: f64) -> f64 {
    let mean = (C64::from_polar(1.0, phi) * trace_product(c, rho)).re;
    2.0 * eta.sqrt() * mean * dt + dw
}

/// Hamiltonian term active on `[start, end)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSegment {
    pub start: f64,
    pub end: f64,
    pub op: Operator,
}

/// Mutates the working channel list at time `t` (e.g. a rotating axis).
pub type ChannelSchedule = Arc<dyn Fn(f64, &mut [MeasurementChannel]) + Send + Sync>;

/// Hamiltonian, monitored channels and unmonitored collapse operators.
#[derive(Clone)]
pub struct LindbladModel {
    shape: SpaceShape,
    h: Operator,
    segments: Vec<HamiltonianSegment>,
    channels: Vec<MeasurementChannel>,
    unmonitored: Vec<Operator>,
    schedule: Option<ChannelSchedule>,
}

impl fmt::Debug for LindbladModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LindbladModel")
            .field("shape", &self.shape)
            .field("segments", &self.segments.len())
            .field("channels", &self.channels.len())
            .field("unmonitored", &self.unmonitored.len())
            .field("scheduled", &self.schedule.is_some())
            .finish()
    }
}

impl LindbladModel {
    pub fn new(h: Operator) -> Result<Self> {
        if !h.is_hermitian(1e-10 * (1.0 + h.max_row_sum())) {
            return Err(Error::NonHermitian("Hamiltonian".into()));
        }
        Ok(LindbladModel {
            shape: h.shape().clone(),
            h,
            segments: Vec::new(),
            channels: Vec::new(),
            unmonitored: Vec::new(),
            schedule: None,
        })
    }

    /// Zero Hamiltonian on `shape`.
    pub fn free(shape: SpaceShape) -> Self {
        LindbladModel::new(Operator::zeros(shape)).expect("zero is Hermitian")
    }

    pub fn with_channel(mut self, channel: MeasurementChannel) -> Result<Self> {
        self.check_shape(channel.operator())?;
        self.channels.push(channel);
        Ok(self)
    }

    pub fn with_unmonitored(mut self, l: Operator) -> Result<Self> {
        self.check_shape(&l)?;
        self.unmonitored.push(l);
        Ok(self)
    }

    pub fn with_segment(mut self, start: f64, end: f64, op: Operator) -> Result<Self> {
        self.check_shape(&op)?;
        if !op.is_hermitian(1e-10 * (1.0 + op.max_row_sum())) {
            return Err(Error::NonHermitian("Hamiltonian segment".into()));
        }
        if !(end > start) {
            return Err(Error::InvalidParameter(format!("segment [{start}, {end}) is empty")));
        }
        self.segments.push(HamiltonianSegment { start, end, op });
        Ok(self)
    }

    pub fn with_segments(mut self, segments: Vec<HamiltonianSegment>) -> Result<Self> {
        for s in segments {
            self = self.with_segment(s.start, s.end, s.op)?;
        }
        Ok(self)
    }

    pub fn with_schedule(mut self, schedule: ChannelSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    fn check_shape(&self, op: &Operator) -> Result<()> {
        if op.shape() != &self.shape {
            return Err(Error::ShapeMismatch(format!("{} vs model {}", op.shape(), self.shape)));
        }
        Ok(())
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn segments(&self) -> &[HamiltonianSegment] {
        &self.segments
    }

    pub fn channels(&self) -> &[MeasurementChannel] {
        &self.channels
    }

    pub fn channels_mut(&mut self) -> &mut [MeasurementChannel] {
        &mut self.channels
    }

    pub fn unmonitored(&self) -> &[Operator] {
        &self.unmonitored
    }

    pub fn schedule(&self) -> Option<&ChannelSchedule> {
        self.schedule.as_ref()
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.segments.is_empty() || self.schedule.is_some()
    }

    fn active_segments(&self, t: f64) -> impl Iterator<Item = (usize, &HamiltonianSegment)> {
        self.segments.iter().enumerate().filter(move |(_, s)| s.start <= t && t < s.end)
    }

    /// Total Hamiltonian at time `t`.
    pub fn hamiltonian_at(&self, t: f64) -> Operator {
        let mut h = self.h.matrix().clone();
        for (_, s) in self.active_segments(t) {
            h += s.op.matrix();
        }
        Operator::from_parts(self.shape.clone(), h)
    }

    /// Channels after the schedule is applied at time `t`.
    pub fn channels_at(&self, t: f64) -> Vec<MeasurementChannel> {
        let mut ch = self.channels.clone();
        if let Some(s) = &self.schedule {
            s(t, &mut ch);
        }
        ch
    }

    /// Upper bound on the fastest rate: `max(|H|, sum |c^dagger c|)` in row-sum norm.
    pub fn max_rate_at(&self, t: f64) -> f64 {
        let h = self.hamiltonian_at(t).max_row_sum();
        let jumps: f64 = self
            .channels_at(t)
            .iter()
            .map(|c| c.operator())
            .chain(self.unmonitored.iter())
            .map(|c| (&c.dagger() * c).max_row_sum())
            .sum();
        h.max(jumps)
    }

    pub fn max_rate(&self) -> f64 {
        let mut times = vec![0.0];
        times.extend(self.segments.iter().map(|s| s.start));
        times.into_iter().map(|t| self.max_rate_at(t)).fold(0.0, f64::max)
    }
}

/// `D[X] rho = X rho X^dagger - (X^dagger X rho + rho X^dagger X)/2`.
pub fn dissipator(x: &Operator, rho: &DensityMatrix) -> Result<Operator> {
    same_shape(x, rho)?;
    Ok(Operator::from_parts(x.shape().clone(), dissipator_mat(x.matrix(), rho.matrix())))
}

/// `H[X] rho = X rho + rho X^dagger - Tr(X rho + rho X^dagger) rho`.
pub fn innovation(x: &Operator, rho: &DensityMatrix) -> Result<Operator> {
    same_shape(x, rho)?;
    Ok(Operator::from_parts(x.shape().clone(), innovation_mat(x.matrix(), rho.matrix())))
}

fn same_shape(x: &Operator, rho: &DensityMatrix) -> Result<()> {
    if x.shape() != rho.shape() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", x.shape(), rho.shape())));
    }
    Ok(())
}

pub(crate) fn dissipator_mat(x: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let xd = x.adjoint();
    let xdx = &xd * x;
    x * rho * &xd - (&xdx * rho + rho * &xdx) * C64::new(0.5, 0.0)
}

pub(crate) fn innovation_mat(x: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let xr = x * rho;
    let mean = 2.0 * xr.trace().re;
    &xr + xr.adjoint() - rho * C64::new(mean, 0.0)
}

pub(crate) fn commutator_mat(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

/// Precomputed Lindblad generator `-i[H, .] + sum D[c]`.
pub(crate) struct Generator {
    heff: DMatrix<C64>,
    jumps: Vec<(DMatrix<C64>, DMatrix<C64>)>,
}

impl Generator {
    pub(crate) fn new(h: &DMatrix<C64>, jumps: impl IntoIterator<Item = DMatrix<C64>>) -> Self {
        let mut heff = h.clone();
        let mut list = Vec::new();
        for c in jumps {
            let cd = c.adjoint();
            heff -= (&cd * &c) * C64::new(0.0, 0.5);
            list.push((c, cd));
        }
        Generator { heff, jumps: list }
    }

    pub(crate) fn for_model(model: &LindbladModel, t: f64) -> Self {
        let h = model.hamiltonian_at(t);
        let jumps = model
            .channels_at(t)
            .into_iter()
            .map(|c| c.operator().matrix().clone())
            .chain(model.unmonitored.iter().map(|l| l.matrix().clone()))
            .collect::<Vec<_>>();
        Generator::new(h.matrix(), jumps)
    }

    pub(crate) fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let hr = &self.heff * rho;
        let mut out = (&hr - hr.adjoint()) * (-I);
        for (c, cd) in &self.jumps {
            out += c * rho * cd;
        }
        out
    }
}

pub(crate) fn rk4(gen: &Generator, rho: &DMatrix<C64>, dt: f64) -> DMatrix<C64> {
    let h = C64::new(dt, 0.0);
    let half = C64::new(0.5 * dt, 0.0);
    let k1 = gen.apply(rho);
    let k2 = gen.apply(&(rho + &k1 * half));
    let k3 = gen.apply(&(rho + &k2 * half));
    let k4 = gen.apply(&(rho + &k3 * h));
    let sixth = C64::new(dt / 6.0, 0.0);
    rho + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * sixth
}

pub(crate) fn check_rk4_step(rate: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let product = dt * rate;
    if product > RK4_STEP_LIMIT {
        return Err(Error::StepTooLarge { product, limit: RK4_STEP_LIMIT });
    }
    Ok(())
}

/// One RK4 step of the unconditioned master equation at `t = 0`.
pub fn lindblad_step(model: &LindbladModel, rho: &DensityMatrix, dt: f64) -> Result<DensityMatrix> {
    lindblad_step_at(model, rho, 0.0, dt)
}

/// One RK4 step of the unconditioned master equation starting at `t`.
pub fn lindblad_step_at(model: &LindbladModel, rho: &DensityMatrix, t: f64, dt: f64) -> Result<DensityMatrix> {
    check_state(model, rho)?;
    check_rk4_step(model.max_rate_at(t), dt)?;
    let gen = Generator::for_model(model, t + 0.5 * dt);
    let out = hermitize(&rk4(&gen, rho.matrix(), dt));
    Ok(DensityMatrix::from_matrix_unchecked(model.shape.clone(), out))
}

/// Integrates the master equation with RK4 over `duration`, returning states
/// at every multiple of `every` steps (including the start and the end).
pub fn lindblad_evolve(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    duration: f64,
    dt: f64,
    every: usize,
) -> Result<Vec<(f64, DensityMatrix)>> {
    check_state(model, rho0)?;
    let n = step_count(duration, dt)?;
    check_rk4_step(model.max_rate(), dt)?;
    let every = every.max(1);
    let mut gen = Generator::for_model(model, 0.5 * dt);
    let mut rho = rho0.matrix().clone();
    let mut out = vec![(0.0, rho0.clone())];
    for k in 0..n {
        let t = k as f64 * dt;
        if model.is_time_dependent() {
            gen = Generator::for_model(model, t + 0.5 * dt);
        }
        rho = hermitize(&rk4(&gen, &rho, dt));
        if (k + 1) % every == 0 || k + 1 == n {
            out.push(((k + 1) as f64 * dt, DensityMatrix::from_matrix_unchecked(model.shape.clone(), rho.clone())));
        }
    }
    Ok(out)
}

pub(crate) fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParameter(format!("duration = {duration}")));
    }
    let n = (duration / dt).round();
    if n > 1e7 {
        return Err(Error::InvalidParameter(format!("{n} steps exceeds 10^7")));
    }
    Ok(n as usize)
}

fn check_state(model: &LindbladModel, rho: &DensityMatrix) -> Result<()> {
    if rho.shape() != model.shape() {
        return Err(Error::ShapeMismatch(format!("state {} vs model {}", rho.shape(), model.shape())));
    }
    Ok(())
}

fn check_increments(model: &LindbladModel, dw: &[f64]) -> Result<()> {
    if dw.len() != model.channels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} increments for {} channels",
            dw.len(),
            model.channels.len()
        )));
    }
    Ok(())
}

/// Drift plus diffusion of the Ito SME for one Euler-Maruyama step.
pub(crate) fn ito_increment(
    gen: &Generator,
    channels: &[MeasurementChannel],
    rho: &DMatrix<C64>,
    dw: &[f64],
    dt: f64,
) -> DMatrix<C64> {
    let mut d = gen.apply(rho) * C64::new(dt, 0.0);
    for (ch, &w) in channels.iter().zip(dw) {
        if ch.eta > 0.0 {
            let ct = ch.c.matrix() * C64::from_polar(1.0, ch.phi);
            d += innovation_mat(&ct, rho) * C64::new(ch.eta.sqrt() * w, 0.0);
        }
    }
    d
}

/// Renormalizes an Euler update, returning the pre-normalization trace defect.
pub(crate) fn finish_ito(mut rho: DMatrix<C64>) -> Result<(DMatrix<C64>, f64)> {
    let tr: f64 = (0..rho.nrows()).map(|i| rho[(i, i)].re).sum();
    let defect = (tr - 1.0).abs();
    if !(defect <= ITO_DEFECT_LIMIT) || rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::IntegrationUnstable { step: 0, defect });
    }
    DensityMatrix::normalize_matrix(&mut rho);
    Ok((rho, defect))
}

/// Euler-Maruyama step of the diffusive SME; one increment per channel.
pub fn sme_step_ito(model: &LindbladModel, rho: &DensityMatrix, dw: &[f64], dt: f64) -> Result<DensityMatrix> {
    Ok(sme_step_ito_with_defect(model, rho, dw, dt)?.0)
}

/// As [`sme_step_ito`], also returning the trace defect before renormalization.
pub fn sme_step_ito_with_defect(
    model: &LindbladModel,
    rho: &DensityMatrix,
    dw: &[f64],
    dt: f64,
) -> Result<(DensityMatrix, f64)> {
    check_state(model, rho)?;
    check_increments(model, dw)?;
    check_rk4_step(model.max_rate_at(0.0), dt)?;
    let gen = Generator::for_model(model, 0.5 * dt);
    let channels = model.channels_at(0.5 * dt);
    let next = rho.matrix() + ito_increment(&gen, &channels, rho.matrix(), dw, dt);
    let (m, defect) = finish_ito(next)?;
    Ok((DensityMatrix::from_matrix_unchecked(model.shape.clone(), m), defect))
}

/// Normalized-Kraus step: measurement update, unmonitored channels, then the
/// exact unitary for the Hamiltonian.
pub fn sme_step_povm(model: &LindbladModel, rho: &DensityMatrix, dw: &[f64], dt: f64) -> Result<DensityMatrix> {
    check_state(model, rho)?;
    check_increments(model, dw)?;
    let mut engine = Engine::new(model, dt)?;
    let mut m = rho.matrix().clone();
    let mut dr = vec![0.0; dw.len()];
    engine.povm_step(&mut m, 0.0, dw, &mut dr)?;
    Ok(DensityMatrix::from_matrix_unchecked(model.shape.clone(), m))
}

enum ChannelCache {
    Hermitian { op: DMatrix<C64>, vals: Vec<f64>, vecs: DMatrix<C64>, vecs_adj: DMatrix<C64> },
    General { op: DMatrix<C64>, cdc: DMatrix<C64> },
}

impl ChannelCache {
    fn build(c: &Operator) -> Self {
        let tol = 1e-12 * (1.0 + c.max_row_sum());
        if c.is_hermitian(tol) {
            let (vals, vecs) = eigh(c.matrix());
            let vecs_adj = vecs.adjoint();
            ChannelCache::Hermitian { op: c.matrix().clone(), vals, vecs, vecs_adj }
        } else {
            let cdc = c.matrix().adjoint() * c.matrix();
            ChannelCache::General { op: c.matrix().clone(), cdc }
        }
    }

    fn op(&self) -> &DMatrix<C64> {
        match self {
            ChannelCache::Hermitian { op, .. } | ChannelCache::General { op, .. } => op,
        }
    }
}

/// Per-trajectory stepping state with cached decompositions and unitaries.
pub(crate) struct Engine<'m> {
    model: &'m LindbladModel,
    pub(crate) channels: Vec<MeasurementChannel>,
    caches: Vec<ChannelCache>,
    unmonitored: Vec<(DMatrix<C64>, DMatrix<C64>)>,
    unitary: Option<(Vec<usize>, DMatrix<C64>)>,
    pub(crate) drive: Option<DMatrix<C64>>,
    dt: f64,
}

impl<'m> Engine<'m> {
    pub(crate) fn new(model: &'m LindbladModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let channels = model.channels.clone();
        let caches = channels.iter().map(|c| ChannelCache::build(&c.c)).collect();
        let unmonitored = model
            .unmonitored
            .iter()
            .map(|l| {
                let m = l.matrix().clone();
                let k0 = DMatrix::identity(m.nrows(), m.nrows())
                    - (m.adjoint() * &m) * C64::new(0.5 * dt, 0.0);
                (m, k0)
            })
            .collect();
        Ok(Engine { model, channels, caches, unmonitored, unitary: None, drive: None, dt })
    }

    pub(crate) fn dt(&self) -> f64 {
        self.dt
    }

    /// Applies the channel schedule at the step midpoint and refreshes caches.
    pub(crate) fn prepare(&mut self, t: f64) {
        if let Some(schedule) = &self.model.schedule {
            let phis: Vec<f64> = self.channels.iter().map(|c| c.phi).collect();
            let mut fresh = self.model.channels.clone();
            for (c, p) in fresh.iter_mut().zip(phis) {
                c.phi = p;
            }
            schedule(t + 0.5 * self.dt, &mut fresh);
            for (k, c) in fresh.iter().enumerate() {
                if c.c.matrix() != self.caches[k].op() {
                    self.caches[k] = ChannelCache::build(&c.c);
                }
            }
            self.channels = fresh;
        }
    }

    pub(crate) fn records(&self, rho: &DMatrix<C64>, dw: &[f64], dr: &mut [f64]) {
        for (k, ch) in self.channels.iter().enumerate() {
            dr[k] = record_increment_mat(ch.c.matrix(), ch.eta, ch.phi, rho, dw[k], self.dt);
        }
    }

    pub(crate) fn generator(&self, t: f64) -> Generator {
        let mut h = self.model.hamiltonian_at(t + 0.5 * self.dt).into_matrix();
        if let Some(d) = &self.drive {
            h += d;
        }
        let jumps = self
            .channels
            .iter()
            .map(|c| c.c.matrix().clone())
            .chain(self.unmonitored.iter().map(|(l, _)| l.clone()));
        Generator::new(&h, jumps.collect::<Vec<_>>())
    }

    fn unitary(&mut self, t: f64) -> Option<&DMatrix<C64>> {
        let tm = t + 0.5 * self.dt;
        let key: Vec<usize> = self.model.active_segments(tm).map(|(k, _)| k).collect();
        if self.drive.is_none() {
            let stale = self.unitary.as_ref().map_or(true, |(k, _)| *k != key);
            if stale {
                let h = self.model.hamiltonian_at(tm);
                if h.matrix().iter().all(|z| *z == ZERO) {
                    self.unitary = Some((key, DMatrix::identity(h.dim(), h.dim())));
                } else {
                    let u = exp_hermitian(h.matrix(), C64::new(0.0, -self.dt));
                    self.unitary = Some((key, u));
                }
            }
            return self.unitary.as_ref().map(|(_, u)| u);
        }
        let mut h = self.model.hamiltonian_at(tm).into_matrix();
        h += self.drive.as_ref().expect("drive present");
        let u = exp_hermitian(&h, C64::new(0.0, -self.dt));
        // keyed with a sentinel so the next drive-free step recomputes
        self.unitary = Some((vec![usize::MAX], u));
        self.unitary.as_ref().map(|(_, u)| u)
    }

    /// Measurement, unmonitored decay and Hamiltonian; fills `dr` with the
    /// record increments computed from the pre-step state.
    pub(crate) fn povm_step(&mut self, rho: &mut DMatrix<C64>, t: f64, dw: &[f64], dr: &mut [f64]) -> Result<()> {
        self.records(rho, dw, dr);
        let dt = self.dt;
        for (k, ch) in self.channels.iter().enumerate() {
            measure(rho, &self.caches[k], ch, dr[k], dt);
        }
        for (l, k0) in &self.unmonitored {
            let next = k0 * &*rho * k0.adjoint() + l * &*rho * l.adjoint() * C64::new(dt, 0.0);
            *rho = next;
        }
        if let Some(u) = self.unitary(t) {
            let next = u * &*rho * u.adjoint();
            *rho = next;
        }
        let tr = DensityMatrix::normalize_matrix(rho);
        if !(tr > 1e-300) || !tr.is_finite() {
            return Err(Error::Underflow(format!("Kraus update trace {tr}")));
        }
        Ok(())
    }
}

/// Kraus update for one channel given its record increment.
fn measure(rho: &mut DMatrix<C64>, cache: &ChannelCache, ch: &MeasurementChannel, dr: f64, dt: f64) {
    let eta = ch.eta;
    let rot = C64::from_polar(1.0, ch.phi);
    match cache {
        ChannelCache::Hermitian { vals, vecs, vecs_adj, .. } => {
            let n = vals.len();
            let se = eta.sqrt();
            let quad = (ONE + rot * rot) * (0.5 * eta);
            let expo: Vec<C64> = vals.iter().map(|&l| rot * (se * l * dr) - quad * (l * l * dt)).collect();
            let shift = expo.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let f: Vec<C64> = expo.iter().map(|z| (z - shift).exp()).collect();
            let mut r = vecs_adj * &*rho * vecs;
            let unmon = 0.5 * (1.0 - eta) * dt;
            for k in 0..n {
                for l in 0..n {
                    let mut w = f[k] * f[l].conj();
                    if unmon > 0.0 {
                        let d = vals[k] - vals[l];
                        w *= (-unmon * d * d).exp();
                    }
                    r[(k, l)] *= w;
                }
            }
            *rho = vecs * r * vecs_adj;
        }
        ChannelCache::General { op, cdc } => {
            let n = op.nrows();
            let ct = op * rot;
            let mut m = DMatrix::<C64>::identity(n, n) - cdc * C64::new(0.5 * dt, 0.0);
            if eta > 0.0 {
                m += &ct * C64::new(eta.sqrt() * dr, 0.0);
                m += (&ct * &ct) * C64::new(0.5 * eta * (dr * dr - dt), 0.0);
            }
            let mut next = &m * &*rho * m.adjoint();
            if eta < 1.0 {
                next += op * &*rho * op.adjoint() * C64::new((1.0 - eta) * dt, 0.0);
            }
            *rho = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{annihilation, PureState};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn qubit(x: f64, y: f64, z: f64) -> DensityMatrix {
        DensityMatrix::from_bloch(x, y, z).unwrap()
    }

    fn bloch(r: &DensityMatrix) -> (f64, f64, f64) {
        let m = r.matrix();
        (2.0 * m[(0, 1)].re, -2.0 * m[(0, 1)].im, (m[(0, 0)] - m[(1, 1)]).re)
    }

    fn dephasing_model(gamma: f64, eta: f64, phi: f64) -> LindbladModel {
        LindbladModel::free(SpaceShape::qubit())
            .with_channel(MeasurementChannel::qubit_dephasing(gamma, eta, phi).unwrap())
            .unwrap()
    }

    #[test]
    fn dissipator_examples() {
        let e = qubit(0.0, 0.0, 1.0);
        let d = dissipator(&pauli(Axis::Z), &e).unwrap();
        assert!(d.norm() < 1e-15);

        let a = annihilation(3).unwrap();
        let one = DensityMatrix::basis(a.shape().clone(), 1).unwrap();
        let d = dissipator(&a, &one).unwrap();
        let expect = Operator::diagonal(a.shape().clone(), &[1.0, -1.0, 0.0, 0.0]).unwrap();
        assert!(d.max_abs_diff(&expect) < 1e-15);

        let plus = qubit(1.0, 0.0, 0.0);
        let d = dissipator(&pauli(Axis::Z), &plus).unwrap();
        assert!(d.max_abs_diff(&-&pauli(Axis::X)) < 1e-15);
    }

    #[test]
    fn innovation_examples() {
        let z = pauli(Axis::Z);
        assert!(innovation(&z, &qubit(0.0, 0.0, 1.0)).unwrap().norm() < 1e-15);
        let mixed = DensityMatrix::maximally_mixed(SpaceShape::qubit());
        assert!(innovation(&z, &mixed).unwrap().max_abs_diff(&z) < 1e-15);
        for zz in [-1.0, 0.0, 0.5, 1.0] {
            let beta = 0.7;
            let r = qubit(0.0, 0.0, zz);
            let h = innovation(&z.scale(C64::new(beta, 0.0)), &r).unwrap();
            let dz = (h.get(0, 0) - h.get(1, 1)).re;
            assert_abs_diff_eq!(dz, 2.0 * beta * (1.0 - zz * zz), epsilon = 1e-14);
        }
    }

    proptest! {
        #[test]
        fn superoperators_are_traceless(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
                                        re in -2.0..2.0f64, im in -2.0..2.0f64) {
            let n = (x * x + y * y + z * z).sqrt().max(1.0);
            let r = qubit(x / n, y / n, z / n);
            let op = Operator::from_fn(SpaceShape::qubit(), |i, j| C64::new(re + i as f64, im - j as f64));
            prop_assert!(dissipator(&op, &r).unwrap().trace().norm() < 1e-12);
            prop_assert!(innovation(&op, &r).unwrap().trace().norm() < 1e-12);
        }
    }

    #[test]
    fn lindblad_dephasing_closed_form() {
        let model = dephasing_model(2.0, 1.0, 0.0);
        let mut r = qubit(1.0, 0.0, 0.0);
        let dt = 1e-3;
        for _ in 0..500 {
            r = lindblad_step(&model, &r, dt).unwrap();
            assert!((r.trace() - 1.0).abs() < 1e-10);
        }
        assert_abs_diff_eq!(r.matrix()[(0, 1)].re, 0.5 * (-1.0f64).exp(), epsilon = 1e-4);
    }

    #[test]
    fn lindblad_amplitude_damping() {
        let model = LindbladModel::free(SpaceShape::qubit()).with_unmonitored(pauli(Axis::Minus)).unwrap();
        let r0 = qubit(0.0, 0.0, 1.0);
        let out = lindblad_evolve(&model, &r0, 1.0, 1e-3, 1000).unwrap();
        assert_abs_diff_eq!(out.last().unwrap().1.population(0), (-1.0f64).exp(), epsilon = 1e-4);
    }

    #[test]
    fn lindblad_identity_flow_and_guard() {
        let model = LindbladModel::free(SpaceShape::qubit());
        let r = qubit(0.3, 0.1, -0.2);
        assert_eq!(lindblad_step(&model, &r, 0.1).unwrap(), r);
        let fast = dephasing_model(200.0, 1.0, 0.0);
        assert!(matches!(lindblad_step(&fast, &r, 1e-3), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn ito_examples() {
        let model = dephasing_model(2.0, 1.0, 0.0);
        let e = qubit(0.0, 0.0, 1.0);
        assert!(sme_step_ito(&model, &e, &[0.3], 1e-3).unwrap().as_operator().max_abs_diff(e.as_operator()) < 1e-15);

        let mixed = DensityMatrix::maximally_mixed(SpaceShape::qubit());
        let out = sme_step_ito(&model, &mixed, &[0.01], 1e-3).unwrap();
        assert_abs_diff_eq!(bloch(&out).2, 0.02, epsilon = 1e-6);

        let blind = dephasing_model(2.0, 0.0, 0.0);
        let r = qubit(0.6, 0.0, 0.3);
        let dt = 1e-3;
        let a = sme_step_ito(&blind, &r, &[0.05], dt).unwrap();
        let gen = Generator::for_model(&blind, 0.0);
        let euler = r.matrix() + gen.apply(r.matrix()) * C64::new(dt, 0.0);
        assert!((a.matrix() - euler).iter().all(|z| z.norm() < dt * dt));
    }

    #[test]
    fn ito_reports_defect_and_checks_shapes() {
        let model = dephasing_model(2.0, 1.0, 0.0);
        let r = qubit(0.6, 0.0, 0.3);
        let (_, defect) = sme_step_ito_with_defect(&model, &r, &[0.02], 1e-3).unwrap();
        assert!(defect < 1e-14);
        assert!(sme_step_ito(&model, &r, &[], 1e-3).is_err());
    }

    #[test]
    fn povm_pointer_states_are_fixed() {
        let model = dephasing_model(1.0, 0.7, 0.4);
        for z in [1.0, -1.0] {
            let r = qubit(0.0, 0.0, z);
            let out = sme_step_povm(&model, &r, &[0.2], 1e-3).unwrap();
            assert!(out.as_operator().max_abs_diff(r.as_operator()) < 1e-15);
        }
    }

    #[test]
    fn povm_matches_ito_to_first_order() {
        for &(eta, phi) in &[(1.0, 0.0), (0.4, 0.0), (1.0, 0.7), (0.5, 1.2)] {
            let model = dephasing_model(1.0, eta, phi);
            let r = qubit(0.5, -0.3, 0.2);
            let mut errs = Vec::new();
            for &dt in &[1e-3, 5e-4, 2.5e-4] {
                let dw = 0.8 * f64::sqrt(dt);
                let a = sme_step_povm(&model, &r, &[dw], dt).unwrap();
                let b = sme_step_ito(&model, &r, &[dw], dt).unwrap();
                errs.push(a.as_operator().max_abs_diff(b.as_operator()));
            }
            // local discrepancy shrinks at least like dt
            assert!(errs[2] < errs[0] * 0.3, "{errs:?}");
        }
    }

    #[test]
    fn povm_general_channel_positive() {
        let a = annihilation(4).unwrap();
        let c = a.scale(C64::new(0.8, 0.0));
        let model = LindbladModel::free(a.shape().clone())
            .with_channel(MeasurementChannel::new(c, 0.6, 0.3).unwrap())
            .unwrap();
        let psi = PureState::normalized(
            a.shape().clone(),
            nalgebra::DVector::from_vec(vec![ONE, ONE, C64::new(0.0, 1.0), ZERO, ZERO]),
        )
        .unwrap()
        .to_density();
        let mut r = psi;
        let mut s = WienerStream::new(3, 0);
        for k in 0..400 {
            let dw = s.increment(k, 1e-3);
            r = sme_step_povm(&model, &r, &[dw], 1e-3).unwrap();
            assert!(r.is_valid(1e-9));
        }
    }

    #[test]
    fn record_formula() {
        let ch = MeasurementChannel::qubit_dephasing(2.0, 1.0, 0.0).unwrap();
        let mixed = DensityMatrix::maximally_mixed(SpaceShape::qubit());
        let dr = ch.record_increment(&mixed, 0.01, 0.001);
        assert_abs_diff_eq!(ch.record_value(dr, 0.001).unwrap(), 5.0, epsilon = 1e-12);
        let e = qubit(0.0, 0.0, 1.0);
        let dr = ch.record_increment(&e, 0.0, 0.001);
        assert_abs_diff_eq!(ch.record_value(dr, 0.001).unwrap(), 1.0, epsilon = 1e-12);
        let blind = MeasurementChannel::qubit_dephasing(2.0, 0.0, 0.0).unwrap();
        assert_eq!(blind.record_value(0.1, 0.001), Err(Error::RecordUndefined));
    }

    #[test]
    fn model_validation() {
        let nonherm = pauli(Axis::Plus);
        assert!(matches!(LindbladModel::new(nonherm), Err(Error::NonHermitian(_))));
        let model = LindbladModel::free(SpaceShape::qubit());
        assert!(model.with_unmonitored(annihilation(2).unwrap()).is_err());
        assert!(MeasurementChannel::new(pauli(Axis::Z), 1.5, 0.0).is_err());
    }

    #[test]
    fn segments_are_piecewise_constant() {
        let x = pauli(Axis::X);
        let model = LindbladModel::free(SpaceShape::qubit()).with_segment(1.0, 2.0, x.clone()).unwrap();
        assert_eq!(model.hamiltonian_at(0.5).norm(), 0.0);
        assert_eq!(model.hamiltonian_at(1.5), x);
        assert_eq!(model.hamiltonian_at(2.0).norm(), 0.0);
    }
}
