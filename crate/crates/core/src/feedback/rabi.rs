//! Stabilization of Rabi oscillations under continuous `sigma_z` monitoring.
//!
//! The record is demodulated against `sin(Omega_R t)` over a sliding window
//! of one Rabi period. The result `S` estimates `sin` of the phase lead of
//! the oscillation and the drive is corrected by `dOmega = -F Omega_R S`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::hilbert::{pauli, Axis, DensityMatrix, SpaceShape, C64};
use crate::sme::{
    run_ensemble, simulate_trajectory, ControlAction, Controller, EnsembleMean, Integrator, LindbladModel,
    MeasurementChannel, Observation, SimOptions, TrajectoryRecord, WienerStream,
};

#[derive(Clone, Debug, PartialEq)]
pub struct RabiConfig {
    pub omega_r: f64,
    /// Measurement-induced dephasing rate `Gamma`.
    pub gamma: f64,
    pub eta: f64,
    /// Feedback gain `F`, accepted in `[0, 2]`.
    pub gain: f64,
    /// Demodulation window in Rabi periods.
    pub window_periods: f64,
}

impl Default for RabiConfig {
    fn default() -> Self {
        RabiConfig { omega_r: 2.0 * std::f64::consts::PI, gamma: 1.0, eta: 0.4, gain: 0.1, window_periods: 1.0 }
    }
}

impl RabiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.gain) {
            return Err(Error::GainOutOfRange(self.gain));
        }
        if !(self.omega_r > 0.0) || !(self.gamma > 0.0) || !(self.window_periods > 0.0) {
            return Err(Error::InvalidParameter("Omega_R, Gamma and the window must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta = {} outside [0, 1]", self.eta)));
        }
        Ok(())
    }

    /// Decay rate of the unstabilized ensemble oscillation, `Gamma/2`.
    pub fn decay_rate(&self) -> f64 {
        0.5 * self.gamma
    }
}

/// `(Omega_R/2) sigma_x` with `sqrt(Gamma/2) sigma_z` monitoring; `V` averages to `<sigma_z>`.
pub fn rabi_model(cfg: &RabiConfig) -> Result<LindbladModel> {
    cfg.validate()?;
    let h = pauli(Axis::X).scale(C64::new(0.5 * cfg.omega_r, 0.0));
    LindbladModel::new(h)?.with_channel(MeasurementChannel::qubit_dephasing(cfg.gamma, cfg.eta, 0.0)?)
}

#[derive(Clone, Debug)]
pub struct RabiController {
    omega_r: f64,
    gain: f64,
    window: VecDeque<f64>,
    len: usize,
    sum: f64,
    correction: f64,
}

/// Controller over a window of `window_periods` Rabi periods at step `dt`.
pub fn rabi_stabilization_controller(cfg: &RabiConfig, dt: f64) -> Result<RabiController> {
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let period = 2.0 * std::f64::consts::PI / cfg.omega_r;
    let len = ((cfg.window_periods * period / dt).round() as usize).max(1);
    Ok(RabiController { omega_r: cfg.omega_r, gain: cfg.gain, window: VecDeque::with_capacity(len), len, sum: 0.0, correction: 0.0 })
}

impl RabiController {
    /// Current drive correction `dOmega`.
    pub fn correction(&self) -> f64 {
        self.correction
    }

    /// Pushes one record sample taken at mid-step time `t`; returns `S`.
    pub fn push(&mut self, t: f64, v: f64) -> f64 {
        let x = v * (self.omega_r * t).sin();
        self.window.push_back(x);
        self.sum += x;
        if self.window.len() > self.len {
            self.sum -= self.window.pop_front().expect("nonempty");
        }
        -2.0 * self.sum / self.window.len() as f64
    }
}

impl Controller for RabiController {
    fn observe(&mut self, obs: &Observation<'_>) -> Result<ControlAction> {
        let v = obs.records[0];
        if !v.is_finite() {
            return Err(Error::RecordUndefined);
        }
        let s = self.push(obs.t - 0.5 * obs.dt, v);
        self.correction = -self.gain * self.omega_r * s;
        let drive = pauli(Axis::X).scale(C64::new(0.5 * self.correction, 0.0));
        Ok(ControlAction { drive: Some(drive), log: vec![s, self.correction], ..Default::default() })
    }
}

/// One trajectory from `|e>`; `gain = 0` runs the unstabilized system.
pub fn run_rabi(cfg: &RabiConfig, duration: f64, dt: f64, noise: &mut WienerStream, thinning: usize) -> Result<TrajectoryRecord> {
    let model = rabi_model(cfg)?;
    let rho0 = DensityMatrix::basis(SpaceShape::qubit(), 0)?;
    let opts = SimOptions { thinning, store_records: true, integrator: Integrator::Povm };
    if cfg.gain == 0.0 {
        return simulate_trajectory(&model, &rho0, duration, dt, noise, None, &opts);
    }
    let mut ctl = rabi_stabilization_controller(cfg, dt)?;
    simulate_trajectory(&model, &rho0, duration, dt, noise, Some(&mut ctl), &opts)
}

/// Ensemble-mean `<sigma_z>` at the stored times.
#[derive(Clone, Debug, PartialEq)]
pub struct RabiEnsemble {
    pub times: Vec<f64>,
    pub mean_z: Vec<f64>,
}

impl RabiEnsemble {
    /// Amplitude of the `Omega_R` component of the mean over `[t0, t1]`.
    pub fn amplitude(&self, omega_r: f64, t0: f64, t1: f64) -> f64 {
        let mut c = C64::new(0.0, 0.0);
        let mut n = 0usize;
        for (&t, &z) in self.times.iter().zip(&self.mean_z) {
            if t >= t0 && t <= t1 {
                c += C64::from_polar(z, -omega_r * t);
                n += 1;
            }
        }
        if n == 0 {
            return 0.0;
        }
        2.0 * c.norm() / n as f64
    }
}

pub fn rabi_ensemble(
    cfg: &RabiConfig,
    duration: f64,
    dt: f64,
    n: usize,
    master_seed: u64,
    jobs: usize,
    thinning: usize,
) -> Result<RabiEnsemble> {
    let recs = run_ensemble(n, master_seed, jobs, |_, mut s| {
        let mut r = run_rabi(cfg, duration, dt, &mut s, thinning)?;
        r.records.clear();
        r.increments.clear();
        r.controller_log.clear();
        Ok(r)
    })?;
    let mut acc = EnsembleMean::new();
    for r in &recs {
        acc.add(r)?;
    }
    let z = pauli(Axis::Z);
    let mean = acc.mean()?;
    let mean_z = mean.iter().map(|r| crate::hilbert::expectation(&z, r).map(|c| c.re)).collect::<Result<Vec<_>>>()?;
    Ok(RabiEnsemble { times: acc.times().to_vec(), mean_z })
}
