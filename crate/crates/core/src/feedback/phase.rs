//! Adaptive phase estimation of a single emitted photon.
//!
//! The source qubit starts in `(|g> + e^{i Theta} |e>)/sqrt 2` and emits into
//! a flat temporal mode of length `T`, i.e. through `sqrt(gamma(t)) sigma_-`
//! with `gamma(t) = 1/(T - t)`. In the stretched time `s = -ln(1 - t/T)` the
//! channel has unit rate, so runs are integrated in `s` up to `s_max`, where
//! the unemitted fraction is `e^{-s_max}`.
//!
//! Besides the true conditioned state (which generates the record) the
//! kernel carries the linear, unnormalized record map applied to `I` and to
//! `|e><g|`. Their traces give the likelihood of every trial phase, so each
//! run yields a posterior `(1 + c cos(Theta' - theta_hat))/2pi`.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::sme::{run_ensemble, NoiseSource};

type M2 = Matrix2<C64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseReceiver {
    /// Single homodyne channel with phase set from the running estimate.
    Adaptive,
    /// Two fixed quadratures, each carrying half the emission.
    Heterodyne,
    /// Homodyne of the quadrature orthogonal to the true phase.
    Locked,
    /// Homodyne of the quadrature along the true phase.
    LockedAmplitude,
}

impl std::str::FromStr for PhaseReceiver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(PhaseReceiver::Adaptive),
            "heterodyne" => Ok(PhaseReceiver::Heterodyne),
            "locked" => Ok(PhaseReceiver::Locked),
            "locked-amplitude" => Ok(PhaseReceiver::LockedAmplitude),
            _ => Err(Error::InvalidParameter(format!("unknown receiver '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptivePhaseConfig {
    pub eta: f64,
    /// Step in stretched time.
    pub ds: f64,
    pub s_max: f64,
    /// Steps between forming an estimate and applying the phase it implies.
    pub delay_steps: usize,
    pub receiver: PhaseReceiver,
    /// Keep per-step records, phases and estimates.
    pub store: bool,
}

impl Default for AdaptivePhaseConfig {
    fn default() -> Self {
        AdaptivePhaseConfig {
            eta: 1.0,
            ds: 2e-3,
            s_max: 10.0,
            delay_steps: 0,
            receiver: PhaseReceiver::Adaptive,
            store: false,
        }
    }
}

impl AdaptivePhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) || self.eta == 0.0 {
            return Err(Error::InvalidParameter(format!("eta = {} must lie in (0, 1]", self.eta)));
        }
        if !(self.ds > 0.0) || !(self.s_max > 0.0) {
            return Err(Error::InvalidParameter("ds and s_max must be positive".into()));
        }
        if self.ds > 0.05 {
            return Err(Error::StepTooLarge { product: self.ds, limit: 0.05 });
        }
        Ok(())
    }

    /// Lab time `t = T (1 - e^{-s})` for stretched time `s`.
    pub fn lab_time(s: f64, mode_duration: f64) -> f64 {
        mode_duration * (1.0 - (-s).exp())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseEstimate {
    /// Posterior mode.
    pub theta: f64,
    /// `c` in `(1 + c cos(Theta' - theta))/2pi`; 1 for a canonical measurement.
    pub sharpness: f64,
}

impl PhaseEstimate {
    pub fn posterior(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| (1.0 + self.sharpness * (x - self.theta).cos()) / (2.0 * PI)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRun {
    pub theta_true: f64,
    pub estimate: PhaseEstimate,
    /// `records[step][channel]`, `V = dr/(sqrt(eta) ds)`, when stored.
    pub records: Vec<Vec<f64>>,
    /// Channel phases applied at each step (first channel), when stored.
    pub phases: Vec<f64>,
    /// Amplitude quadrature `2 Re(e^{-i Theta} rho_eg)` of the source before each step, when stored.
    pub amplitude: Vec<f64>,
}

/// Delay line between the estimator and the amplifier phase.
#[derive(Clone, Debug)]
pub struct AdaptivePhaseController {
    fifo: VecDeque<f64>,
    delay: usize,
}

pub fn adaptive_phase_controller(delay_steps: usize) -> AdaptivePhaseController {
    AdaptivePhaseController { fifo: VecDeque::with_capacity(delay_steps + 1), delay: delay_steps }
}

impl AdaptivePhaseController {
    /// Channel phase `-(theta + pi/2)` for estimate `theta`; `None` means no estimate yet.
    pub fn phase_for(theta: Option<f64>) -> f64 {
        theta.map_or(0.0, |t| -(t + FRAC_PI_2))
    }

    /// Pushes the phase implied by the newest estimate and returns the one due now.
    pub fn push(&mut self, theta: Option<f64>) -> f64 {
        self.fifo.push_back(Self::phase_for(theta));
        if self.fifo.len() > self.delay {
            self.fifo.pop_front().expect("nonempty")
        } else {
            0.0
        }
    }
}

fn sigma_minus() -> M2 {
    let z = C64::new(0.0, 0.0);
    // basis (|e>, |g>): sigma_- = |g><e|
    M2::new(z, z, C64::new(1.0, 0.0), z)
}

fn estimate_from(l_i: &M2, l_eg: &M2) -> PhaseEstimate {
    let z = l_eg.trace();
    let norm = l_i.trace().re;
    PhaseEstimate { theta: -z.arg(), sharpness: 2.0 * z.norm() / norm }
}

/// One photon-phase measurement with true phase `theta_true`.
pub fn run_phase_measurement<N: NoiseSource>(cfg: &AdaptivePhaseConfig, theta_true: f64, noise: &mut N) -> Result<PhaseRun> {
    cfg.validate()?;
    let steps = (cfg.s_max / cfg.ds).round() as usize;
    let ds = cfg.ds;
    let eta = cfg.eta;
    let sm = sigma_minus();
    let (weights, mut phases): (Vec<f64>, Vec<f64>) = match cfg.receiver {
        PhaseReceiver::Heterodyne => (vec![0.5, 0.5], vec![0.0, FRAC_PI_2]),
        _ => (vec![1.0], vec![0.0]),
    };
    let nch = weights.len();
    let mut rho = M2::new(
        C64::new(0.5, 0.0),
        C64::from_polar(0.5, theta_true),
        C64::from_polar(0.5, -theta_true),
        C64::new(0.5, 0.0),
    );
    let mut l_i = M2::identity();
    let mut l_eg = M2::zeros();
    l_eg[(0, 1)] = C64::new(1.0, 0.0);
    let mut ctl = adaptive_phase_controller(cfg.delay_steps);
    let mut run = PhaseRun {
        theta_true,
        estimate: PhaseEstimate { theta: 0.0, sharpness: 0.0 },
        records: Vec::new(),
        phases: Vec::new(),
        amplitude: Vec::new(),
    };
    match cfg.receiver {
        PhaseReceiver::Locked => phases[0] = -(theta_true + FRAC_PI_2),
        PhaseReceiver::LockedAmplitude => phases[0] = -theta_true,
        _ => {}
    }
    let decay = sm.adjoint() * sm;
    let id = M2::identity();
    let mut dr = vec![0.0; nch];
    for k in 0..steps {
        let mut m = id - decay * C64::new(0.5 * ds, 0.0);
        for j in 0..nch {
            let c = sm * C64::new(weights[j].sqrt(), 0.0);
            let ct = c * C64::from_polar(1.0, phases[j]);
            let mean = 2.0 * eta.sqrt() * (ct * rho).trace().re;
            let dw = noise.increment((k * nch + j) as u64, ds);
            dr[j] = mean * ds + dw;
            m += ct * C64::new(eta.sqrt() * dr[j], 0.0);
        }
        if cfg.store {
            run.records.push(dr.iter().map(|x| x / (eta.sqrt() * ds)).collect());
            run.phases.push(phases[0]);
            run.amplitude.push(2.0 * (C64::from_polar(1.0, -theta_true) * rho[(0, 1)]).re);
        }
        let md = m.adjoint();
        let lost = C64::new((1.0 - eta) * ds, 0.0);
        let apply = |x: &M2| m * x * md + sm * x * sm.adjoint() * lost;
        rho = apply(&rho);
        let tr = rho.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::IntegrationUnstable { step: k, defect: tr });
        }
        rho /= C64::new(tr, 0.0);
        rho = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
        l_i = apply(&l_i);
        l_eg = apply(&l_eg);
        let scale = l_i.trace().re;
        if !(scale > 0.0) {
            return Err(Error::Underflow(format!("likelihood normalization at step {k}")));
        }
        l_i /= C64::new(scale, 0.0);
        l_eg /= C64::new(scale, 0.0);
        if cfg.receiver == PhaseReceiver::Adaptive {
            let est = estimate_from(&l_i, &l_eg);
            let theta = (est.sharpness > 0.0).then_some(est.theta);
            phases[0] = ctl.push(theta);
        }
    }
    run.estimate = estimate_from(&l_i, &l_eg);
    Ok(run)
}

/// `n` runs with the same true phase; trajectory `i` uses stream `(master_seed, i)`.
pub fn phase_ensemble(
    cfg: &AdaptivePhaseConfig,
    theta_true: f64,
    n: usize,
    master_seed: u64,
    jobs: usize,
) -> Result<Vec<PhaseRun>> {
    run_ensemble(n, master_seed, jobs, |_, mut s| run_phase_measurement(cfg, theta_true, &mut s))
}

/// Mean over runs of the total variation between each run's posterior and
/// the canonical distribution centred on that run's estimate.
pub fn mean_canonical_tv(runs: &[PhaseRun], grid_points: usize) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter("no runs".into()));
    }
    let grid = crate::models::phase_grid(grid_points);
    let dx = 2.0 * PI / grid_points as f64;
    let mut acc = 0.0;
    for r in runs {
        let p = r.estimate.posterior(&grid);
        let q = PhaseEstimate { theta: r.estimate.theta, sharpness: 1.0 }.posterior(&grid);
        acc += crate::analysis::total_variation(&p, &q, dx)?;
    }
    Ok(acc / runs.len() as f64)
}
