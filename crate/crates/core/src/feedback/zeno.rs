//! Zeno dragging: a qubit monitored along an equatorial axis that rotates at
//! rate `nu`, `sigma_delta(t)` with `delta = nu t`.
//!
//! The kernel works on the Bloch vector. Each step holds the axis at its
//! midpoint value and applies the exact finite-time Kraus map for
//! `sqrt(Gamma/2) sigma_n`, so the step may be a sizeable fraction of `1/Gamma`.
//! The record is drawn from its exact two-Gaussian distribution.

use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::models::{engineered_measurement_rate, SidebandConfig};
use crate::sme::{run_ensemble, step_count, NoiseSource, Provenance, TrajectoryRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct ZenoDragConfig {
    /// Axis rotation rate `nu`.
    pub nu: f64,
    /// Measurement rate `Gamma_D`.
    pub gamma_d: f64,
    pub eta: f64,
    pub duration: f64,
    /// Times at which the overlap with the pointer state is sampled.
    pub checkpoints: Vec<f64>,
    /// Keep records and thinned states.
    pub store: bool,
}

impl ZenoDragConfig {
    pub fn new(nu: f64, gamma_d: f64, eta: f64, duration: f64) -> Result<Self> {
        let cfg = ZenoDragConfig { nu, gamma_d, eta, duration, checkpoints: vec![duration], store: false };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses the measurement rate of an engineered sideband measurement.
    pub fn from_sideband(sideband: &SidebandConfig, eta: f64, nu: f64, duration: f64) -> Result<Self> {
        let gamma_d = engineered_measurement_rate(sideband, 1.0)?;
        Self::new(nu, gamma_d, eta, duration)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0) || !(self.gamma_d > 0.0) || !(self.duration > 0.0) {
            return Err(Error::InvalidParameter("nu >= 0, Gamma_D > 0 and duration > 0 required".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta = {} outside [0, 1]", self.eta)));
        }
        if self.checkpoints.iter().any(|&t| !(0.0..=self.duration).contains(&t)) {
            return Err(Error::InvalidParameter("checkpoints must lie in [0, duration]".into()));
        }
        Ok(())
    }

    /// `Gamma_D >= 5 nu`.
    pub fn regime_ok(&self) -> bool {
        self.gamma_d >= 5.0 * self.nu
    }

    /// Predicted escape rate `nu^2 / Gamma_D`.
    pub fn escape_rate(&self) -> f64 {
        self.nu * self.nu / self.gamma_d
    }

    /// `min(0.25/Gamma_D, 0.01/nu)`, shrunk so that it divides the duration.
    pub fn step(&self) -> f64 {
        let target = if self.nu > 0.0 { (0.25 / self.gamma_d).min(0.01 / self.nu) } else { 0.25 / self.gamma_d };
        let n = (self.duration / target).ceil().max(1.0);
        self.duration / n
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZenoDragRun {
    /// Overlap `(1 + n(t).r)/2` with the pointer state at each checkpoint.
    pub overlaps: Vec<f64>,
    /// Final overlap at least 1/2.
    pub success: bool,
    pub regime_ok: bool,
    pub record: Option<TrajectoryRecord>,
}

fn axis(delta: f64) -> [f64; 3] {
    [delta.cos(), delta.sin(), 0.0]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Exact update of the Bloch vector `r` for record value `v` over `dt`.
///
/// The Kraus operator is `a I + b sigma_n` with
/// `a, b = (o+ +- o-)/2`, `o+- = exp(-(eta Gamma/2)(v -+ 1)^2 dt)`; the
/// unread fraction dephases the components normal to `n` by `exp(-(1-eta) Gamma dt)`.
pub fn zeno_kraus_update(r: &mut [f64; 3], n: &[f64; 3], v: f64, gamma: f64, eta: f64, dt: f64) {
    let k = 0.5 * eta * gamma * dt;
    // factor out the larger exponent to avoid underflow for strong steps
    let ep = -k * (v - 1.0).powi(2);
    let em = -k * (v + 1.0).powi(2);
    let top = ep.max(em);
    let (op, om) = ((ep - top).exp(), (em - top).exp());
    let a = 0.5 * (op + om);
    let b = 0.5 * (op - om);
    let nr = dot(n, r);
    let norm = a * a + b * b + 2.0 * a * b * nr;
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = ((a * a - b * b) * r[i] + 2.0 * a * b * n[i] + 2.0 * b * b * nr * n[i]) / norm;
    }
    let damp = (-(1.0 - eta) * gamma * dt).exp();
    let par = dot(n, &out);
    for i in 0..3 {
        r[i] = par * n[i] + damp * (out[i] - par * n[i]);
    }
}

/// Draws `V` from `p+ N(1, s^2) + p- N(-1, s^2)`, `s^2 = 1/(2 eta Gamma dt)`.
fn sample_record<N: NoiseSource>(noise: &mut N, step: u64, nr: f64, gamma: f64, eta: f64, dt: f64) -> f64 {
    let p_plus = 0.5 * (1.0 + nr);
    let branch = if noise.uniform(step) < p_plus { 1.0 } else { -1.0 };
    branch + noise.gaussian(step) / (2.0 * eta * gamma * dt).sqrt()
}

/// One dragged trajectory starting in the `+1` eigenstate of `sigma_x`.
pub fn zeno_drag<N: NoiseSource + Provenance>(cfg: &ZenoDragConfig, noise: &mut N) -> Result<ZenoDragRun> {
    cfg.validate()?;
    let dt = cfg.step();
    let steps = step_count(cfg.duration, dt)?;
    let mut r = [1.0, 0.0, 0.0];
    let mut checkpoints: Vec<(usize, usize)> =
        cfg.checkpoints.iter().enumerate().map(|(i, &t)| ((t / dt).round() as usize, i)).collect();
    checkpoints.sort();
    let mut overlaps = vec![0.0; cfg.checkpoints.len()];
    let mut next_cp = 0;
    let overlap = |r: &[f64; 3], t: f64| 0.5 * (1.0 + dot(&axis(cfg.nu * t), r));
    while next_cp < checkpoints.len() && checkpoints[next_cp].0 == 0 {
        overlaps[checkpoints[next_cp].1] = overlap(&r, 0.0);
        next_cp += 1;
    }
    let (master_seed, trajectory_index) = noise.provenance();
    let mut record = cfg.store.then(|| TrajectoryRecord {
        dt,
        times: Vec::with_capacity(steps),
        records: vec![Vec::with_capacity(steps)],
        increments: vec![Vec::new()],
        controller_log: Vec::new(),
        states: vec![DensityMatrix::from_bloch(1.0, 0.0, 0.0).expect("pure")],
        state_times: vec![0.0],
        master_seed,
        trajectory_index,
    });
    let thin = (steps / 1000).max(1);
    for k in 0..steps {
        let n = axis(cfg.nu * (k as f64 + 0.5) * dt);
        let t = (k + 1) as f64 * dt;
        if cfg.eta > 0.0 {
            let v = sample_record(noise, k as u64, dot(&n, &r), cfg.gamma_d, cfg.eta, dt);
            zeno_kraus_update(&mut r, &n, v, cfg.gamma_d, cfg.eta, dt);
            if let Some(rec) = record.as_mut() {
                rec.records[0].push(v);
            }
        } else {
            zeno_kraus_update(&mut r, &n, 0.0, cfg.gamma_d, 0.0, dt);
            if let Some(rec) = record.as_mut() {
                rec.records[0].push(f64::NAN);
            }
        }
        if !r.iter().all(|x| x.is_finite()) {
            return Err(Error::IntegrationUnstable { step: k, defect: f64::NAN });
        }
        while next_cp < checkpoints.len() && checkpoints[next_cp].0 == k + 1 {
            overlaps[checkpoints[next_cp].1] = overlap(&r, t);
            next_cp += 1;
        }
        if let Some(rec) = record.as_mut() {
            rec.times.push(t);
            if (k + 1) % thin == 0 || k + 1 == steps {
                let len = dot(&r, &r).sqrt().max(1.0);
                rec.states.push(DensityMatrix::from_bloch(r[0] / len, r[1] / len, r[2] / len)?);
                rec.state_times.push(t);
            }
        }
    }
    let final_overlap = overlap(&r, steps as f64 * dt);
    Ok(ZenoDragRun { overlaps, success: final_overlap >= 0.5, regime_ok: cfg.regime_ok(), record })
}

/// `R(t) = 2 S(t) - 1` at the checkpoints, `S` the fraction of `n`
/// trajectories whose overlap with the pointer state is at least 1/2.
pub fn zeno_retention(cfg: &ZenoDragConfig, n: usize, master_seed: u64, jobs: usize) -> Result<Vec<f64>> {
    let mut cfg = cfg.clone();
    cfg.store = false;
    let runs = run_ensemble(n, master_seed, jobs, |_, mut s| zeno_drag(&cfg, &mut s))?;
    let m = cfg.checkpoints.len();
    let mut counts = vec![0usize; m];
    for run in &runs {
        for (c, &o) in counts.iter_mut().zip(&run.overlaps) {
            if o >= 0.5 {
                *c += 1;
            }
        }
    }
    Ok(counts.iter().map(|&c| 2.0 * c as f64 / n as f64 - 1.0).collect())
}

/// Ensemble mean of `n(t).r` from the unconditioned Bloch equations
/// (dephasing at `Gamma_D` normal to the rotating axis), RK4 with step `dt`.
pub fn zeno_mean_alignment(cfg: &ZenoDragConfig, times: &[f64], dt: f64) -> Vec<f64> {
    // rotating frame: r_par' = nu r_perp, r_perp' = -nu r_par - Gamma r_perp
    let f = |x: [f64; 2]| [cfg.nu * x[1], -cfg.nu * x[0] - cfg.gamma_d * x[1]];
    let mut x = [1.0, 0.0];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t + 1e-12 < target {
            let h = dt.min(target - t);
            let k1 = f(x);
            let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]]);
            let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]]);
            let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]]);
            for i in 0..2 {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
        }
        out.push(x[0]);
    }
    out
}
