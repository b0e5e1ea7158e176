//! Trajectory loop, controller hook, ensembles.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::noise::{NoiseSource, WienerStream};
use super::{check_rk4_step, finish_ito, ito_increment, rk4, step_count, Engine, LindbladModel};
use crate::error::{Error, Result};
use crate::feedback::{apply_feedback_mat, feedback_ito_terms, FeedbackLaw, FeedbackSignal};
use crate::hilbert::{exp_hermitian, hermitize, DensityMatrix, Operator, SpaceShape, C64};

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Normalized Kraus update; positivity preserving.
    #[default]
    Povm,
    /// Euler-Maruyama on the Ito SME.
    Ito,
    /// RK4 on the unconditioned master equation (records still synthesized).
    Lindblad,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    /// Store the full state every `thinning` steps (and at the end).
    pub thinning: usize,
    pub store_records: bool,
    pub integrator: Integrator,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { thinning: 10, store_records: true, integrator: Integrator::Povm }
    }
}

/// What a controller sees after the measurement update of a step.
#[derive(Debug)]
pub struct Observation<'a> {
    pub step: usize,
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub state: &'a DensityMatrix,
    /// Record values `V` (NaN for channels with zero efficiency).
    pub records: &'a [f64],
    /// Record increments `dr`.
    pub dr: &'a [f64],
    /// Wiener increments.
    pub dw: &'a [f64],
}

/// Controller output for one step.
#[derive(Clone, Debug, Default)]
pub struct ControlAction {
    /// Hermitian generator `G`; the state is conjugated by `exp(-i G)` now.
    pub kick: Option<Operator>,
    /// Extra Hamiltonian applied from the next step on (replaces the previous one).
    pub drive: Option<Operator>,
    /// New amplification angles for the channels, from the next step on.
    pub phases: Option<Vec<f64>>,
    /// Values appended to the controller log.
    pub log: Vec<f64>,
}

/// Feedback hook invoked by [`simulate_trajectory`].
pub trait Controller {
    /// Proportional law for the step starting at `t`, evaluated on the
    /// pre-step state. With the Ito integrator the law enters the same Euler
    /// step as the measurement; otherwise it is applied as a unitary right
    /// after the measurement update.
    fn law(&mut self, _t: f64, _state: &DensityMatrix) -> Option<FeedbackLaw> {
        None
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<ControlAction>;
}

/// One seeded run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub dt: f64,
    /// End time of every step.
    pub times: Vec<f64>,
    /// `records[channel][step]`.
    pub records: Vec<Vec<f64>>,
    /// `increments[channel][step]`.
    pub increments: Vec<Vec<f64>>,
    /// One entry per step (empty without a controller).
    pub controller_log: Vec<Vec<f64>>,
    pub states: Vec<DensityMatrix>,
    pub state_times: Vec<f64>,
    pub master_seed: Option<u64>,
    pub trajectory_index: Option<u64>,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("initial state is always stored")
    }

    pub fn n_steps(&self) -> usize {
        self.times.len()
    }
}

/// Seed provenance for noise sources that have one.
pub trait Provenance {
    fn provenance(&self) -> (Option<u64>, Option<u64>) {
        (None, None)
    }
}

impl Provenance for WienerStream {
    fn provenance(&self) -> (Option<u64>, Option<u64>) {
        (Some(self.master_seed()), Some(self.trajectory_index()))
    }
}

impl Provenance for super::noise::ReplayNoise {}

fn record_values(engine: &Engine<'_>, dr: &[f64], out: &mut [f64]) {
    for (k, ch) in engine.channels.iter().enumerate() {
        out[k] = if ch.eta() > 0.0 {
            dr[k] / (2.0 * ch.eta().sqrt() * ch.record_scale() * engine.dt())
        } else {
            f64::NAN
        };
    }
}

fn conjugate_kick(rho: &mut DMatrix<C64>, g: &Operator) {
    let u = exp_hermitian(g.matrix(), C64::new(0.0, -1.0));
    let next = &u * &*rho * u.adjoint();
    *rho = hermitize(&next);
}

/// Runs one trajectory from `rho0` for `round(duration/dt)` steps.
///
/// Within a step: records are formed from the pre-step state, then the
/// measurement update, unmonitored decay and Hamiltonian act, then the
/// controller observes the post-step state and its kick is applied.
pub fn simulate_trajectory<N: NoiseSource + Provenance>(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    duration: f64,
    dt: f64,
    noise: &mut N,
    mut controller: Option<&mut dyn Controller>,
    opts: &SimOptions,
) -> Result<TrajectoryRecord> {
    if rho0.shape() != model.shape() {
        return Err(Error::ShapeMismatch(format!("state {} vs model {}", rho0.shape(), model.shape())));
    }
    let n = step_count(duration, dt)?;
    if opts.integrator != Integrator::Povm {
        check_rk4_step(model.max_rate(), dt)?;
    }
    let nch = model.channels().len();
    let thin = opts.thinning.max(1);
    let shape: SpaceShape = model.shape().clone();
    let mut engine = Engine::new(model, dt)?;
    let mut state = rho0.clone();
    let (master_seed, trajectory_index) = noise.provenance();

    let mut rec = TrajectoryRecord {
        dt,
        times: Vec::with_capacity(n),
        records: vec![Vec::with_capacity(if opts.store_records { n } else { 0 }); nch],
        increments: vec![Vec::with_capacity(if opts.store_records { n } else { 0 }); nch],
        controller_log: Vec::with_capacity(n),
        states: vec![rho0.clone()],
        state_times: vec![0.0],
        master_seed,
        trajectory_index,
    };

    let mut dw = vec![0.0; nch];
    let mut dr = vec![0.0; nch];
    let mut v = vec![0.0; nch];
    let mut cached_gen = None;
    for step in 0..n {
        let t = step as f64 * dt;
        engine.prepare(t);
        let law = match controller.as_deref_mut() {
            Some(c) => c.law(t, &state),
            None => None,
        };
        for (i, w) in dw.iter_mut().enumerate() {
            *w = noise.increment((step * nch + i) as u64, dt);
        }
        let result: Result<()> = (|| {
            let m = state.matrix_mut();
            match opts.integrator {
                Integrator::Povm => {
                    engine.povm_step(m, t, &dw, &mut dr)?;
                    if let Some(law) = &law {
                        let signal = match law.signal() {
                            FeedbackSignal::Innovation => &dw,
                            FeedbackSignal::Record => &dr,
                        };
                        apply_feedback_mat(m, law, signal, dt)?;
                    }
                }
                Integrator::Ito => {
                    engine.records(m, &dw, &mut dr);
                    if cached_gen.is_none() || model.is_time_dependent() || engine.drive.is_some() {
                        cached_gen = Some(engine.generator(t));
                    }
                    let gen = cached_gen.as_ref().expect("generator built");
                    let mut next = &*m + ito_increment(gen, &engine.channels, m, &dw, dt);
                    if let Some(law) = &law {
                        next += feedback_ito_terms(law, &engine.channels, m, &dw, dt)?;
                    }
                    let (out, _) = finish_ito(next)?;
                    *m = out;
                }
                Integrator::Lindblad => {
                    engine.records(m, &dw, &mut dr);
                    if cached_gen.is_none() || model.is_time_dependent() || engine.drive.is_some() {
                        cached_gen = Some(engine.generator(t));
                    }
                    let gen = cached_gen.as_ref().expect("generator built");
                    *m = hermitize(&rk4(gen, m, dt));
                }
            }
            Ok(())
        })();
        result.map_err(|e| e.at_step(step))?;

        record_values(&engine, &dr, &mut v);
        let t_end = (step + 1) as f64 * dt;
        let mut log = Vec::new();
        if let Some(c) = controller.as_deref_mut() {
            let obs = Observation { step, t: t_end, dt, state: &state, records: &v, dr: &dr, dw: &dw };
            let action = c.observe(&obs).map_err(|e| e.at_step(step))?;
            if let Some(g) = &action.kick {
                if g.shape() != &shape {
                    return Err(Error::ShapeMismatch("controller kick".into()).at_step(step));
                }
                conjugate_kick(state.matrix_mut(), g);
            }
            if let Some(d) = action.drive {
                engine.drive = Some(d.into_matrix());
                cached_gen = None;
            }
            if let Some(phases) = action.phases {
                for (ch, p) in engine.channels.iter_mut().zip(phases) {
                    ch.set_phi(p);
                }
            }
            log = action.log;
        }

        rec.times.push(t_end);
        rec.controller_log.push(log);
        if opts.store_records {
            for i in 0..nch {
                rec.records[i].push(v[i]);
                rec.increments[i].push(dw[i]);
            }
        }
        if (step + 1) % thin == 0 || step + 1 == n {
            rec.states.push(state.clone());
            rec.state_times.push(t_end);
        }
    }
    Ok(rec)
}

/// Runs `n` independent trajectories on `jobs` worker threads (0 = rayon
/// default). Trajectory `i` receives `WienerStream::new(master_seed, i)`;
/// results come back in index order, so reductions over them do not depend
/// on scheduling.
pub fn run_ensemble<T, F>(n: usize, master_seed: u64, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, WienerStream) -> Result<T> + Sync + Send,
{
    let work = || -> Vec<Result<T>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| f(i, WienerStream::new(master_seed, i)).map_err(|e| Error::InTrajectory { index: i, source: Box::new(e) }))
            .collect()
    };
    let results = if jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work)
    };
    results.into_iter().collect()
}

/// Pointwise running sum of stored states over aligned time grids.
#[derive(Clone, Debug)]
pub struct EnsembleMean {
    shape: Option<SpaceShape>,
    times: Vec<f64>,
    sums: Vec<DMatrix<C64>>,
    purity_sums: Vec<f64>,
    count: usize,
}

impl Default for EnsembleMean {
    fn default() -> Self {
        Self::new()
    }
}

impl EnsembleMean {
    pub fn new() -> Self {
        EnsembleMean { shape: None, times: Vec::new(), sums: Vec::new(), purity_sums: Vec::new(), count: 0 }
    }

    pub fn add_states(&mut self, times: &[f64], states: &[DensityMatrix]) -> Result<()> {
        if times.len() != states.len() || states.is_empty() {
            return Err(Error::MisalignedGrids("times and states differ in length".into()));
        }
        if self.count == 0 {
            self.shape = Some(states[0].shape().clone());
            self.times = times.to_vec();
            self.sums = states.iter().map(|s| s.matrix().clone()).collect();
            self.purity_sums = states.iter().map(|s| s.purity()).collect();
        } else {
            if times.len() != self.times.len()
                || times.iter().zip(&self.times).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs()))
            {
                return Err(Error::MisalignedGrids(format!(
                    "grid of {} points does not match {} points",
                    times.len(),
                    self.times.len()
                )));
            }
            if Some(states[0].shape()) != self.shape.as_ref() {
                return Err(Error::ShapeMismatch("ensemble member shape".into()));
            }
            for (k, s) in states.iter().enumerate() {
                self.sums[k] += s.matrix();
                self.purity_sums[k] += s.purity();
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn add(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        self.add_states(&rec.state_times, &rec.states)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mean(&self) -> Result<Vec<DensityMatrix>> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("empty ensemble".into()));
        }
        let shape = self.shape.clone().expect("shape set with first member");
        let w = C64::new(1.0 / self.count as f64, 0.0);
        Ok(self
            .sums
            .iter()
            .map(|s| DensityMatrix::from_matrix_unchecked(shape.clone(), hermitize(&(s * w))))
            .collect())
    }

    /// Mean purity of the members at each stored time.
    pub fn mean_purity(&self) -> Vec<f64> {
        self.purity_sums.iter().map(|p| p / self.count.max(1) as f64).collect()
    }
}

/// Pointwise mean of the stored states.
pub fn ensemble_average(records: &[TrajectoryRecord]) -> Result<Vec<DensityMatrix>> {
    let mut acc = EnsembleMean::new();
    for r in records {
        acc.add(r)?;
    }
    acc.mean()
}
