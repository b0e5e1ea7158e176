//! Kerr-cat stabilization by two-photon pumping and dissipation.
//!
//! The memory mode evolves under `-K a^dag^2 a^2 + eps2 (a^dag^2 + a^2)`
//! with collapse operator `sqrt(kappa2) (a^2 - alpha^2)`, `alpha^2 = eps2/K`,
//! and optional single-photon loss `sqrt(kappa1) a`. The coherent states
//! `|+-alpha>` are eigenstates of the Hamiltonian and dark states of the
//! two-photon dissipator.

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, cat_state, coherent_state, parity, CatParity, DensityMatrix, Operator, PureState, SpaceShape, C64,
};
use crate::models::{kerr_cat_hamiltonian, KerrCatParams};
use crate::sme::{LindbladModel, Propagator};

#[derive(Clone, Debug, PartialEq)]
pub struct KerrCatSetup {
    pub k: f64,
    pub eps2: f64,
    pub kappa2: f64,
    pub kappa1: f64,
    pub n_max: usize,
    pub duration: f64,
    pub sample_dt: f64,
}

impl KerrCatSetup {
    pub fn alpha(&self) -> Result<f64> {
        KerrCatParams::kerr(self.k, self.eps2).alpha()
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa2 >= 0.0) || !(self.kappa1 >= 0.0) {
            return Err(Error::InvalidParameter("loss rates must be >= 0".into()));
        }
        if !(self.duration > 0.0) || !(self.sample_dt > 0.0) {
            return Err(Error::InvalidParameter("duration and sample step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KerrCatRun {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Photon-number parity.
    pub parity: Vec<f64>,
    /// Weight in `span{|alpha>, |-alpha>}`.
    pub cat_weight: Vec<f64>,
    /// Which-well observable `|C+><C-| + |C-><C+|`.
    pub well: Vec<f64>,
}

pub fn kerr_cat_model(setup: &KerrCatSetup) -> Result<LindbladModel> {
    setup.validate()?;
    let alpha = setup.alpha()?;
    let h = kerr_cat_hamiltonian(setup.k, setup.eps2, setup.n_max)?;
    let a = annihilation(setup.n_max)?;
    let mut model = LindbladModel::new(h)?;
    if setup.kappa2 > 0.0 {
        let shift = Operator::identity(a.shape().clone()).scale(C64::new(alpha * alpha, 0.0));
        let l2 = &(&a * &a) - &shift;
        model = model.with_unmonitored(l2.scale(C64::new(setup.kappa2.sqrt(), 0.0)))?;
    }
    if setup.kappa1 > 0.0 {
        model = model.with_unmonitored(a.scale(C64::new(setup.kappa1.sqrt(), 0.0)))?;
    }
    Ok(model)
}

/// Largest `|H v - (eps2^2/K) v|` over `|alpha>`, `|-alpha>` truncated at `n_max`.
pub fn kerr_eigen_residual(k: f64, eps2: f64, n_max: usize) -> Result<f64> {
    let alpha = KerrCatParams::kerr(k, eps2).alpha()?;
    let h = kerr_cat_hamiltonian(k, eps2, n_max)?;
    let e = eps2 * eps2 / k;
    let mut worst = 0.0f64;
    for sign in [1.0, -1.0] {
        let v = coherent_state(C64::new(sign * alpha, 0.0), n_max)?;
        let v = v.amplitudes();
        worst = worst.max((h.matrix() * v - v * C64::new(e, 0.0)).norm());
    }
    Ok(worst)
}

fn cat_basis(alpha: f64, n_max: usize) -> Result<(PureState, PureState)> {
    let a = C64::new(alpha, 0.0);
    Ok((cat_state(a, CatParity::Even, n_max)?, cat_state(a, CatParity::Odd, n_max)?))
}

/// Evolves `rho0` (vacuum when `None`) and samples every `sample_dt`.
pub fn kerr_cat_stabilization(setup: &KerrCatSetup, rho0: Option<&DensityMatrix>) -> Result<KerrCatRun> {
    let model = kerr_cat_model(setup)?;
    let alpha = setup.alpha()?;
    let shape = SpaceShape::oscillator(setup.n_max)?;
    let start = match rho0 {
        Some(r) => r.clone(),
        None => DensityMatrix::basis(shape, 0)?,
    };
    let steps = (setup.duration / setup.sample_dt).round() as usize;
    let prop = Propagator::new(&model, setup.sample_dt)?;
    let states = prop.evolve(&start, steps)?;
    let p = parity(setup.n_max)?;
    let (cp, cm) = cat_basis(alpha, setup.n_max)?;
    let (vp, vm) = (cp.amplitudes(), cm.amplitudes());
    let mut run = KerrCatRun {
        times: (0..=steps).map(|k| k as f64 * setup.sample_dt).collect(),
        parity: Vec::with_capacity(states.len()),
        cat_weight: Vec::with_capacity(states.len()),
        well: Vec::with_capacity(states.len()),
        states: Vec::new(),
    };
    for r in &states {
        let m = r.matrix();
        run.parity.push((p.matrix() * m).trace().re);
        let pp = (vp.adjoint() * m * vp)[(0, 0)].re;
        let mm = (vm.adjoint() * m * vm)[(0, 0)].re;
        let pm = (vp.adjoint() * m * vm)[(0, 0)];
        run.cat_weight.push(pp + mm);
        run.well.push(2.0 * pm.re);
    }
    run.states = states;
    Ok(run)
}

/// Decay rate of `|y|` from a log-linear fit over samples with `t >= t0` and `|y| >= floor`.
pub fn decay_rate(times: &[f64], y: &[f64], t0: f64, floor: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        times.iter().zip(y).filter(|(t, v)| **t >= t0 && v.abs() >= floor).map(|(t, v)| (*t, v.abs().ln())).collect();
    if pts.len() < 3 {
        return Err(Error::FitFailed(format!("only {} usable samples", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}
