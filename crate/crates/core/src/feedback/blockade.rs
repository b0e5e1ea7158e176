//! Zeno blockade of a driven cavity.
//!
//! In the number-split regime a qubit drive resonant with the transition for
//! exactly `N` photons is modelled as `(Omega_R/2) sigma_x x |N><N|`. A strong
//! selective drive splits level `N` and the coherent cavity drive
//! `eps (a + a^dag)` can no longer climb past it.

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, check_truncation, embed, partial_trace, pauli, tensor, Axis, DensityMatrix, Operator, SpaceShape, C64,
};
use crate::sme::{LindbladModel, Propagator};

#[derive(Clone, Debug, PartialEq)]
pub struct BlockadeConfig {
    /// Blocked Fock level `N`.
    pub n_block: usize,
    /// Selective qubit drive; 0 switches the blockade off.
    pub omega_r: f64,
    /// Qubit decay rate.
    pub gamma: f64,
    /// Cavity drive amplitude.
    pub epsilon: f64,
    pub kappa: f64,
    pub n_max: usize,
    pub duration: f64,
    /// Spacing of the returned states.
    pub sample_dt: f64,
}

impl Default for BlockadeConfig {
    fn default() -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        BlockadeConfig {
            n_block: 3,
            omega_r: tau * 6.23,
            gamma: tau * 0.77,
            epsilon: tau * 0.05,
            kappa: 0.0,
            n_max: 8,
            duration: 10.0,
            sample_dt: 0.05,
        }
    }
}

impl BlockadeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("Omega_R", self.omega_r), ("gamma", self.gamma), ("kappa", self.kappa)] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {x} must be >= 0")));
            }
        }
        if !self.epsilon.is_finite() || !(self.duration > 0.0) || !(self.sample_dt > 0.0) {
            return Err(Error::InvalidParameter("drive, duration and sample step must be finite and positive".into()));
        }
        if self.omega_r > 0.0 {
            if self.n_max < self.n_block + 4 {
                return Err(Error::TruncationInadequate {
                    alpha: (self.n_block as f64).sqrt(),
                    required: self.n_block + 4,
                    n_max: self.n_max,
                });
            }
        } else {
            // a free drive reaches |alpha| = eps t
            check_truncation(self.epsilon.abs() * self.duration, self.n_max)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockadeRun {
    pub times: Vec<f64>,
    /// Reduced cavity states.
    pub cavity: Vec<DensityMatrix>,
}

impl BlockadeRun {
    /// Population of Fock levels `>= n` at each time.
    pub fn weight_at_or_above(&self, n: usize) -> Vec<f64> {
        self.cavity.iter().map(|r| (n..r.dim()).map(|k| r.population(k)).sum()).collect()
    }
}

pub fn blockade_model(cfg: &BlockadeConfig) -> Result<LindbladModel> {
    cfg.validate()?;
    let shape = SpaceShape::new(vec![2, cfg.n_max + 1])?;
    let a = embed(&annihilation(cfg.n_max)?, 1, &shape)?;
    let mut h = (&a + &a.dagger()).scale(C64::new(cfg.epsilon, 0.0));
    if cfg.omega_r > 0.0 {
        let proj = Operator::diagonal(
            SpaceShape::oscillator(cfg.n_max)?,
            &(0..=cfg.n_max).map(|k| if k == cfg.n_block { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
        )?;
        let drive = tensor(&[&pauli(Axis::X), &proj])?.scale(C64::new(0.5 * cfg.omega_r, 0.0));
        h = &h + &drive;
    }
    let mut model = LindbladModel::new(h)?;
    if cfg.gamma > 0.0 {
        let sm = embed(&pauli(Axis::Minus), 0, &shape)?;
        model = model.with_unmonitored(sm.scale(C64::new(cfg.gamma.sqrt(), 0.0)))?;
    }
    if cfg.kappa > 0.0 {
        model = model.with_unmonitored(a.scale(C64::new(cfg.kappa.sqrt(), 0.0)))?;
    }
    Ok(model)
}

/// Evolution from `|g>|0>`; returns the cavity state every `sample_dt`.
pub fn zeno_blockade(cfg: &BlockadeConfig) -> Result<BlockadeRun> {
    let model = blockade_model(cfg)?;
    let steps = (cfg.duration / cfg.sample_dt).round() as usize;
    let prop = Propagator::new(&model, cfg.sample_dt)?;
    // qubit basis (|e>, |g>): |g>|0> has index n_max + 1
    let rho0 = DensityMatrix::basis(model.shape().clone(), cfg.n_max + 1)?;
    let states = prop.evolve(&rho0, steps)?;
    let cavity = states.iter().map(|r| partial_trace(r, &[1])).collect::<Result<Vec<_>>>()?;
    let times = (0..=steps).map(|k| k as f64 * cfg.sample_dt).collect();
    Ok(BlockadeRun { times, cavity })
}
