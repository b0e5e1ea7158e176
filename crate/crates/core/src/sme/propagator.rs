//! Exact propagation of time-independent master equations through the
//! matrix exponential of the Liouvillian.
//!
//! Hermitian operators are coordinatized by `n^2` reals: the diagonal, then
//! for each `i < j` the pair `(Re rho_ij, Im rho_ij)`. The Liouvillian maps
//! Hermitian to Hermitian, so it becomes a real `n^2 x n^2` matrix.

use nalgebra::{DMatrix, DVector};

use super::{Generator, LindbladModel};
use crate::error::{Error, Result};
use crate::hilbert::{hermitize, DensityMatrix, SpaceShape, C64};

/// Largest Hilbert dimension accepted for dense Liouvillians.
pub const MAX_PROPAGATOR_DIM: usize = 40;

fn coords(m: &DMatrix<C64>) -> DVector<f64> {
    let n = m.nrows();
    let mut v = DVector::zeros(n * n);
    for i in 0..n {
        v[i] = m[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            v[k] = m[(i, j)].re;
            v[k + 1] = m[(i, j)].im;
            k += 2;
        }
    }
    v
}

fn from_coords(v: &DVector<f64>, n: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = C64::new(v[k], v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

fn basis_element(k: usize, n: usize) -> DMatrix<C64> {
    let mut v = DVector::zeros(n * n);
    v[k] = 1.0;
    from_coords(&v, n)
}

/// Real Liouvillian in Hermitian coordinates at time `t`.
pub fn liouvillian(model: &LindbladModel, t: f64) -> Result<DMatrix<f64>> {
    let n = model.shape().total();
    if n > MAX_PROPAGATOR_DIM {
        return Err(Error::InvalidShape(format!(
            "dimension {n} exceeds dense Liouvillian limit {MAX_PROPAGATOR_DIM}"
        )));
    }
    let gen = Generator::for_model(model, t);
    let mut l = DMatrix::zeros(n * n, n * n);
    for k in 0..n * n {
        let img = gen.apply(&basis_element(k, n));
        l.set_column(k, &coords(&hermitize(&img)));
    }
    Ok(l)
}

/// `exp(L dt)` for a time-independent model.
#[derive(Clone, Debug)]
pub struct Propagator {
    shape: SpaceShape,
    dt: f64,
    map: DMatrix<f64>,
}

impl Propagator {
    pub fn new(model: &LindbladModel, dt: f64) -> Result<Self> {
        if model.is_time_dependent() {
            return Err(Error::InvalidParameter("propagator needs a time-independent model".into()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        let l = liouvillian(model, 0.0)?;
        let map = (l * dt).exp();
        Ok(Propagator { shape: model.shape().clone(), dt, map })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.shape() != &self.shape {
            return Err(Error::ShapeMismatch(format!("{} vs {}", rho.shape(), self.shape)));
        }
        let v = &self.map * coords(rho.matrix());
        let mut m = from_coords(&v, rho.dim());
        DensityMatrix::normalize_matrix(&mut m);
        Ok(DensityMatrix::from_matrix_unchecked(self.shape.clone(), m))
    }

    /// States at `0, dt, 2 dt, ...` up to `steps * dt`.
    pub fn evolve(&self, rho0: &DensityMatrix, steps: usize) -> Result<Vec<DensityMatrix>> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(rho0.clone());
        for _ in 0..steps {
            let next = self.apply(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Steady state from the null space of the Liouvillian (unit trace imposed).
pub fn steady_state(model: &LindbladModel) -> Result<DensityMatrix> {
    let n = model.shape().total();
    let mut l = liouvillian(model, 0.0)?;
    // replace the first row with the trace functional
    for k in 0..n * n {
        l[(0, k)] = if k < n { 1.0 } else { 0.0 };
    }
    let mut rhs = DVector::zeros(n * n);
    rhs[0] = 1.0;
    let x = l
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("steady state is not unique".into()))?;
    let mut m = from_coords(&x, n);
    DensityMatrix::normalize_matrix(&mut m);
    Ok(DensityMatrix::from_matrix_unchecked(model.shape().clone(), m))
}
