//! Dense complex linear algebra on small composite Hilbert spaces.
//!
//! Conventions used throughout the crate:
//!
//! * `hbar = 1`, angular frequencies in rad/us, time in us.
//! * The qubit basis is ordered `(|e>, |g>)`, so `sigma_z |e> = +|e>` and the
//!   qubit ket at index 0 is the excited state.
//! * Composite spaces are ordered left to right with the leftmost subsystem
//!   as the slowest-varying index of the Kronecker product.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default bound on the total Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 4096;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Ordered subsystem dimensions of a composite space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceShape {
    dims: Vec<usize>,
}

impl SpaceShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        Self::with_cap(dims, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(dims: Vec<usize>, cap: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidShape("no subsystems".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidShape(format!("subsystem dimension {d} < 2")));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape("dimension overflow".into()))?;
        if total > cap {
            return Err(Error::InvalidShape(format!("total dimension {total} exceeds cap {cap}")));
        }
        Ok(SpaceShape { dims })
    }

    pub fn qubit() -> Self {
        SpaceShape { dims: vec![2] }
    }

    /// A single truncated oscillator with Fock levels `0..=n_max`.
    pub fn oscillator(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidTruncation(n_max));
        }
        Self::new(vec![n_max + 1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn concat(&self, other: &SpaceShape) -> Result<SpaceShape> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        SpaceShape::new(dims)
    }
}

impl fmt::Display for SpaceShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Dense square matrix on a composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    shape: SpaceShape,
    data: DMatrix<C64>,
}

impl Operator {
    pub fn new(shape: SpaceShape, data: DMatrix<C64>) -> Result<Self> {
        let n = shape.total();
        if data.nrows() != n || data.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{}, shape {} needs {n}x{n}",
                data.nrows(),
                data.ncols(),
                shape
            )));
        }
        Ok(Operator { shape, data })
    }

    pub(crate) fn from_parts(shape: SpaceShape, data: DMatrix<C64>) -> Self {
        debug_assert_eq!(data.nrows(), shape.total());
        Operator { shape, data }
    }

    pub fn from_fn(shape: SpaceShape, f: impl FnMut(usize, usize) -> C64) -> Self {
        let n = shape.total();
        Operator { data: DMatrix::from_fn(n, n, f), shape }
    }

    pub fn identity(shape: SpaceShape) -> Self {
        let n = shape.total();
        Operator { data: DMatrix::identity(n, n), shape }
    }

    pub fn zeros(shape: SpaceShape) -> Self {
        let n = shape.total();
        Operator { data: DMatrix::zeros(n, n), shape }
    }

    /// Diagonal operator with real entries.
    pub fn diagonal(shape: SpaceShape, diag: &[f64]) -> Result<Self> {
        if diag.len() != shape.total() {
            return Err(Error::ShapeMismatch(format!(
                "{} diagonal entries for shape {}",
                diag.len(),
                shape
            )));
        }
        Ok(Operator::from_fn(shape, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO }))
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[(row, col)]
    }

    pub fn dagger(&self) -> Operator {
        Operator { shape: self.shape.clone(), data: self.data.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Operator { shape: self.shape.clone(), data: &self.data * factor }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.data.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (i..n).all(|j| (self.data[(i, j)] - self.data[(j, i)].conj()).norm() <= tol))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.data.adjoint() * &self.data;
        let n = self.dim();
        (0..n).all(|i| {
            (0..n).all(|j| {
                let target = if i == j { ONE } else { ZERO };
                (prod[(i, j)] - target).norm() <= tol
            })
        })
    }

    /// Maximum elementwise distance.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.data.iter().zip(other.data.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        check_same(&self.shape, &other.shape)?;
        Ok(Operator { shape: self.shape.clone(), data: &self.data * &other.data })
    }

    pub fn try_add(&self, other: &Operator) -> Result<Operator> {
        check_same(&self.shape, &other.shape)?;
        Ok(Operator { shape: self.shape.clone(), data: &self.data + &other.data })
    }

    /// `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> Operator {
        Operator { shape: self.shape.clone(), data: hermitize(&self.data) }
    }

    /// Eigen-decomposition of a Hermitian operator: ascending eigenvalues and
    /// the unitary whose columns are the eigenvectors.
    pub fn eigh(&self) -> (Vec<f64>, DMatrix<C64>) {
        eigh(&self.data)
    }

    /// `exp(factor * H)` for Hermitian `H`.
    pub fn exp_hermitian(&self, factor: C64) -> Operator {
        Operator { shape: self.shape.clone(), data: exp_hermitian(&self.data, factor) }
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        check_same(&self.shape, &state.shape)?;
        Ok(PureState { shape: self.shape.clone(), amps: &self.data * &state.amps })
    }
}

impl Add for &Operator {
    type Output = Operator;
    /// Panics when the shapes differ; see [`Operator::try_add`].
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator shapes must match")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.shape, rhs.shape, "operator shapes must match");
        Operator { shape: self.shape.clone(), data: &self.data - &rhs.data }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operator shapes must match")
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator { shape: self.shape.clone(), data: &self.data * C64::new(rhs, 0.0) }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { shape: self.shape.clone(), data: -&self.data }
    }
}

fn check_same(a: &SpaceShape, b: &SpaceShape) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{a} vs {b}")));
    }
    Ok(())
}

pub(crate) fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub(crate) fn eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    if n == 2 {
        return eigh2(m);
    }
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Closed-form Hermitian 2x2 eigen-decomposition.
fn eigh2(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = (half * half + b.norm_sqr()).sqrt();
    let (lo, hi) = (mean - r, mean + r);
    if b.norm() <= 1e-300 {
        return if a <= d {
            (vec![a, d], DMatrix::identity(2, 2))
        } else {
            (vec![d, a], DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]))
        };
    }
    // Column for eigenvalue hi: (b, hi - a); for lo: (lo - d, conj(b)) orthogonalized.
    let v_hi = {
        let x = b;
        let y = C64::new(hi - a, 0.0);
        let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
        (x / n, y / n)
    };
    // Orthogonal complement of (p, q) is (-conj(q), conj(p)).
    let v_lo = (-v_hi.1.conj(), v_hi.0.conj());
    let vecs = DMatrix::from_row_slice(2, 2, &[v_lo.0, v_hi.0, v_lo.1, v_hi.1]);
    (vec![lo, hi], vecs)
}

pub(crate) fn exp_hermitian(m: &DMatrix<C64>, factor: C64) -> DMatrix<C64> {
    let (vals, vecs) = eigh(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let e = (factor * v).exp();
        for i in 0..n {
            scaled[(i, j)] *= e;
        }
    }
    scaled * vecs.adjoint()
}

/// Qubit Pauli and ladder operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
    /// `sigma^+ = (sigma_x + i sigma_y)/2 = |e><g|`.
    Plus,
    /// `sigma^- = |g><e|`.
    Minus,
}

pub fn pauli(axis: Axis) -> Operator {
    let z = ZERO;
    let o = ONE;
    let entries = match axis {
        Axis::X => [z, o, o, z],
        Axis::Y => [z, -I, I, z],
        Axis::Z => [o, z, z, -o],
        Axis::Plus => [z, o, z, z],
        Axis::Minus => [z, z, o, z],
    };
    Operator::from_parts(SpaceShape::qubit(), DMatrix::from_row_slice(2, 2, &entries))
}

/// `sigma_x cos(delta) + sigma_y sin(delta)`.
pub fn sigma_in_plane(delta: f64) -> Operator {
    let e = C64::from_polar(1.0, -delta);
    Operator::from_parts(
        SpaceShape::qubit(),
        DMatrix::from_row_slice(2, 2, &[ZERO, e, e.conj(), ZERO]),
    )
}

/// Truncated annihilation operator on Fock levels `0..=n_max`.
pub fn annihilation(n_max: usize) -> Result<Operator> {
    let shape = SpaceShape::oscillator(n_max)?;
    Ok(Operator::from_fn(shape, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    }))
}

pub fn number(n_max: usize) -> Result<Operator> {
    let shape = SpaceShape::oscillator(n_max)?;
    let diag: Vec<f64> = (0..=n_max).map(|n| n as f64).collect();
    Operator::diagonal(shape, &diag)
}

/// Photon-number parity `exp(i pi a^dagger a)`.
pub fn parity(n_max: usize) -> Result<Operator> {
    let shape = SpaceShape::oscillator(n_max)?;
    let diag: Vec<f64> = (0..=n_max).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
    Operator::diagonal(shape, &diag)
}

pub fn identity(dim: usize) -> Result<Operator> {
    Ok(Operator::identity(SpaceShape::new(vec![dim])?))
}

/// Kronecker product; the first operand is the slowest-varying index.
pub fn tensor(ops: &[&Operator]) -> Result<Operator> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| Error::InvalidShape("tensor of zero operands".into()))?;
    let mut acc = (*first).clone();
    for op in rest {
        let shape = acc.shape.concat(&op.shape)?;
        acc = Operator { data: acc.data.kronecker(&op.data), shape };
    }
    Ok(acc)
}

/// Lifts `op` acting on subsystem `index` of `shape` into the full space.
pub fn embed(op: &Operator, index: usize, shape: &SpaceShape) -> Result<Operator> {
    let dims = shape.dims();
    if index >= dims.len() {
        return Err(Error::ShapeMismatch(format!("subsystem {index} out of range for {shape}")));
    }
    if op.dim() != dims[index] || op.shape.n_subsystems() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "operator of shape {} cannot act on subsystem {index} of {shape}",
            op.shape
        )));
    }
    let ids: Vec<Operator> =
        dims.iter().map(|&d| Operator::identity(SpaceShape { dims: vec![d] })).collect();
    let refs: Vec<&Operator> =
        (0..dims.len()).map(|k| if k == index { op } else { &ids[k] }).collect();
    tensor(&refs)
}

pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_same(&a.shape, &b.shape)?;
    Ok(Operator { shape: a.shape.clone(), data: &a.data * &b.data - &b.data * &a.data })
}

pub fn dagger(a: &Operator) -> Operator {
    a.dagger()
}

/// `Tr(X rho)`.
pub fn expectation(x: &Operator, rho: &DensityMatrix) -> Result<C64> {
    check_same(&x.shape, rho.shape())?;
    Ok(trace_product(&x.data, rho.matrix()))
}

/// `Tr(A B)` without forming the product.
pub(crate) fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    shape: SpaceShape,
    amps: DVector<C64>,
}

impl PureState {
    /// Requires unit norm within `1e-9`.
    pub fn new(shape: SpaceShape, amps: DVector<C64>) -> Result<Self> {
        if amps.len() != shape.total() {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for shape {shape}",
                amps.len()
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("state norm {norm} != 1")));
        }
        Ok(PureState { shape, amps })
    }

    /// Normalizes the given amplitudes.
    pub fn normalized(shape: SpaceShape, amps: DVector<C64>) -> Result<Self> {
        let norm = amps.norm();
        if norm <= 1e-300 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        PureState::new(shape, amps / C64::new(norm, 0.0))
    }

    pub fn basis(shape: SpaceShape, index: usize) -> Result<Self> {
        let n = shape.total();
        if index >= n {
            return Err(Error::ShapeMismatch(format!("basis index {index} >= {n}")));
        }
        let mut amps = DVector::zeros(n);
        amps[index] = ONE;
        Ok(PureState { shape, amps })
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        check_same(&self.shape, &other.shape)?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let shape = self.shape.concat(&other.shape)?;
        Ok(PureState { amps: self.amps.kronecker(&other.amps), shape })
    }

    pub fn to_density(&self) -> DensityMatrix {
        let data = &self.amps * self.amps.adjoint();
        DensityMatrix { op: Operator { shape: self.shape.clone(), data } }
    }
}

/// Unit-trace, Hermitian, positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

pub const STATE_TOL: f64 = 1e-9;

impl DensityMatrix {
    /// Validates trace, Hermiticity and positivity within `1e-9`.
    pub fn new(op: Operator) -> Result<Self> {
        let tr = op.trace();
        if (tr - ONE).norm() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        if !op.is_hermitian(STATE_TOL) {
            return Err(Error::InvalidState("not Hermitian".into()));
        }
        let (vals, _) = op.eigh();
        if vals[0] < -STATE_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {}", vals[0])));
        }
        Ok(DensityMatrix { op })
    }

    pub(crate) fn from_matrix_unchecked(shape: SpaceShape, data: DMatrix<C64>) -> Self {
        DensityMatrix { op: Operator::from_parts(shape, data) }
    }

    /// Symmetrizes and rescales to unit trace.
    pub(crate) fn normalize_matrix(data: &mut DMatrix<C64>) -> f64 {
        let n = data.nrows();
        let tr = (0..n).map(|i| data[(i, i)].re).sum::<f64>();
        let inv = 1.0 / tr;
        for i in 0..n {
            for j in i..n {
                let v = (data[(i, j)] + data[(j, i)].conj()) * (0.5 * inv);
                data[(i, j)] = v;
                data[(j, i)] = v.conj();
            }
        }
        tr
    }

    pub fn maximally_mixed(shape: SpaceShape) -> Self {
        let n = shape.total();
        let data = DMatrix::identity(n, n) * C64::new(1.0 / n as f64, 0.0);
        DensityMatrix { op: Operator { shape, data } }
    }

    pub fn basis(shape: SpaceShape, index: usize) -> Result<Self> {
        Ok(PureState::basis(shape, index)?.to_density())
    }

    /// Qubit state with the given Bloch vector; requires length at most one.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let r2 = x * x + y * y + z * z;
        if r2 > 1.0 + STATE_TOL {
            return Err(Error::InvalidState(format!("Bloch vector length^2 {r2} > 1")));
        }
        let data = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.5 * (1.0 + z), 0.0),
                C64::new(0.5 * x, -0.5 * y),
                C64::new(0.5 * x, 0.5 * y),
                C64::new(0.5 * (1.0 - z), 0.0),
            ],
        );
        Ok(DensityMatrix::from_matrix_unchecked(SpaceShape::qubit(), data))
    }

    pub fn as_operator(&self) -> &Operator {
        &self.op
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.op.data
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.op.data
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.op.shape
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn purity(&self) -> f64 {
        trace_product(self.matrix(), self.matrix()).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.op.eigh().0[0]
    }

    /// Checks the density-matrix invariants within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        (self.trace() - 1.0).abs() <= tol && self.op.is_hermitian(tol) && self.min_eigenvalue() >= -tol
    }

    /// Population of basis state `index`.
    pub fn population(&self, index: usize) -> f64 {
        self.matrix()[(index, index)].re
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let op = tensor(&[&self.op, &other.op])?;
        Ok(DensityMatrix { op })
    }

    /// Conjugation `U rho U^dagger`.
    pub fn conjugate(&self, u: &Operator) -> Result<DensityMatrix> {
        check_same(&u.shape, self.shape())?;
        let data = &u.data * self.matrix() * u.data.adjoint();
        Ok(DensityMatrix::from_matrix_unchecked(self.shape().clone(), data))
    }

    /// Trace distance `||rho - sigma||_1 / 2`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        check_same(self.shape(), other.shape())?;
        let diff = self.matrix() - other.matrix();
        let (vals, _) = eigh(&diff);
        Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
    }
}

/// Reduced state on the subsystems listed in `keep` (any order; the result
/// keeps the original subsystem order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let dims = rho.shape().dims();
    if keep.is_empty() {
        return Err(Error::ShapeMismatch("partial trace keeps no subsystem".into()));
    }
    let mut keep_sorted: Vec<usize> = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if let Some(&bad) = keep_sorted.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::ShapeMismatch(format!("subsystem {bad} out of range for {}", rho.shape())));
    }
    let kept_dims: Vec<usize> = keep_sorted.iter().map(|&k| dims[k]).collect();
    let kept_total: usize = kept_dims.iter().product();
    let traced_total = rho.dim() / kept_total;

    // full index for each (traced, kept) pair
    let mut table = vec![0usize; rho.dim()];
    for (full, slot) in table.iter_mut().enumerate() {
        let mut rem = full;
        let mut digits = vec![0usize; dims.len()];
        for (pos, &d) in dims.iter().enumerate().rev() {
            digits[pos] = rem % d;
            rem /= d;
        }
        let (mut kept, mut traced) = (0usize, 0usize);
        for (pos, &d) in dims.iter().enumerate() {
            if keep_sorted.binary_search(&pos).is_ok() {
                kept = kept * d + digits[pos];
            } else {
                traced = traced * d + digits[pos];
            }
        }
        *slot = traced * kept_total + kept;
    }
    let mut inverse = vec![0usize; rho.dim()];
    for (full, &slot) in table.iter().enumerate() {
        inverse[slot] = full;
    }
    let m = rho.matrix();
    let mut out = DMatrix::zeros(kept_total, kept_total);
    for t in 0..traced_total {
        let base = &inverse[t * kept_total..(t + 1) * kept_total];
        for (i, &fi) in base.iter().enumerate() {
            for (j, &fj) in base.iter().enumerate() {
                out[(i, j)] += m[(fi, fj)];
            }
        }
    }
    let shape = SpaceShape::new(kept_dims)?;
    Ok(DensityMatrix::from_matrix_unchecked(shape, out))
}

/// Smallest `n_max` satisfying `n_max >= |alpha|^2 + 5|alpha| + 4`.
pub fn required_n_max(alpha_abs: f64) -> usize {
    (alpha_abs * alpha_abs + 5.0 * alpha_abs + 4.0 - 1e-12).ceil() as usize
}

pub fn check_truncation(alpha_abs: f64, n_max: usize) -> Result<()> {
    let required = required_n_max(alpha_abs);
    if n_max < required {
        return Err(Error::TruncationInadequate { alpha: alpha_abs, required, n_max });
    }
    Ok(())
}

fn coherent_amplitudes(alpha: C64, n_max: usize) -> DVector<C64> {
    let mut amps = DVector::zeros(n_max + 1);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    amps[0] = c;
    for n in 1..=n_max {
        c = c * alpha / (n as f64).sqrt();
        amps[n] = c;
    }
    amps
}

/// Truncated coherent state `|alpha>`, renormalized on `0..=n_max`.
pub fn coherent_state(alpha: C64, n_max: usize) -> Result<PureState> {
    let shape = SpaceShape::oscillator(n_max)?;
    check_truncation(alpha.norm(), n_max)?;
    PureState::normalized(shape, coherent_amplitudes(alpha, n_max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CatParity {
    Even,
    Odd,
}

/// Cat state `N (|alpha> +/- |-alpha>)`.
pub fn cat_state(alpha: C64, parity: CatParity, n_max: usize) -> Result<PureState> {
    let shape = SpaceShape::oscillator(n_max)?;
    check_truncation(alpha.norm(), n_max)?;
    let plus = coherent_amplitudes(alpha, n_max);
    let minus = coherent_amplitudes(-alpha, n_max);
    let amps = match parity {
        CatParity::Even => plus + minus,
        CatParity::Odd => plus - minus,
    };
    PureState::normalized(shape, amps)
}

/// Analytic cat normalization `1/sqrt(2(1 +/- exp(-2|alpha|^2)))`.
pub fn cat_normalization(alpha_abs: f64, parity: CatParity) -> f64 {
    let overlap = (-2.0 * alpha_abs * alpha_abs).exp();
    let s = match parity {
        CatParity::Even => 1.0 + overlap,
        CatParity::Odd => 1.0 - overlap,
    };
    1.0 / (2.0 * s).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn sigma_z_eigenbasis() {
        let e = PureState::basis(SpaceShape::qubit(), 0).unwrap();
        let out = pauli(Axis::Z).apply(&e).unwrap();
        assert_eq!(out, e);
        let g = PureState::basis(SpaceShape::qubit(), 1).unwrap();
        assert_eq!(pauli(Axis::Plus).apply(&g).unwrap(), e);
        assert_eq!(pauli(Axis::Minus).apply(&e).unwrap(), g);
    }

    #[test]
    fn pauli_algebra() {
        let x = pauli(Axis::X);
        let y = pauli(Axis::Y);
        let z = pauli(Axis::Z);
        let comm = commutator(&x, &y).unwrap();
        assert_eq!(comm, z.scale(C64::new(0.0, 2.0)));
        let plus = (&x + &y.scale(I)).scale(c(0.5));
        assert_eq!(plus, pauli(Axis::Plus));
        for p in [&x, &y, &z] {
            assert!(p.is_hermitian(0.0));
            assert!(p.is_unitary(1e-15));
        }
    }

    #[test]
    fn sigma_delta_squares_to_identity() {
        for k in 0..16 {
            let s = sigma_in_plane(0.4 * k as f64);
            let sq = &s * &s;
            assert!(sq.max_abs_diff(&Operator::identity(SpaceShape::qubit())) < 1e-15);
        }
        assert!(sigma_in_plane(0.0).max_abs_diff(&pauli(Axis::X)) < 1e-15);
        assert!(sigma_in_plane(std::f64::consts::FRAC_PI_2).max_abs_diff(&pauli(Axis::Y)) < 1e-15);
    }

    #[test]
    fn ladder_action() {
        let a = annihilation(6).unwrap();
        let shape = a.shape().clone();
        let one = PureState::basis(shape.clone(), 1).unwrap();
        assert_eq!(a.apply(&one).unwrap(), PureState::basis(shape.clone(), 0).unwrap());
        let four = PureState::basis(shape.clone(), 4).unwrap();
        let out = a.apply(&four).unwrap();
        assert_abs_diff_eq!(out.amplitudes()[3].re, 2.0, epsilon = 1e-15);
        let vac = PureState::basis(shape.clone(), 0).unwrap();
        assert_eq!(a.apply(&vac).unwrap().amplitudes().norm(), 0.0);
        let n = &a.dagger() * &a;
        for k in 0..=6 {
            assert_abs_diff_eq!(n.get(k, k).re, k as f64, epsilon = 1e-14);
        }
        assert_eq!(annihilation(0), Err(Error::InvalidTruncation(0)));
    }

    #[test]
    fn canonical_commutator_away_from_edge() {
        let n_max = 8;
        let a = annihilation(n_max).unwrap();
        let comm = commutator(&a, &a.dagger()).unwrap();
        for i in 0..n_max {
            for j in 0..n_max {
                let target = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(comm.get(i, j).re, target, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn tensor_identities() {
        let i2 = identity(2).unwrap();
        let i3 = identity(3).unwrap();
        let i6 = tensor(&[&i2, &i3]).unwrap();
        assert_eq!(i6.matrix(), &DMatrix::<C64>::identity(6, 6));
        assert_eq!(i6.shape().dims(), &[2, 3]);

        let n_max = 4;
        let a = annihilation(n_max).unwrap();
        let num = &a.dagger() * &a;
        let in_ = identity(n_max + 1).unwrap();
        let sz = tensor(&[&pauli(Axis::Z), &in_]).unwrap();
        let nn = tensor(&[&i2, &num]).unwrap();
        assert_eq!(&sz * &nn, &nn * &sz);
        assert!(tensor(&[]).is_err());
    }

    #[test]
    fn tensor_is_associative() {
        let a = pauli(Axis::X);
        let b = annihilation(2).unwrap();
        let cc = pauli(Axis::Y);
        let left = tensor(&[&tensor(&[&a, &b]).unwrap(), &cc]).unwrap();
        let right = tensor(&[&a, &tensor(&[&b, &cc]).unwrap()]).unwrap();
        assert_eq!(left.matrix(), right.matrix());
        assert_eq!(left.shape(), right.shape());
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let shape = SpaceShape::new(vec![2, 2]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let amps = DVector::from_vec(vec![c(0.0), c(s), c(s), c(0.0)]);
        let psi = PureState::new(shape, amps).unwrap().to_density();
        for k in 0..2 {
            let red = partial_trace(&psi, &[k]).unwrap();
            let mixed = DensityMatrix::maximally_mixed(SpaceShape::qubit());
            assert!(red.as_operator().max_abs_diff(mixed.as_operator()) < 1e-15);
        }
        assert!(partial_trace(&psi, &[2]).is_err());
        assert!(partial_trace(&psi, &[]).is_err());
    }

    #[test]
    fn partial_trace_middle_subsystem() {
        let r1 = DensityMatrix::from_bloch(0.3, -0.2, 0.5).unwrap();
        let r2 = coherent_state(C64::new(0.2, 0.1), 6).unwrap().to_density();
        let r3 = DensityMatrix::from_bloch(0.0, 0.6, -0.7).unwrap();
        let full = r1.tensor(&r2).unwrap().tensor(&r3).unwrap();
        let mid = partial_trace(&full, &[1]).unwrap();
        assert!(mid.as_operator().max_abs_diff(r2.as_operator()) < 1e-14);
        let outer = partial_trace(&full, &[2, 0]).unwrap();
        let expect = r1.tensor(&r3).unwrap();
        assert!(outer.as_operator().max_abs_diff(expect.as_operator()) < 1e-14);
        assert_abs_diff_eq!(outer.trace(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn coherent_state_properties() {
        let vac = coherent_state(C64::new(0.0, 0.0), 4).unwrap();
        assert_eq!(vac, PureState::basis(SpaceShape::oscillator(4).unwrap(), 0).unwrap());

        let alpha = coherent_state(c(1.0), 16).unwrap().to_density();
        let a = annihilation(16).unwrap();
        let mean = expectation(&a, &alpha).unwrap();
        assert!((mean - c(1.0)).norm() < 1e-6);

        let n_max = 20;
        let two = coherent_state(c(2.0), n_max).unwrap();
        let num = number(n_max).unwrap();
        let direct: f64 = two
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(n, z)| n as f64 * z.norm_sqr())
            .sum();
        let via_op = expectation(&num, &two.to_density()).unwrap().re;
        assert_abs_diff_eq!(via_op, direct, epsilon = 1e-12);
        assert_abs_diff_eq!(via_op, 4.0, epsilon = 1e-5);

        assert!(matches!(coherent_state(c(2.0), 10), Err(Error::TruncationInadequate { .. })));
    }

    #[test]
    fn cat_states_and_parity() {
        let n_max = 24;
        let even = cat_state(c(2.0), CatParity::Even, n_max).unwrap();
        let odd = cat_state(c(2.0), CatParity::Odd, n_max).unwrap();
        let p = parity(n_max).unwrap();
        assert_abs_diff_eq!(expectation(&p, &even.to_density()).unwrap().re, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(expectation(&p, &odd.to_density()).unwrap().re, -1.0, epsilon = 1e-6);

        let a = annihilation(n_max).unwrap();
        let lowered = PureState::normalized(even.shape().clone(), a.matrix() * even.amplitudes()).unwrap();
        assert!(lowered.inner(&odd).unwrap().norm() >= 1.0 - 1e-6);

        // analytic normalization agrees with the numerically normalized vector
        let coh = coherent_amplitudes(c(2.0), n_max) + coherent_amplitudes(c(-2.0), n_max);
        let n_analytic = cat_normalization(2.0, CatParity::Even);
        assert_abs_diff_eq!(n_analytic * coh.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn expectation_and_shapes() {
        let mixed = DensityMatrix::maximally_mixed(SpaceShape::qubit());
        assert_eq!(expectation(&pauli(Axis::Z), &mixed).unwrap(), ZERO);
        let a = annihilation(3).unwrap();
        assert!(expectation(&a, &mixed).is_err());
        assert!(commutator(&a, &pauli(Axis::X)).is_err());
    }

    #[test]
    fn density_validation() {
        let shape = SpaceShape::qubit();
        let bad_trace = Operator::identity(shape.clone());
        assert!(DensityMatrix::new(bad_trace).is_err());
        let neg = Operator::diagonal(shape.clone(), &[1.5, -0.5]).unwrap();
        assert!(DensityMatrix::new(neg).is_err());
        let ok = Operator::diagonal(shape, &[0.25, 0.75]).unwrap();
        assert!(DensityMatrix::new(ok).is_ok());
        assert!(DensityMatrix::from_bloch(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn shape_rules() {
        assert!(SpaceShape::new(vec![1, 3]).is_err());
        assert!(SpaceShape::new(vec![]).is_err());
        assert!(SpaceShape::new(vec![64, 65]).is_err());
        assert!(SpaceShape::with_cap(vec![64, 65], 10_000).is_ok());
        assert_eq!(SpaceShape::new(vec![2, 5]).unwrap().total(), 10);
    }

    #[test]
    fn eigh_two_by_two_matches_general_path() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.3), C64::new(0.1, -0.7), C64::new(0.1, 0.7), c(-1.2)]);
        let (vals, vecs) = eigh(&m);
        let recon = &vecs * DMatrix::from_diagonal(&DVector::from_iterator(2, vals.iter().map(|&v| c(v)))) * vecs.adjoint();
        assert!((recon - &m).iter().all(|z| z.norm() < 1e-14));
        let general = hermitize(&m).symmetric_eigen();
        let mut g: Vec<f64> = general.eigenvalues.iter().copied().collect();
        g.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(vals[0], g[0], epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], g[1], epsilon = 1e-14);
    }

    #[test]
    fn exp_hermitian_is_unitary_rotation() {
        let y = pauli(Axis::Y);
        let u = y.exp_hermitian(C64::new(0.0, -std::f64::consts::FRAC_PI_2));
        assert!(u.is_unitary(1e-14));
        // rotation by pi about y maps |e> to |g> up to phase
        let e = PureState::basis(SpaceShape::qubit(), 0).unwrap();
        let out = u.apply(&e).unwrap();
        assert_abs_diff_eq!(out.amplitudes()[1].norm(), 1.0, epsilon = 1e-14);
    }
}
