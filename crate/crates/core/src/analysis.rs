//! Observables, state metrics, Wigner functions and ensemble scoring.
//!
//! The Wigner function is normalized as `W(beta) = (2/pi) Tr[rho D(beta) P D(beta)^dag]`
//! with `P` the photon-number parity, so `|W| <= 2/pi` and vacuum peaks at
//! `2/pi` at the origin.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{eigh, hermitize, trace_product, DensityMatrix, Operator, SpaceShape, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// `(<sigma_x>, <sigma_y>, <sigma_z>)` of a qubit state.
pub fn bloch_vector(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.shape() != &SpaceShape::qubit() {
        return Err(Error::ShapeMismatch(format!("Bloch vector needs a qubit, got {}", rho.shape())));
    }
    let m = rho.matrix();
    Ok(BlochVector { x: 2.0 * m[(0, 1)].re, y: -2.0 * m[(0, 1)].im, z: (m[(0, 0)] - m[(1, 1)]).re })
}

/// `Tr rho^2`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.purity()
}

fn psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let (vals, vecs) = eigh(m);
    let n = m.nrows();
    let mut scaled = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, k)] *= s;
        }
    }
    &scaled * vecs.adjoint()
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", rho.shape(), sigma.shape())));
    }
    let s = psd_sqrt(rho.matrix());
    let inner = hermitize(&(&s * sigma.matrix() * &s));
    let (vals, _) = eigh(&inner);
    let f: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((f * f).clamp(0.0, 1.0))
}

/// Wootters concurrence of a two-qubit state.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.shape().dims() != [2, 2] {
        return Err(Error::ShapeMismatch(format!("concurrence needs two qubits, got {}", rho.shape())));
    }
    // sqrt of the eigenvalues of rho rho~ are the singular values of S^T (Y x Y) S with rho = S S^dag
    let (vals, vecs) = eigh(rho.matrix());
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let mut s = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        let w = if *v > 1e-14 * top { v.sqrt() } else { 0.0 };
        for i in 0..4 {
            s[(i, k)] *= w;
        }
    }
    let mut yy = DMatrix::<C64>::zeros(4, 4);
    for (i, sgn) in [(0usize, -1.0), (1, 1.0), (2, 1.0), (3, -1.0)] {
        yy[(i, 3 - i)] = C64::new(sgn, 0.0);
    }
    let c = s.transpose() * yy * &s;
    let mut l: Vec<f64> = c.svd(false, false).singular_values.iter().cloned().collect();
    l.sort_by(|a, b| b.total_cmp(a));
    Ok((l[0] - l[1] - l[2] - l[3]).max(0.0))
}

/// Real expectation values `Tr(X rho_k)` along a state sequence.
pub fn expectation_series(op: &Operator, states: &[DensityMatrix]) -> Result<Vec<f64>> {
    states
        .iter()
        .map(|r| {
            if r.shape() != op.shape() {
                return Err(Error::ShapeMismatch(format!("{} vs {}", op.shape(), r.shape())));
            }
            Ok(trace_product(op.matrix(), r.matrix()).re)
        })
        .collect()
}

/// `max_k |a_k - b_k|` for equal-length series.
pub fn max_abs_gap(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::MisalignedGrids(format!("{} vs {} samples", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Binomial standard deviation of a fraction estimated from `n` trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Rectangular phase-space grid of `beta = re + i im`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub n_re: usize,
    pub im_min: f64,
    pub im_max: f64,
    pub n_im: usize,
}

impl GridSpec {
    /// Square grid `[-extent, extent]^2` with `n` points per axis.
    pub fn square(extent: f64, n: usize) -> Self {
        GridSpec { re_min: -extent, re_max: extent, n_re: n, im_min: -extent, im_max: extent, n_im: n }
    }

    fn axis(min: f64, max: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![min];
        }
        (0..n).map(|k| min + (max - min) * k as f64 / (n - 1) as f64).collect()
    }

    pub fn re_axis(&self) -> Vec<f64> {
        Self::axis(self.re_min, self.re_max, self.n_re)
    }

    pub fn im_axis(&self) -> Vec<f64> {
        Self::axis(self.im_min, self.im_max, self.n_im)
    }
}

/// Wigner function samples; `values[(i, j)]` is at `re[i] + i im[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub values: DMatrix<f64>,
    /// Set when the grid reaches amplitudes the truncation cannot represent.
    pub truncation_warning: bool,
}

impl WignerGrid {
    fn spacing(axis: &[f64]) -> f64 {
        if axis.len() < 2 {
            1.0
        } else {
            axis[1] - axis[0]
        }
    }

    /// Riemann sum of `W` over the grid.
    pub fn integral(&self) -> f64 {
        self.values.sum() * Self::spacing(&self.re) * Self::spacing(&self.im)
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// Grid point of the maximum value.
    pub fn argmax(&self) -> C64 {
        let mut best = (0, 0);
        for i in 0..self.re.len() {
            for j in 0..self.im.len() {
                if self.values[(i, j)] > self.values[best] {
                    best = (i, j);
                }
            }
        }
        C64::new(self.re[best.0], self.im[best.1])
    }

    /// Integral over `im` at each `re`: the marginal of the `re` quadrature.
    pub fn re_marginal(&self) -> Vec<f64> {
        let d = Self::spacing(&self.im);
        (0..self.re.len()).map(|i| self.values.row(i).sum() * d).collect()
    }

    /// Values along the real axis nearest `im = 0`.
    pub fn real_slice(&self) -> Vec<(f64, f64)> {
        let j = self
            .im
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(j, _)| j)
            .unwrap_or(0);
        self.re.iter().enumerate().map(|(i, &x)| (x, self.values[(i, j)])).collect()
    }
}

/// `h[k][m] = sqrt(m!/(m+k)!) x^{k/2} e^{-x/2} L_m^{(k)}(x)` for `m + k < n`.
fn displaced_parity_kernel(x: f64, n: usize) -> Vec<Vec<f64>> {
    let mut h = Vec::with_capacity(n);
    let mut log_fact = 0.0;
    for k in 0..n {
        if k > 0 {
            log_fact += (k as f64).ln();
        }
        let len = n - k;
        let mut row = vec![0.0; len];
        let start = if x > 0.0 {
            (0.5 * k as f64 * x.ln() - 0.5 * x - 0.5 * log_fact).exp()
        } else if k == 0 {
            1.0
        } else {
            0.0
        };
        row[0] = start;
        if len > 1 {
            row[1] = start * (1.0 + k as f64 - x) / ((1.0 + k as f64).sqrt());
        }
        for m in 1..len.saturating_sub(1) {
            let mf = m as f64;
            let kf = k as f64;
            row[m + 1] = ((2.0 * mf + 1.0 + kf - x) * row[m] - (mf * (mf + kf)).sqrt() * row[m - 1])
                / ((mf + 1.0) * (mf + 1.0 + kf)).sqrt();
        }
        h.push(row);
    }
    h
}

/// Wigner function at a single point.
pub fn wigner_point(rho: &DensityMatrix, beta: C64) -> Result<f64> {
    if rho.shape().n_subsystems() != 1 {
        return Err(Error::ShapeMismatch(format!("Wigner function needs a single mode, got {}", rho.shape())));
    }
    Ok(wigner_value(rho.matrix(), beta))
}

fn wigner_value(m: &DMatrix<C64>, beta: C64) -> f64 {
    let n = m.nrows();
    let gamma = beta * 2.0;
    let x = gamma.norm_sqr();
    let theta = gamma.arg();
    let h = displaced_parity_kernel(x, n);
    let mut acc = 0.0;
    for (k, hk) in h.iter().enumerate() {
        let mut s = C64::new(0.0, 0.0);
        for (mi, &v) in hk.iter().enumerate() {
            let sign = if mi % 2 == 0 { 1.0 } else { -1.0 };
            s += m[(mi, mi + k)] * (sign * v);
        }
        if k == 0 {
            acc += s.re;
        } else {
            acc += 2.0 * (C64::from_polar(1.0, k as f64 * theta) * s).re;
        }
    }
    2.0 / PI * acc
}

/// Wigner function of a single-mode state on a rectangular grid.
pub fn wigner(rho: &DensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    if grid.n_re == 0 || grid.n_im == 0 {
        return Err(Error::EmptyGrid);
    }
    if rho.shape().n_subsystems() != 1 {
        return Err(Error::ShapeMismatch(format!("Wigner function needs a single mode, got {}", rho.shape())));
    }
    let re = grid.re_axis();
    let im = grid.im_axis();
    let mut values = DMatrix::zeros(re.len(), im.len());
    for (i, &x) in re.iter().enumerate() {
        for (j, &y) in im.iter().enumerate() {
            values[(i, j)] = wigner_value(rho.matrix(), C64::new(x, y));
        }
    }
    // displaced parity at |beta| samples Fock levels around |beta|^2
    let extent = [grid.re_min, grid.re_max, grid.im_min, grid.im_max].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n_max = rho.dim() - 1;
    Ok(WignerGrid { re, im, values, truncation_warning: extent * extent > n_max as f64 })
}

/// Exponential fit of a survival curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalFit {
    pub rate: f64,
    /// 95% interval from the slope standard error.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fitted `ln S(0)`.
    pub intercept: f64,
}

/// Least-squares fit of `ln S(t) = c - rate t`.
pub fn survival_fit(times: &[f64], survival: &[f64]) -> Result<SurvivalFit> {
    if times.len() != survival.len() {
        return Err(Error::MisalignedGrids(format!("{} times, {} values", times.len(), survival.len())));
    }
    if times.len() < 5 {
        return Err(Error::FitFailed(format!("need at least 5 points, got {}", times.len())));
    }
    for w in survival.windows(2) {
        if w[1] > w[0] {
            return Err(Error::FitFailed("survival is not monotone non-increasing".into()));
        }
    }
    if survival.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::FitFailed("survival must be positive".into()));
    }
    let n = times.len() as f64;
    let ys: Vec<f64> = survival.iter().map(|s| s.ln()).collect();
    let mx = times.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitFailed("times are all equal".into()));
    }
    let sxy: f64 = times.iter().zip(&ys).map(|(t, y)| (t - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = times.iter().zip(&ys).map(|(t, y)| (y - intercept - slope * t).powi(2)).sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    let rate = -slope;
    Ok(SurvivalFit { rate, ci_low: rate - 1.96 * se, ci_high: rate + 1.96 * se, intercept })
}

/// Circular statistics of phase estimates against the true phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseErrorStats {
    /// `1 - |mean e^{i (theta_hat - Theta)}|`.
    pub circular_variance: f64,
    /// Argument of the mean error phasor.
    pub mean_error: f64,
    pub n: usize,
}

/// Needs at least 100 estimates.
pub fn phase_error_stats(estimates: &[f64], theta_true: f64) -> Result<PhaseErrorStats> {
    if estimates.len() < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 estimates, got {}", estimates.len())));
    }
    let errors: Vec<f64> = estimates.iter().map(|e| e - theta_true).collect();
    let (circular_variance, mean_error) = circular_moments(&errors);
    Ok(PhaseErrorStats { circular_variance, mean_error, n: estimates.len() })
}

/// `(1 - |mean e^{i x}|, arg mean e^{i x})`.
pub fn circular_moments(angles: &[f64]) -> (f64, f64) {
    let n = angles.len().max(1) as f64;
    let mean = angles.iter().map(|&a| C64::from_polar(1.0, a)).sum::<C64>() / n;
    (1.0 - mean.norm(), mean.arg())
}

/// `(1/2) sum |p - q| dx` for densities sampled on a uniform grid.
pub fn total_variation(p: &[f64], q: &[f64], dx: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::MisalignedGrids(format!("{} vs {} samples", p.len(), q.len())));
    }
    if p.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(0.5 * dx * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        annihilation, cat_state, coherent_state, exp_hermitian, parity, pauli, tensor, Axis, CatParity, PureState,
    };
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn ket(amps: &[f64], dims: Vec<usize>) -> DensityMatrix {
        let v = DVector::from_iterator(amps.len(), amps.iter().map(|&a| C64::new(a, 0.0)));
        PureState::normalized(SpaceShape::new(dims).unwrap(), v).unwrap().to_density()
    }

    #[test]
    fn bloch_and_fidelity_examples() {
        let mixed = DensityMatrix::maximally_mixed(SpaceShape::qubit());
        let b = bloch_vector(&mixed).unwrap();
        assert_eq!((b.x, b.y, b.z), (0.0, 0.0, 0.0));
        let r = DensityMatrix::from_bloch(0.3, -0.4, 0.5).unwrap();
        let b = bloch_vector(&r).unwrap();
        assert_abs_diff_eq!(b.x, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(b.y, -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(b.z, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&r, &r).unwrap(), 1.0, epsilon = 1e-12);
        let e = DensityMatrix::from_bloch(0.0, 0.0, 1.0).unwrap();
        let g = DensityMatrix::from_bloch(0.0, 0.0, -1.0).unwrap();
        let plus = DensityMatrix::from_bloch(1.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(fidelity(&e, &g).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&g, &plus).unwrap(), 0.5, epsilon = 1e-12);
        assert!(fidelity(&e, &ket(&[1.0, 0.0, 0.0, 0.0], vec![2, 2])).is_err());
        assert!(bloch_vector(&ket(&[1.0, 0.0, 0.0], vec![3])).is_err());
        assert_abs_diff_eq!(purity(&mixed), 0.5, epsilon = 1e-15);
    }

    fn random_qubit(x: f64, y: f64, z: f64, s: f64) -> DensityMatrix {
        let n = (x * x + y * y + z * z).sqrt().max(1e-12);
        DensityMatrix::from_bloch(s * x / n, s * y / n, s * z / n).unwrap()
    }

    proptest! {
        #[test]
        fn fidelity_symmetric(a in prop::array::uniform4(-1.0f64..1.0), b in prop::array::uniform4(-1.0f64..1.0)) {
            let r = random_qubit(a[0], a[1], a[2], a[3].abs());
            let s = random_qubit(b[0], b[1], b[2], b[3].abs());
            prop_assert!((fidelity(&r, &s).unwrap() - fidelity(&s, &r).unwrap()).abs() < 1e-9);
            // qubit closed form: F = Tr(r s) + 2 sqrt(det r det s)
            let tr = trace_product(r.matrix(), s.matrix()).re;
            let det = |m: &DensityMatrix| (m.matrix()[(0, 0)] * m.matrix()[(1, 1)] - m.matrix()[(0, 1)] * m.matrix()[(1, 0)]).re.max(0.0);
            let want = tr + 2.0 * (det(&r) * det(&s)).sqrt();
            prop_assert!((fidelity(&r, &s).unwrap() - want).abs() < 1e-8);
        }

        #[test]
        fn fidelity_of_pure_states_is_overlap(a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
            let r = random_qubit(a[0], a[1], a[2], 1.0);
            let s = random_qubit(b[0], b[1], b[2], 1.0);
            let overlap = trace_product(r.matrix(), s.matrix()).re;
            prop_assert!((fidelity(&r, &s).unwrap() - overlap).abs() < 1e-7);
        }

        #[test]
        fn concurrence_local_unitary_invariant(
            angles in prop::array::uniform6(-3.2f64..3.2),
            mix in 0.0f64..1.0,
        ) {
            let s = 0.5f64.sqrt();
            let bell = ket(&[0.0, s, s, 0.0], vec![2, 2]);
            let prod = ket(&[1.0, 0.0, 0.0, 0.0], vec![2, 2]);
            let m = bell.matrix() * C64::new(mix, 0.0) + prod.matrix() * C64::new(1.0 - mix, 0.0);
            let rho = DensityMatrix::new(Operator::new(SpaceShape::new(vec![2, 2]).unwrap(), m).unwrap()).unwrap();
            let u = |a: f64, b: f64, c: f64| {
                let h = &(&pauli(Axis::X).scale(C64::new(a, 0.0)) + &pauli(Axis::Y).scale(C64::new(b, 0.0)))
                    + &pauli(Axis::Z).scale(C64::new(c, 0.0));
                Operator::new(SpaceShape::qubit(), exp_hermitian(h.matrix(), C64::new(0.0, -1.0))).unwrap()
            };
            let uu = tensor(&[&u(angles[0], angles[1], angles[2]), &u(angles[3], angles[4], angles[5])]).unwrap();
            let rotated = rho.conjugate(&uu).unwrap();
            prop_assert!((concurrence(&rho).unwrap() - concurrence(&rotated).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn concurrence_examples() {
        let s = 0.5f64.sqrt();
        let bell = ket(&[0.0, s, s, 0.0], vec![2, 2]);
        assert_abs_diff_eq!(concurrence(&bell).unwrap(), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(concurrence(&ket(&[1.0, 0.0, 0.0, 0.0], vec![2, 2])).unwrap(), 0.0, epsilon = 1e-7);
        // unheralded mixture 1/4 |00> + 1/4 |11> + 1/2 |psi+>
        let m = ket(&[1.0, 0.0, 0.0, 0.0], vec![2, 2]).matrix() * C64::new(0.25, 0.0)
            + ket(&[0.0, 0.0, 0.0, 1.0], vec![2, 2]).matrix() * C64::new(0.25, 0.0)
            + bell.matrix() * C64::new(0.5, 0.0);
        let bar = DensityMatrix::new(Operator::new(SpaceShape::new(vec![2, 2]).unwrap(), m).unwrap()).unwrap();
        assert_abs_diff_eq!(concurrence(&bar).unwrap(), 0.0, epsilon = 1e-7);
        assert!(concurrence(&DensityMatrix::from_bloch(0.0, 0.0, 1.0).unwrap()).is_err());
    }

    /// Oracle: `(2/pi) Tr[rho D(beta) P D(beta)^dag]` with the displacement
    /// built by exponentiating in a larger space and truncating.
    fn wigner_oracle(rho: &DensityMatrix, beta: C64) -> f64 {
        let n = rho.dim();
        let big = n + 40;
        let a = annihilation(big - 1).unwrap();
        // D = exp(beta a^dag - beta^* a) = exp(-i H) with H = i(beta a^dag - beta^* a)
        let gen = (&a.dagger().scale(beta) - &a.scale(beta.conj())).scale(C64::new(0.0, 1.0));
        let d = exp_hermitian(gen.matrix(), C64::new(0.0, -1.0));
        let p = parity(big - 1).unwrap();
        let dpd = &d * p.matrix() * d.adjoint();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += rho.matrix()[(i, j)] * dpd[(j, i)];
            }
        }
        2.0 / PI * acc.re
    }

    #[test]
    fn wigner_examples() {
        let vac = DensityMatrix::basis(SpaceShape::oscillator(10).unwrap(), 0).unwrap();
        assert_abs_diff_eq!(wigner_point(&vac, C64::new(0.0, 0.0)).unwrap(), 2.0 / PI, epsilon = 1e-15);
        let cat = cat_state(C64::new(2.0, 0.0), CatParity::Odd, 24).unwrap().to_density();
        assert_abs_diff_eq!(wigner_point(&cat, C64::new(0.0, 0.0)).unwrap(), -2.0 / PI, epsilon = 1e-3);
        let coh = coherent_state(C64::new(1.0, 0.0), 12).unwrap().to_density();
        let g = wigner(&coh, &GridSpec::square(3.0, 61)).unwrap();
        let peak = g.argmax();
        assert!((peak - C64::new(1.0, 0.0)).norm() <= 0.1 + 1e-12, "{peak}");
        assert!(!g.truncation_warning);
        assert!(wigner(&coh, &GridSpec::square(6.0, 5)).unwrap().truncation_warning);
    }

    #[test]
    fn wigner_matches_displacement_oracle() {
        let states = [
            cat_state(C64::from_polar(1.7, 0.3), CatParity::Even, 20).unwrap().to_density(),
            coherent_state(C64::new(-0.5, 1.2), 16).unwrap().to_density(),
            DensityMatrix::basis(SpaceShape::oscillator(6).unwrap(), 3).unwrap(),
        ];
        for rho in &states {
            for beta in [C64::new(0.0, 0.0), C64::new(0.4, -0.9), C64::new(-1.8, 0.2), C64::new(1.1, 1.3)] {
                let w = wigner_point(rho, beta).unwrap();
                let o = wigner_oracle(rho, beta);
                assert!((w - o).abs() < 1e-9, "{beta}: {w} vs {o}");
            }
        }
    }

    #[test]
    fn wigner_normalization_and_marginals() {
        let cat = cat_state(C64::new(1.5, 0.0), CatParity::Odd, 18).unwrap().to_density();
        let g = wigner(&cat, &GridSpec::square(4.5, 91)).unwrap();
        assert!((g.integral() - 1.0).abs() <= 0.02, "{}", g.integral());
        assert!(g.re_marginal().iter().all(|&m| m >= -1e-6));
        assert!(g.min() < -0.1);
        assert_eq!(g.real_slice().len(), 91);
    }

    #[test]
    fn survival_fit_examples() {
        let ts: Vec<f64> = (0..10).map(|k| k as f64 * 0.5).collect();
        let s: Vec<f64> = ts.iter().map(|t| (-0.3 * t).exp()).collect();
        let f = survival_fit(&ts, &s).unwrap();
        assert_abs_diff_eq!(f.rate, 0.3, epsilon = 1e-6);
        assert!(f.ci_low <= 0.3 && f.ci_high >= 0.3);
        let mut bumpy = s.clone();
        bumpy[4] = bumpy[3] + 0.01;
        assert!(matches!(survival_fit(&ts, &bumpy), Err(Error::FitFailed(_))));
        assert!(matches!(survival_fit(&ts[..4], &s[..4]), Err(Error::FitFailed(_))));
    }

    #[test]
    fn phase_stats_examples() {
        let est = vec![0.7; 200];
        let st = phase_error_stats(&est, 0.7).unwrap();
        assert_abs_diff_eq!(st.circular_variance, 0.0, epsilon = 1e-12);
        let n = 4000;
        let uniform: Vec<f64> = crate::models::phase_grid(n).into_iter().map(|x| x + 0.123).collect();
        let st = phase_error_stats(&uniform, 0.7).unwrap();
        assert!((st.circular_variance - 1.0).abs() <= 3.0 / (n as f64).sqrt());
        assert!(phase_error_stats(&[0.0; 10], 0.0).is_err());
    }

    #[test]
    fn total_variation_examples() {
        let p = vec![1.0; 10];
        assert_eq!(total_variation(&p, &p, 0.1).unwrap(), 0.0);
        let q = vec![0.0; 10];
        assert_abs_diff_eq!(total_variation(&p, &q, 0.1).unwrap(), 0.5, epsilon = 1e-15);
        assert!(total_variation(&p, &q[..3], 0.1).is_err());
    }
}
