//! Finite-sum objectives `f(x) = (1/n) Σ f_i(x)` and IFO accounting.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{to_libsvm_string, Dataset, SparseVector};
use crate::linalg::{axpy, dot, norm_sq, DenseVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// Counts incremental first-order oracle calls (one component gradient each).
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct IfoCounter(u64);

impl IfoCounter {
    pub fn new() -> Self {
        Self(0)
    }

    pub fn count(&self) -> u64 {
        self.0
    }

    #[inline]
    pub fn charge(&mut self, calls: u64) {
        self.0 += calls;
    }
}

/// Smoothness `L`, strong-convexity modulus `μ`, and `κ = L/μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub l: f64,
    pub mu: f64,
    pub kappa: f64,
}

impl Constants {
    pub fn new(l: f64, mu: f64) -> Self {
        Self { l, mu, kappa: l / mu }
    }
}

/// A finite-sum objective whose components are each `L`-smooth and `μ`-strongly convex.
///
/// Implementors provide the unchecked kernels; the provided methods validate arguments
/// and charge the IFO counter.
pub trait ErmProblem: Sync {
    fn n(&self) -> usize;
    fn dim(&self) -> usize;
    fn mu(&self) -> f64;
    /// Uniform Lipschitz constant of every component gradient.
    fn smoothness(&self) -> f64;

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64;
    /// Writes `∇f_i(x)` into `out` (overwriting it).
    fn component_grad_unchecked(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// Exact minimizer when one is cheaply available.
    fn exact_minimizer(&self) -> Option<DenseVector> {
        None
    }

    /// Content hash identifying the objective, used to cache reference optima.
    fn fingerprint(&self) -> Option<String> {
        None
    }

    fn constants(&self) -> Constants {
        Constants::new(self.smoothness(), self.mu())
    }

    fn kappa(&self) -> f64 {
        self.smoothness() / self.mu()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ProblemError> {
        if x.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<(), ProblemError> {
        if i >= self.n() {
            return Err(ProblemError::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    /// `f(x) = (1/n) Σ f_i(x)`
    fn value(&self, x: &[f64]) -> Result<f64, ProblemError> {
        self.check_dim(x)?;
        Ok(self.value_unchecked(x))
    }

    fn value_unchecked(&self, x: &[f64]) -> f64 {
        let n = self.n();
        (0..n).map(|i| self.component_value_unchecked(i, x)).sum::<f64>() / n as f64
    }

    fn component_value(&self, i: usize, x: &[f64]) -> Result<f64, ProblemError> {
        self.check_index(i)?;
        self.check_dim(x)?;
        Ok(self.component_value_unchecked(i, x))
    }

    /// `∇f_i(x)`; charges one IFO.
    fn grad_component(&self, i: usize, x: &[f64], ifo: &mut IfoCounter) -> Result<DenseVector, ProblemError> {
        self.check_index(i)?;
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim()];
        self.component_grad_unchecked(i, x, &mut out);
        ifo.charge(1);
        Ok(out)
    }

    /// `∇f(x)`; charges `n` IFOs.
    fn full_grad(&self, x: &[f64], ifo: &mut IfoCounter) -> Result<DenseVector, ProblemError> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim()];
        self.full_grad_into(x, &mut out, ifo);
        Ok(out)
    }

    fn full_grad_into(&self, x: &[f64], out: &mut [f64], ifo: &mut IfoCounter) {
        let n = self.n();
        let mut buf = vec![0.0; self.dim()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            self.component_grad_unchecked(i, x, &mut buf);
            axpy(1.0, &buf, out);
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        ifo.charge(n as u64);
    }
}

/// `ln(1 + e^{-z})` without overflow.
#[inline]
pub fn log1p_exp_neg(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `σ(t) = 1/(1+e^{-t})`, branching on the sign of `t`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Regularized logistic regression:
/// `f_i(x) = ln(1 + exp(−b_i⟨a_i, x⟩)) + (μ/2)‖x‖²`.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    data: Dataset,
    mu: f64,
    l: f64,
}

impl LogisticProblem {
    pub fn new(data: Dataset, mu: f64) -> Result<Self, ProblemError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(ProblemError::Invalid(format!("regularization μ = {mu} must be positive")));
        }
        let l = data.max_row_sq_norm() / 4.0 + mu;
        Ok(Self { data, mu, l })
    }

    /// Picks `μ` so that `L/μ` equals `kappa` (requires `kappa > 1` and a non-zero row).
    pub fn with_condition_number(data: Dataset, kappa: f64) -> Result<Self, ProblemError> {
        let curvature = data.max_row_sq_norm() / 4.0;
        if kappa.is_nan() || kappa <= 1.0 || curvature == 0.0 {
            return Err(ProblemError::Invalid(format!("cannot reach condition number {kappa}")));
        }
        Self::new(data, curvature / (kappa - 1.0))
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    /// Fraction of rows with `sign⟨a_i, x⟩ = b_i`.
    pub fn accuracy(&self, x: &[f64]) -> f64 {
        let correct = (0..self.data.n())
            .filter(|&i| self.data.row(i).dot_dense(x) * self.data.label(i) > 0.0)
            .count();
        correct as f64 / self.data.n() as f64
    }
}

impl ErmProblem for LogisticProblem {
    fn n(&self) -> usize {
        self.data.n()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn smoothness(&self) -> f64 {
        self.l
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let margin = self.data.label(i) * self.data.row(i).dot_dense(x);
        log1p_exp_neg(margin) + 0.5 * self.mu * norm_sq(x)
    }

    fn component_grad_unchecked(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let b = self.data.label(i);
        let row = self.data.row(i);
        let coef = -b * sigmoid(-b * row.dot_dense(x));
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.mu * xi;
        }
        row.axpy_into(coef, out);
    }

    fn value_unchecked(&self, x: &[f64]) -> f64 {
        let n = self.data.n();
        let loss: f64 = (0..n)
            .map(|i| log1p_exp_neg(self.data.label(i) * self.data.row(i).dot_dense(x)))
            .sum();
        loss / n as f64 + 0.5 * self.mu * norm_sq(x)
    }

    fn full_grad_into(&self, x: &[f64], out: &mut [f64], ifo: &mut IfoCounter) {
        let n = self.data.n();
        out.iter_mut().for_each(|v| *v = 0.0);
        let inv = 1.0 / n as f64;
        for i in 0..n {
            let b = self.data.label(i);
            let row = self.data.row(i);
            row.axpy_into(-b * sigmoid(-b * row.dot_dense(x)) * inv, out);
        }
        axpy(self.mu, x, out);
        ifo.charge(n as u64);
    }

    fn fingerprint(&self) -> Option<String> {
        let mut h = Sha256::new();
        h.update(b"logistic\n");
        h.update(self.data.dim().to_le_bytes());
        h.update(self.mu.to_bits().to_le_bytes());
        h.update(to_libsvm_string(&self.data).as_bytes());
        Some(hex::encode(h.finalize()))
    }
}

/// Ridge regression: `f_i(x) = ½(⟨a_i, x⟩ − y_i)² + (μ/2)‖x‖²`.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    rows: Vec<SparseVector>,
    targets: Vec<f64>,
    dim: usize,
    mu: f64,
    l: f64,
}

/// Dimension up to which [`RidgeProblem::exact_minimizer`] solves the normal equations.
pub const RIDGE_DIRECT_SOLVE_MAX_DIM: usize = 512;

impl RidgeProblem {
    /// `mu` may be zero here, but solvers and rate rules need `μ > 0`.
    pub fn new(rows: Vec<SparseVector>, targets: Vec<f64>, mu: f64) -> Result<Self, ProblemError> {
        if rows.is_empty() || rows.len() != targets.len() {
            return Err(ProblemError::Invalid(format!(
                "{} rows and {} targets",
                rows.len(),
                targets.len()
            )));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(ProblemError::Invalid(format!("regularization μ = {mu} must be non-negative")));
        }
        let dim = rows[0].dim();
        if rows.iter().any(|r| r.dim() != dim) {
            return Err(ProblemError::Invalid("rows have differing dimensions".into()));
        }
        let l = rows.iter().map(SparseVector::norm_sq).fold(0.0, f64::max) + mu;
        Ok(Self { rows, targets, dim, mu, l })
    }

    pub fn from_dense(rows: &[Vec<f64>], targets: Vec<f64>, mu: f64) -> Result<Self, ProblemError> {
        Self::new(rows.iter().map(|r| SparseVector::from_dense(r)).collect(), targets, mu)
    }

    /// Least-squares problem using the dataset's ±1 labels as targets.
    pub fn from_dataset(data: &Dataset, mu: f64) -> Result<Self, ProblemError> {
        Self::new(data.rows().to_vec(), data.labels().to_vec(), mu)
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Solves `(AᵀA/n + μI) x = Aᵀy/n` by Cholesky factorization.
    pub fn solve_normal_equations(&self) -> Option<DenseVector> {
        let n = self.rows.len() as f64;
        let d = self.dim;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        for (row, &y) in self.rows.iter().zip(&self.targets) {
            for (j, vj) in row.iter() {
                rhs[j] += vj * y / n;
                for (k, vk) in row.iter() {
                    gram[(j, k)] += vj * vk / n;
                }
            }
        }
        for j in 0..d {
            gram[(j, j)] += self.mu;
        }
        let chol = gram.cholesky()?;
        Some(chol.solve(&rhs).iter().copied().collect())
    }
}

impl ErmProblem for RidgeProblem {
    fn n(&self) -> usize {
        self.rows.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn smoothness(&self) -> f64 {
        self.l
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.rows[i].dot_dense(x) - self.targets[i];
        0.5 * r * r + 0.5 * self.mu * norm_sq(x)
    }

    fn component_grad_unchecked(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let r = self.rows[i].dot_dense(x) - self.targets[i];
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.mu * xi;
        }
        self.rows[i].axpy_into(r, out);
    }

    fn exact_minimizer(&self) -> Option<DenseVector> {
        (self.dim <= RIDGE_DIRECT_SOLVE_MAX_DIM).then(|| self.solve_normal_equations()).flatten()
    }

    fn fingerprint(&self) -> Option<String> {
        let mut h = Sha256::new();
        h.update(b"ridge\n");
        h.update(self.dim.to_le_bytes());
        h.update(self.mu.to_bits().to_le_bytes());
        for (row, y) in self.rows.iter().zip(&self.targets) {
            h.update(y.to_bits().to_le_bytes());
            for (j, v) in row.iter() {
                h.update(j.to_le_bytes());
                h.update(v.to_bits().to_le_bytes());
            }
            h.update(b"\n");
        }
        Some(hex::encode(h.finalize()))
    }
}

/// Components `f_i(x) = ½‖x − c_i‖² + (μ/2)‖x‖²` sharing one Hessian `(1+μ)I`.
///
/// Every SVRG/SARAH estimator on this problem equals the exact gradient, which makes it a
/// handy reference for solver plumbing.
#[derive(Debug, Clone)]
pub struct IsotropicQuadratic {
    centers: Vec<DenseVector>,
    mu: f64,
}

impl IsotropicQuadratic {
    pub fn new(centers: Vec<DenseVector>, mu: f64) -> Result<Self, ProblemError> {
        if centers.is_empty() {
            return Err(ProblemError::Invalid("no components".into()));
        }
        let d = centers[0].len();
        if centers.iter().any(|c| c.len() != d) {
            return Err(ProblemError::Invalid("centers have differing dimensions".into()));
        }
        if mu.is_nan() || mu < 0.0 {
            return Err(ProblemError::Invalid(format!("μ = {mu}")));
        }
        Ok(Self { centers, mu })
    }

    pub fn minimizer(&self) -> DenseVector {
        let d = self.centers[0].len();
        let n = self.centers.len() as f64;
        let mut mean = vec![0.0; d];
        for c in &self.centers {
            axpy(1.0 / n, c, &mut mean);
        }
        mean.iter().map(|m| m / (1.0 + self.mu)).collect()
    }
}

impl ErmProblem for IsotropicQuadratic {
    fn n(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn mu(&self) -> f64 {
        1.0 + self.mu
    }

    fn smoothness(&self) -> f64 {
        1.0 + self.mu
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let c = &self.centers[i];
        0.5 * x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + 0.5 * self.mu * dot(x, x)
    }

    fn component_grad_unchecked(&self, i: usize, x: &[f64], out: &mut [f64]) {
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.centers[i]) {
            *o = xi - ci + self.mu * xi;
        }
    }

    fn exact_minimizer(&self) -> Option<DenseVector> {
        Some(self.minimizer())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, parse_libsvm_str};

    fn unit_rows() -> Dataset {
        parse_libsvm_str("+1 1:1\n-1 2:1\n+1 1:0.6 2:0.8\n", None).unwrap()
    }

    #[test]
    fn logistic_value_at_zero_is_ln2() {
        let p = LogisticProblem::new(unit_rows(), 0.25).unwrap();
        let v = p.value(&[0.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_grad_at_zero() {
        let p = LogisticProblem::new(unit_rows(), 0.25).unwrap();
        let mut ifo = IfoCounter::new();
        for i in 0..3 {
            let g = p.grad_component(i, &[0.0, 0.0], &mut ifo).unwrap();
            let expected: Vec<f64> = p.dataset().row(i).to_dense().iter().map(|a| -p.dataset().label(i) * a / 2.0).collect();
            assert_eq!(g, expected);
        }
        assert_eq!(ifo.count(), 3);
    }

    #[test]
    fn ridge_value_and_grad() {
        let p = RidgeProblem::from_dense(&[vec![1.0]], vec![1.0], 0.0).unwrap();
        assert_eq!(p.value(&[1.0]).unwrap(), 0.0);
        let p = RidgeProblem::from_dense(&[vec![2.0, -1.0]], vec![3.0], 0.5).unwrap();
        let mut ifo = IfoCounter::new();
        assert_eq!(p.grad_component(0, &[0.0, 0.0], &mut ifo).unwrap(), vec![-6.0, 3.0]);
    }

    #[test]
    fn constants_follow_instance_formulas() {
        let c = LogisticProblem::new(unit_rows(), 0.25).unwrap().constants();
        assert_eq!((c.l, c.mu, c.kappa), (0.5, 0.25, 2.0));
        let c = LogisticProblem::new(unit_rows(), 0.001).unwrap().constants();
        assert!((c.l - 0.251).abs() < 1e-15);
        assert!((c.kappa - 251.0).abs() < 1e-9);
        let c = RidgeProblem::from_dense(&[vec![2.0]], vec![0.0], 1.0).unwrap().constants();
        assert_eq!((c.l, c.mu, c.kappa), (5.0, 1.0, 5.0));
    }

    #[test]
    fn condition_number_constructor() {
        let data = generate_synthetic(50, 4, 1, 1.0).unwrap().normalize_rows().unwrap();
        let p = LogisticProblem::with_condition_number(data, 100.0).unwrap();
        assert!((p.kappa() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn errors_on_bad_arguments() {
        let p = LogisticProblem::new(unit_rows(), 0.1).unwrap();
        let mut ifo = IfoCounter::new();
        assert_eq!(
            p.value(&[0.0]),
            Err(ProblemError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(
            p.grad_component(3, &[0.0, 0.0], &mut ifo),
            Err(ProblemError::IndexOutOfRange { index: 3, n: 3 })
        );
        assert!(p.full_grad(&[0.0; 3], &mut ifo).is_err());
        assert_eq!(ifo.count(), 0);
        assert!(LogisticProblem::new(unit_rows(), 0.0).is_err());
    }

    #[test]
    fn full_grad_is_mean_of_components() {
        let data = generate_synthetic(30, 6, 5, 1.5).unwrap();
        let p = LogisticProblem::new(data, 0.05).unwrap();
        let x: Vec<f64> = (0..6).map(|j| 0.1 * j as f64 - 0.2).collect();
        let mut ifo = IfoCounter::new();
        let full = p.full_grad(&x, &mut ifo).unwrap();
        assert_eq!(ifo.count(), 30);
        let mut mean = vec![0.0; 6];
        for i in 0..30 {
            let g = p.grad_component(i, &x, &mut ifo).unwrap();
            axpy(1.0 / 30.0, &g, &mut mean);
        }
        for (a, b) in full.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(ifo.count(), 60);
    }

    #[test]
    fn stable_at_extreme_margins() {
        let p = LogisticProblem::new(unit_rows(), 0.1).unwrap();
        let x = [1e4, -1e4];
        let v = p.value(&x).unwrap();
        assert!(v.is_finite());
        let mut ifo = IfoCounter::new();
        assert!(p.full_grad(&x, &mut ifo).unwrap().iter().all(|g| g.is_finite()));
        assert!((sigmoid(-800.0)).is_finite() && sigmoid(800.0) == 1.0);
        assert!((log1p_exp_neg(-800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_normal_equations_zero_gradient() {
        let p = RidgeProblem::from_dense(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]], vec![1.0, 0.0, 2.0], 0.1).unwrap();
        let x = p.exact_minimizer().unwrap();
        let mut ifo = IfoCounter::new();
        assert!(crate::linalg::norm(&p.full_grad(&x, &mut ifo).unwrap()) <= 1e-10);
    }

    #[test]
    fn fingerprints_distinguish_mu() {
        let a = LogisticProblem::new(unit_rows(), 0.1).unwrap().fingerprint();
        let b = LogisticProblem::new(unit_rows(), 0.2).unwrap().fingerprint();
        assert_ne!(a, b);
        assert_eq!(a, LogisticProblem::new(unit_rows(), 0.1).unwrap().fingerprint());
    }
}
