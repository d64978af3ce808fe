//! Averaging weight vectors `p ∈ Δ_{m+1}` over the inner iterates `x_0, …, x_m`.
//!
//! Rather than running all `m` inner steps and then drawing the next snapshot, the solvers
//! draw the snapshot index `M` up front and stop after `M` steps.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AveragingError {
    #[error("inner length m = {0} is too small (need m >= 2)")]
    InnerLengthTooSmall(usize),
    #[error("μη = {0} must lie in (0, 1) for weighted averaging")]
    BadContraction(f64),
    #[error("weighted SARAH normalizer is not positive for m = {m}, μη = {delta}")]
    DegenerateNormalizer { m: usize, delta: f64 },
    #[error("unknown averaging scheme {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AveragingScheme {
    /// Point mass on `x_m`.
    LastSvrg,
    /// Point mass on `x_{m−1}`.
    LastSarah,
    /// `p_k = 1/m` for `k < m`, `p_m = 0`.
    Uniform,
    /// Geometric weights increasing towards `x_{m−1}`.
    WeightedSvrg,
    /// Weights `∝ 1 − (1−μη)^{m−k−1}` on `x_0, …, x_{m−2}`.
    WeightedSarah,
}

impl AveragingScheme {
    pub fn is_weighted(self) -> bool {
        matches!(self, Self::WeightedSvrg | Self::WeightedSarah)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LastSvrg => "last-svrg",
            Self::LastSarah => "last-sarah",
            Self::Uniform => "uniform",
            Self::WeightedSvrg => "weighted-svrg",
            Self::WeightedSarah => "weighted-sarah",
        }
    }
}

impl fmt::Display for AveragingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AveragingScheme {
    type Err = AveragingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "last-svrg" => Self::LastSvrg,
            "last-sarah" => Self::LastSarah,
            "uniform" => Self::Uniform,
            "weighted-svrg" => Self::WeightedSvrg,
            "weighted-sarah" => Self::WeightedSarah,
            other => return Err(AveragingError::Unknown(other.to_string())),
        })
    }
}

/// A pmf over `{0, …, m}` with its cumulative sums.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    scheme: AveragingScheme,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WeightVector {
    fn from_raw(scheme: AveragingScheme, weights: Vec<f64>) -> Self {
        let cumulative = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Self { scheme, weights, cumulative }
    }

    pub fn scheme(&self) -> AveragingScheme {
        self.scheme
    }

    /// Inner-loop length `m` (the vector has `m + 1` entries).
    pub fn m(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean_index(&self) -> f64 {
        self.weights.iter().enumerate().map(|(k, w)| k as f64 * w).sum()
    }

    /// Inverse-CDF lookup for `u ∈ [0, 1)`. Zero-weight indices are never returned.
    pub fn index_for(&self, u: f64) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let target = u * total;
        match self.cumulative.iter().position(|&c| c > target) {
            Some(k) => k,
            None => self.weights.iter().rposition(|&w| w > 0.0).expect("some positive weight"),
        }
    }

    /// Draws `M ∈ {0, …, m}` with one uniform from `rng`.
    pub fn sample_snapshot_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index_for(rng.random::<f64>())
    }
}

/// Builds the averaging weights for `scheme` with inner length `m`, modulus `mu` and step `eta`.
/// `mu` and `eta` only matter for the weighted schemes.
pub fn weights(scheme: AveragingScheme, m: usize, mu: f64, eta: f64) -> Result<WeightVector, AveragingError> {
    if m < 2 {
        return Err(AveragingError::InnerLengthTooSmall(m));
    }
    let mut p = vec![0.0; m + 1];
    match scheme {
        AveragingScheme::LastSvrg => p[m] = 1.0,
        AveragingScheme::LastSarah => p[m - 1] = 1.0,
        AveragingScheme::Uniform => {
            let w = 1.0 / m as f64;
            p[..m].iter_mut().for_each(|x| *x = w);
        }
        AveragingScheme::WeightedSvrg => {
            let delta = check_delta(mu, eta)?;
            // p_k ∝ (1−δ)^{m−k−1}, k = 1..m−1; built from k = m−1 downwards.
            let ratio = 1.0 - delta;
            let mut term = 1.0;
            let mut q = 0.0;
            for k in (1..m).rev() {
                p[k] = term;
                q += term;
                term *= ratio;
            }
            p.iter_mut().for_each(|x| *x /= q);
        }
        AveragingScheme::WeightedSarah => {
            let delta = check_delta(mu, eta)?;
            // p_k ∝ 1 − (1−δ)^{m−k−1}, k = 0..m−2.
            let ratio = 1.0 - delta;
            let mut power = ratio;
            let mut c = 0.0;
            for k in (0..m - 1).rev() {
                let w = 1.0 - power;
                p[k] = w;
                c += w;
                power *= ratio;
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(AveragingError::DegenerateNormalizer { m, delta });
            }
            p.iter_mut().for_each(|x| *x /= c);
        }
    }
    Ok(WeightVector::from_raw(scheme, p))
}

fn check_delta(mu: f64, eta: f64) -> Result<f64, AveragingError> {
    let delta = mu * eta;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AveragingError::BadContraction(delta));
    }
    Ok(delta)
}
