//! GD, SGD, SVRG and SARAH with fixed or Barzilai-Borwein step sizes.
//!
//! One outer loop of SVRG/SARAH:
//!
//! 1. evaluate the snapshot gradient `g = ∇f(x̃^{s−1})` (`n` IFO),
//! 2. resolve the step `η^s` (fixed, or BB from the last two snapshots),
//! 3. resolve the inner length `m^s` (fixed, or `⌈c/(μη^s)⌉`),
//! 4. draw the snapshot index `M^s` from the averaging weights and run exactly `M^s`
//!    inner steps (2 IFO each), returning `x_{M^s}`.
//!
//! All randomness comes from one [`ChaCha8Rng`] stream: per outer loop the snapshot-index
//! uniform is drawn first, then one component index per inner step.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::averaging::{self, AveragingError, AveragingScheme, WeightVector};
use crate::harness::{Trace, TracePoint};
use crate::linalg::{axpy, dot, norm, norm_sq, sub, DenseVector};
use crate::problem::{Constants, ErmProblem, IfoCounter, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("iterate diverged after {step} inner steps (‖x‖ = {norm})")]
    Diverged { step: u64, norm: f64 },
    #[error("objective became non-finite at outer loop {outer}")]
    NonFiniteObjective { outer: usize },
    #[error("secant curvature ⟨Δx, Δg⟩ = {0} is not positive")]
    NonPositiveCurvature(f64),
    #[error("BB step {eta} outside [{lo}, {hi}]")]
    BbStepOutOfBounds { eta: f64, lo: f64, hi: f64 },
    #[error("BB step needs two stored snapshots")]
    BbNotReady,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Averaging(#[from] AveragingError),
}

/// Source of the two kinds of random draws the solvers consume.
pub trait IndexSampler {
    /// Uniform draw in `[0, 1)`, used for the snapshot index.
    fn next_uniform(&mut self) -> f64;
    /// Uniform component index in `0..n`.
    fn next_index(&mut self, n: usize) -> usize;
}

/// Seeded sampler backed by any [`RngCore`].
#[derive(Debug, Clone)]
pub struct RngSampler<R = ChaCha8Rng>(pub R);

impl RngSampler<ChaCha8Rng> {
    pub fn seeded(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl<R: RngCore> IndexSampler for RngSampler<R> {
    fn next_uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    fn next_index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }
}

/// Replays fixed draws; used to enumerate every sample path exactly.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSampler {
    uniforms: VecDeque<f64>,
    indices: VecDeque<usize>,
}

impl ScriptedSampler {
    pub fn new(uniforms: impl IntoIterator<Item = f64>, indices: impl IntoIterator<Item = usize>) -> Self {
        Self { uniforms: uniforms.into_iter().collect(), indices: indices.into_iter().collect() }
    }

    pub fn remaining_indices(&self) -> usize {
        self.indices.len()
    }
}

impl IndexSampler for ScriptedSampler {
    fn next_uniform(&mut self) -> f64 {
        self.uniforms.pop_front().expect("scripted uniforms exhausted")
    }

    fn next_index(&mut self, n: usize) -> usize {
        let i = self.indices.pop_front().expect("scripted indices exhausted");
        assert!(i < n, "scripted index {i} out of range for n = {n}");
        i
    }
}

fn diverged(step: u64, x: &[f64]) -> SolverError {
    SolverError::Diverged { step, norm: norm(x) }
}

/// SVRG inner iteration state: `v_k = ∇f_{i}(x_k) − ∇f_{i}(x_0) + g`.
pub struct SvrgInnerLoop<'p, P: ErmProblem + ?Sized> {
    problem: &'p P,
    anchor: DenseVector,
    anchor_grad: DenseVector,
    x: DenseVector,
    v: DenseVector,
    scratch: DenseVector,
    k: u64,
}

impl<'p, P: ErmProblem + ?Sized> SvrgInnerLoop<'p, P> {
    /// `g` must be `∇f(x0)`.
    pub fn new(problem: &'p P, x0: &[f64], g: &[f64]) -> Self {
        let d = x0.len();
        Self {
            problem,
            anchor: x0.to_vec(),
            anchor_grad: g.to_vec(),
            x: x0.to_vec(),
            v: g.to_vec(),
            scratch: vec![0.0; d],
            k: 0,
        }
    }

    /// Recomputes `v_k` at the current iterate with component `i` (2 IFO).
    pub fn refresh(&mut self, i: usize, ifo: &mut IfoCounter) {
        self.problem.component_grad_unchecked(i, &self.x, &mut self.v);
        self.problem.component_grad_unchecked(i, &self.anchor, &mut self.scratch);
        for ((v, a), g) in self.v.iter_mut().zip(&self.scratch).zip(&self.anchor_grad) {
            *v += g - a;
        }
        ifo.charge(2);
    }

    /// `x_{k+1} = x_k − η v_k`
    pub fn advance(&mut self, eta: f64) -> Result<(), SolverError> {
        axpy(-eta, &self.v, &mut self.x);
        self.k += 1;
        if !self.x.iter().all(|v| v.is_finite()) {
            return Err(diverged(self.k, &self.x));
        }
        Ok(())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn into_x(self) -> DenseVector {
        self.x
    }
}

/// SARAH inner iteration state: `v_k = ∇f_{i}(x_k) − ∇f_{i}(x_{k−1}) + v_{k−1}`, `v_0 = ∇f(x_0)`.
pub struct SarahInnerLoop<'p, P: ErmProblem + ?Sized> {
    problem: &'p P,
    x_prev: DenseVector,
    x: DenseVector,
    v: DenseVector,
    scratch: DenseVector,
    k: u64,
}

impl<'p, P: ErmProblem + ?Sized> SarahInnerLoop<'p, P> {
    /// `v0` must be `∇f(x0)`.
    pub fn new(problem: &'p P, x0: &[f64], v0: &[f64]) -> Self {
        Self {
            problem,
            x_prev: x0.to_vec(),
            x: x0.to_vec(),
            v: v0.to_vec(),
            scratch: vec![0.0; x0.len()],
            k: 0,
        }
    }

    /// Recursive estimator update at the current iterate `x_k`, `k ≥ 1` (2 IFO).
    pub fn refresh(&mut self, i: usize, ifo: &mut IfoCounter) {
        assert!(self.k >= 1, "SARAH refresh needs a previous iterate");
        self.problem.component_grad_unchecked(i, &self.x, &mut self.scratch);
        axpy(1.0, &self.scratch, &mut self.v);
        self.problem.component_grad_unchecked(i, &self.x_prev, &mut self.scratch);
        axpy(-1.0, &self.scratch, &mut self.v);
        ifo.charge(2);
    }

    /// `x_{k+1} = x_k − η v_k`
    pub fn advance(&mut self, eta: f64) -> Result<(), SolverError> {
        self.x_prev.copy_from_slice(&self.x);
        axpy(-eta, &self.v, &mut self.x);
        self.k += 1;
        if !self.x.iter().all(|v| v.is_finite()) {
            return Err(diverged(self.k, &self.x));
        }
        Ok(())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_prev(&self) -> &[f64] {
        &self.x_prev
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn into_x(self) -> DenseVector {
        self.x
    }
}

/// Result of one SVRG/SARAH outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    /// `x̃^s = x_{M^s}`
    pub x_next: DenseVector,
    /// `∇f(x0)`, the snapshot gradient of this outer loop.
    pub snapshot_grad: DenseVector,
    /// Sampled `M^s`.
    pub snapshot_index: usize,
}

/// One SVRG outer loop from `x0`: snapshot gradient, then `M^s` inner steps.
pub fn svrg_inner<P: ErmProblem + ?Sized, S: IndexSampler + ?Sized>(
    problem: &P,
    x0: &[f64],
    eta: f64,
    m: usize,
    averaging: AveragingScheme,
    sampler: &mut S,
    ifo: &mut IfoCounter,
) -> Result<InnerOutcome, SolverError> {
    let w = averaging::weights(averaging, m, problem.mu(), eta)?;
    let g = problem.full_grad(x0, ifo)?;
    svrg_inner_from_snapshot(problem, x0, g, eta, &w, sampler, ifo)
}

/// SVRG inner loop with a precomputed snapshot gradient `g = ∇f(x0)`.
pub fn svrg_inner_from_snapshot<P: ErmProblem + ?Sized, S: IndexSampler + ?Sized>(
    problem: &P,
    x0: &[f64],
    g: DenseVector,
    eta: f64,
    weights: &WeightVector,
    sampler: &mut S,
    ifo: &mut IfoCounter,
) -> Result<InnerOutcome, SolverError> {
    let snapshot_index = weights.index_for(sampler.next_uniform());
    let n = problem.n();
    let mut inner = SvrgInnerLoop::new(problem, x0, &g);
    for _ in 0..snapshot_index {
        inner.refresh(sampler.next_index(n), ifo);
        inner.advance(eta)?;
    }
    Ok(InnerOutcome { x_next: inner.into_x(), snapshot_grad: g, snapshot_index })
}

/// One SARAH outer loop from `x0`.
pub fn sarah_inner<P: ErmProblem + ?Sized, S: IndexSampler + ?Sized>(
    problem: &P,
    x0: &[f64],
    eta: f64,
    m: usize,
    averaging: AveragingScheme,
    sampler: &mut S,
    ifo: &mut IfoCounter,
) -> Result<InnerOutcome, SolverError> {
    let w = averaging::weights(averaging, m, problem.mu(), eta)?;
    let g = problem.full_grad(x0, ifo)?;
    sarah_inner_from_snapshot(problem, x0, g, eta, &w, sampler, ifo)
}

/// SARAH inner loop with a precomputed `v_0 = ∇f(x0)`.
pub fn sarah_inner_from_snapshot<P: ErmProblem + ?Sized, S: IndexSampler + ?Sized>(
    problem: &P,
    x0: &[f64],
    g: DenseVector,
    eta: f64,
    weights: &WeightVector,
    sampler: &mut S,
    ifo: &mut IfoCounter,
) -> Result<InnerOutcome, SolverError> {
    let snapshot_index = weights.index_for(sampler.next_uniform());
    let n = problem.n();
    let mut inner = SarahInnerLoop::new(problem, x0, &g);
    if snapshot_index >= 1 {
        inner.advance(eta)?;
        for _ in 1..snapshot_index {
            inner.refresh(sampler.next_index(n), ifo);
            inner.advance(eta)?;
        }
    }
    Ok(InnerOutcome { x_next: inner.into_x(), snapshot_grad: g, snapshot_index })
}

/// Last two snapshots and their full gradients, plus the previous step size.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OuterState {
    /// `(x̃^{s−1}, ∇f(x̃^{s−1}))`
    pub latest: Option<(DenseVector, DenseVector)>,
    /// `(x̃^{s−2}, ∇f(x̃^{s−2}))`
    pub previous: Option<(DenseVector, DenseVector)>,
    pub last_eta: Option<f64>,
}

impl OuterState {
    pub fn push(&mut self, x: DenseVector, g: DenseVector) {
        self.previous = self.latest.take();
        self.latest = Some((x, g));
    }

    pub fn ready(&self) -> bool {
        self.latest.is_some() && self.previous.is_some()
    }
}

/// Secants with `‖Δx‖ ≤ BB_DEGENERATE_STEP · max(1, ‖x̃^{s−1}‖)` count as `Δx = 0`.
pub const BB_DEGENERATE_STEP: f64 = 1e-10;
/// Relative slack on the `[1/(θL), 1/(θμ)]` check before it is reported as an error.
pub const BB_BOUND_SLACK: f64 = 1e-6;

/// Barzilai-Borwein step `η^s = ‖Δx‖² / (θ_κ ⟨Δx, Δg⟩)` from the two stored snapshots.
///
/// The result always lies in `[1/(θ_κ L), 1/(θ_κ μ)]`; values within floating-point slack
/// of the interval are clamped into it. A vanishing `Δx` reuses `state.last_eta`.
pub fn bb_step(state: &OuterState, theta_kappa: f64, constants: &Constants) -> Result<f64, SolverError> {
    let (Some((x1, g1)), Some((x2, g2))) = (&state.latest, &state.previous) else {
        return Err(SolverError::BbNotReady);
    };
    let dx = sub(x1, x2);
    let dg = sub(g1, g2);
    let sxx = norm_sq(&dx);
    if sxx.sqrt() <= BB_DEGENERATE_STEP * norm(x1).max(1.0) {
        return state.last_eta.ok_or(SolverError::BbNotReady);
    }
    let sxg = dot(&dx, &dg);
    if sxg.is_nan() || sxg <= 0.0 {
        return Err(SolverError::NonPositiveCurvature(sxg));
    }
    let eta = sxx / (theta_kappa * sxg);
    let lo = 1.0 / (theta_kappa * constants.l);
    let hi = 1.0 / (theta_kappa * constants.mu);
    if !(eta >= lo * (1.0 - BB_BOUND_SLACK) && eta <= hi * (1.0 + BB_BOUND_SLACK)) {
        return Err(SolverError::BbStepOutOfBounds { eta, lo, hi });
    }
    Ok(eta.clamp(lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Gd,
    Sgd,
    Svrg,
    Sarah,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::Sgd => "sgd",
            Self::Svrg => "svrg",
            Self::Sarah => "sarah",
        }
    }

    pub fn is_variance_reduced(self) -> bool {
        matches!(self, Self::Svrg | Self::Sarah)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "gd" => Self::Gd,
            "sgd" => Self::Sgd,
            "svrg" => Self::Svrg,
            "sarah" => Self::Sarah,
            other => return Err(SolverError::InvalidConfig(format!("unknown algorithm {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed { eta: f64 },
    /// BB steps from outer loop 2 on; outer loop 1 uses `eta0`, which defaults to
    /// `1/(θ_κ μ)`.
    BarzilaiBorwein { theta_kappa: f64, eta0: Option<f64> },
    /// SGD baseline `η = scale / (L (n_e + 1))` with `n_e` the epoch index.
    DecayingSgd { scale: f64 },
}

impl StepRule {
    pub fn bb(theta_kappa: f64) -> Self {
        Self::BarzilaiBorwein { theta_kappa, eta0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerLengthRule {
    Fixed(usize),
    /// `m^s = max(2, ⌈c / (μ η^s)⌉)`
    Adaptive { c: f64 },
}

impl InnerLengthRule {
    pub fn resolve(&self, mu: f64, eta: f64) -> usize {
        match *self {
            Self::Fixed(m) => m,
            Self::Adaptive { c } => adaptive_inner_length(c, mu, eta),
        }
    }
}

pub fn adaptive_inner_length(c: f64, mu: f64, eta: f64) -> usize {
    let m = (c / (mu * eta)).ceil();
    if m >= usize::MAX as f64 {
        usize::MAX
    } else {
        (m as usize).max(2)
    }
}

/// Smallest admissible `θ_κ / κ` for BB step sizes with the given algorithm and averaging.
pub fn default_theta_factor(algorithm: Algorithm, averaging: AveragingScheme) -> f64 {
    match (algorithm, averaging) {
        (Algorithm::Svrg, _) => 4.0,
        (_, AveragingScheme::LastSarah) => 1.5,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub step_rule: StepRule,
    pub inner_rule: Option<InnerLengthRule>,
    pub averaging: Option<AveragingScheme>,
    pub max_outer_loops: Option<usize>,
    pub ifo_budget: Option<u64>,
    pub seed: u64,
    /// Starting point; the zero vector when unset.
    pub x0: Option<DenseVector>,
    /// Record `f − f*` and `‖∇f‖²` per outer loop (not charged to the IFO budget).
    pub evaluate: bool,
}

impl SolverConfig {
    fn base(algorithm: Algorithm, step_rule: StepRule) -> Self {
        Self {
            algorithm,
            step_rule,
            inner_rule: None,
            averaging: None,
            max_outer_loops: None,
            ifo_budget: None,
            seed: 0,
            x0: None,
            evaluate: true,
        }
    }

    /// Full gradient descent with `η = 1/L`.
    pub fn gd(constants: &Constants) -> Self {
        Self::base(Algorithm::Gd, StepRule::Fixed { eta: 1.0 / constants.l })
    }

    /// SGD with the decaying step `0.05 / (L (n_e + 1))`.
    pub fn sgd() -> Self {
        Self::base(Algorithm::Sgd, StepRule::DecayingSgd { scale: 0.05 })
    }

    pub fn svrg(eta: f64, m: usize, averaging: AveragingScheme) -> Self {
        Self {
            inner_rule: Some(InnerLengthRule::Fixed(m)),
            averaging: Some(averaging),
            ..Self::base(Algorithm::Svrg, StepRule::Fixed { eta })
        }
    }

    pub fn sarah(eta: f64, m: usize, averaging: AveragingScheme) -> Self {
        Self {
            inner_rule: Some(InnerLengthRule::Fixed(m)),
            averaging: Some(averaging),
            ..Self::base(Algorithm::Sarah, StepRule::Fixed { eta })
        }
    }

    /// BB steps with θ_κ at its smallest admissible value, `m^s = ⌈c/(μη^s)⌉` with `c = 1`.
    pub fn tune_free(algorithm: Algorithm, averaging: AveragingScheme, constants: &Constants) -> Self {
        let theta = default_theta_factor(algorithm, averaging) * constants.kappa;
        Self {
            inner_rule: Some(InnerLengthRule::Adaptive { c: 1.0 }),
            averaging: Some(averaging),
            ..Self::base(algorithm, StepRule::bb(theta))
        }
    }

    /// Tune-free BB-SVRG: θ_κ = 4κ, c = 1, weighted averaging.
    pub fn tune_free_svrg(constants: &Constants) -> Self {
        Self::tune_free(Algorithm::Svrg, AveragingScheme::WeightedSvrg, constants)
    }

    /// Tune-free BB-SARAH: θ_κ = κ, c = 1, weighted averaging.
    pub fn tune_free_sarah(constants: &Constants) -> Self {
        Self::tune_free(Algorithm::Sarah, AveragingScheme::WeightedSarah, constants)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ifo_budget(mut self, budget: u64) -> Self {
        self.ifo_budget = Some(budget);
        self
    }

    /// Budget expressed in sample passes (`IFO / n`).
    pub fn with_passes(self, n: usize, passes: f64) -> Self {
        self.with_ifo_budget((passes * n as f64).round() as u64)
    }

    pub fn with_outer_loops(mut self, loops: usize) -> Self {
        self.max_outer_loops = Some(loops);
        self
    }

    pub fn with_x0(mut self, x0: DenseVector) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_step_rule(mut self, rule: StepRule) -> Self {
        self.step_rule = rule;
        self
    }

    pub fn with_inner_rule(mut self, rule: InnerLengthRule) -> Self {
        self.inner_rule = Some(rule);
        self
    }

    pub fn with_evaluation(mut self, evaluate: bool) -> Self {
        self.evaluate = evaluate;
        self
    }

    /// Short human-readable label such as `bb-sarah-weighted-sarah`.
    pub fn label(&self) -> String {
        let prefix = if matches!(self.step_rule, StepRule::BarzilaiBorwein { .. }) { "bb-" } else { "" };
        match self.averaging {
            Some(avg) => format!("{prefix}{}-{}", self.algorithm, avg),
            None => format!("{prefix}{}", self.algorithm),
        }
    }

    pub fn validate(&self, problem_dim: usize) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if self.max_outer_loops.is_none() && self.ifo_budget.is_none() {
            return bad("either an outer-loop count or an IFO budget is required".into());
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != problem_dim {
                return bad(format!("x0 has dimension {} but the problem has {problem_dim}", x0.len()));
            }
        }
        match self.step_rule {
            StepRule::Fixed { eta } if !(eta > 0.0 && eta.is_finite()) => return bad(format!("step size {eta}")),
            StepRule::BarzilaiBorwein { theta_kappa, eta0 } => {
                if !(theta_kappa > 0.0 && theta_kappa.is_finite()) {
                    return bad(format!("θ_κ = {theta_kappa}"));
                }
                if eta0.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
                    return bad(format!("η_0 = {eta0:?}"));
                }
                if !self.algorithm.is_variance_reduced() {
                    return bad(format!("BB steps are not defined for {}", self.algorithm));
                }
            }
            StepRule::DecayingSgd { scale } => {
                if scale.is_nan() || scale <= 0.0 {
                    return bad(format!("SGD step scale {scale}"));
                }
                if self.algorithm != Algorithm::Sgd {
                    return bad(format!("decaying SGD steps used with {}", self.algorithm));
                }
            }
            StepRule::Fixed { .. } => {}
        }
        if self.algorithm.is_variance_reduced() {
            if self.averaging.is_none() {
                return bad(format!("{} needs an averaging scheme", self.algorithm));
            }
            match self.inner_rule {
                None => return bad(format!("{} needs an inner-loop rule", self.algorithm)),
                Some(InnerLengthRule::Fixed(m)) if m < 2 => return bad(format!("inner length m = {m}")),
                Some(InnerLengthRule::Adaptive { c }) if !(c > 0.0 && c.is_finite()) => {
                    return bad(format!("adaptive constant c = {c}"))
                }
                _ => {}
            }
        } else {
            if self.averaging.is_some() {
                return bad(format!("averaging is meaningless for {}", self.algorithm));
            }
            if self.inner_rule.is_some() {
                return bad(format!("inner-loop rule is meaningless for {}", self.algorithm));
            }
        }
        Ok(())
    }
}

/// Runs `config` on `problem`; gaps are left empty (see [`run_with_reference`]).
pub fn run<P: ErmProblem + ?Sized>(problem: &P, config: &SolverConfig) -> Result<Trace, SolverError> {
    run_with_reference(problem, config, None)
}

/// Evaluates `(f(x) − f*, ‖∇f(x)‖²)` without charging any IFO budget.
pub fn evaluate_point<P: ErmProblem + ?Sized>(problem: &P, x: &[f64], f_star: Option<f64>) -> (Option<f64>, f64) {
    let mut scratch = IfoCounter::new();
    let mut g = vec![0.0; problem.dim()];
    problem.full_grad_into(x, &mut g, &mut scratch);
    let gap = f_star.map(|fs| problem.value_unchecked(x) - fs);
    (gap, norm_sq(&g))
}

struct Recorder<'a, P: ErmProblem + ?Sized> {
    problem: &'a P,
    f_star: Option<f64>,
    evaluate: bool,
    points: Vec<TracePoint>,
}

impl<P: ErmProblem + ?Sized> Recorder<'_, P> {
    fn record(&mut self, s: usize, eta_s: f64, m_s: usize, snapshot_index: usize, ifo: &IfoCounter, x: &[f64]) -> Result<(), SolverError> {
        if s > 0 && !self.problem.value_unchecked(x).is_finite() {
            return Err(SolverError::NonFiniteObjective { outer: s });
        }
        let (gap, grad_sq) = if self.evaluate {
            let (gap, g) = evaluate_point(self.problem, x, self.f_star);
            (gap, Some(g))
        } else {
            (None, None)
        };
        self.points.push(TracePoint { s, eta_s, m_s, snapshot_index, ifo_total: ifo.count(), gap, grad_sq });
        Ok(())
    }
}

/// Runs `config`, recording one trace point per outer loop (per epoch for SGD, per step
/// for GD) plus the starting point. Stops after `max_outer_loops` or once the IFO count
/// reaches `ifo_budget`, checked between outer loops.
pub fn run_with_reference<P: ErmProblem + ?Sized>(
    problem: &P,
    config: &SolverConfig,
    f_star: Option<f64>,
) -> Result<Trace, SolverError> {
    config.validate(problem.dim())?;
    let constants = problem.constants();
    let n = problem.n();
    let mut sampler = RngSampler::seeded(config.seed);
    let mut ifo = IfoCounter::new();
    let mut x = config.x0.clone().unwrap_or_else(|| vec![0.0; problem.dim()]);
    let mut rec = Recorder { problem, f_star, evaluate: config.evaluate, points: Vec::new() };
    rec.record(0, 0.0, 0, 0, &ifo, &x)?;

    let mut state = OuterState::default();
    let mut s = 0usize;
    let mut grad = vec![0.0; problem.dim()];
    loop {
        if config.max_outer_loops.is_some_and(|cap| s >= cap) || config.ifo_budget.is_some_and(|b| ifo.count() >= b) {
            break;
        }
        s += 1;
        match config.algorithm {
            Algorithm::Gd => {
                let StepRule::Fixed { eta } = config.step_rule else { unreachable!("validated") };
                problem.full_grad_into(&x, &mut grad, &mut ifo);
                axpy(-eta, &grad, &mut x);
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(diverged(s as u64, &x));
                }
                rec.record(s, eta, 1, 1, &ifo, &x)?;
            }
            Algorithm::Sgd => {
                let epoch = s - 1;
                let eta = match config.step_rule {
                    StepRule::DecayingSgd { scale } => scale / (constants.l * (epoch as f64 + 1.0)),
                    StepRule::Fixed { eta } => eta,
                    StepRule::BarzilaiBorwein { .. } => unreachable!("validated"),
                };
                for step in 0..n {
                    let i = sampler.next_index(n);
                    problem.component_grad_unchecked(i, &x, &mut grad);
                    ifo.charge(1);
                    axpy(-eta, &grad, &mut x);
                    if !x.iter().all(|v| v.is_finite()) {
                        return Err(diverged((epoch * n + step + 1) as u64, &x));
                    }
                }
                rec.record(s, eta, n, n, &ifo, &x)?;
            }
            Algorithm::Svrg | Algorithm::Sarah => {
                let averaging = config.averaging.expect("validated");
                let inner_rule = config.inner_rule.expect("validated");
                let g = problem.full_grad(&x, &mut ifo)?;
                state.push(x.clone(), g.clone());
                let eta = match config.step_rule {
                    StepRule::Fixed { eta } => eta,
                    StepRule::BarzilaiBorwein { theta_kappa, eta0 } => {
                        if state.ready() {
                            bb_step(&state, theta_kappa, &constants)?
                        } else {
                            eta0.unwrap_or(1.0 / (theta_kappa * constants.mu))
                        }
                    }
                    StepRule::DecayingSgd { .. } => unreachable!("validated"),
                };
                state.last_eta = Some(eta);
                let m = inner_rule.resolve(constants.mu, eta);
                let w = averaging::weights(averaging, m, constants.mu, eta)?;
                let outcome = if config.algorithm == Algorithm::Svrg {
                    svrg_inner_from_snapshot(problem, &x, g, eta, &w, &mut sampler, &mut ifo)?
                } else {
                    sarah_inner_from_snapshot(problem, &x, g, eta, &w, &mut sampler, &mut ifo)?
                };
                x = outcome.x_next;
                rec.record(s, eta, m, outcome.snapshot_index, &ifo, &x)?;
            }
        }
    }
    Ok(Trace { label: config.label(), n, points: rec.points, final_x: x })
}
