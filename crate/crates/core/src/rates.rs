//! Closed-form per-outer-loop contraction factors λ for SVRG and SARAH under each averaging
//! scheme, plus the worst-case bounds that hold for any BB step in `[1/(θL), 1/(θμ)]`.
//!
//! SVRG rates contract `E[f − f*]`; SARAH rates contract `E‖∇f‖²`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::fmt_shortest;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("invalid rate query: {0}")]
    InvalidQuery(String),
    #[error("empty sweep")]
    EmptySweep,
    #[error("unknown rate scheme {0:?}")]
    UnknownScheme(String),
    #[error("unknown figure {0:?} (expected 1a, 1b, 2 or 4b-analytic)")]
    UnknownFigure(String),
}

/// Parameters of a fixed-step rate: step `eta`, inner length `m` and constants `L ≥ μ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateQuery {
    pub eta: f64,
    pub m: f64,
    pub l: f64,
    pub mu: f64,
}

impl RateQuery {
    pub fn new(eta: f64, m: f64, l: f64, mu: f64) -> Self {
        Self { eta, m, l, mu }
    }

    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    fn validate(&self) -> Result<(), RateError> {
        validate_common(self.m, self.l, self.mu)?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(RateError::InvalidQuery(format!("η = {}", self.eta)));
        }
        Ok(())
    }
}

/// Parameters of a worst-case BB rate bound: scaling `theta_kappa` instead of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbRateQuery {
    pub theta_kappa: f64,
    pub m: f64,
    pub l: f64,
    pub mu: f64,
}

impl BbRateQuery {
    pub fn new(theta_kappa: f64, m: f64, l: f64, mu: f64) -> Self {
        Self { theta_kappa, m, l, mu }
    }

    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    fn validate(&self) -> Result<(), RateError> {
        validate_common(self.m, self.l, self.mu)?;
        if !(self.theta_kappa > 0.0 && self.theta_kappa.is_finite()) {
            return Err(RateError::InvalidQuery(format!("θ_κ = {}", self.theta_kappa)));
        }
        Ok(())
    }
}

fn validate_common(m: f64, l: f64, mu: f64) -> Result<(), RateError> {
    if !(m >= 2.0 && m.is_finite()) {
        return Err(RateError::InvalidQuery(format!("m = {m}")));
    }
    if !(mu > 0.0 && mu.is_finite() && l >= mu && l.is_finite()) {
        return Err(RateError::InvalidQuery(format!("need L ≥ μ > 0, got L = {l}, μ = {mu}")));
    }
    Ok(())
}

/// A rate value; points outside a formula's domain are explicitly undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    /// `guaranteed` is false when the formula evaluates but the parameters sit outside the
    /// range for which it is a proven bound.
    Defined { value: f64, guaranteed: bool },
    Undefined,
}

impl RateValue {
    fn from(value: f64, guaranteed: bool) -> Self {
        if value.is_finite() {
            Self::Defined { value, guaranteed }
        } else {
            Self::Undefined
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Self::Defined { value, .. } => Some(value),
            Self::Undefined => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Self::Defined { .. })
    }

    pub fn is_guaranteed(&self) -> bool {
        matches!(self, Self::Defined { guaranteed: true, .. })
    }
}

/// `(1 − δ)^m` for `δ ∈ [0, 1)`.
pub fn one_minus_pow(delta: f64, m: f64) -> f64 {
    (m * (-delta).ln_1p()).exp()
}

/// `1 − (1 − δ)^m`
fn one_minus_one_minus_pow(delta: f64, m: f64) -> f64 {
    -(m * (-delta).ln_1p()).exp_m1()
}

/// Weighted-SARAH normalizer `c = m − 1/δ + (1−δ)^m/δ`, evaluated without cancellation.
pub fn sarah_normalizer(delta: f64, m: f64) -> f64 {
    if delta * m < 0.1 {
        // c = Σ_{j≥2} (−1)^j C(m, j) δ^{j−1}
        let mut term = m * (m - 1.0) / 2.0 * delta;
        let mut sum = term;
        let mut j = 2.0;
        while term.abs() > 1e-18 * sum.abs() && j < 200.0 {
            term *= -(m - j) / (j + 1.0) * delta;
            sum += term;
            j += 1.0;
        }
        sum
    } else {
        m - one_minus_one_minus_pow(delta, m) / delta
    }
}

/// SVRG with weighted averaging. Defined for `η < 1/(2L)`; guaranteed for `η < 1/(4L)`.
pub fn lambda_svrg_w(q: &RateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let (eta, m, l, mu) = (q.eta, q.m, q.l, q.mu);
    if eta * l >= 0.5 {
        return Ok(RateValue::Undefined);
    }
    let delta = mu * eta;
    let d = 1.0 - 2.0 * eta * l;
    let pm = one_minus_pow(delta, m);
    let pm1 = one_minus_pow(delta, m - 1.0);
    let bracket = pm / d + 2.0 * mu * l * eta * eta * pm1 / d + 2.0 * l * eta / d;
    Ok(RateValue::from(bracket / one_minus_one_minus_pow(delta, m - 1.0), eta * l < 0.25))
}

/// SVRG with uniform averaging. Defined for `η < 1/(2L)`; guaranteed for `η < 1/(4L)`.
pub fn lambda_svrg_u(q: &RateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let (eta, m, l, mu) = (q.eta, q.m, q.l, q.mu);
    if eta * l >= 0.5 {
        return Ok(RateValue::Undefined);
    }
    let d = 1.0 - 2.0 * eta * l;
    Ok(RateValue::from(1.0 / (mu * eta * d * m) + 2.0 * eta * l / d, eta * l < 0.25))
}

/// SARAH with weighted averaging. Defined for `η < 1/L` and `L > μ`.
pub fn lambda_sarah_w(q: &RateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let (eta, m, l, mu) = (q.eta, q.m, q.l, q.mu);
    if eta * l >= 1.0 || l <= mu {
        return Ok(RateValue::Undefined);
    }
    let kappa = q.kappa();
    let delta = mu * eta;
    let c = sarah_normalizer(delta, m);
    if c.is_nan() || c <= 0.0 {
        return Ok(RateValue::Undefined);
    }
    let el = eta * l;
    let a = m * (-delta).ln_1p();
    let b = m * (-2.0 * el / (1.0 + kappa)).ln_1p();
    // (1−δ)^m − (1 − 2ηL/(1+κ))^m = e^b (e^{a−b} − 1)
    let diff = b.exp() * (a - b).exp_m1();
    let pm = a.exp();
    let value = diff * (l + mu) / (c * (l - mu))
        + pm / (c * delta)
        + el * (m - 1.0) / (c * (2.0 - el))
        + (2.0 - 2.0 * el) / (2.0 - el) * (1.0 + kappa) / (2.0 * c * el);
    Ok(RateValue::from(value, true))
}

/// SARAH with uniform averaging. Defined for `η < 2/L`.
pub fn lambda_sarah_u(q: &RateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let el = q.eta * q.l;
    if el >= 2.0 {
        return Ok(RateValue::Undefined);
    }
    Ok(RateValue::from(1.0 / (q.mu * q.eta * q.m) + el / (2.0 - el), true))
}

/// SARAH with last-iterate averaging. Defined for `η ≤ 2/(μ + L)`.
pub fn lambda_sarah_l(q: &RateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    if q.eta > 2.0 / (q.mu + q.l) {
        return Ok(RateValue::Undefined);
    }
    let el = q.eta * q.l;
    let r = one_minus_pow(2.0 * el / (1.0 + q.kappa()), q.m);
    Ok(RateValue::from(2.0 * el / (2.0 - el) + 2.0 * (1.0 + el) * r, true))
}

/// Worst-case BB-SVRG/U-Avg rate. Defined for `θ_κ > 2κ`; guaranteed for `θ_κ > 4κ`.
pub fn bb_svrg_u_bound(q: &BbRateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let (k, t, m) = (q.kappa(), q.theta_kappa, q.m);
    let r = k / t;
    if 2.0 * r >= 1.0 {
        return Ok(RateValue::Undefined);
    }
    let d = 1.0 - 2.0 * r;
    Ok(RateValue::from(k * t / (m * d) + 2.0 * r / d, t > 4.0 * k))
}

/// Worst-case BB-SVRG/W-Avg rate. Defined for `θ_κ > 2κ`; guaranteed for `θ_κ > 4κ`.
pub fn bb_svrg_w_bound(q: &BbRateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let (k, t, m) = (q.kappa(), q.theta_kappa, q.m);
    let r = k / t;
    if 2.0 * r >= 1.0 {
        return Ok(RateValue::Undefined);
    }
    let d = 1.0 - 2.0 * r;
    let delta = 1.0 / (k * t);
    let pm = one_minus_pow(delta, m);
    let pm1 = one_minus_pow(delta, m - 1.0);
    let bracket = pm / d + 2.0 * k / (t * t) * pm1 / d + 2.0 * r / d;
    Ok(RateValue::from(bracket / one_minus_one_minus_pow(delta, m - 1.0), t > 4.0 * k))
}

/// Worst-case BB-SARAH/U-Avg rate. Defined for `θ_κ > κ/2`; guaranteed for `θ_κ > κ`.
pub fn bb_sarah_u_bound(q: &BbRateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let (k, t, m) = (q.kappa(), q.theta_kappa, q.m);
    let r = k / t;
    if r >= 2.0 {
        return Ok(RateValue::Undefined);
    }
    Ok(RateValue::from(k * t / m + r / (2.0 - r), t > k))
}

/// Worst-case BB-SARAH/L-Avg rate. Defined for `θ_κ > κ/2`; guaranteed for `θ_κ > 3κ/2`.
pub fn bb_sarah_l_bound(q: &BbRateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let (k, t, m) = (q.kappa(), q.theta_kappa, q.m);
    let r = k / t;
    if r >= 2.0 {
        return Ok(RateValue::Undefined);
    }
    let tail = one_minus_pow(2.0 / ((1.0 + k) * t), m);
    Ok(RateValue::from(2.0 * r / (2.0 - r) + 2.0 * (1.0 + r) * tail, t > 1.5 * k))
}

/// Worst-case BB-SARAH/W-Avg rate, with the normalizer replaced by its lower bound
/// `m − κθ_κ`. Defined when that bound is positive, `L > μ` and `θ_κ > κ/2`;
/// guaranteed for `θ_κ > κ`.
pub fn bb_sarah_w_bound(q: &BbRateQuery) -> Result<RateValue, RateError> {
    q.validate()?;
    let (k, t, m, l, mu) = (q.kappa(), q.theta_kappa, q.m, q.l, q.mu);
    let r = k / t;
    let c = m - k * t;
    if r >= 2.0 || l <= mu || c.is_nan() || c <= 0.0 {
        return Ok(RateValue::Undefined);
    }
    let pm = one_minus_pow(1.0 / (k * t), m);
    let value = k * t * pm / c
        + pm * (l + mu) / (c * (l - mu))
        + (m - 1.0) * r / (c * (2.0 - r))
        + 2.0 / (2.0 - r) * (1.0 + k) * t / (2.0 * c);
    Ok(RateValue::from(value, t > k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateScheme {
    SvrgW,
    SvrgU,
    SarahW,
    SarahU,
    SarahL,
    BbSvrgU,
    BbSvrgW,
    BbSarahU,
    BbSarahL,
    BbSarahW,
}

impl RateScheme {
    pub const ALL: [RateScheme; 10] = [
        Self::SvrgW,
        Self::SvrgU,
        Self::SarahW,
        Self::SarahU,
        Self::SarahL,
        Self::BbSvrgU,
        Self::BbSvrgW,
        Self::BbSarahU,
        Self::BbSarahL,
        Self::BbSarahW,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SvrgW => "svrg-w",
            Self::SvrgU => "svrg-u",
            Self::SarahW => "sarah-w",
            Self::SarahU => "sarah-u",
            Self::SarahL => "sarah-l",
            Self::BbSvrgU => "bb-svrg-u",
            Self::BbSvrgW => "bb-svrg-w",
            Self::BbSarahU => "bb-sarah-u",
            Self::BbSarahL => "bb-sarah-l",
            Self::BbSarahW => "bb-sarah-w",
        }
    }

    pub fn is_bb(self) -> bool {
        matches!(self, Self::BbSvrgU | Self::BbSvrgW | Self::BbSarahU | Self::BbSarahL | Self::BbSarahW)
    }

    pub fn evaluate(self, p: &RateParams) -> Result<RateValue, RateError> {
        let q = RateQuery::new(p.eta, p.m, p.l, p.mu);
        let b = BbRateQuery::new(p.theta_kappa, p.m, p.l, p.mu);
        match self {
            Self::SvrgW => lambda_svrg_w(&q),
            Self::SvrgU => lambda_svrg_u(&q),
            Self::SarahW => lambda_sarah_w(&q),
            Self::SarahU => lambda_sarah_u(&q),
            Self::SarahL => lambda_sarah_l(&q),
            Self::BbSvrgU => bb_svrg_u_bound(&b),
            Self::BbSvrgW => bb_svrg_w_bound(&b),
            Self::BbSarahU => bb_sarah_u_bound(&b),
            Self::BbSarahL => bb_sarah_l_bound(&b),
            Self::BbSarahW => bb_sarah_w_bound(&b),
        }
    }
}

impl fmt::Display for RateScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateScheme {
    type Err = RateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| RateError::UnknownScheme(s.to_string()))
    }
}

/// Base point of a sweep. `eta` is used by fixed-step schemes, `theta_kappa` by BB bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub eta: f64,
    pub m: f64,
    pub l: f64,
    pub mu: f64,
    pub theta_kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Eta,
    M,
    ThetaKappa,
}

impl FromStr for SweepVar {
    type Err = RateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eta" => Ok(Self::Eta),
            "m" => Ok(Self::M),
            "theta" | "theta-kappa" => Ok(Self::ThetaKappa),
            other => Err(RateError::InvalidQuery(format!("unknown sweep variable {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn new(var: SweepVar, values: Vec<f64>) -> Self {
        Self { var, values }
    }

    /// `points` log-spaced values from `lo` to `hi`, rounded to integers when `integer`.
    pub fn log_spaced(var: SweepVar, lo: f64, hi: f64, points: usize, integer: bool) -> Self {
        let values = (0..points)
            .map(|i| {
                let t = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
                let v = (lo.ln() + t * (hi.ln() - lo.ln())).exp();
                if integer { v.round() } else { v }
            })
            .collect::<Vec<_>>();
        let mut values = values;
        values.dedup();
        Self { var, values }
    }

    fn apply(&self, base: &RateParams, x: f64) -> RateParams {
        let mut p = *base;
        match self.var {
            SweepVar::Eta => p.eta = x,
            SweepVar::M => p.m = x,
            SweepVar::ThetaKappa => p.theta_kappa = x,
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub scheme: RateScheme,
    pub x: f64,
    pub lambda: RateValue,
}

/// Evaluates every scheme at every sweep value, scheme-major.
pub fn rate_grid(schemes: &[RateScheme], base: &RateParams, sweep: &Sweep) -> Result<Vec<GridRow>, RateError> {
    if sweep.values.is_empty() || schemes.is_empty() {
        return Err(RateError::EmptySweep);
    }
    let mut rows = Vec::with_capacity(schemes.len() * sweep.values.len());
    for &scheme in schemes {
        for &x in &sweep.values {
            rows.push(GridRow { scheme, x, lambda: scheme.evaluate(&sweep.apply(base, x))? });
        }
    }
    Ok(rows)
}

pub const GRID_CSV_HEADER: &str = "scheme,x,lambda,defined";

pub fn write_grid_csv<W: Write>(rows: &[GridRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{GRID_CSV_HEADER}")?;
    for r in rows {
        match r.lambda.value() {
            Some(v) => writeln!(out, "{},{},{},true", r.scheme, fmt_shortest(r.x), fmt_shortest(v))?,
            None => writeln!(out, "{},{},,false", r.scheme, fmt_shortest(r.x))?,
        }
    }
    Ok(())
}

pub fn grid_csv_string(rows: &[GridRow]) -> String {
    let mut buf = Vec::new();
    write_grid_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Rate figures with their exact constants, schemes and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// SVRG W-Avg vs U-Avg over `m`, `κ = 1e5`, `η = 0.1/L`.
    Fig1a,
    /// SARAH W/U/L-Avg over `m`, `κ = 1e5`, `η = 0.5/L`.
    Fig1b,
    /// SARAH W/U/L-Avg over `η`, `κ = 1e5`, `m = 10κ`.
    Fig2,
    /// Worst-case BB-SARAH bounds over `m`, `κ = 1388`, `θ_κ = 2κ`.
    Fig4bAnalytic,
}

pub const FIGURE_GRID_POINTS: usize = 81;

impl Figure {
    pub fn id(self) -> &'static str {
        match self {
            Self::Fig1a => "1a",
            Self::Fig1b => "1b",
            Self::Fig2 => "2",
            Self::Fig4bAnalytic => "4b-analytic",
        }
    }

    pub fn schemes(self) -> Vec<RateScheme> {
        use RateScheme::*;
        match self {
            Self::Fig1a => vec![SvrgW, SvrgU],
            Self::Fig1b | Self::Fig2 => vec![SarahW, SarahU, SarahL],
            Self::Fig4bAnalytic => vec![BbSarahW, BbSarahU, BbSarahL],
        }
    }

    pub fn base(self) -> RateParams {
        match self {
            Self::Fig1a => RateParams { eta: 0.1, m: 1e5, l: 1.0, mu: 1e-5, theta_kappa: 4e5 },
            Self::Fig1b => RateParams { eta: 0.5, m: 1e5, l: 1.0, mu: 1e-5, theta_kappa: 1e5 },
            Self::Fig2 => RateParams { eta: 0.5, m: 1e6, l: 1.0, mu: 1e-5, theta_kappa: 1e5 },
            Self::Fig4bAnalytic => {
                let kappa = 1388.0;
                RateParams { eta: 0.5, m: kappa * kappa, l: 1.0, mu: 1.0 / kappa, theta_kappa: 2.0 * kappa }
            }
        }
    }

    pub fn sweep(self) -> Sweep {
        match self {
            Self::Fig1a | Self::Fig1b => Sweep::log_spaced(SweepVar::M, 1e5, 1e7, FIGURE_GRID_POINTS, true),
            Self::Fig2 => Sweep::log_spaced(SweepVar::Eta, 1e-3, 0.95, FIGURE_GRID_POINTS, false),
            Self::Fig4bAnalytic => {
                let k2 = 1388.0f64 * 1388.0;
                Sweep::log_spaced(SweepVar::M, k2, 100.0 * k2, FIGURE_GRID_POINTS, true)
            }
        }
    }

    pub fn grid(self) -> Vec<GridRow> {
        rate_grid(&self.schemes(), &self.base(), &self.sweep()).expect("figure presets are valid")
    }
}

impl FromStr for Figure {
    type Err = RateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1a" => Ok(Self::Fig1a),
            "1b" => Ok(Self::Fig1b),
            "2" => Ok(Self::Fig2),
            "4b-analytic" | "4b" => Ok(Self::Fig4bAnalytic),
            other => Err(RateError::UnknownFigure(other.to_string())),
        }
    }
}
