//! Shared oracles for the integration tests: exact expectations by enumerating every
//! sample path, a double-double rate evaluator and the synthetic problems used throughout.

#![allow(dead_code)]

use tunefree::dataset::generate_synthetic;
use tunefree::linalg::{dot, norm_sq, sub};
use tunefree::problem::{ErmProblem, IfoCounter, LogisticProblem};
use tunefree::solvers::{SarahInnerLoop, SvrgInnerLoop};

pub fn logistic_toy(n: usize, d: usize, seed: u64, mu: f64) -> LogisticProblem {
    LogisticProblem::new(generate_synthetic(n, d, seed, 1.5).unwrap(), mu).unwrap()
}

/// `n = 500`, `κ = 100`.
pub fn contraction_problem() -> LogisticProblem {
    LogisticProblem::with_condition_number(generate_synthetic(500, 10, 5, 2.0).unwrap(), 100.0).unwrap()
}

/// `n = 2000`, `κ = 500`.
pub fn benchmark_problem() -> LogisticProblem {
    LogisticProblem::with_condition_number(generate_synthetic(2000, 20, 11, 2.0).unwrap(), 500.0).unwrap()
}

pub fn full_grad<P: ErmProblem>(p: &P, x: &[f64]) -> Vec<f64> {
    p.full_grad(x, &mut IfoCounter::new()).unwrap()
}

/// Every index sequence in `[0, n)^k`.
pub fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![vec![]];
    for _ in 0..k {
        paths = paths.into_iter().flat_map(|p| (0..n).map(move |i| [p.clone(), vec![i]].concat())).collect();
    }
    paths
}

fn svrg_replay<'p, P: ErmProblem>(p: &'p P, x0: &[f64], g0: &[f64], eta: f64, path: &[usize]) -> SvrgInnerLoop<'p, P> {
    let mut inner = SvrgInnerLoop::new(p, x0, g0);
    let mut ifo = IfoCounter::new();
    for &i in path {
        inner.refresh(i, &mut ifo);
        inner.advance(eta).unwrap();
    }
    inner
}

/// SVRG iterate `x_k` after the inner steps in `path`, together with the exact
/// `(1/n) Σ_i ‖v(i) − ∇f(x_k)‖²` and `(1/n) Σ_i ‖v(i)‖²` of the next estimator draw.
pub fn svrg_exact_mse<P: ErmProblem>(p: &P, x0: &[f64], eta: f64, path: &[usize]) -> (Vec<f64>, f64, f64) {
    let g0 = full_grad(p, x0);
    let xk = svrg_replay(p, x0, &g0, eta, path).x().to_vec();
    let gk = full_grad(p, &xk);
    let n = p.n();
    let (mut mse, mut second) = (0.0, 0.0);
    let mut ifo = IfoCounter::new();
    for i in 0..n {
        let mut inner = svrg_replay(p, x0, &g0, eta, path);
        inner.refresh(i, &mut ifo);
        mse += norm_sq(&sub(inner.v(), &gk)) / n as f64;
        second += norm_sq(inner.v()) / n as f64;
    }
    (xk, mse, second)
}

/// State of a SARAH inner loop after replaying `path` (indices `i_1, …, i_k`).
pub struct SarahPath {
    /// `x_0, …, x_k`
    pub xs: Vec<Vec<f64>>,
    /// `v_0, …, v_k`
    pub vs: Vec<Vec<f64>>,
}

pub fn sarah_replay<P: ErmProblem>(p: &P, x0: &[f64], eta: f64, path: &[usize]) -> SarahPath {
    let g0 = full_grad(p, x0);
    let mut inner = SarahInnerLoop::new(p, x0, &g0);
    let mut ifo = IfoCounter::new();
    let mut xs = vec![inner.x().to_vec()];
    let mut vs = vec![inner.v().to_vec()];
    for &i in path {
        inner.advance(eta).unwrap();
        inner.refresh(i, &mut ifo);
        xs.push(inner.x().to_vec());
        vs.push(inner.v().to_vec());
    }
    SarahPath { xs, vs }
}

/// Exact `E[g(path)]` over uniform index paths of length `k`.
pub fn sarah_expectation<P: ErmProblem>(p: &P, x0: &[f64], eta: f64, k: usize, g: impl Fn(&SarahPath) -> f64) -> f64 {
    let paths = all_paths(p.n(), k);
    let w = 1.0 / paths.len() as f64;
    paths.iter().map(|path| g(&sarah_replay(p, x0, eta, path)) * w).sum()
}

/// Both sides of `E⟨v_k − ∇f(x_k), x − x_k⟩ = (η/2) Σ_{τ<k} E[‖v_τ − ∇f(x_τ)‖² + ‖v_τ‖² − ‖∇f(x_τ)‖²]`.
pub fn sarah_inner_product_identity<P: ErmProblem>(p: &P, x0: &[f64], x: &[f64], eta: f64, k: usize) -> (f64, f64) {
    let lhs = sarah_expectation(p, x0, eta, k, |s| {
        let gk = full_grad(p, &s.xs[k]);
        dot(&sub(&s.vs[k], &gk), &sub(x, &s.xs[k]))
    });
    let rhs = sarah_expectation(p, x0, eta, k, |s| {
        (0..k)
            .map(|t| {
                let gt = full_grad(p, &s.xs[t]);
                norm_sq(&sub(&s.vs[t], &gt)) + norm_sq(&s.vs[t]) - norm_sq(&gt)
            })
            .sum::<f64>()
    }) * eta
        / 2.0;
    (lhs, rhs)
}

/// Double-double arithmetic (about 32 significant digits), enough to serve as an
/// independent high-precision reference for the rate formulas.
pub mod dd {
    use std::ops::{Add, Div, Mul, Neg, Sub};

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Dd {
        pub hi: f64,
        pub lo: f64,
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }

    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    impl Dd {
        pub fn new(x: f64) -> Self {
            Self { hi: x, lo: 0.0 }
        }

        pub fn to_f64(self) -> f64 {
            self.hi + self.lo
        }

        pub fn powu(self, mut e: u64) -> Self {
            let mut base = self;
            let mut acc = Dd::new(1.0);
            while e > 0 {
                if e & 1 == 1 {
                    acc = acc * base;
                }
                base = base * base;
                e >>= 1;
            }
            acc
        }
    }

    impl From<f64> for Dd {
        fn from(x: f64) -> Self {
            Dd::new(x)
        }
    }

    impl Add for Dd {
        type Output = Dd;
        fn add(self, o: Dd) -> Dd {
            let (s, e) = two_sum(self.hi, o.hi);
            let (t, f) = two_sum(self.lo, o.lo);
            let (s, e) = quick_two_sum(s, e + t);
            let (hi, lo) = quick_two_sum(s, e + f);
            Dd { hi, lo }
        }
    }

    impl Neg for Dd {
        type Output = Dd;
        fn neg(self) -> Dd {
            Dd { hi: -self.hi, lo: -self.lo }
        }
    }

    impl Sub for Dd {
        type Output = Dd;
        fn sub(self, o: Dd) -> Dd {
            self + (-o)
        }
    }

    impl Mul for Dd {
        type Output = Dd;
        fn mul(self, o: Dd) -> Dd {
            let (p, e) = two_prod(self.hi, o.hi);
            let e = e + (self.hi * o.lo + self.lo * o.hi);
            let (hi, lo) = quick_two_sum(p, e);
            Dd { hi, lo }
        }
    }

    impl Div for Dd {
        type Output = Dd;
        fn div(self, o: Dd) -> Dd {
            let q1 = self.hi / o.hi;
            let r = self - o * Dd::new(q1);
            let q2 = r.hi / o.hi;
            let r = r - o * Dd::new(q2);
            let q3 = r.hi / o.hi;
            let (hi, lo) = quick_two_sum(q1, q2);
            Dd { hi, lo } + Dd::new(q3)
        }
    }

    fn d(x: f64) -> Dd {
        Dd::new(x)
    }

    /// Reference evaluations for integer `m`; `None` outside the formula's domain.
    pub fn svrg_w(eta: f64, m: u64, l: f64, mu: f64) -> Option<f64> {
        if eta * l >= 0.5 {
            return None;
        }
        let (eta, l, mu) = (d(eta), d(l), d(mu));
        let one = d(1.0);
        let delta = mu * eta;
        let r = one - delta;
        let den = one - d(2.0) * eta * l;
        let bracket = r.powu(m) / den + d(2.0) * mu * l * eta * eta * r.powu(m - 1) / den + d(2.0) * l * eta / den;
        Some((bracket / (one - r.powu(m - 1))).to_f64())
    }

    pub fn svrg_u(eta: f64, m: u64, l: f64, mu: f64) -> Option<f64> {
        if eta * l >= 0.5 {
            return None;
        }
        let (eta, l, mu, m) = (d(eta), d(l), d(mu), d(m as f64));
        let den = d(1.0) - d(2.0) * eta * l;
        Some((d(1.0) / (mu * eta * den * m) + d(2.0) * eta * l / den).to_f64())
    }

    pub fn sarah_w(eta: f64, m: u64, l: f64, mu: f64) -> Option<f64> {
        if eta * l >= 1.0 || l <= mu {
            return None;
        }
        let (eta, l, mu, mf) = (d(eta), d(l), d(mu), d(m as f64));
        let one = d(1.0);
        let kappa = l / mu;
        let delta = mu * eta;
        let pm = (one - delta).powu(m);
        let c = mf - one / delta + pm / delta;
        let el = eta * l;
        let q = (one - d(2.0) * el / (one + kappa)).powu(m);
        let two = d(2.0);
        let v = (pm - q) * (l + mu) / (c * (l - mu))
            + pm / (c * delta)
            + el * (mf - one) / (c * (two - el))
            + (two - two * el) / (two - el) * (one + kappa) / (two * c * el);
        Some(v.to_f64())
    }

    pub fn sarah_u(eta: f64, m: u64, l: f64, mu: f64) -> Option<f64> {
        if eta * l >= 2.0 {
            return None;
        }
        let (eta, l, mu, m) = (d(eta), d(l), d(mu), d(m as f64));
        let el = eta * l;
        Some((d(1.0) / (mu * eta * m) + el / (d(2.0) - el)).to_f64())
    }

    pub fn sarah_l(eta: f64, m: u64, l: f64, mu: f64) -> Option<f64> {
        if eta > 2.0 / (mu + l) {
            return None;
        }
        let (eta, l, mu) = (d(eta), d(l), d(mu));
        let one = d(1.0);
        let el = eta * l;
        let kappa = l / mu;
        let q = (one - d(2.0) * el / (one + kappa)).powu(m);
        Some((d(2.0) * el / (d(2.0) - el) + d(2.0) * (one + el) * q).to_f64())
    }
}
