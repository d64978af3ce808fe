//! Independent oracles: extended-precision rate evaluation and brute-force expectations
//! over every sample path of tiny problems.

mod common;

use approx::assert_relative_eq;
use common::dd;
use common::*;
use tunefree::averaging::{weights, AveragingScheme};
use tunefree::harness::compute_reference;
use tunefree::linalg::{norm_sq, sub};
use tunefree::problem::{ErmProblem, IfoCounter, RidgeProblem};
use tunefree::rates::{lambda_sarah_l, lambda_sarah_u, lambda_sarah_w, lambda_svrg_u, lambda_svrg_w, Figure, RateQuery, RateScheme};
use tunefree::solvers::{sarah_inner_from_snapshot, svrg_inner_from_snapshot, ScriptedSampler};

type Calc = fn(&RateQuery) -> Result<tunefree::rates::RateValue, tunefree::rates::RateError>;
type Oracle = fn(f64, u64, f64, f64) -> Option<f64>;

fn compare(calc: Calc, oracle: Oracle, eta: f64, m: u64, l: f64, mu: f64) -> bool {
    let got = calc(&RateQuery::new(eta, m as f64, l, mu)).unwrap().value();
    let want = oracle(eta, m, l, mu);
    match (got, want) {
        (Some(g), Some(w)) => {
            assert_relative_eq!(g, w, max_relative = 1e-10);
            true
        }
        (None, None) => false,
        other => panic!("definedness differs at eta={eta}, m={m}: {other:?}"),
    }
}

fn figure_ms(fig: Figure) -> Vec<u64> {
    let mut ms: Vec<u64> = fig.grid().iter().map(|r| r.x.round() as u64).collect();
    ms.dedup();
    ms
}

#[test]
fn svrg_rates_match_extended_precision_on_figure_1a_grid() {
    let mut defined = 0;
    for m in figure_ms(Figure::Fig1a) {
        defined += compare(lambda_svrg_w, dd::svrg_w, 0.1, m, 1.0, 1e-5) as usize;
        compare(lambda_svrg_u, dd::svrg_u, 0.1, m, 1.0, 1e-5);
    }
    assert!(defined >= 50);
}

#[test]
fn sarah_rates_match_extended_precision_on_figure_1b_grid() {
    for m in figure_ms(Figure::Fig1b) {
        assert!(compare(lambda_sarah_w, dd::sarah_w, 0.5, m, 1.0, 1e-5));
        assert!(compare(lambda_sarah_u, dd::sarah_u, 0.5, m, 1.0, 1e-5));
        assert!(compare(lambda_sarah_l, dd::sarah_l, 0.5, m, 1.0, 1e-5));
    }
}

#[test]
fn sarah_rates_match_extended_precision_on_figure_2_sweep() {
    let etas: Vec<f64> = Figure::Fig2.grid().iter().filter(|r| r.scheme == RateScheme::SarahW).map(|r| r.x).collect();
    assert!(etas.len() > 50);
    for eta in etas {
        compare(lambda_sarah_w, dd::sarah_w, eta, 1_000_000, 1.0, 1e-5);
        compare(lambda_sarah_u, dd::sarah_u, eta, 1_000_000, 1.0, 1e-5);
        compare(lambda_sarah_l, dd::sarah_l, eta, 1_000_000, 1.0, 1e-5);
    }
}

#[test]
fn sarah_l_at_ten_kappa_matches_extended_precision() {
    assert!(compare(lambda_sarah_l, dd::sarah_l, 0.5, 1_000_000, 1.0, 1e-5));
}

#[test]
fn sarah_u_hand_arithmetic() {
    let v = lambda_sarah_u(&RateQuery::new(0.5, 4.0 * 1e5, 1.0, 1e-5)).unwrap().value().unwrap();
    assert_relative_eq!(v, 0.5 + 0.5 / 1.5, max_relative = 1e-12);
}

#[test]
fn weighted_rates_strictly_decrease_in_m_on_figure_1_grids() {
    for (fig, scheme) in [(Figure::Fig1a, RateScheme::SvrgW), (Figure::Fig1b, RateScheme::SarahW)] {
        let curve: Vec<f64> = fig.grid().iter().filter(|r| r.scheme == scheme).filter_map(|r| r.lambda.value()).collect();
        assert!(curve.len() > 50);
        for w in curve.windows(2) {
            assert!(w[1] < w[0], "{scheme:?}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn figure_1a_weighted_below_uniform_on_tail() {
    let rows = Figure::Fig1a.grid();
    let pick = |s| rows.iter().filter(move |r| r.scheme == s && r.x >= 1e6).map(|r| r.lambda.value().unwrap());
    for (w, u) in pick(RateScheme::SvrgW).zip(pick(RateScheme::SvrgU)) {
        assert!(w <= u);
    }
}

#[test]
fn figure_2_crossing_between_uniform_and_last() {
    let rows = Figure::Fig2.grid();
    let pick = |s| rows.iter().filter(move |r| r.scheme == s).map(|r| r.lambda.value());
    let diffs: Vec<f64> = pick(RateScheme::SarahU)
        .zip(pick(RateScheme::SarahL))
        .filter_map(|(u, l)| Some(u? - l?))
        .collect();
    assert!(diffs.first().unwrap() > &0.0, "L-Avg should win at the small-step end");
    assert!(diffs.iter().any(|d| *d < 0.0), "U-Avg should win somewhere at larger steps");
}

fn ridge_toy() -> RidgeProblem {
    let rows = vec![vec![1.0, 0.5], vec![-0.3, 1.2], vec![0.8, -0.7]];
    RidgeProblem::from_dense(&rows, vec![1.0, -0.5, 0.25], 0.1).unwrap()
}

fn ridge_grad(rows: &[[f64; 2]], y: &[f64], mu: f64, i: usize, x: &[f64]) -> [f64; 2] {
    let r = rows[i][0] * x[0] + rows[i][1] * x[1] - y[i];
    [r * rows[i][0] + mu * x[0], r * rows[i][1] + mu * x[1]]
}

const ROWS: [[f64; 2]; 3] = [[1.0, 0.5], [-0.3, 1.2], [0.8, -0.7]];
const Y: [f64; 3] = [1.0, -0.5, 0.25];

#[test]
fn svrg_single_step_expectation_matches_enumeration() {
    let p = ridge_toy();
    let x0 = vec![0.4, -0.2];
    let g = full_grad(&p, &x0);
    let eta = 0.1;
    let w = weights(AveragingScheme::WeightedSvrg, 2, p.mu(), eta).unwrap();
    let mut mean = 0.0;
    for i in 0..3 {
        let mut sampler = ScriptedSampler::new([0.5], [i]);
        let out = svrg_inner_from_snapshot(&p, &x0, g.clone(), eta, &w, &mut sampler, &mut IfoCounter::new()).unwrap();
        assert_eq!(out.snapshot_index, 1);
        mean += p.value(&out.x_next).unwrap() / 3.0;
    }
    // v_0 = ∇f_i(x0) − ∇f_i(x0) + g whatever i is drawn.
    let full: Vec<f64> = (0..2).map(|j| (0..3).map(|i| ridge_grad(&ROWS, &Y, 0.1, i, &x0)[j]).sum::<f64>() / 3.0).collect();
    let x1 = [x0[0] - eta * full[0], x0[1] - eta * full[1]];
    let hand: f64 = (0..3)
        .map(|i| 0.5 * (ROWS[i][0] * x1[0] + ROWS[i][1] * x1[1] - Y[i]).powi(2) + 0.05 * (x1[0] * x1[0] + x1[1] * x1[1]))
        .sum::<f64>()
        / 3.0;
    assert_relative_eq!(mean, hand, max_relative = 1e-12);
}

#[test]
fn sarah_second_moment_matches_hand_enumeration() {
    let p = ridge_toy();
    let x0 = vec![0.4, -0.2];
    let eta = 0.2;
    let enumerated = sarah_expectation(&p, &x0, eta, 2, |s| norm_sq(&s.vs[2]));

    let g0: Vec<f64> = (0..2).map(|j| (0..3).map(|i| ridge_grad(&ROWS, &Y, 0.1, i, &x0)[j]).sum::<f64>() / 3.0).collect();
    let mut hand = 0.0;
    for i1 in 0..3 {
        for i2 in 0..3 {
            let x1 = [x0[0] - eta * g0[0], x0[1] - eta * g0[1]];
            let (a, b) = (ridge_grad(&ROWS, &Y, 0.1, i1, &x1), ridge_grad(&ROWS, &Y, 0.1, i1, &x0));
            let v1 = [a[0] - b[0] + g0[0], a[1] - b[1] + g0[1]];
            let x2 = [x1[0] - eta * v1[0], x1[1] - eta * v1[1]];
            let (a, b) = (ridge_grad(&ROWS, &Y, 0.1, i2, &x2), ridge_grad(&ROWS, &Y, 0.1, i2, &x1));
            let v2 = [a[0] - b[0] + v1[0], a[1] - b[1] + v1[1]];
            hand += (v2[0] * v2[0] + v2[1] * v2[1]) / 9.0;
        }
    }
    assert_relative_eq!(enumerated, hand, max_relative = 1e-12);

    let l = p.smoothness();
    let bound = (1.0 - 2.0 * eta * l / (1.0 + p.kappa())).powi(2) * norm_sq(&g0);
    assert!(eta <= 2.0 / (p.mu() + l));
    assert!(enumerated <= bound);
}

#[test]
fn sarah_inner_loop_draws_follow_the_path() {
    let p = ridge_toy();
    let x0 = vec![0.4, -0.2];
    let g = full_grad(&p, &x0);
    let eta = 0.2;
    let w = weights(AveragingScheme::LastSarah, 4, p.mu(), eta).unwrap();
    let mut sampler = ScriptedSampler::new([0.3], [2, 0]);
    let out = sarah_inner_from_snapshot(&p, &x0, g.clone(), eta, &w, &mut sampler, &mut IfoCounter::new()).unwrap();
    let replay = sarah_replay(&p, &x0, eta, &[2, 0]);
    let x3: Vec<f64> = sub(&replay.xs[2], &replay.vs[2].iter().map(|v| eta * v).collect::<Vec<_>>());
    assert_eq!(out.snapshot_index, 3);
    assert_relative_eq!(out.x_next.as_slice(), x3.as_slice(), max_relative = 1e-14);
}

#[test]
fn svrg_mse_bound_on_enumerated_paths() {
    for (n, seed) in [(3, 21u64), (5, 22)] {
        let p = logistic_toy(n, 2, seed, 0.2);
        let f_star = compute_reference(&p, 1e-13).unwrap().f_star;
        let l = p.smoothness();
        let x0 = vec![1.5, -1.0];
        for eta in [0.05 / l, 0.2 / l] {
            for k in 0..=2 {
                let (mut mse, mut second, mut bound) = (0.0, 0.0, 0.0);
                let paths = all_paths(n, k);
                let w = 1.0 / paths.len() as f64;
                for path in &paths {
                    let (xk, m, s) = svrg_exact_mse(&p, &x0, eta, path);
                    mse += w * m;
                    second += w * s;
                    bound += w * 4.0 * l * (p.value(&xk).unwrap() - f_star + p.value(&x0).unwrap() - f_star);
                }
                assert!(mse <= second + 1e-15 && second <= bound, "n={n}, k={k}: {mse} {second} {bound}");
            }
        }
    }
}

#[test]
fn sarah_mse_bound_on_enumerated_paths() {
    let p = logistic_toy(4, 3, 31, 0.1);
    let x0 = vec![0.7, 0.2, -0.9];
    let l = p.smoothness();
    let g0 = norm_sq(&full_grad(&p, &x0));
    for eta in [0.1 / l, 0.5 / l, 0.9 / l] {
        for k in 1..=3 {
            let mse = sarah_expectation(&p, &x0, eta, k, |s| norm_sq(&sub(&s.vs[k], &full_grad(&p, &s.xs[k]))));
            let second = sarah_expectation(&p, &x0, eta, k, |s| norm_sq(&s.vs[k]));
            let el = eta * l;
            assert!(mse <= el / (2.0 - el) * (g0 - second) + 1e-15, "eta={eta}, k={k}");
        }
    }
}

#[test]
fn sarah_inner_product_identity_on_toys() {
    for (n, seed) in [(3, 41u64), (5, 42)] {
        let p = logistic_toy(n, 2, seed, 0.05);
        let x0 = vec![0.3, 0.6];
        for x in [vec![0.0, 0.0], vec![-2.0, 1.0]] {
            let (lhs, rhs) = sarah_inner_product_identity(&p, &x0, &x, 0.7 / p.smoothness(), 2);
            assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn inner_product_identity_is_not_trivially_zero() {
    let p = logistic_toy(3, 2, 41, 0.05);
    let (lhs, _) = sarah_inner_product_identity(&p, &[0.3, 0.6], &[-2.0, 1.0], 0.7 / p.smoothness(), 2);
    assert!(lhs.abs() > 1e-8);
}
