//! Fixed-step SVRG and SARAH with each averaging scheme on a logistic problem.

use tunefree::averaging::AveragingScheme;
use tunefree::dataset::generate_synthetic;
use tunefree::harness::compute_reference;
use tunefree::problem::{ErmProblem, LogisticProblem};
use tunefree::solvers::{run_with_reference, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = LogisticProblem::with_condition_number(generate_synthetic(1000, 20, 3, 2.0)?, 200.0)?;
    let c = problem.constants();
    let f_star = compute_reference(&problem, 1e-12)?.f_star;
    let m = (5.0 * c.kappa) as usize;

    let configs = [
        SolverConfig::svrg(0.1 / c.l, m, AveragingScheme::LastSvrg),
        SolverConfig::svrg(0.1 / c.l, m, AveragingScheme::Uniform),
        SolverConfig::svrg(0.1 / c.l, m, AveragingScheme::WeightedSvrg),
        SolverConfig::sarah(0.5 / c.l, m, AveragingScheme::LastSarah),
        SolverConfig::sarah(0.5 / c.l, m, AveragingScheme::Uniform),
        SolverConfig::sarah(0.5 / c.l, m, AveragingScheme::WeightedSarah),
    ];
    for cfg in configs {
        let cfg = cfg.with_passes(problem.n(), 30.0).with_seed(1);
        let trace = run_with_reference(&problem, &cfg, Some(f_star))?;
        let last = trace.last();
        println!(
            "{:28} loops = {:3}  passes = {:5.1}  gap = {:.3e}  |grad|^2 = {:.3e}",
            cfg.label(),
            trace.outer_loops(),
            trace.sample_passes(last),
            last.gap.unwrap(),
            last.grad_sq.unwrap()
        );
    }
    Ok(())
}
