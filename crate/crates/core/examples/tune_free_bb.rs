//! Tune-free BB-SVRG and BB-SARAH: each outer loop picks its own step and inner length.

use tunefree::dataset::generate_synthetic;
use tunefree::problem::{ErmProblem, LogisticProblem};
use tunefree::solvers::{run, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = LogisticProblem::with_condition_number(generate_synthetic(2000, 20, 11, 2.0)?, 500.0)?;
    let c = problem.constants();

    for cfg in [SolverConfig::tune_free_svrg(&c), SolverConfig::tune_free_sarah(&c)] {
        let trace = run(&problem, &cfg.with_passes(problem.n(), 40.0).with_seed(2))?;
        println!("{}", trace.label);
        println!("   s   eta*L      m_s    M_s   passes   |grad|^2");
        for pt in &trace.points {
            println!(
                "{:4} {:8.4} {:8} {:6} {:8.2}   {:.3e}",
                pt.s,
                pt.eta_s * c.l,
                pt.m_s,
                pt.snapshot_index,
                trace.sample_passes(pt),
                pt.grad_sq.unwrap()
            );
        }
    }
    Ok(())
}
