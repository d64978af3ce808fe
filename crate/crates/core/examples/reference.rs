//! Compute and cache the reference optimum used for optimality gaps.

use tunefree::dataset::generate_synthetic;
use tunefree::harness::{cached_reference_in, DEFAULT_REFERENCE_TOL};
use tunefree::problem::LogisticProblem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = LogisticProblem::with_condition_number(generate_synthetic(800, 12, 9, 1.5)?, 300.0)?;
    let dir = std::env::temp_dir().join("tunefree-reference-example");

    let start = std::time::Instant::now();
    let first = cached_reference_in(&problem, DEFAULT_REFERENCE_TOL, &dir)?;
    let solved = start.elapsed();
    let start = std::time::Instant::now();
    let again = cached_reference_in(&problem, DEFAULT_REFERENCE_TOL, &dir)?;
    let loaded = start.elapsed();

    assert_eq!(first.f_star.to_bits(), again.f_star.to_bits());
    println!("f* = {:.15}  |grad f(x*)| = {:.2e}", first.f_star, first.grad_norm);
    println!("first call {solved:?}, cached call {loaded:?}, cache dir {}", dir.display());
    Ok(())
}
