//! Build logistic and ridge objectives, read off their constants and count oracle calls.

use tunefree::dataset::generate_synthetic;
use tunefree::problem::{ErmProblem, IfoCounter, LogisticProblem, RidgeProblem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(500, 10, 1, 2.0)?.normalize_rows()?;
    let logistic = LogisticProblem::with_condition_number(data.clone(), 1e3)?;
    let ridge = RidgeProblem::from_dataset(&data, 1e-2)?;

    let x = vec![0.1; data.dim()];
    let mut ifo = IfoCounter::new();
    for (name, p) in [("logistic", &logistic as &dyn ErmProblem), ("ridge", &ridge)] {
        let c = p.constants();
        let g = p.full_grad(&x, &mut ifo)?;
        let gi = p.grad_component(0, &x, &mut ifo)?;
        println!(
            "{name:8} L = {:.4}  mu = {:.2e}  kappa = {:.1}  f(x) = {:.6}  |grad f| = {:.3e}  |grad f_0| = {:.3e}",
            c.l,
            c.mu,
            c.kappa,
            p.value(&x)?,
            tunefree::linalg::norm(&g),
            tunefree::linalg::norm(&gi)
        );
    }
    println!("IFO calls charged: {}", ifo.count());

    if let Some(x_star) = ridge.exact_minimizer() {
        println!("ridge closed-form optimum: f* = {:.8}", ridge.value(&x_star)?);
    }
    Ok(())
}
