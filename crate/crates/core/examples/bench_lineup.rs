//! Run the benchmark lineup under a shared sample-pass budget and write CSV and SVG output.

use tunefree::cli::bench_lineup;
use tunefree::dataset::generate_synthetic;
use tunefree::harness::{compute_reference, emit_csv_string, grad_sq_series, run_experiment, svg_plot};
use tunefree::problem::LogisticProblem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = LogisticProblem::with_condition_number(generate_synthetic(1000, 15, 4, 2.0)?, 200.0)?;
    let passes = 30.0;
    let f_star = compute_reference(&problem, 1e-12)?.f_star;
    let entries = bench_lineup(&problem, 5.0, None, None, passes, 0);
    let traces = run_experiment(&problem, &entries, passes, Some(f_star))?;

    for t in &traces {
        let last = t.last();
        println!("{:30} passes = {:5.1}  gap = {:.3e}  |grad|^2 = {:.3e}", t.label, t.sample_passes(last), last.gap.unwrap(), last.grad_sq.unwrap());
    }

    let out = std::env::temp_dir().join("tunefree-bench-example");
    std::fs::create_dir_all(&out)?;
    let tagged: Vec<(u64, &tunefree::Trace)> = entries.iter().map(|e| e.id).zip(&traces).collect();
    std::fs::write(out.join("comparison.csv"), emit_csv_string(&tagged))?;
    std::fs::write(out.join("comparison.svg"), svg_plot("gradient norm", "sample passes", "|grad f|^2", &grad_sq_series(&traces)))?;
    println!("wrote {}", out.display());
    Ok(())
}
