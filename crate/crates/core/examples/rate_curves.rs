//! Analytical per-outer-loop convergence rates: figure presets and a custom sweep.

use tunefree::rates::{grid_csv_string, rate_grid, Figure, RateParams, RateScheme, Sweep, SweepVar};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Figure::Fig1b.grid();
    let nearest = grid
        .iter()
        .filter(|r| r.scheme == RateScheme::SarahW)
        .min_by(|a, b| (a.x - 5e5).abs().total_cmp(&(b.x - 5e5).abs()))
        .unwrap();
    println!("weighted SARAH at m = {:.0}: lambda = {:?}", nearest.x, nearest.lambda.value());

    let kappa = 1e4;
    let base = RateParams { eta: 0.1, m: 20.0 * kappa, l: 1.0, mu: 1.0 / kappa, theta_kappa: 4.0 * kappa };
    let sweep = Sweep::log_spaced(SweepVar::M, 2.0 * kappa, 200.0 * kappa, 7, true);
    let rows = rate_grid(&[RateScheme::SvrgW, RateScheme::SvrgU, RateScheme::BbSvrgW], &base, &sweep)?;
    print!("{}", grid_csv_string(&rows));
    Ok(())
}
