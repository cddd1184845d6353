//! The time-averaged conditional occupation converges to the quasi-ergodic
//! law beta at rate 1/t — visibly slower than the exponential convergence
//! of the time-marginal conditional law to alpha.
//!
//!     cargo run --release --example quasi_ergodic_average

use std::sync::Arc;

use qsd1d::analyze::quasi_ergodic_error;
use qsd1d::model::logistic_feller_model;
use qsd1d::semigroup::Semigroup;
use qsd1d::spectral::{build_grid, build_spectral_data, discretize_generator, GridSpacing};

fn main() {
    let model = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let grid = Arc::new(build_grid(&model, 1e-3, 6.0, 600, GridSpacing::Log).unwrap());
    let gen = discretize_generator(&model, &grid).unwrap();
    let spec = build_spectral_data(&model, &gen, 4).unwrap();
    // the time average mixes all modes at s near 0 and t, so this needs
    // the complete eigenbasis
    let sg = Semigroup::with_modes(&gen, gen.n()).unwrap();

    // median of beta, observable g = sign(x - median)
    let mut cum = 0.0;
    let mut median = 0.0;
    for (x, b) in grid.points().iter().zip(spec.beta()) {
        cum += b;
        if cum >= 0.5 {
            median = *x;
            break;
        }
    }
    let g: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| if *x >= median { 1.0 } else { -1.0 })
        .collect();
    let beta_g: f64 = spec.beta().iter().zip(&g).map(|(b, gi)| b * gi).sum();
    println!("g = sign(x - {median:.4}), beta(g) = {beta_g:.6}");
    println!();

    let x_index = grid.nearest_node(1.0);
    let times: Vec<f64> = (0..12).map(|i| 50f64.powf(i as f64 / 11.0)).collect();
    let rows = quasi_ergodic_error(&sg, &spec, &g, x_index, &times, 64).unwrap();

    println!("  t        E_x[(1/t) int g | survive]   error        t * error");
    for r in rows.iter() {
        println!(
            "  {:<8.3} {:<28.6} {:<12.3e} {:.4}",
            r.t,
            r.estimate,
            r.error,
            r.t * r.error
        );
    }

    let tail: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= 5.0)
        .map(|r| (r.t.ln(), r.error.ln()))
        .collect();
    let n = tail.len() as f64;
    let sx: f64 = tail.iter().map(|p| p.0).sum();
    let sy: f64 = tail.iter().map(|p| p.1).sum();
    let sxx: f64 = tail.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = tail.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    println!();
    println!("log-log slope over the final decade: {slope:.4} (1/t convergence)");
}
