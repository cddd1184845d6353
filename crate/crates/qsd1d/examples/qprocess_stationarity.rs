//! The conditioned-to-survive dynamics: its simulated long-run histogram
//! lands on the quasi-ergodic law beta, a beta start stays put, and at
//! finite t the law equals the eta1-reweighted conditional law of the
//! killed process.
//!
//!     cargo run --release --example qprocess_stationarity

use std::sync::Arc;

use qsd1d::analyze::{conditional_evolution_exact, reweight};
use qsd1d::model::logistic_feller_model;
use qsd1d::pipeline::binned_tv_exact_vs_empirical;
use qsd1d::semigroup::Semigroup;
use qsd1d::simulate::{simulate_qprocess, InitialLaw, SimConfig};
use qsd1d::spectral::{build_grid, build_spectral_data, discretize_generator, GridSpacing};

fn main() {
    let model = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let grid = Arc::new(build_grid(&model, 1e-3, 6.0, 1200, GridSpacing::Log).unwrap());
    let gen = discretize_generator(&model, &grid).unwrap();
    let spec = build_spectral_data(&model, &gen, 4).unwrap();

    let paths = 50_000;
    let x0 = grid.points()[grid.nearest_node(1.0)];
    let t_long = 10.0 / spec.gap();

    println!("conditioned process, {paths} paths, dt = 1e-3");

    let cfg = SimConfig::new(1e-3, t_long, paths, 42)
        .with_record_times(vec![0.5 * t_long, t_long]);
    let ens = simulate_qprocess(&spec, &InitialLaw::Point(x0), &cfg).unwrap();
    for e in ens.iter() {
        let tv = binned_tv_exact_vs_empirical(&spec, spec.beta(), &e.alive_positions(), 40)
            .unwrap();
        println!(
            "  from x0 = {x0:.3}: t = {:>6.3}  alive {}  TV to beta = {tv:.4}",
            e.time, e.n_alive
        );
    }

    let cfg2 = SimConfig::new(1e-3, 1.0, paths, 43).with_record_times(vec![1.0]);
    let from_beta = simulate_qprocess(
        &spec,
        &InitialLaw::GridMeasure(spec.beta().to_vec()),
        &cfg2,
    )
    .unwrap();
    let tv = binned_tv_exact_vs_empirical(
        &spec,
        spec.beta(),
        &from_beta[0].alive_positions(),
        40,
    )
    .unwrap();
    println!("  from beta:   t = 1.000  TV to beta = {tv:.4} (stationarity)");

    // finite-t law = eta1 o (conditional law of the killed process)
    let sg = Semigroup::for_horizon(&gen, 0.5, 1e-12).unwrap();
    let mut mu = vec![0.0; grid.len()];
    mu[grid.nearest_node(x0)] = 1.0;
    let t = 1.0;
    let evo = conditional_evolution_exact(&sg, &spec, &mu, &[t]).unwrap();
    let reweighted = reweight(spec.eta1(), &evo.laws[0]).unwrap();
    let cfg3 = SimConfig::new(1e-3, t, paths, 44).with_record_times(vec![t]);
    let at_t = simulate_qprocess(&spec, &InitialLaw::Point(x0), &cfg3).unwrap();
    let tv = binned_tv_exact_vs_empirical(&spec, &reweighted, &at_t[0].alive_positions(), 40)
        .unwrap();
    println!("  at t = 1: TV to the eta1-reweighted conditional law = {tv:.4}");
}
