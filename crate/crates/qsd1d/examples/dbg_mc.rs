use qsd1d::analyze::conditional_evolution_exact;
use qsd1d::model::logistic_feller_model;
use qsd1d::semigroup::Semigroup;
use qsd1d::simulate::{simulate_killed, InitialLaw, SimConfig};
use qsd1d::spectral::*;
use std::sync::Arc;

fn main() {
    let lf = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let grid = Arc::new(build_grid(&lf, 1e-3, 6.0, 2000, GridSpacing::Log).unwrap());
    let gen = discretize_generator(&lf, &grid).unwrap();
    let spec = build_spectral_data(&lf, &gen, 4).unwrap();
    let sg = Semigroup::for_horizon(&gen, 0.5, 1e-12).unwrap();
    let ix = grid.nearest_node(1.0);
    let x0 = grid.points()[ix];
    let mut mu = vec![0.0; grid.len()];
    mu[ix] = 1.0;
    let times = [0.5, 1.0, 2.0, 5.0];
    let evo = conditional_evolution_exact(&sg, &spec, &mu, &times).unwrap();
    println!("exact survivals: {:?}", evo.survivals);
    for dt in [4e-3, 1e-3, 2.5e-4] {
        let cfg = SimConfig::new(dt, 5.0, 200_000, 11).with_record_times(times.to_vec());
        let ens = simulate_killed(&lf, &InitialLaw::Point(x0), None, &cfg).unwrap();
        let fr: Vec<f64> = ens.iter().map(|e| e.survival_fraction()).collect();
        println!("dt = {dt:.1e}: MC survivals {:?}", fr);
        for (i, t) in times.iter().enumerate() {
            let bias = fr[i] - evo.survivals[i];
            println!("   t={t}: exact {:.4}, mc {:.4}, bias {:+.4} ({:+.1}%)", evo.survivals[i], fr[i], bias, 100.0*bias/evo.survivals[i]);
        }
    }
}
