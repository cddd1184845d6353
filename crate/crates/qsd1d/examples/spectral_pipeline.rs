//! Full spectral workflow on the logistic Feller model: grid, generator,
//! leading eigenpairs, quasi-stationary weights alpha, quasi-ergodic
//! weights beta, the transformed drift, and the algebraic identity probes
//! (orthonormality, spectrum shift, reversibility, intertwining).
//!
//!     cargo run --release --example spectral_pipeline

use std::sync::Arc;

use qsd1d::model::logistic_feller_model;
use qsd1d::semigroup::verify_intertwining;
use qsd1d::spectral::{
    alpha_stationarity_residual, beta_invariance_residual, build_grid, build_spectral_data,
    delta_tilde, discretize_generator, h_transform_generator, orthonormality_residual,
    spectrum_shift_residual, verify_reversibility, GridSpacing,
};

fn main() {
    let model = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let grid = Arc::new(build_grid(&model, 1e-3, 6.0, 2000, GridSpacing::Log).unwrap());
    let gen = discretize_generator(&model, &grid).unwrap();
    let spec = build_spectral_data(&model, &gen, 4).unwrap();

    println!("grid: {} log-spaced nodes on ({:.0e}, {})", grid.len(), grid.eps(), 6.0);
    println!("mass defect vs quadrature: {:.3e}", grid.mass_defect(&model).unwrap());
    println!();
    println!("eigenvalues of -L:");
    for n in 1..=4 {
        println!("  lambda_{n} = {:.12}", spec.lambda(n));
    }
    println!("  spectral gap = {:.12}", spec.gap());
    println!("  m(eta1)      = {:.12}", spec.m_eta1());

    // where the quasi-stationary and quasi-ergodic laws live
    let mean = |w: &[f64]| -> f64 {
        w.iter()
            .zip(grid.points())
            .map(|(wi, x)| wi * x)
            .sum::<f64>()
    };
    println!();
    println!("alpha mean = {:.6}, beta mean = {:.6}", mean(spec.alpha()), mean(spec.beta()));

    let gt = h_transform_generator(&gen, &spec).unwrap();
    let (asym, scale) = verify_reversibility(&gt);
    println!();
    println!("identity probes:");
    println!("  orthonormality residual      {:.3e}", orthonormality_residual(&gen, &spec, 4));
    println!(
        "  spectrum shift (relative)    {:.3e}",
        spectrum_shift_residual(&gt, &spec, 3).unwrap()
    );
    println!("  reversibility asymmetry      {:.3e} (scale {:.3e})", asym, scale);
    println!("  alpha stationarity residual  {:.3e}", alpha_stationarity_residual(&gen, &spec));
    println!("  beta invariance residual     {:.3e}", beta_invariance_residual(&gt, &spec));
    println!("  conditioned row-sum residual {:.3e}", gt.max_relative_row_sum());
    let ones = vec![1.0; grid.len()];
    for t in [0.5, 1.0, 2.0] {
        let r = verify_intertwining(&gen, &gt, &spec, t, &ones).unwrap();
        println!("  intertwining residual t={t:<4} {r:.3e}");
    }

    let bs: Vec<f64> = (1..=30).map(|i| 0.15 * i as f64).collect();
    let dt = delta_tilde(&model, &spec, &bs).unwrap();
    println!();
    println!(
        "gap criterion proxy: delta = {:.4e} at b = {:.3} (lower bound 1/(4 delta) = {:.3e} <= gap)",
        dt.value,
        dt.argmax_b,
        1.0 / (4.0 * dt.value)
    );
}
