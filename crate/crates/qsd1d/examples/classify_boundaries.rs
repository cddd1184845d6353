//! Feller boundary classification for three drifts: the transformed
//! logistic Feller model (exit at 0, entrance at infinity), zero drift
//! (regular / natural), and the cubic inward pull (entrance at infinity).
//!
//!     cargo run --release --example classify_boundaries

use qsd1d::boundary::{check_certain_absorption, classify_boundary, IntegralTarget};
use qsd1d::model::{logistic_feller_model, polynomial_drift_model, DiffusionModel};

fn show(model: &DiffusionModel) {
    println!("model: {}", model.name());
    println!("  endpoint  I-status      J-status      class");
    for (label, endpoint) in [
        ("zero", IntegralTarget::Zero),
        ("infinity", IntegralTarget::Infinity),
    ] {
        let rep = classify_boundary(model, endpoint, 1.0).expect("classification failed");
        println!(
            "  {label:<9} {:<13} {:<13} {}",
            format!("{:?}", rep.i.status).to_lowercase(),
            format!("{:?}", rep.j.status).to_lowercase(),
            rep.classification
        );
    }
    match check_certain_absorption(model) {
        Ok(certain) => println!("  absorption at 0 certain: {certain}"),
        Err(e) => println!("  absorption check: {e}"),
    }
    println!();
}

fn main() {
    show(&logistic_feller_model(1.0, 1.0, 1.0).unwrap());
    show(&polynomial_drift_model(&[]));
    show(&polynomial_drift_model(&[(3.0, 1.0)]));
}
