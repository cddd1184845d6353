//! Quasi-stationary analysis of one-dimensional diffusions killed at the
//! origin.
//!
//! The crate covers the full workflow for a unit-noise diffusion
//! `dX = dB - q(X) dt` on (0, inf), absorbed at 0:
//!
//! * [`model`] — drift/scale/speed definitions, including the transformed
//!   logistic Feller population model;
//! * [`boundary`] — Feller integral tests `I(a)`, `J(a)` with divergence
//!   detection, and the regular/exit/entrance/natural classification;
//! * [`spectral`] — divergence-form discretization of the generator,
//!   eigensolve, quasi-stationary distribution `alpha`, quasi-ergodic
//!   distribution `beta`, and the h-transformed (conditioned-to-survive)
//!   generator with its algebraic verifiers;
//! * [`semigroup`] — spectral evaluation of `exp(tL)` actions with a
//!   survival-scaled variant that never underflows;
//! * [`simulate`] — Euler-Maruyama Monte Carlo for the killed process and
//!   for the conditioned (Q-) process;
//! * [`analyze`] — distribution distances, exponential-rate fits, survival
//!   asymptotics, the weighted-norm convergence bound with explicit
//!   constants, and the 1/t quasi-ergodic error;
//! * [`config`] / [`pipeline`] — experiment configs, stage orchestration,
//!   CSV/metadata emission for the `qsd1d` binary.
//!
//! Each major capability has a runnable demo under `examples/`.

pub mod analyze;
pub mod boundary;
pub mod config;
pub mod semigroup;
pub mod simulate;
pub mod spectral;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod report;

pub use model::{logistic_feller_model, polynomial_drift_model, DiffusionModel};
