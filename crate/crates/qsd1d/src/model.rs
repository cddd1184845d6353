//! Diffusion models on (0, inf) with unit noise: `dX = dB - q(X) dt`.
//!
//! A model carries the drift `q`, optionally its analytic antiderivative
//! `Q(y) = int_1^y 2 q`, and a domain hint used for grid truncation. The
//! scale function and speed density derive from `Q`:
//! `Lambda(x) = int_1^x exp(Q)`, `m(dy) = exp(-Q(y)) dy`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::numerics::interp::LinearTable;
use crate::numerics::quad::{adaptive_log_quadrature, adaptive_quadrature, QuadError};

/// Absolute tolerance for drift antiderivative quadrature.
pub const Q_QUAD_TOL: f64 = 1e-10;
/// Subdivision budget for adaptive quadrature.
pub const QUAD_MAX_SUBDIV: usize = 1 << 15;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("integration failure: {0}")]
    Integration(#[from] QuadError),
    #[error("scale function overflows double range at x = {x:.6e} (log value {log_value:.6e})")]
    ScaleOverflow { x: f64, log_value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A one-dimensional diffusion `dX = dB - q(X) dt` on (0, inf).
#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    drift: RealFn,
    drift_derivative: Option<RealFn>,
    q_closed_form: Option<RealFn>,
    domain_hint: (f64, f64),
    q_cache: Arc<RwLock<HashMap<u64, f64>>>,
}

impl std::fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("domain_hint", &self.domain_hint)
            .field("has_closed_form_q", &self.q_closed_form.is_some())
            .finish()
    }
}

impl DiffusionModel {
    pub fn new(name: impl Into<String>, drift: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        DiffusionModel {
            name: name.into(),
            drift: Arc::new(drift),
            drift_derivative: None,
            q_closed_form: None,
            domain_hint: (1e-3, 20.0),
            q_cache: Arc::new(RwLock::new(HashMap::new())),
        }
    }

    pub fn with_drift_derivative(
        mut self,
        d: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.drift_derivative = Some(Arc::new(d));
        self
    }

    pub fn with_q_closed_form(mut self, q: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.q_closed_form = Some(Arc::new(q));
        self
    }

    pub fn with_domain_hint(mut self, lo: f64, hi: f64) -> Self {
        assert!(0.0 < lo && lo < hi);
        self.domain_hint = (lo, hi);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Drift `q(x)`.
    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn drift_derivative(&self, x: f64) -> Option<f64> {
        self.drift_derivative.as_ref().map(|d| d(x))
    }

    pub fn has_q_closed_form(&self) -> bool {
        self.q_closed_form.is_some()
    }

    /// Suggested (x_min, x_max) for grid truncation.
    pub fn domain_hint(&self) -> (f64, f64) {
        self.domain_hint
    }

    /// `Q(x) = int_1^x 2 q(y) dy`, anchored so `Q(1) = 0`.
    ///
    /// Uses the closed form when available, otherwise adaptive quadrature
    /// (memoized) with absolute error below `Q_QUAD_TOL`.
    pub fn eval_q(&self, x: f64) -> Result<f64, ModelError> {
        assert!(x > 0.0, "eval_q requires x > 0, got {x}");
        if let Some(q) = &self.q_closed_form {
            return Ok(q(x));
        }
        let key = x.to_bits();
        if let Some(v) = self.q_cache.read().expect("q cache poisoned").get(&key) {
            return Ok(*v);
        }
        let drift = self.drift.clone();
        let v = adaptive_quadrature(|y| 2.0 * drift(y), 1.0, x, Q_QUAD_TOL, QUAD_MAX_SUBDIV)?;
        self.q_cache.write().expect("q cache poisoned").insert(key, v);
        Ok(v)
    }
}

/// Scale function and speed density of a model.
pub struct ScaleSpeed {
    model: Arc<DiffusionModel>,
    lambda_cache: RwLock<HashMap<u64, f64>>,
}

impl ScaleSpeed {
    /// `Lambda(x) = int_1^x exp(Q(y)) dy` (memoized, computed in log space).
    pub fn lambda(&self, x: f64) -> Result<f64, ModelError> {
        assert!(x > 0.0);
        if x == 1.0 {
            return Ok(0.0);
        }
        let key = x.to_bits();
        if let Some(v) = self.lambda_cache.read().expect("cache poisoned").get(&key) {
            return Ok(*v);
        }
        let (a, b, sign) = if x > 1.0 { (1.0, x, 1.0) } else { (x, 1.0, -1.0) };
        let model = self.model.clone();
        let ln_val = match adaptive_log_quadrature(
            |y| model.eval_q(y).unwrap_or(f64::NAN),
            a,
            b,
            1e-12,
            QUAD_MAX_SUBDIV,
        ) {
            Ok(v) => v,
            // a partial sum of a positive integrand is a lower bound, so a
            // partial estimate beyond double range already proves overflow
            Err(QuadError::NonConvergence { partial, .. }) if partial > f64::MAX.ln() => {
                return Err(ModelError::ScaleOverflow { x, log_value: partial });
            }
            Err(e) => return Err(e.into()),
        };
        if ln_val > f64::MAX.ln() {
            return Err(ModelError::ScaleOverflow { x, log_value: ln_val });
        }
        let v = sign * ln_val.exp();
        self.lambda_cache
            .write()
            .expect("cache poisoned")
            .insert(key, v);
        Ok(v)
    }

    /// Speed density `exp(-Q(x))`; may underflow to zero for very steep drifts.
    pub fn speed_density(&self, x: f64) -> f64 {
        (-self.model.eval_q(x).unwrap_or(f64::NAN)).exp()
    }

    /// `ln` of the speed density, immune to under/overflow.
    pub fn log_speed_density(&self, x: f64) -> Result<f64, ModelError> {
        Ok(-self.model.eval_q(x)?)
    }
}

/// Scale/speed pair of a model.
pub fn scale_speed(model: &DiffusionModel) -> ScaleSpeed {
    ScaleSpeed {
        model: Arc::new(model.clone()),
        lambda_cache: RwLock::new(HashMap::new()),
    }
}

/// The logistic Feller population diffusion
/// `dZ = sqrt(sigma Z) dB + (r Z - k Z^2) dt`, mapped through
/// `X = 2 sqrt(Z / sigma)` to a unit-noise diffusion with drift
/// `q(x) = 1/(2x) - r x / 2 + k sigma x^3 / 8`.
pub fn logistic_feller_model(sigma: f64, r: f64, k: f64) -> Result<DiffusionModel, ModelError> {
    if !(sigma > 0.0 && r > 0.0 && k > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "logistic_feller requires sigma, r, k > 0 (got {sigma}, {r}, {k})"
        )));
    }
    let ks = k * sigma;
    let model = DiffusionModel::new("logistic_feller", move |x: f64| {
        0.5 / x - 0.5 * r * x + 0.125 * ks * x * x * x
    })
    .with_drift_derivative(move |x: f64| -0.5 / (x * x) - 0.5 * r + 0.375 * ks * x * x)
    .with_q_closed_form(move |y: f64| {
        // int_1^y (1/x - r x + ks x^3 / 4) dx
        y.ln() - 0.5 * r * (y * y - 1.0) + ks * (y.powi(4) - 1.0) / 16.0
    })
    .with_domain_hint(1e-3, 6.0);
    Ok(model)
}

/// Polynomial drift `q(x) = sum c x^p` with analytic `Q`; powers may be
/// negative (p = -1 contributes a log term). The empty list is Brownian
/// motion.
pub fn polynomial_drift_model(coefficients: &[(f64, f64)]) -> DiffusionModel {
    for (p, c) in coefficients {
        assert!(p.is_finite() && c.is_finite(), "powers and coefficients must be finite");
    }
    let coeffs = coefficients.to_vec();
    let coeffs_q = coeffs.clone();
    let coeffs_d = coeffs.clone();
    let name = if coeffs.is_empty() {
        "brownian".to_string()
    } else {
        "polynomial".to_string()
    };
    DiffusionModel::new(name, move |x: f64| {
        coeffs.iter().map(|(p, c)| c * x.powf(*p)).sum()
    })
    .with_drift_derivative(move |x: f64| {
        coeffs_d.iter().map(|(p, c)| c * p * x.powf(p - 1.0)).sum()
    })
    .with_q_closed_form(move |y: f64| {
        coeffs_q
            .iter()
            .map(|(p, c)| {
                if (*p + 1.0).abs() < 1e-14 {
                    2.0 * c * y.ln()
                } else {
                    2.0 * c * (y.powf(p + 1.0) - 1.0) / (p + 1.0)
                }
            })
            .sum()
    })
}

/// Model whose drift is a tabulated function (linear interpolation,
/// constant beyond the table range). Used to re-classify the h-transformed
/// dynamics from its gridded drift.
pub fn tabulated_drift_model(
    name: impl Into<String>,
    xs: Vec<f64>,
    drift_values: Vec<f64>,
) -> DiffusionModel {
    let table = LinearTable::new(xs, drift_values);
    let lo = table.xs()[0];
    let hi = *table.xs().last().expect("non-empty table");
    DiffusionModel::new(name, move |x: f64| table.eval(x)).with_domain_hint(lo, hi)
}
