//! Feller boundary classification for the endpoints 0 and infinity.
//!
//! The two iterated integrals
//! `I(a) = int_b^a dLambda(y) int_b^y dm(z)` and
//! `J(a) = int_b^a dm(y) int_b^y dLambda(z)`
//! decide the class of an endpoint `a`:
//! both finite -> regular, I finite only -> exit, J finite only -> entrance,
//! neither -> natural.
//!
//! Finiteness is decided numerically: partial integrals are accumulated on
//! a geometric ladder of cutoffs approaching the endpoint and the growth of
//! the per-octave increments is inspected. Everything runs in log space so
//! scale factors like `exp(Q)` with `Q ~ y^4` cannot overflow.

use thiserror::Error;

use crate::model::{DiffusionModel, ModelError, QUAD_MAX_SUBDIV};
use crate::numerics::quad::{adaptive_log_quadrature, gk15_log_probe, log_add, QuadError};

/// Evaluation floor near zero: cutoffs never go below this abscissa.
pub const NEAR_ZERO_FLOOR: f64 = 1e-12;
/// Minimum number of geometric cutoffs before a convergence verdict.
pub const MIN_CUTOFFS: usize = 20;
/// Maximum number of octaves toward either endpoint.
pub const MAX_OCTAVES: usize = 64;
/// Increment ratio below which the tail is treated as geometric.
pub const CONVERGED_RATIO: f64 = 0.9;
/// Increment ratio above which partial integrals count as non-shrinking.
pub const DIVERGED_RATIO: f64 = 0.999;
/// Extrapolated tail must be below this fraction of the total to accept.
pub const TAIL_FRACTION: f64 = 1e-9;
/// Window of trailing octaves used by the ratio tests.
const RATIO_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("integrand evaluation failed at x = {x:.6e}")]
    Evaluation { x: f64 },
    #[error("quadrature failure inside octave [{lo:.6e}, {hi:.6e}]: {source}")]
    OctaveQuadrature {
        lo: f64,
        hi: f64,
        source: QuadError,
    },
    #[error("model evaluation failed: {0}")]
    Model(#[from] ModelError),
    #[error("scale integral verdict inconclusive; retry with a larger cutoff budget")]
    IndeterminateAbsorption,
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Endpoint of (0, inf) an improper integral runs toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralTarget {
    Zero,
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictStatus {
    Converged,
    Diverged,
    Inconclusive,
}

/// Outcome of an improper-integral probe.
///
/// `tail_exponent_estimate` is the fitted local power-law exponent `p` of
/// the integrand toward the endpoint (increments scale like `c^(p+1)` at
/// cutoff `c`); `p` near -1 is the boundary where the ratio heuristics go
/// indecisive.
#[derive(Debug, Clone)]
pub struct IntegralVerdict {
    pub status: VerdictStatus,
    pub value: Option<f64>,
    pub tail_exponent_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryClass {
    Regular,
    Exit,
    Entrance,
    Natural,
    Unknown,
}

impl std::fmt::Display for BoundaryClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundaryClass::Regular => "regular",
            BoundaryClass::Exit => "exit",
            BoundaryClass::Entrance => "entrance",
            BoundaryClass::Natural => "natural",
            BoundaryClass::Unknown => "unknown",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryReport {
    pub endpoint: IntegralTarget,
    pub i: IntegralVerdict,
    pub j: IntegralVerdict,
    pub classification: BoundaryClass,
}

/// Improper integral of a positive integrand from `b` toward an endpoint.
///
/// Thin wrapper over [`improper_integral_log`] for integrands that fit in
/// plain double range.
pub fn improper_integral<F: Fn(f64) -> f64>(
    f: F,
    b: f64,
    target: IntegralTarget,
) -> Result<IntegralVerdict, BoundaryError> {
    improper_integral_log(move |x| f(x).ln(), b, target)
}

/// Improper integral with the integrand supplied as `x -> ln f(x)`.
///
/// Partial integrals are accumulated over octaves `[b 2^-k, b 2^-k+1]`
/// (toward zero) or `[b 2^k-1, b 2^k]` (toward infinity). Convergence is
/// declared when the trailing increment ratios stay below
/// [`CONVERGED_RATIO`] and the geometric tail extrapolation falls below
/// [`TAIL_FRACTION`] of the accumulated total (the extrapolated tail is
/// folded into the reported value). Divergence is declared when the ratios
/// never drop below [`DIVERGED_RATIO`]. Anything else is inconclusive.
pub fn improper_integral_log<F: Fn(f64) -> f64>(
    ln_f: F,
    b: f64,
    target: IntegralTarget,
) -> Result<IntegralVerdict, BoundaryError> {
    assert!(b > 0.0 && b.is_finite());
    let mut ln_increments: Vec<f64> = Vec::new();
    let mut cut_prev = b;
    let mut ln_total = f64::NEG_INFINITY;

    for k in 1..=MAX_OCTAVES {
        let cut = match target {
            IntegralTarget::Zero => {
                let c = b * 0.5f64.powi(k as i32);
                if c < NEAR_ZERO_FLOOR {
                    break;
                }
                c
            }
            IntegralTarget::Infinity => b * 2f64.powi(k as i32),
        };
        let (lo, hi) = match target {
            IntegralTarget::Zero => (cut, cut_prev),
            IntegralTarget::Infinity => (cut_prev, cut),
        };
        // Crude single-panel probe first: once an octave dwarfs everything
        // accumulated so far by e^30 the integral is deep in divergence
        // territory and the increment enters only ratio tests, where a
        // rough value is plenty. Refining such octaves (ln f can span
        // thousands) would be pure waste.
        let (probe, _) = probe_octave(&ln_f, lo, hi);
        if probe.is_nan() {
            return Err(BoundaryError::Evaluation { x: 0.5 * (lo + hi) });
        }
        let ln_inc = if probe > ln_total + 30.0 && k > 1 {
            probe
        } else {
            // octaves that only keep the ratio bookkeeping honest (well
            // below the running total) do not need full value accuracy,
            // and for integrands assembled from huge cancelling logs they
            // cannot deliver it either
            let rtol = if probe < ln_total - 7.0 { 1e-5 } else { 1e-9 };
            match adaptive_log_quadrature(&ln_f, lo, hi, rtol, 4096) {
                Ok(v) => v,
                Err(QuadError::NonConvergence { partial, error, .. }) if error <= 1e-3 => partial,
                Err(QuadError::BadEvaluation { x }) => {
                    return Err(BoundaryError::Evaluation { x })
                }
                Err(other) => {
                    return Err(BoundaryError::OctaveQuadrature {
                        lo,
                        hi,
                        source: other,
                    })
                }
            }
        };
        if ln_inc.is_nan() {
            return Err(BoundaryError::Evaluation { x: 0.5 * (lo + hi) });
        }
        if std::env::var_os("QSD1D_DEBUG_OCTAVES").is_some() {
            eprintln!("octave {k}: [{lo:.6e}, {hi:.6e}] ln_inc = {ln_inc:.9}");
        }
        ln_total = log_add(ln_total, ln_inc);
        ln_increments.push(ln_inc);
        cut_prev = cut;

        if let Some(v) = decide(&ln_increments, ln_total, target, k) {
            return Ok(v);
        }
    }

    // ladder exhausted: try a final convergence read with whatever we have,
    // otherwise report inconclusive
    if let Some(v) = try_converged(&ln_increments, ln_total, target) {
        return Ok(v);
    }
    Ok(IntegralVerdict {
        status: VerdictStatus::Inconclusive,
        value: None,
        tail_exponent_estimate: tail_exponent(&ln_increments, target),
    })
}

fn probe_octave<F: Fn(f64) -> f64>(ln_f: &F, lo: f64, hi: f64) -> (f64, f64) {
    gk15_log_probe(ln_f, lo, hi)
}

/// Trailing increment ratios `delta_{k+1} / delta_k` (last `RATIO_WINDOW`).
fn trailing_ratios(ln_increments: &[f64]) -> Vec<f64> {
    let n = ln_increments.len();
    let lo = n.saturating_sub(RATIO_WINDOW + 1);
    ln_increments[lo..]
        .windows(2)
        .map(|w| (w[1] - w[0]).exp())
        .collect()
}

fn decide(
    ln_increments: &[f64],
    ln_total: f64,
    target: IntegralTarget,
    octaves_done: usize,
) -> Option<IntegralVerdict> {
    let n = ln_increments.len();
    if n < RATIO_WINDOW + 1 {
        return None;
    }
    let ratios = trailing_ratios(ln_increments);
    // all increments in the window must be genuine (not underflowed)
    let window_alive = ln_increments[n - RATIO_WINDOW - 1..]
        .iter()
        .all(|v| *v > f64::NEG_INFINITY);

    // divergence: increments never shrink meaningfully
    if window_alive && ratios.iter().all(|r| *r >= DIVERGED_RATIO) {
        return Some(IntegralVerdict {
            status: VerdictStatus::Diverged,
            value: None,
            tail_exponent_estimate: tail_exponent(ln_increments, target),
        });
    }

    if octaves_done < MIN_CUTOFFS {
        return None;
    }
    try_converged(ln_increments, ln_total, target)
}

/// Convergence read: trailing increments must shrink geometrically
/// (ratios below [`CONVERGED_RATIO`]), the geometric tail extrapolation is
/// folded into the value, and its uncertainty — driven by how much the
/// ratios still drift across the window — must be below [`TAIL_FRACTION`]
/// of the total. For a slowly-converging power law (e.g. `y^-1/2` toward
/// zero) the tail itself is real mass and far above 1e-9 of the total, but
/// the ratios are constant to near machine precision, so the extrapolated
/// value is good and the verdict fires.
fn try_converged(
    ln_increments: &[f64],
    ln_total: f64,
    target: IntegralTarget,
) -> Option<IntegralVerdict> {
    let n = ln_increments.len();
    if n < RATIO_WINDOW + 1 || ln_total == f64::NEG_INFINITY {
        return None;
    }
    let ratios = trailing_ratios(ln_increments);
    let fully_dead = ln_increments[n - 1] == f64::NEG_INFINITY;
    if fully_dead {
        return Some(IntegralVerdict {
            status: VerdictStatus::Converged,
            value: Some(ln_total.exp()),
            tail_exponent_estimate: tail_exponent(ln_increments, target),
        });
    }
    if !ratios.iter().all(|r| r.is_finite() && *r < CONVERGED_RATIO) {
        return None;
    }
    let r_last = *ratios.last().expect("non-empty ratio window");
    let r_max = ratios.iter().cloned().fold(0.0f64, f64::max);
    let spread = ratios.iter().cloned().fold(0.0f64, f64::max)
        - ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let ln_tail = ln_increments[n - 1] + (r_last / (1.0 - r_last)).ln();
    // extrapolation uncertainty: ratio drift propagated through the
    // geometric sum, plus a floating-point floor
    let rel_uncert = spread / ((1.0 - r_max) * (1.0 - r_max)) + 1e-12;
    let ln_uncert = ln_tail + rel_uncert.ln();
    if ln_uncert <= ln_total + TAIL_FRACTION.ln() {
        return Some(IntegralVerdict {
            status: VerdictStatus::Converged,
            value: Some(log_add(ln_total, ln_tail).exp()),
            tail_exponent_estimate: tail_exponent(ln_increments, target),
        });
    }
    None
}

/// Least-squares slope of ln(increment) against ln(cutoff) over the trailing
/// window, mapped to the integrand exponent `p` (increment ~ cutoff^(p+1)).
fn tail_exponent(ln_increments: &[f64], target: IntegralTarget) -> f64 {
    let n = ln_increments.len();
    if n < 3 {
        return f64::NAN;
    }
    let lo = n.saturating_sub(RATIO_WINDOW + 1);
    let pts: Vec<(f64, f64)> = ln_increments[lo..]
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, v)| {
            let k = (lo + i + 1) as f64;
            let ln_cut = match target {
                IntegralTarget::Zero => -k * std::f64::consts::LN_2,
                IntegralTarget::Infinity => k * std::f64::consts::LN_2,
            };
            (ln_cut, *v)
        })
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let np = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (np * sxy - sx * sy) / (np * sxx - sx * sx);
    slope - 1.0
}

/// `I(a)`: outer weight `exp(Q(y))`, inner mass `int between b and y of exp(-Q)`,
/// both factors oriented nonnegative.
pub fn feller_i(
    model: &DiffusionModel,
    a: IntegralTarget,
    b: f64,
) -> Result<IntegralVerdict, BoundaryError> {
    iterated_feller(model, a, b, true)
}

/// `J(a)`: roles of `dLambda` and `dm` exchanged relative to `I(a)`.
pub fn feller_j(
    model: &DiffusionModel,
    a: IntegralTarget,
    b: f64,
) -> Result<IntegralVerdict, BoundaryError> {
    iterated_feller(model, a, b, false)
}

fn iterated_feller(
    model: &DiffusionModel,
    a: IntegralTarget,
    b: f64,
    outer_is_scale: bool,
) -> Result<IntegralVerdict, BoundaryError> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(BoundaryError::Precondition(format!(
            "base point b must be in (0, inf), got {b}"
        )));
    }
    let m = model.clone();
    let inner_sign = if outer_is_scale { -1.0 } else { 1.0 };
    let ln_f = move |y: f64| -> f64 {
        let q_y = match m.eval_q(y) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        let outer = if outer_is_scale { q_y } else { -q_y };
        let (lo, hi) = if y < b { (y, b) } else { (b, y) };
        if lo == hi {
            return f64::NEG_INFINITY;
        }
        match exp_q_log_integral(&m, inner_sign, lo, hi) {
            // combine anchor and outer weight first: when the inner peak
            // sits at y itself these are bit-identical +-Q(y) whose exact
            // cancellation must not be destroyed by the (tiny) remainder
            Ok(v) => (v.anchor + outer) + v.rest,
            Err(_) => f64::NAN,
        }
    };
    improper_integral_log(ln_f, b, a)
}

/// Log value split as `anchor + rest`, so callers can cancel the anchor
/// against an opposite term of the same magnitude before adding `rest`.
/// With `Q ~ 10^17` the quantity `Q - ln rate` rounds back to `Q`, which
/// would silently drop the whole correction in a combined representation.
struct AnchoredLog {
    anchor: f64,
    rest: f64,
}

/// `ln int_lo^hi exp(s Q(z)) dz` for `s = +-1`.
///
/// When the integrand is an endpoint-peaked ramp whose e-folding length is
/// below floating-point resolution at that endpoint (e.g. `exp(Q)` with
/// `Q ~ y^4/2` at `y ~ 10^6`), no quadrature can see the peak; the Laplace
/// endpoint value `s Q(x*) - ln |2 s q(x*)|` is used instead, anchored at
/// `s Q(x*)`. Everything resolvable goes through adaptive log-space
/// quadrature (anchor 0).
fn exp_q_log_integral(
    model: &DiffusionModel,
    s: f64,
    lo: f64,
    hi: f64,
) -> Result<AnchoredLog, BoundaryError> {
    let g = |z: f64| -> Result<f64, BoundaryError> { Ok(s * model.eval_q(z)?) };
    let g_lo = g(lo)?;
    let g_hi = g(hi)?;
    let (peak_x, g_peak, rate) = if g_hi >= g_lo {
        (hi, g_hi, 2.0 * s * model.drift(hi)) // slope of g at hi; ramp into hi needs > 0
    } else {
        (lo, g_lo, -2.0 * s * model.drift(lo)) // decay away from lo needs slope < 0 at lo
    };
    // quadrature is pointless when the e-folding length of the ramp drops
    // below floating-point resolution, and already noise-bound when
    // eps * |Q| exceeds the target accuracy
    let unresolvable = rate * peak_x.abs() * f64::EPSILON > 1e-3;
    let noise_bound = f64::EPSILON * g_peak.abs() > 1e-8;
    let dominated =
        rate > 0.0 && rate * (hi - lo) > 50.0 && (g_peak - g_lo.min(g_hi)) > 50.0;
    if dominated && (unresolvable || noise_bound) {
        return Ok(AnchoredLog {
            anchor: g_peak,
            rest: -rate.ln(),
        });
    }
    let mm = model.clone();
    match adaptive_log_quadrature(
        move |z| mm.eval_q(z).map(|q| s * q).unwrap_or(f64::NAN),
        lo,
        hi,
        1e-9,
        QUAD_MAX_SUBDIV,
    ) {
        Ok(v) => Ok(AnchoredLog { anchor: 0.0, rest: v }),
        Err(QuadError::NonConvergence { partial, .. }) => Ok(AnchoredLog {
            anchor: 0.0,
            rest: partial,
        }),
        Err(QuadError::BadEvaluation { x }) => Err(BoundaryError::Evaluation { x }),
    }
}

/// Assemble the Feller table lookup at one endpoint.
pub fn classify_boundary(
    model: &DiffusionModel,
    endpoint: IntegralTarget,
    b: f64,
) -> Result<BoundaryReport, BoundaryError> {
    let i = feller_i(model, endpoint, b)?;
    let j = feller_j(model, endpoint, b)?;
    let classification = match (i.status, j.status) {
        (VerdictStatus::Converged, VerdictStatus::Converged) => BoundaryClass::Regular,
        (VerdictStatus::Converged, VerdictStatus::Diverged) => BoundaryClass::Exit,
        (VerdictStatus::Diverged, VerdictStatus::Converged) => BoundaryClass::Entrance,
        (VerdictStatus::Diverged, VerdictStatus::Diverged) => BoundaryClass::Natural,
        _ => BoundaryClass::Unknown,
    };
    Ok(BoundaryReport {
        endpoint,
        i,
        j,
        classification,
    })
}

/// Whether hitting 0 is certain: sufficient condition `Lambda(inf) = inf`
/// when 0 is accessible (regular or exit).
pub fn check_certain_absorption(model: &DiffusionModel) -> Result<bool, BoundaryError> {
    let m = model.clone();
    let verdict = improper_integral_log(move |y| m.eval_q(y).unwrap_or(f64::NAN), 1.0, IntegralTarget::Infinity)?;
    match verdict.status {
        VerdictStatus::Diverged => Ok(true),
        VerdictStatus::Converged => Ok(false),
        VerdictStatus::Inconclusive => Err(BoundaryError::IndeterminateAbsorption),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{logistic_feller_model, polynomial_drift_model};

    #[test]
    fn inverse_square_tail_converges_to_one() {
        let v = improper_integral(|y: f64| y.powi(-2), 1.0, IntegralTarget::Infinity).unwrap();
        assert_eq!(v.status, VerdictStatus::Converged);
        assert!((v.value.unwrap() - 1.0).abs() < 1e-8);
        assert!((v.tail_exponent_estimate + 2.0).abs() < 0.1);
    }

    #[test]
    fn harmonic_tail_diverges() {
        let v = improper_integral(|y: f64| 1.0 / y, 1.0, IntegralTarget::Infinity).unwrap();
        assert_eq!(v.status, VerdictStatus::Diverged);
        assert!((v.tail_exponent_estimate + 1.0).abs() < 0.05);
    }

    #[test]
    fn inverse_sqrt_near_zero_converges_to_two() {
        let v = improper_integral(|y: f64| y.powf(-0.5), 1.0, IntegralTarget::Zero).unwrap();
        assert_eq!(v.status, VerdictStatus::Converged);
        assert!((v.value.unwrap() - 2.0).abs() < 1e-8);
        assert!((v.tail_exponent_estimate + 0.5).abs() < 0.1);
    }

    #[test]
    fn harmonic_near_zero_diverges() {
        let v = improper_integral(|y: f64| 1.0 / y, 1.0, IntegralTarget::Zero).unwrap();
        assert_eq!(v.status, VerdictStatus::Diverged);
    }

    #[test]
    fn brownian_feller_integrals() {
        // q = 0: I(inf) = int (y-1) dy diverges; at 0 both integrals are finite
        let m = polynomial_drift_model(&[]);
        let vi = feller_i(&m, IntegralTarget::Infinity, 1.0).unwrap();
        assert_eq!(vi.status, VerdictStatus::Diverged);
        let vj0 = feller_j(&m, IntegralTarget::Zero, 1.0).unwrap();
        assert_eq!(vj0.status, VerdictStatus::Converged);
        // closed form: J(0) = I(0) = int_0^1 (1-y) dy = 1/2
        assert!((vj0.value.unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn brownian_classification() {
        let m = polynomial_drift_model(&[]);
        let z = classify_boundary(&m, IntegralTarget::Zero, 1.0).unwrap();
        assert_eq!(z.classification, BoundaryClass::Regular);
        let inf = classify_boundary(&m, IntegralTarget::Infinity, 1.0).unwrap();
        assert_eq!(inf.classification, BoundaryClass::Natural);
    }

    #[test]
    fn cubic_drift_is_entrance_at_infinity() {
        // q = x^3: inward pull; inner m-integral converges, outer e^Q explodes
        let m = polynomial_drift_model(&[(3.0, 1.0)]);
        let vi = feller_i(&m, IntegralTarget::Infinity, 1.0).unwrap();
        assert_eq!(vi.status, VerdictStatus::Diverged);
        let vj = feller_j(&m, IntegralTarget::Infinity, 1.0).unwrap();
        assert_eq!(vj.status, VerdictStatus::Converged);
        let rep = classify_boundary(&m, IntegralTarget::Infinity, 1.0).unwrap();
        assert_eq!(rep.classification, BoundaryClass::Entrance);
    }

    #[test]
    fn logistic_feller_is_exit_entrance() {
        let m = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
        let z = classify_boundary(&m, IntegralTarget::Zero, 1.0).unwrap();
        assert_eq!(z.i.status, VerdictStatus::Converged);
        assert_eq!(z.j.status, VerdictStatus::Diverged);
        assert_eq!(z.classification, BoundaryClass::Exit);
        let inf = classify_boundary(&m, IntegralTarget::Infinity, 1.0).unwrap();
        assert_eq!(inf.classification, BoundaryClass::Entrance);
    }

    #[test]
    fn classification_is_invariant_under_base_point() {
        let models = [
            logistic_feller_model(1.0, 1.0, 1.0).unwrap(),
            polynomial_drift_model(&[]),
            polynomial_drift_model(&[(3.0, 1.0)]),
        ];
        for m in &models {
            for endpoint in [IntegralTarget::Zero, IntegralTarget::Infinity] {
                let classes: Vec<BoundaryClass> = [0.5, 1.0, 2.0]
                    .iter()
                    .map(|b| classify_boundary(m, endpoint, *b).unwrap().classification)
                    .collect();
                assert!(
                    classes.windows(2).all(|w| w[0] == w[1]),
                    "{}: {:?} at {:?}",
                    m.name(),
                    classes,
                    endpoint
                );
            }
        }
    }

    #[test]
    fn converged_values_match_trapezoid_oracle() {
        // brownian I(0) and J(0) at b = 1 against a fine trapezoid rule on
        // the iterated closed-ish integrand
        let m = polynomial_drift_model(&[]);
        for make in [feller_i, feller_j] {
            let v = make(&m, IntegralTarget::Zero, 1.0).unwrap();
            // f(y) = 1 * (1 - y); trapezoid from 1e-9 to 1
            let n = 200_000;
            let a = 1e-9_f64;
            let h = (1.0 - a) / n as f64;
            let f = |y: f64| 1.0 - y;
            let mut acc = 0.5 * (f(a) + f(1.0));
            for i in 1..n {
                acc += f(a + i as f64 * h);
            }
            let oracle = acc * h;
            let got = v.value.unwrap();
            assert!(
                (got - oracle).abs() < 1e-6 * oracle.abs(),
                "got {got}, oracle {oracle}"
            );
        }
    }

    #[test]
    fn absorption_certain_for_inward_pulls() {
        assert!(check_certain_absorption(&logistic_feller_model(1.0, 1.0, 1.0).unwrap()).unwrap());
        assert!(check_certain_absorption(&polynomial_drift_model(&[(3.0, 1.0)])).unwrap());
        // q = -1 pushes outward: Lambda(inf) = int e^{-2(y-1)} < inf
        assert!(!check_certain_absorption(&polynomial_drift_model(&[(0.0, -1.0)])).unwrap());
    }
}
