//! Adaptive Gauss-Kronrod quadrature, in plain and log-space flavors.
//!
//! The log-space variant integrates positive functions supplied as
//! `x -> ln f(x)` and returns `ln of the integral`, so integrands like
//! `exp(Q)` with `Q` in the hundreds never overflow.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature did not converge after {subdivisions} subdivisions (partial estimate {partial:.6e}, error estimate {error:.3e})")]
    NonConvergence {
        partial: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand evaluation failed at x = {x:.6e}")]
    BadEvaluation { x: f64 },
}

/// 7-point Gauss / 15-point Kronrod abscissae on [-1, 1] (positive half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_7,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_2,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod panel: returns (kronrod, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptive quadrature of `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Panels are bisected depth-first until each carries an error below its
/// length-proportional share of the budget, or `max_subdiv` panels have
/// been accepted. Handles `a > b` by sign reversal.
pub fn adaptive_quadrature<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_subdiv: usize,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let len = hi - lo;
    let mut stack: Vec<(f64, f64)> = vec![(lo, hi)];
    let mut total = 0.0f64;
    let mut total_err = 0.0f64;
    let mut accepted = 0usize;
    while let Some((pa, pb)) = stack.pop() {
        let (v, e) = gk15(&f, pa, pb);
        if !v.is_finite() {
            return Err(QuadError::BadEvaluation { x: 0.5 * (pa + pb) });
        }
        let local_budget = abs_tol * ((pb - pa) / len);
        // also stop when the panel is too narrow to split in f64
        let mid = 0.5 * (pa + pb);
        if e <= local_budget || accepted >= max_subdiv || mid <= pa || mid >= pb {
            total += v;
            total_err += e;
            accepted += 1;
        } else {
            stack.push((pa, mid));
            stack.push((mid, pb));
        }
    }
    if total_err > abs_tol {
        return Err(QuadError::NonConvergence {
            partial: sign * total,
            error: total_err,
            subdivisions: accepted,
        });
    }
    Ok(sign * total)
}

/// Log-space panel estimate.
struct LogPanel {
    ln_val: f64,
    ln_err: f64,
    /// max sampled ln f (scale of the values, for noise floors)
    peak: f64,
    /// sampled ln f nearest the left and right ends (descent ordering)
    g_left: f64,
    g_right: f64,
}

/// One GK panel on a log-scale integrand for `int_a^b f` with `ln_f` given.
fn gk15_log<F: Fn(f64) -> f64>(ln_f: &F, a: f64, b: f64) -> LogPanel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut xs = [0.0f64; 15];
    let mut gs = [0.0f64; 15];
    xs[14] = center;
    for j in 0..7 {
        let dx = half * XGK[j];
        xs[2 * j] = center - dx;
        xs[2 * j + 1] = center + dx;
    }
    let mut peak = f64::NEG_INFINITY;
    for (x, g) in xs.iter().zip(gs.iter_mut()) {
        *g = ln_f(*x);
        if *g > peak {
            peak = *g;
        }
    }
    if peak == f64::NEG_INFINITY {
        return LogPanel {
            ln_val: f64::NEG_INFINITY,
            ln_err: f64::NEG_INFINITY,
            peak,
            g_left: f64::NEG_INFINITY,
            g_right: f64::NEG_INFINITY,
        };
    }
    let mut kronrod = WGK[7] * (gs[14] - peak).exp();
    let mut gauss = WG[3] * (gs[14] - peak).exp();
    for j in 0..7 {
        let f1 = (gs[2 * j] - peak).exp();
        let f2 = (gs[2 * j + 1] - peak).exp();
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let ln_val = peak + (kronrod * half).ln();
    let diff = (kronrod - gauss).abs() * half;
    let ln_err = if diff == 0.0 {
        f64::NEG_INFINITY
    } else {
        peak + diff.ln()
    };
    LogPanel {
        ln_val,
        ln_err,
        peak,
        g_left: gs[0],
        g_right: gs[1],
    }
}

/// Single-panel Gauss-Kronrod estimate of `ln int_a^b exp(ln_f)`:
/// `(ln value, ln error)`. A coarse probe, not a converged quadrature.
pub fn gk15_log_probe<F: Fn(f64) -> f64>(ln_f: &F, a: f64, b: f64) -> (f64, f64) {
    let p = gk15_log(ln_f, a, b);
    (p.ln_val, p.ln_err)
}

/// ln(exp(a) + exp(b)) without overflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Adaptive quadrature of a positive integrand given in log form.
///
/// Returns `ln of int_a^b exp(ln_f)` (requires `a < b`), accurate to
/// `rel_tol` relative error. Each panel is bisected until its own error is
/// below `rel_tol` of its own value, which bounds the global relative error
/// for a positive integrand. Panels whose value sits `e^-60` below the
/// largest panel seen so far are accepted as negligible without further
/// refinement; this keeps integrals of extreme ramps like `exp(y^4/2)`
/// affordable (the refinement descends into the peak region only).
/// `NEG_INFINITY` is a valid return (zero integral, e.g. when the
/// integrand underflows everywhere).
pub fn adaptive_log_quadrature<F: Fn(f64) -> f64>(
    ln_f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_subdiv: usize,
) -> Result<f64, QuadError> {
    assert!(a < b, "adaptive_log_quadrature requires a < b");
    let ln_rtol = rel_tol.ln();
    let mut stack: Vec<(f64, f64)> = vec![(a, b)];
    let mut ln_total = f64::NEG_INFINITY;
    let mut ln_err_total = f64::NEG_INFINITY;
    let mut ln_best = f64::NEG_INFINITY;
    let mut accepted = 0usize;
    while let Some((pa, pb)) = stack.pop() {
        let p = gk15_log(&ln_f, pa, pb);
        let (lv, le) = (p.ln_val, p.ln_err);
        if lv.is_nan() {
            return Err(QuadError::BadEvaluation { x: 0.5 * (pa + pb) });
        }
        let mid = 0.5 * (pa + pb);
        // ln f values carry roundoff ~ eps * |ln f|; below that level the
        // Gauss/Kronrod difference is pure noise and cannot shrink further
        let ln_noise = (64.0 * f64::EPSILON * p.peak.abs().max(1.0)).ln();
        let converged = le <= lv + ln_rtol.max(ln_noise);
        // ln_best is only trusted from locally converged panels; estimates
        // of unresolved ramp panels can be off by many orders
        let negligible = lv <= ln_best - 60.0;
        if converged || negligible || accepted >= max_subdiv || mid <= pa || mid >= pb {
            if converged {
                ln_best = ln_best.max(lv);
            }
            ln_total = log_add(ln_total, lv);
            ln_err_total = log_add(ln_err_total, le);
            accepted += 1;
        } else {
            // descend into the dominant side first so ln_best is honest
            // before the dead side is visited (and prunable)
            if p.g_left > p.g_right {
                stack.push((mid, pb));
                stack.push((pa, mid));
            } else {
                stack.push((pa, mid));
                stack.push((mid, pb));
            }
        }
    }
    if ln_total == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    // allow slack for error accumulated across panels, including the
    // ln-value roundoff floor the panel test already conceded
    let noise = if ln_best.is_finite() {
        1024.0 * f64::EPSILON * ln_best.abs().max(1.0)
    } else {
        0.0
    };
    let allowed = (16.0 * rel_tol).max(noise);
    if ln_err_total > ln_total + allowed.ln() {
        return Err(QuadError::NonConvergence {
            partial: ln_total,
            error: (ln_err_total - ln_total).exp(),
            subdivisions: accepted,
        });
    }
    Ok(ln_total)
}
