//! Distribution distances, exact conditional evolution, exponential-rate
//! fits, survival asymptotics, the weighted-norm convergence bound with its
//! explicit constants, and the 1/t error of time-averaged conditional
//! expectations.
//!
//! Total variation here is the half-L1 convention,
//! `tv(p, q) = 1/2 sum |p_i - q_i|`. The sup-over-unit-test-functions
//! convention used alongside the psi-norm equals twice this value; the
//! factor shows up explicitly wherever the two meet (`psi = 1` gives
//! `psi_distance = 2 tv_distance`).

use thiserror::Error;

use crate::semigroup::{Semigroup, SemigroupError};
use crate::spectral::{Grid, SpectralData};

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("probability vectors have mismatched lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vector is not a probability distribution (sum = {0:.12e})")]
    NotNormalized(f64),
    #[error("degenerate reweighting: mu(g) = {0:.3e}")]
    DegenerateReweight(f64),
    #[error("not enough usable decay points: have {0}, need at least 5")]
    InsufficientDecay(usize),
    #[error("quadrature in s did not settle: relative change {0:.3e} under node doubling")]
    SResolution(f64),
    #[error("conditional law undefined: survival mass vanished at t = {0}")]
    NoSurvivors(f64),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
}

fn check_prob_pair(p: &[f64], q: &[f64]) -> Result<(), AnalyzeError> {
    if p.len() != q.len() {
        return Err(AnalyzeError::LengthMismatch(p.len(), q.len()));
    }
    for v in [p, q] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(AnalyzeError::NotNormalized(s));
        }
    }
    Ok(())
}

/// Total variation distance, half-L1 convention: `1/2 sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, AnalyzeError> {
    check_prob_pair(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Weighted distance `sum psi_i |p_i - q_i|`: the sup over test functions
/// dominated by `psi` is attained at `g = psi sign(p - q)` on discrete
/// support. With `psi = 1` this equals `2 tv_distance`.
pub fn psi_distance(p: &[f64], q: &[f64], psi: &[f64]) -> Result<f64, AnalyzeError> {
    check_prob_pair(p, q)?;
    if psi.len() != p.len() {
        return Err(AnalyzeError::LengthMismatch(psi.len(), p.len()));
    }
    Ok(psi
        .iter()
        .zip(p.iter().zip(q))
        .map(|(w, (a, b))| w * (a - b).abs())
        .sum())
}

/// The reweighted law `(g o mu)_i = g_i mu_i / mu(g)`.
pub fn reweight(g: &[f64], mu: &[f64]) -> Result<Vec<f64>, AnalyzeError> {
    if g.len() != mu.len() {
        return Err(AnalyzeError::LengthMismatch(g.len(), mu.len()));
    }
    let total: f64 = g.iter().zip(mu).map(|(a, b)| a * b).sum();
    if !(total > 0.0) {
        return Err(AnalyzeError::DegenerateReweight(total));
    }
    Ok(g.iter().zip(mu).map(|(a, b)| a * b / total).collect())
}

/// Exact conditional laws `P_mu(X_t in . | T_0 > t)` on the grid, by the
/// survival-scaled left action of the semigroup, plus the survival
/// probabilities `P_mu(T_0 > t)`.
#[derive(Debug, Clone)]
pub struct ConditionalEvolution {
    pub times: Vec<f64>,
    pub laws: Vec<Vec<f64>>,
    pub survivals: Vec<f64>,
    pub log_survivals: Vec<f64>,
}

pub fn conditional_evolution_exact(
    sg: &Semigroup,
    spec: &SpectralData,
    mu0: &[f64],
    times: &[f64],
) -> Result<ConditionalEvolution, AnalyzeError> {
    let lambda1 = spec.lambda1();
    let mut laws = Vec::with_capacity(times.len());
    let mut survivals = Vec::with_capacity(times.len());
    let mut log_survivals = Vec::with_capacity(times.len());
    for &t in times {
        let scaled = sg.left_apply_shifted(t, mu0, lambda1);
        let total: f64 = scaled.iter().sum();
        if !(total > 0.0) {
            return Err(AnalyzeError::NoSurvivors(t));
        }
        laws.push(scaled.iter().map(|v| v / total).collect());
        let log_s = total.ln() - lambda1 * t;
        log_survivals.push(log_s);
        survivals.push(log_s.exp());
    }
    Ok(ConditionalEvolution {
        times: times.to_vec(),
        laws,
        survivals,
        log_survivals,
    })
}

/// Exponential fit `distance ~ C exp(-gamma t)` over an automatic window.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub fitted_c: f64,
    pub fitted_gamma: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
}

/// Least squares on `(t, ln d)` over the window from the first point with
/// `d < 0.5 d_0` (past the early transient) to the last point with
/// `d > 100 floor` (above the resolution floor).
pub fn fit_rate(
    times: &[f64],
    distances: &[f64],
    resolution_floor: f64,
) -> Result<ConvergenceReport, AnalyzeError> {
    assert_eq!(times.len(), distances.len());
    let d0 = distances.first().copied().unwrap_or(0.0);
    let lo_idx = distances.iter().position(|d| *d < 0.5 * d0).unwrap_or(0);
    let hi_idx = distances
        .iter()
        .rposition(|d| *d > 100.0 * resolution_floor)
        .unwrap_or(0);
    fit_rate_in_window(times, distances, (times[lo_idx], times[hi_idx]))
}

/// Same fit with an explicit window override.
pub fn fit_rate_in_window(
    times: &[f64],
    distances: &[f64],
    window: (f64, f64),
) -> Result<ConvergenceReport, AnalyzeError> {
    assert_eq!(times.len(), distances.len());
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(distances)
        .filter(|(t, d)| **t >= window.0 && **t <= window.1 && **d > 1e-12)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(AnalyzeError::InsufficientDecay(pts.len()));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(ConvergenceReport {
        times: times.to_vec(),
        distances: distances.to_vec(),
        fitted_c: intercept.exp(),
        fitted_gamma: -slope,
        fit_window: window,
        r_squared,
    })
}

/// One row of the survival-asymptotics table: the scaled survival
/// `e^{lambda_1 t} P_x(T_0 > t)` against its limit `eta1(x) m(eta1)`.
#[derive(Debug, Clone, Copy)]
pub struct SurvivalRow {
    pub t: f64,
    pub x: f64,
    pub scaled_survival: f64,
    pub limit: f64,
}

/// Scaled survival probabilities from the listed grid nodes.
pub fn survival_asymptotics(
    sg: &Semigroup,
    spec: &SpectralData,
    x_indices: &[usize],
    times: &[f64],
) -> Vec<SurvivalRow> {
    let ones = vec![1.0; spec.grid().len()];
    let mut rows = Vec::with_capacity(x_indices.len() * times.len());
    for &t in times {
        let scaled = sg.apply_shifted(t, &ones, spec.lambda1());
        for &ix in x_indices {
            rows.push(SurvivalRow {
                t,
                x: spec.grid().points()[ix],
                scaled_survival: scaled[ix],
                limit: spec.eta1()[ix] * spec.m_eta1(),
            });
        }
    }
    rows
}

/// Scaled restricted survival `e^{lambda_1 t} P_x(X_t in B, T_0 > t)` for a
/// Borel set given as a set of grid-node indices; the limit is
/// `eta1(x) alpha(B) m(eta1)`.
pub fn borel_survival_scaled(
    sg: &Semigroup,
    spec: &SpectralData,
    set_indices: &[usize],
    x_index: usize,
    t: f64,
) -> (f64, f64) {
    let mut indicator = vec![0.0; spec.grid().len()];
    for &i in set_indices {
        indicator[i] = 1.0;
    }
    let scaled = sg.apply_shifted(t, &indicator, spec.lambda1());
    let alpha_b: f64 = set_indices.iter().map(|&i| spec.alpha()[i]).sum();
    let limit = spec.eta1()[x_index] * alpha_b * spec.m_eta1();
    (scaled[x_index], limit)
}

/// Weight function data for the psi-norm bound: node values (each >= 1),
/// the moments `alpha(psi)` and `alpha(psi^2 / eta1)`, and the constant
/// `c in (0, 1)` entering `D_1`.
#[derive(Debug, Clone)]
pub struct PsiSpec {
    pub psi: Vec<f64>,
    pub alpha_psi: f64,
    pub alpha_psi2_over_eta1: f64,
    pub c: f64,
}

impl PsiSpec {
    pub fn new(
        spec: &SpectralData,
        psi_fn: impl Fn(f64) -> f64,
        c: f64,
    ) -> Result<Self, AnalyzeError> {
        assert!(c > 0.0 && c < 1.0, "c must lie in (0, 1), got {c}");
        let psi: Vec<f64> = spec.grid().points().iter().map(|x| psi_fn(*x)).collect();
        assert!(
            psi.iter().all(|v| *v >= 1.0),
            "psi must be >= 1 everywhere on the grid"
        );
        let alpha_psi: f64 = psi.iter().zip(spec.alpha()).map(|(p, a)| p * a).sum();
        let alpha_psi2_over_eta1: f64 = psi
            .iter()
            .zip(spec.alpha().iter().zip(spec.eta1()))
            .map(|(p, (a, e))| p * p / e * a)
            .sum();
        Ok(PsiSpec {
            psi,
            alpha_psi,
            alpha_psi2_over_eta1,
            c,
        })
    }

    /// `D_1 = 1 + (1 + alpha(psi)) / (1 - c)`.
    pub fn d1(&self) -> f64 {
        1.0 + (1.0 + self.alpha_psi) / (1.0 - self.c)
    }

    /// `D_2 = 2 + alpha(psi)`.
    pub fn d2(&self) -> f64 {
        2.0 + self.alpha_psi
    }
}

/// Outcome of the explicit-constant psi-norm bound check.
#[derive(Debug, Clone)]
pub struct PsiBoundReport {
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub holds: Vec<bool>,
    /// First sampled time after which the bound holds at every later
    /// sampled time.
    pub t_mu: Option<f64>,
    /// `|| d(eta1 o mu0)/d beta - 1 ||_{L^2(beta)}`.
    pub divergence: f64,
    /// Rate used on the right-hand side.
    pub gamma: f64,
    /// Set when the bound needed the fallback rate `gamma / 2`.
    pub gamma_halved: bool,
    /// Set when the divergence is not finite (bound holds vacuously).
    pub trivially_true: bool,
}

/// Check `sup_{|g| <= psi} |E_mu[g(X_t) | T_0 > t] - alpha(g)|` against
/// `max(D_1, D_2) sqrt(alpha(psi^2/eta1) / m(eta1)) ||d(eta1 o mu0)/d beta - 1||_2 e^{-gamma t}`
/// with `gamma` the spectral gap. If the bound fails at that rate the probe
/// retries at `gamma / 2` and flags the report instead of failing.
pub fn psi_bound_check(
    sg: &Semigroup,
    spec: &SpectralData,
    psi: &PsiSpec,
    mu0: &[f64],
    times: &[f64],
) -> Result<PsiBoundReport, AnalyzeError> {
    let evo = conditional_evolution_exact(sg, spec, mu0, times)?;
    let lhs: Vec<f64> = evo
        .laws
        .iter()
        .map(|law| psi_distance(law, spec.alpha(), &psi.psi))
        .collect::<Result<_, _>>()?;

    // L^2(beta) divergence of the eta1-reweighted initial law from beta
    let eta_mu = reweight(spec.eta1(), mu0)?;
    let divergence = eta_mu
        .iter()
        .zip(spec.beta())
        .map(|(em, b)| {
            let ratio = em / b;
            (ratio - 1.0) * (ratio - 1.0) * b
        })
        .sum::<f64>()
        .sqrt();
    let trivially_true = !divergence.is_finite();

    let moment = (psi.alpha_psi2_over_eta1 / spec.m_eta1()).sqrt();
    let prefactor = psi.d1().max(psi.d2()) * moment * divergence;

    let build = |gamma: f64| -> (Vec<f64>, Vec<bool>, Option<f64>) {
        let rhs: Vec<f64> = times.iter().map(|t| prefactor * (-gamma * t).exp()).collect();
        let holds: Vec<bool> = lhs
            .iter()
            .zip(rhs.iter())
            .map(|(l, r)| trivially_true || l <= r)
            .collect();
        // first time after which the bound holds at all later samples
        let mut t_mu = None;
        for i in (0..holds.len()).rev() {
            if holds[i] {
                t_mu = Some(times[i]);
            } else {
                break;
            }
        }
        (rhs, holds, t_mu)
    };

    let gamma = spec.gap();
    let (rhs, holds, t_mu) = build(gamma);
    if t_mu.is_some() || trivially_true {
        return Ok(PsiBoundReport {
            times: times.to_vec(),
            lhs,
            rhs,
            holds,
            t_mu,
            divergence,
            gamma,
            gamma_halved: false,
            trivially_true,
        });
    }
    let (rhs, holds, t_mu) = build(0.5 * gamma);
    Ok(PsiBoundReport {
        times: times.to_vec(),
        lhs,
        rhs,
        holds,
        t_mu,
        divergence,
        gamma: 0.5 * gamma,
        gamma_halved: true,
        trivially_true,
    })
}

/// One row of the quasi-ergodic error table.
#[derive(Debug, Clone, Copy)]
pub struct QuasiErgodicRow {
    pub t: f64,
    pub estimate: f64,
    pub beta_g: f64,
    pub error: f64,
}

/// Time-averaged conditional expectation
/// `E_x[(1/t) int_0^t g(X_s) ds | T_0 > t]` against `beta(g)`.
///
/// The numerator is the Simpson quadrature (at least 64 intervals) in `s`
/// of `[exp(sL) diag(g) exp((t-s)L) 1](x)`, evaluated spectrally with the
/// survival scaling `e^{lambda_1 t}` pulled through. Requires the complete
/// eigenbasis: the integrand at small `s` involves barely-damped high
/// modes. A node-doubling pass guards the quadrature; relative drift above
/// 1e-4 is an error.
pub fn quasi_ergodic_error(
    sg: &Semigroup,
    spec: &SpectralData,
    g: &[f64],
    x_index: usize,
    times: &[f64],
    s_intervals: usize,
) -> Result<Vec<QuasiErgodicRow>, AnalyzeError> {
    assert!(
        sg.is_complete(),
        "quasi_ergodic_error needs the full eigenbasis"
    );
    assert!(s_intervals >= 64, "need at least 64 Simpson intervals");
    let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    assert!(gmax <= 1.0 + 1e-12, "g must satisfy |g| <= 1");

    let k = sg.modes();
    let n = spec.grid().len();
    assert_eq!(g.len(), n);
    let lambda1 = spec.lambda1();
    let beta_g: f64 = spec.beta().iter().zip(g).map(|(b, gi)| b * gi).sum();

    // c_b = <1, eta_b>_m, gram[a][b] = <eta_a, g eta_b>_m
    let ones = vec![1.0; n];
    let c = sg.coefficients(&ones);
    let weights = sg.weights();
    let mut gram = vec![vec![0.0f64; k]; k];
    for a in 0..k {
        let ea = sg.eta(a);
        for b in a..k {
            let eb = sg.eta(b);
            let mut s = 0.0;
            for i in 0..n {
                s += ea[i] * g[i] * eb[i] * weights[i];
            }
            gram[a][b] = s;
            gram[b][a] = s;
        }
    }
    let eta_at_x: Vec<f64> = (0..k).map(|a| sg.eta(a)[x_index]).collect();

    // survival-scaled integrand f(s) = sum_{a,b} e^{-(la-l1)s} eta_a(x)
    //   gram[a][b] c_b e^{-(lb-l1)(t-s)}
    let f_hat = |s: f64, t: f64| -> f64 {
        let mut right = vec![0.0f64; k];
        for b in 0..k {
            right[b] = c[b] * (-(sg.lambda(b) - lambda1) * (t - s)).exp();
        }
        let mut total = 0.0;
        for a in 0..k {
            let da = (-(sg.lambda(a) - lambda1) * s).exp();
            if da == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for b in 0..k {
                inner += gram[a][b] * right[b];
            }
            total += da * eta_at_x[a] * inner;
        }
        total
    };

    let simpson = |t: f64, intervals: usize| -> f64 {
        let h = t / intervals as f64;
        let mut acc = f_hat(0.0, t) + f_hat(t, t);
        for i in 1..intervals {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f_hat(i as f64 * h, t);
        }
        acc * h / 3.0
    };

    let ones_scaled = |t: f64| -> f64 {
        (0..k)
            .map(|b| (-(sg.lambda(b) - lambda1) * t).exp() * eta_at_x[b] * c[b])
            .sum()
    };

    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        // node-doubling drives the interval count: the integrand has
        // boundary layers of width ~1/gap at both ends of [0, t], so large
        // horizons need proportionally more intervals. The stop is a factor
        // five inside the 1e-4 contract because pre-asymptotic doubling
        // drifts understate the remaining error.
        let mut intervals = s_intervals;
        let mut coarse = simpson(t, intervals);
        let fine = loop {
            let fine = simpson(t, 2 * intervals);
            let drift = (fine - coarse).abs() / fine.abs().max(1e-300);
            if drift <= 2e-5 {
                break fine;
            }
            if intervals >= 16384 {
                if drift > 1e-4 {
                    return Err(AnalyzeError::SResolution(drift));
                }
                break fine;
            }
            intervals *= 2;
            coarse = fine;
        };
        let surv = ones_scaled(t);
        if !(surv > 0.0) {
            return Err(AnalyzeError::NoSurvivors(t));
        }
        let estimate = fine / (t * surv);
        rows.push(QuasiErgodicRow {
            t,
            estimate,
            beta_g: beta_g,
            error: (estimate - beta_g).abs(),
        });
    }
    Ok(rows)
}

/// Bin edges with (approximately) equal `alpha`-mass per bin, from the
/// interpolated cumulative of the grid weights. Equalizing the mass
/// equalizes the per-bin Monte Carlo variance.
pub fn equal_mass_bin_edges(spec: &SpectralData, n_bins: usize) -> Vec<f64> {
    assert!(n_bins >= 1);
    let xs = spec.grid().points();
    let alpha = spec.alpha();
    let n = xs.len();
    let mut edges = Vec::with_capacity(n_bins + 1);
    edges.push(spec.grid().eps());
    let mut cum = 0.0;
    let mut node = 0usize;
    for b in 1..n_bins {
        let target = b as f64 / n_bins as f64;
        while node < n && cum + alpha[node] < target {
            cum += alpha[node];
            node += 1;
        }
        if node >= n {
            break;
        }
        // linear interpolation inside the node cell
        let frac = ((target - cum) / alpha[node]).clamp(0.0, 1.0);
        let left = if node == 0 { spec.grid().eps() } else { xs[node - 1] };
        edges.push(left + frac * (xs[node] - left));
    }
    edges.push(spec.grid().right_truncation());
    edges.dedup_by(|a, b| *a <= *b);
    edges
}

/// Sum of node masses per bin for a law supported on the grid.
pub fn binned_law(law: &[f64], grid: &Grid, edges: &[f64]) -> Vec<f64> {
    let nb = edges.len() - 1;
    let mut out = vec![0.0; nb];
    for (x, w) in grid.points().iter().zip(law.iter()) {
        let b = match edges.partition_point(|e| e <= x) {
            0 => 0,
            p if p > nb => nb - 1,
            p => p - 1,
        };
        out[b] += w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::logistic_feller_model;
    use crate::spectral::{
        build_grid, build_spectral_data, discretize_generator, GridSpacing,
    };
    use proptest::prelude::*;
    use std::sync::Arc;

    fn setup(n: usize) -> (Semigroup, SpectralData) {
        let lf = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
        let g = Arc::new(build_grid(&lf, 1e-3, 6.0, n, GridSpacing::Log).unwrap());
        let gen = discretize_generator(&lf, &g).unwrap();
        let spec = build_spectral_data(&lf, &gen, 4).unwrap();
        let sg = Semigroup::for_horizon(&gen, 0.5, 1e-12).unwrap();
        (sg, spec)
    }

    #[test]
    fn tv_distance_basics() {
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(tv_distance(&[0.7, 0.2], &[0.5, 0.5]).is_err());
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn psi_distance_basics() {
        let p = [0.5, 0.5];
        let q = [1.0, 0.0];
        // psi = 1 doubles the half-L1 value
        let d1 = psi_distance(&p, &q, &[1.0, 1.0]).unwrap();
        assert!((d1 - 2.0 * tv_distance(&p, &q).unwrap()).abs() < 1e-15);
        assert_eq!(psi_distance(&p, &p, &[3.0, 7.0]).unwrap(), 0.0);
        // point masses at two nodes: psi(a) + psi(b)
        let d2 = psi_distance(&[1.0, 0.0], &[0.0, 1.0], &[3.0, 7.0]).unwrap();
        assert!((d2 - 10.0).abs() < 1e-15);
    }

    #[test]
    fn reweight_identity_and_eta1_link() {
        let (_, spec) = setup(400);
        let n = spec.grid().len();
        // g = 1 leaves the law untouched
        let ones = vec![1.0; n];
        let same = reweight(&ones, spec.alpha()).unwrap();
        for (a, b) in same.iter().zip(spec.alpha()) {
            assert!((a - b).abs() < 1e-15);
        }
        // eta1 o alpha = beta on the grid
        let beta = reweight(spec.eta1(), spec.alpha()).unwrap();
        for (a, b) in beta.iter().zip(spec.beta()) {
            assert!((a - b).abs() < 1e-12 * b.max(1e-30));
        }
        // indicator reweight picks out the bin
        let mut ind = vec![0.0; n];
        ind[5] = 1.0;
        ind[6] = 1.0;
        let picked = reweight(&ind, spec.alpha()).unwrap();
        let mass: f64 = picked.iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(picked[4] == 0.0 && picked[5] > 0.0);
        // zero overlap errors out
        let zero = vec![0.0; n];
        assert!(reweight(&zero, spec.alpha()).is_err());
    }

    #[test]
    fn conditional_evolution_fixed_point_and_attraction() {
        let (sg, spec) = setup(500);
        let n = spec.grid().len();
        let times = [0.0, 0.5, 1.0, 2.0, 4.0];
        // alpha is the fixed point
        let evo = conditional_evolution_exact(&sg, &spec, spec.alpha(), &times).unwrap();
        for law in evo.laws.iter() {
            assert!(tv_distance(law, spec.alpha()).unwrap() < 1e-8);
        }
        // a generic start is attracted to alpha
        let mut mu = vec![0.0; n];
        let j = spec.grid().nearest_node(2.5);
        mu[j] = 1.0;
        let late = [10.0, 12.0];
        let evo2 = conditional_evolution_exact(&sg, &spec, &mu, &late).unwrap();
        for law in evo2.laws.iter() {
            assert!(tv_distance(law, spec.alpha()).unwrap() < 1e-6);
        }
        // t = 0 returns the initial law
        let evo3 = conditional_evolution_exact(&sg, &spec, &mu, &[0.0]).unwrap();
        assert!(tv_distance(&evo3.laws[0], &mu).unwrap() < 1e-15);
    }

    #[test]
    fn fit_rate_recovers_exact_exponential() {
        let times: Vec<f64> = (0..40).map(|i| 0.25 * i as f64).collect();
        let dists: Vec<f64> = times.iter().map(|t| 2.0 * (-3.0 * t).exp()).collect();
        let rep = fit_rate(&times, &dists, 1e-14).unwrap();
        assert!((rep.fitted_c - 2.0).abs() < 1e-10);
        assert!((rep.fitted_gamma - 3.0).abs() < 1e-10);
        assert!(rep.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn fit_rate_needs_five_points() {
        let times = [0.0, 1.0, 2.0];
        let d = [1.0, 0.1, 0.01];
        assert!(matches!(
            fit_rate(&times, &d, 1e-14),
            Err(AnalyzeError::InsufficientDecay(_))
        ));
    }

    #[test]
    fn exact_decay_rate_matches_spectral_gap() {
        let (sg, spec) = setup(500);
        let n = spec.grid().len();
        let mut mu = vec![0.0; n];
        mu[spec.grid().nearest_node(1.0)] = 1.0;
        let times: Vec<f64> = (1..=24).map(|i| 0.35 * i as f64).collect();
        let evo = conditional_evolution_exact(&sg, &spec, &mu, &times).unwrap();
        let dists: Vec<f64> = evo
            .laws
            .iter()
            .map(|law| tv_distance(law, spec.alpha()).unwrap())
            .collect();
        let rep = fit_rate(&times, &dists, 1e-14).unwrap();
        let gap = spec.gap();
        assert!(
            (rep.fitted_gamma - gap).abs() < 0.05 * gap,
            "fitted {} vs gap {}",
            rep.fitted_gamma,
            gap
        );
    }

    #[test]
    fn survival_scaled_converges_to_eta1_m_eta1() {
        let (sg, spec) = setup(500);
        let ix = spec.grid().nearest_node(1.5);
        // the next-mode correction is e^{-gap t} times an order-0.4
        // coefficient; 14 gap-times push it below the 1e-6 contract
        let t_late = 14.0 / spec.gap();
        let rows = survival_asymptotics(&sg, &spec, &[ix], &[t_late]);
        let r = &rows[0];
        assert!(
            (r.scaled_survival - r.limit).abs() < 1e-6 * r.limit,
            "scaled {} vs limit {}",
            r.scaled_survival,
            r.limit
        );
        // residual decays at the spectral gap rate
        let times: Vec<f64> = (1..=16).map(|i| 0.5 * i as f64).collect();
        let rows = survival_asymptotics(&sg, &spec, &[ix], &times);
        let resid: Vec<f64> = rows
            .iter()
            .map(|r| (r.scaled_survival - r.limit).abs())
            .collect();
        let rep = fit_rate(&times, &resid, 1e-14).unwrap();
        assert!(
            (rep.fitted_gamma - spec.gap()).abs() < 0.05 * spec.gap(),
            "residual rate {} vs gap {}",
            rep.fitted_gamma,
            spec.gap()
        );
    }

    #[test]
    fn borel_restricted_survival_has_eta1_alpha_limit() {
        let (sg, spec) = setup(500);
        let n = spec.grid().len();
        let set: Vec<usize> = (n / 3..2 * n / 3).collect();
        let ix = spec.grid().nearest_node(1.5);
        let t = 18.0 / spec.gap();
        let (scaled, limit) = borel_survival_scaled(&sg, &spec, &set, ix, t);
        assert!(
            (scaled - limit).abs() < 1e-6 * limit,
            "scaled {scaled} vs limit {limit}"
        );
    }

    #[test]
    fn psi_bound_holds_from_restricted_alpha() {
        let (sg, spec) = setup(500);
        let n = spec.grid().len();
        // alpha restricted to the upper half of the grid
        let mut mu = vec![0.0; n];
        for i in n / 2..n {
            mu[i] = spec.alpha()[i];
        }
        let total: f64 = mu.iter().sum();
        for v in mu.iter_mut() {
            *v /= total;
        }
        let times: Vec<f64> = (1..=20).map(|i| 0.4 * i as f64).collect();
        for psi_fn in [
            (|_x: f64| 1.0) as fn(f64) -> f64,
            (|x: f64| 1.0 + x) as fn(f64) -> f64,
        ] {
            let psi = PsiSpec::new(&spec, psi_fn, 0.5).unwrap();
            let rep = psi_bound_check(&sg, &spec, &psi, &mu, &times).unwrap();
            assert!(!rep.gamma_halved, "bound needed the half-rate fallback");
            assert!(rep.t_mu.is_some(), "bound never took hold");
            assert!(rep.divergence.is_finite() && rep.divergence > 0.0);
        }
    }

    #[test]
    fn psi_bound_from_alpha_itself_is_tiny() {
        let (sg, spec) = setup(500);
        let psi = PsiSpec::new(&spec, |x| 1.0 + x, 0.5).unwrap();
        let times = [0.5, 1.0, 2.0, 4.0, 8.0];
        let rep = psi_bound_check(&sg, &spec, &psi, spec.alpha(), &times).unwrap();
        assert!(rep.divergence < 1e-10);
        for l in rep.lhs.iter() {
            assert!(*l < 1e-8, "lhs {l}");
        }
    }

    #[test]
    fn quasi_ergodic_constant_g_has_zero_error() {
        let lf = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
        let g = Arc::new(build_grid(&lf, 1e-3, 6.0, 300, GridSpacing::Log).unwrap());
        let gen = discretize_generator(&lf, &g).unwrap();
        let spec = build_spectral_data(&lf, &gen, 2).unwrap();
        let sg = Semigroup::with_modes(&gen, gen.n()).unwrap();
        let ones = vec![1.0; gen.n()];
        let ix = spec.grid().nearest_node(1.0);
        let rows = quasi_ergodic_error(&sg, &spec, &ones, ix, &[1.0, 3.0], 64).unwrap();
        for r in rows {
            assert!(r.error < 1e-10, "t = {}: error {}", r.t, r.error);
        }
    }

    #[test]
    fn quasi_ergodic_simpson_matches_analytic_mode_sum() {
        // each (a, b) mode pair integrates in closed form over s; the
        // Simpson route must agree to quadrature accuracy
        let lf = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
        let g = Arc::new(build_grid(&lf, 1e-3, 6.0, 300, GridSpacing::Log).unwrap());
        let gen = discretize_generator(&lf, &g).unwrap();
        let spec = build_spectral_data(&lf, &gen, 2).unwrap();
        let sg = Semigroup::with_modes(&gen, gen.n()).unwrap();
        let n = gen.n();
        let k = sg.modes();
        let obs: Vec<f64> = g
            .points()
            .iter()
            .map(|x| if *x >= 1.2 { 1.0 } else { -1.0 })
            .collect();
        let ix = g.nearest_node(1.0);
        let times = [2.0, 10.0];
        let rows = quasi_ergodic_error(&sg, &spec, &obs, ix, &times, 64).unwrap();

        let ones = vec![1.0; n];
        let c = sg.coefficients(&ones);
        let w = sg.weights();
        let l1 = spec.lambda1();
        for (row, &t) in rows.iter().zip(times.iter()) {
            // numerator = sum_ab eta_a(x) <eta_a, obs eta_b>_w c_b I_ab(t)
            let mut numerator = 0.0;
            for a in 0..k {
                let la = sg.lambda(a) - l1;
                for b in 0..k {
                    let lb = sg.lambda(b) - l1;
                    let gram: f64 = (0..n)
                        .map(|i| sg.eta(a)[i] * obs[i] * sg.eta(b)[i] * w[i])
                        .sum();
                    let integral = if (la - lb).abs() < 1e-12 {
                        t * (-la * t).exp()
                    } else {
                        ((-lb * t).exp() - (-la * t).exp()) / (la - lb)
                    };
                    numerator += sg.eta(a)[ix] * gram * c[b] * integral;
                }
            }
            let surv: f64 = (0..k)
                .map(|b| (-(sg.lambda(b) - l1) * t).exp() * sg.eta(b)[ix] * c[b])
                .sum();
            let analytic = numerator / (t * surv);
            // the Simpson route stops once the doubling drift is inside
            // 2e-5, so a few times that is the honest agreement bar
            assert!(
                (row.estimate - analytic).abs() < 1e-4 * analytic.abs().max(1e-3),
                "t = {t}: simpson {} vs analytic {analytic}",
                row.estimate
            );
        }
    }

    #[test]
    fn equal_mass_bins_carry_equal_alpha() {
        let (_, spec) = setup(500);
        let edges = equal_mass_bin_edges(&spec, 40);
        assert_eq!(edges.len(), 41);
        let binned = binned_law(spec.alpha(), spec.grid(), &edges);
        let total: f64 = binned.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // node masses quantize the bins: the peak node carries ~0.017 at
        // this resolution, so each bin can be off by up to one node
        for b in binned.iter() {
            assert!((b - 0.025).abs() < 0.02, "bin mass {b}");
        }
    }

    proptest! {
        #[test]
        fn tv_is_a_bounded_metric(raw_p in proptest::collection::vec(0.01f64..1.0, 6),
                                  raw_q in proptest::collection::vec(0.01f64..1.0, 6)) {
            let sp: f64 = raw_p.iter().sum();
            let sq: f64 = raw_q.iter().sum();
            let p: Vec<f64> = raw_p.iter().map(|v| v / sp).collect();
            let q: Vec<f64> = raw_q.iter().map(|v| v / sq).collect();
            let d = tv_distance(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((tv_distance(&q, &p).unwrap() - d).abs() < 1e-15);
            prop_assert!(tv_distance(&p, &p).unwrap() == 0.0);
        }

        #[test]
        fn psi_dominates_twice_tv(raw_p in proptest::collection::vec(0.01f64..1.0, 6),
                                  raw_q in proptest::collection::vec(0.01f64..1.0, 6),
                                  raw_psi in proptest::collection::vec(1.0f64..50.0, 6)) {
            let sp: f64 = raw_p.iter().sum();
            let sq: f64 = raw_q.iter().sum();
            let p: Vec<f64> = raw_p.iter().map(|v| v / sp).collect();
            let q: Vec<f64> = raw_q.iter().map(|v| v / sq).collect();
            let dpsi = psi_distance(&p, &q, &raw_psi).unwrap();
            let dtv = tv_distance(&p, &q).unwrap();
            prop_assert!(dpsi >= 2.0 * dtv - 1e-12);
        }

        #[test]
        fn reweight_by_one_is_identity(raw in proptest::collection::vec(0.01f64..1.0, 8)) {
            let s: f64 = raw.iter().sum();
            let mu: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let g = vec![1.0; 8];
            let out = reweight(&g, &mu).unwrap();
            for (a, b) in out.iter().zip(mu.iter()) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
