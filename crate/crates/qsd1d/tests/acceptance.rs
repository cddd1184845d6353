//! Acceptance suite: one test per exit criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`) and asserting the stated
//! tolerance. The logistic Feller model (sigma = r = k = 1) on the
//! canonical log grid (eps = 1e-3, R = 6) is the positive case throughout;
//! zero drift is the negative control.

use std::sync::{Arc, LazyLock};
use std::time::Instant;

use qsd1d::analyze::{
    conditional_evolution_exact, fit_rate, psi_bound_check, quasi_ergodic_error, tv_distance,
    PsiSpec,
};
use qsd1d::boundary::{classify_boundary, BoundaryClass, IntegralTarget};
use qsd1d::model::{logistic_feller_model, polynomial_drift_model, DiffusionModel};
use qsd1d::pipeline::binned_tv_exact_vs_empirical;
use qsd1d::semigroup::{verify_intertwining, Semigroup};
use qsd1d::simulate::{simulate_killed, simulate_qprocess, InitialLaw, SimConfig};
use qsd1d::spectral::{
    alpha_stationarity_residual, build_grid, build_spectral_data, discretize_generator,
    h_transform_generator, orthonormality_residual, spectrum_shift_residual,
    verify_reversibility, GeneratorMatrix, Grid, GridSpacing, SpectralData,
};

struct Ctx {
    model: DiffusionModel,
    grid: Arc<Grid>,
    gen: GeneratorMatrix,
    gen_tilde: GeneratorMatrix,
    spec: SpectralData,
    sg: Semigroup,
}

/// Shared 2000-node spectral context for the criteria that need it.
static CTX: LazyLock<Ctx> = LazyLock::new(|| {
    let model = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let grid = Arc::new(build_grid(&model, 1e-3, 6.0, 2000, GridSpacing::Log).unwrap());
    let gen = discretize_generator(&model, &grid).unwrap();
    let spec = build_spectral_data(&model, &gen, 4).unwrap();
    let gen_tilde = h_transform_generator(&gen, &spec).unwrap();
    let sg = Semigroup::for_horizon(&gen, 0.5, 1e-12).unwrap();
    Ctx {
        model,
        grid,
        gen,
        gen_tilde,
        spec,
        sg,
    }
});

fn delta_at(grid: &Grid, x: f64) -> Vec<f64> {
    let mut v = vec![0.0; grid.len()];
    v[grid.nearest_node(x)] = 1.0;
    v
}

#[test]
fn acceptance_1_boundary_classification() {
    let start = Instant::now();
    let model = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let zero = classify_boundary(&model, IntegralTarget::Zero, 1.0).unwrap();
    let inf = classify_boundary(&model, IntegralTarget::Infinity, 1.0).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = zero.classification == BoundaryClass::Exit
        && inf.classification == BoundaryClass::Entrance
        && elapsed < 5.0;
    println!(
        "ACCEPTANCE 1 {}: 0 -> {}, inf -> {} ({elapsed:.2} s < 5 s)",
        if pass { "PASS" } else { "FAIL" },
        zero.classification,
        inf.classification
    );
    assert_eq!(zero.classification, BoundaryClass::Exit);
    assert_eq!(inf.classification, BoundaryClass::Entrance);
    assert!(elapsed < 5.0, "took {elapsed:.2} s");
}

#[test]
fn acceptance_2_spectral_identities() {
    let start = Instant::now();
    let model = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let grid = Arc::new(build_grid(&model, 1e-3, 6.0, 2000, GridSpacing::Log).unwrap());
    let gen = discretize_generator(&model, &grid).unwrap();
    let spec = build_spectral_data(&model, &gen, 4).unwrap();
    let gen_tilde = h_transform_generator(&gen, &spec).unwrap();

    // (a) m-orthonormality of the first four eigenfunctions
    let ortho = orthonormality_residual(&gen, &spec, 4);

    // (b) spectrum of -L~ equals spectrum of -L shifted by lambda1
    let shift = spectrum_shift_residual(&gen_tilde, &spec, 3).unwrap();

    // (c) intertwining at t in {0.5, 1, 2} for g = 1 and g = eta2/eta1
    let ones = vec![1.0; grid.len()];
    let ratio: Vec<f64> = spec
        .eta(2)
        .iter()
        .zip(spec.eta1())
        .map(|(a, b)| a / b)
        .collect();
    let ratio_scale = ratio.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut intertwine: f64 = 0.0;
    for t in [0.5, 1.0, 2.0] {
        let r1 = verify_intertwining(&gen, &gen_tilde, &spec, t, &ones).unwrap();
        let r2 = verify_intertwining(&gen, &gen_tilde, &spec, t, &ratio).unwrap() / ratio_scale;
        intertwine = intertwine.max(r1).max(r2);
    }

    // (d) reversibility of beta under the conditioned generator
    let (rev_asym, rev_scale) = verify_reversibility(&gen_tilde);

    // (e) discrete left-eigenvector identity of alpha
    let alpha_res = alpha_stationarity_residual(&gen, &spec);

    let elapsed = start.elapsed().as_secs_f64();
    let pass = ortho < 1e-10
        && shift < 1e-10
        && intertwine < 1e-8
        && rev_asym < 1e-10 * rev_scale
        && alpha_res < 1e-8
        && elapsed < 30.0;
    println!(
        "ACCEPTANCE 2 {}: ortho {ortho:.2e} | shift {shift:.2e} | intertwine {intertwine:.2e} | \
         reversibility {:.2e} of scale | alpha residual {alpha_res:.2e} ({elapsed:.1} s < 30 s)",
        if pass { "PASS" } else { "FAIL" },
        rev_asym / rev_scale,
    );
    assert!(ortho < 1e-10, "(a) orthonormality {ortho:.3e}");
    assert!(shift < 1e-10, "(b) spectrum shift {shift:.3e}");
    assert!(intertwine < 1e-8, "(c) intertwining {intertwine:.3e}");
    assert!(
        rev_asym < 1e-10 * rev_scale,
        "(d) reversibility {rev_asym:.3e} vs scale {rev_scale:.3e}"
    );
    assert!(alpha_res < 1e-8, "(e) alpha stationarity {alpha_res:.3e}");
    assert!(elapsed < 30.0, "took {elapsed:.1} s");
}

#[test]
fn acceptance_3_decay_rates_and_negative_control() {
    let start = Instant::now();
    let ctx = &*CTX;
    let times: Vec<f64> = (1..=20).map(|i| 0.4 * i as f64).collect();
    let gap = ctx.spec.gap();

    // five distinct initial distributions
    let mut initials: Vec<(String, Vec<f64>)> = vec![
        ("delta_0.5".into(), delta_at(&ctx.grid, 0.5)),
        ("delta_1".into(), delta_at(&ctx.grid, 1.0)),
        ("delta_2".into(), delta_at(&ctx.grid, 2.0)),
    ];
    let mut uniform = vec![0.0; ctx.grid.len()];
    for (i, x) in ctx.grid.points().iter().enumerate() {
        if (0.5..=3.0).contains(x) {
            uniform[i] = ctx.grid.cell_width(i);
        }
    }
    let us: f64 = uniform.iter().sum();
    uniform.iter_mut().for_each(|v| *v /= us);
    initials.push(("uniform_0.5_3".into(), uniform));
    let mut upper = vec![0.0; ctx.grid.len()];
    let half = ctx.grid.len() / 2;
    upper[half..].copy_from_slice(&ctx.spec.alpha()[half..]);
    let s: f64 = upper.iter().sum();
    upper.iter_mut().for_each(|v| *v /= s);
    initials.push(("alpha_upper_half".into(), upper));

    let mut worst_rel = 0.0f64;
    let mut max_c = 0.0f64;
    for (name, mu0) in initials.iter() {
        let evo = conditional_evolution_exact(&ctx.sg, &ctx.spec, mu0, &times).unwrap();
        let dists: Vec<f64> = evo
            .laws
            .iter()
            .map(|l| tv_distance(l, ctx.spec.alpha()).unwrap())
            .collect();
        let rep = fit_rate(&times, &dists, 1e-14).unwrap();
        let rel = (rep.fitted_gamma - gap).abs() / gap;
        worst_rel = worst_rel.max(rel);
        max_c = max_c.max(rep.fitted_c);
        assert!(
            rel < 0.05,
            "{name}: fitted gamma {} vs gap {gap} ({:.1}%)",
            rep.fitted_gamma,
            rel * 100.0
        );
    }
    assert!(max_c < 100.0, "fitted C grew unbounded: {max_c}");

    // negative control: zero drift has a natural boundary at infinity, so
    // the truncated gap collapses as the box grows
    let bm = polynomial_drift_model(&[]);
    let mut gaps = Vec::new();
    for r in [20.0, 80.0] {
        let g = Arc::new(build_grid(&bm, 1e-3, r, 2000, GridSpacing::Uniform).unwrap());
        let gen = discretize_generator(&bm, &g).unwrap();
        let spec = build_spectral_data(&bm, &gen, 2).unwrap();
        gaps.push(spec.gap());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let control_ok = gaps[1] < 0.5 * gaps[0];
    let pass = worst_rel < 0.05 && max_c < 100.0 && control_ok && elapsed < 120.0;
    println!(
        "ACCEPTANCE 3 {}: worst rate error {:.2}% | max C {max_c:.2} | control gap {:.4} -> {:.4} \
         ({elapsed:.1} s < 120 s)",
        if pass { "PASS" } else { "FAIL" },
        worst_rel * 100.0,
        gaps[0],
        gaps[1]
    );
    assert!(
        control_ok,
        "negative control: gap(R=80) = {} not below half of gap(R=20) = {}",
        gaps[1], gaps[0]
    );
    assert!(elapsed < 120.0, "took {elapsed:.1} s");
}

#[test]
fn acceptance_4_monte_carlo_consistency() {
    let start = Instant::now();
    let ctx = &*CTX;
    let x0 = ctx.grid.points()[ctx.grid.nearest_node(1.0)];
    let paths = 100_000;

    let cfg = SimConfig::new(1e-3, 3.0, paths, 31_337).with_record_times(vec![1.0, 3.0]);
    let ens = simulate_killed(&ctx.model, &InitialLaw::Point(x0), None, &cfg).unwrap();
    assert!(ens.iter().all(|e| e.overflow_kills == 0));

    // empirical conditional laws vs the exact semigroup at t in {1, 3}
    let mu0 = delta_at(&ctx.grid, x0);
    let evo = conditional_evolution_exact(&ctx.sg, &ctx.spec, &mu0, &[1.0, 3.0]).unwrap();
    let tv1 =
        binned_tv_exact_vs_empirical(&ctx.spec, &evo.laws[0], &ens[0].alive_positions(), 40)
            .unwrap();
    let tv3 =
        binned_tv_exact_vs_empirical(&ctx.spec, &evo.laws[1], &ens[1].alive_positions(), 40)
            .unwrap();

    // decay-rate read on the survival fraction at t = 5, started from the
    // quasi-stationary law: survival is then purely exponential, with no
    // eta1(x) prefactor polluting the finite-t rate estimate
    let scfg = SimConfig::new(1e-3, 5.0, paths, 90_210).with_record_times(vec![5.0]);
    let sens = simulate_killed(
        &ctx.model,
        &InitialLaw::GridMeasure(ctx.spec.alpha().to_vec()),
        Some(&ctx.grid),
        &scfg,
    )
    .unwrap();
    let lambda_hat = -sens[0].survival_fraction().ln() / 5.0;
    let lambda_rel = (lambda_hat - ctx.spec.lambda1()).abs() / ctx.spec.lambda1();

    // conditioned process long-run histogram vs beta
    let t_q = 10.0 / ctx.spec.gap();
    let qcfg = SimConfig::new(1e-3, t_q, paths, 7_001).with_record_times(vec![t_q]);
    let qens = simulate_qprocess(&ctx.spec, &InitialLaw::Point(x0), &qcfg).unwrap();
    let tv_beta =
        binned_tv_exact_vs_empirical(&ctx.spec, ctx.spec.beta(), &qens[0].alive_positions(), 40)
            .unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    let pass =
        tv1 < 0.03 && tv3 < 0.03 && lambda_rel < 0.10 && tv_beta < 0.05 && elapsed < 600.0;
    println!(
        "ACCEPTANCE 4 {}: TV(t=1) {tv1:.4} | TV(t=3) {tv3:.4} | lambda1 rel err {:.2}% | \
         TV(beta) {tv_beta:.4} ({elapsed:.0} s < 600 s)",
        if pass { "PASS" } else { "FAIL" },
        lambda_rel * 100.0
    );
    assert!(tv1 < 0.03, "TV at t=1: {tv1:.4}");
    assert!(tv3 < 0.03, "TV at t=3: {tv3:.4}");
    assert!(
        lambda_rel < 0.10,
        "-log(survival)/t = {lambda_hat:.4} vs lambda1 = {:.4}",
        ctx.spec.lambda1()
    );
    assert!(tv_beta < 0.05, "Q-process TV to beta: {tv_beta:.4}");
    assert!(elapsed < 600.0, "took {elapsed:.0} s");
}

#[test]
fn acceptance_5_weighted_norm_bound() {
    let start = Instant::now();
    let ctx = &*CTX;
    let times: Vec<f64> = (1..=20).map(|i| 0.4 * i as f64).collect();

    // alpha restricted to the upper half-grid
    let n = ctx.grid.len();
    let mut mu = vec![0.0; n];
    mu[n / 2..].copy_from_slice(&ctx.spec.alpha()[n / 2..]);
    let s: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|v| *v /= s);

    let mut t_mus = Vec::new();
    for (label, psi_fn) in [
        ("psi=1", (|_: f64| 1.0) as fn(f64) -> f64),
        ("psi=1+x", (|x: f64| 1.0 + x) as fn(f64) -> f64),
    ] {
        let psi = PsiSpec::new(&ctx.spec, psi_fn, 0.5).unwrap();
        let rep = psi_bound_check(&ctx.sg, &ctx.spec, &psi, &mu, &times).unwrap();
        assert!(
            !rep.gamma_halved,
            "{label}: bound only holds at the half rate"
        );
        let t_mu = rep.t_mu.unwrap_or_else(|| panic!("{label}: bound never took hold"));
        t_mus.push((label, t_mu));
    }

    // from alpha itself the conditional law never moves
    let psi = PsiSpec::new(&ctx.spec, |x| 1.0 + x, 0.5).unwrap();
    let rep_alpha = psi_bound_check(&ctx.sg, &ctx.spec, &psi, ctx.spec.alpha(), &times).unwrap();
    let max_lhs = rep_alpha.lhs.iter().fold(0.0f64, |a, b| a.max(*b));

    let elapsed = start.elapsed().as_secs_f64();
    let pass = max_lhs < 1e-8 && elapsed < 120.0;
    println!(
        "ACCEPTANCE 5 {}: t_mu {} = {:.2}, {} = {:.2} | lhs from alpha {max_lhs:.2e} \
         ({elapsed:.1} s < 120 s)",
        if pass { "PASS" } else { "FAIL" },
        t_mus[0].0,
        t_mus[0].1,
        t_mus[1].0,
        t_mus[1].1
    );
    assert!(max_lhs < 1e-8, "lhs from alpha reached {max_lhs:.3e}");
    assert!(elapsed < 120.0, "took {elapsed:.1} s");
}

#[test]
fn acceptance_6_quasi_ergodic_one_over_t() {
    let start = Instant::now();
    let model = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let grid = Arc::new(build_grid(&model, 1e-3, 6.0, 800, GridSpacing::Log).unwrap());
    let gen = discretize_generator(&model, &grid).unwrap();
    let spec = build_spectral_data(&model, &gen, 4).unwrap();
    let sg = Semigroup::with_modes(&gen, gen.n()).unwrap();

    // g = sign(x - beta-median)
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
    let x_index = grid.nearest_node(1.0);
    let times: Vec<f64> = (0..12).map(|i| 50f64.powf(i as f64 / 11.0)).collect();
    let rows = quasi_ergodic_error(&sg, &spec, &g, x_index, &times, 64).unwrap();

    // log-log slope over the final decade (t in [5, 50])
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

    // t * error approaches a positive constant
    let t_err: Vec<f64> = rows
        .iter()
        .filter(|r| r.t >= 5.0)
        .map(|r| r.t * r.error)
        .collect();
    let last = t_err[t_err.len() - 3..].to_vec();
    let spread = (last.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - last.iter().cloned().fold(f64::INFINITY, f64::min))
        / last[2].abs();

    let elapsed = start.elapsed().as_secs_f64();
    let pass = (-1.15..=-0.85).contains(&slope)
        && last.iter().all(|v| *v > 0.0)
        && spread < 0.2
        && elapsed < 300.0;
    println!(
        "ACCEPTANCE 6 {}: slope {slope:.3} in [-1.15, -0.85] | t*error -> {:.4} (spread {:.1}%) \
         ({elapsed:.1} s < 300 s)",
        if pass { "PASS" } else { "FAIL" },
        last[2],
        spread * 100.0
    );
    assert!(
        (-1.15..=-0.85).contains(&slope),
        "log-log slope {slope:.3} outside [-1.15, -0.85]"
    );
    assert!(
        last.iter().all(|v| *v > 0.0) && spread < 0.2,
        "t*error not settling to a positive constant: {last:?}"
    );
    assert!(elapsed < 300.0, "took {elapsed:.1} s");
}

#[test]
fn acceptance_7_grid_convergence() {
    let start = Instant::now();
    let model = logistic_feller_model(1.0, 1.0, 1.0).unwrap();
    let lambda1_at = |n: usize, r: f64| -> f64 {
        let g = Arc::new(build_grid(&model, 1e-3, r, n, GridSpacing::Log).unwrap());
        let gen = discretize_generator(&model, &g).unwrap();
        build_spectral_data(&model, &gen, 2).unwrap().lambda1()
    };
    let l: Vec<f64> = [500usize, 1000, 2000, 4000]
        .iter()
        .map(|n| lambda1_at(*n, 6.0))
        .collect();
    let d1 = (l[0] - l[1]).abs();
    let d2 = (l[1] - l[2]).abs();
    let d3 = (l[2] - l[3]).abs();
    let order_a = (d1 / d2).log2();
    let order_b = (d2 / d3).log2();

    let l_r9 = lambda1_at(2000, 9.0);
    let r_shift = (l_r9 - l[2]).abs() / l[2];

    let elapsed = start.elapsed().as_secs_f64();
    let pass = order_a >= 1.8 && order_b >= 1.8 && r_shift < 1e-3;
    println!(
        "ACCEPTANCE 7 {}: orders {order_a:.2}, {order_b:.2} >= 1.8 | lambda1 shift for R 6->9: \
         {:.2e} < 1e-3 ({elapsed:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        r_shift
    );
    assert!(
        order_a >= 1.8 && order_b >= 1.8,
        "convergence orders {order_a:.2}, {order_b:.2} (lambdas {l:?})"
    );
    assert!(
        r_shift < 1e-3,
        "lambda1 moved {r_shift:.3e} when R grew by 50%"
    );
}
