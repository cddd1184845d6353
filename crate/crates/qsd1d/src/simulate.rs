//! Euler-Maruyama Monte Carlo for the killed diffusion and for the
//! conditioned (Q-) process.
//!
//! Each path owns one ChaCha12 stream (`set_stream(path index)`), so an
//! ensemble is bit-reproducible for a fixed `(seed, n_paths, dt)` no matter
//! how the work is sharded across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::DiffusionModel;
use crate::numerics::interp::LinearTable;
use crate::spectral::{Grid, SpectralData};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("initial distribution invalid: {0}")]
    Initial(String),
}

/// Step size, horizon, ensemble size, and snapshot times.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub record_times: Vec<f64>,
    pub left_kill_level: f64,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            dt,
            t_end,
            n_paths,
            seed,
            record_times: vec![t_end],
            left_kill_level: 0.0,
        }
    }

    pub fn with_record_times(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt < self.t_end) {
            return Err(SimError::Config(format!(
                "need 0 < dt < T, got dt = {}, T = {}",
                self.dt, self.t_end
            )));
        }
        if self.n_paths == 0 {
            return Err(SimError::Config("n_paths must be >= 1".into()));
        }
        if self
            .record_times
            .windows(2)
            .any(|w| w[0] > w[1])
        {
            return Err(SimError::Config("record_times must be sorted".into()));
        }
        if self
            .record_times
            .iter()
            .any(|t| *t < 0.0 || *t > self.t_end + 1e-12)
        {
            return Err(SimError::Config(
                "record_times must lie in [0, T]".into(),
            ));
        }
        Ok(())
    }
}

/// Initial law of the ensemble.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    /// All paths start at one point.
    Point(f64),
    /// Weighted mixture of grid nodes (weights need not be normalized).
    GridMeasure(Vec<f64>),
    /// Uniform on (a, b).
    Uniform(f64, f64),
}

/// Snapshot of all paths at one time: positions are valid only where
/// `alive` is set.
#[derive(Debug, Clone)]
pub struct EmpiricalEnsemble {
    pub time: f64,
    pub positions: Vec<f64>,
    pub alive: Vec<bool>,
    pub n_alive: usize,
    /// Paths killed because the drift overflowed (must stay 0 in sane runs).
    pub overflow_kills: usize,
}

impl EmpiricalEnsemble {
    pub fn survival_fraction(&self) -> f64 {
        self.n_alive as f64 / self.positions.len() as f64
    }

    /// Positions of the surviving paths.
    pub fn alive_positions(&self) -> Vec<f64> {
        self.positions
            .iter()
            .zip(self.alive.iter())
            .filter(|(_, a)| **a)
            .map(|(p, _)| *p)
            .collect()
    }
}

fn sample_initial(law: &InitialLaw, grid: Option<&Grid>, rng: &mut ChaCha12Rng) -> Result<f64, SimError> {
    match law {
        InitialLaw::Point(x) => {
            if *x <= 0.0 {
                return Err(SimError::Initial(format!("point mass at {x} <= 0")));
            }
            Ok(*x)
        }
        InitialLaw::Uniform(a, b) => {
            if !(*a > 0.0 && a < b) {
                return Err(SimError::Initial(format!("uniform({a}, {b}) invalid")));
            }
            let u = Uniform::new(*a, *b).map_err(|e| SimError::Initial(e.to_string()))?;
            Ok(u.sample(rng))
        }
        InitialLaw::GridMeasure(w) => {
            let grid =
                grid.ok_or_else(|| SimError::Initial("grid measure needs a grid".into()))?;
            if w.len() != grid.len() {
                return Err(SimError::Initial(format!(
                    "weight vector length {} != grid size {}",
                    w.len(),
                    grid.len()
                )));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(SimError::Initial("grid measure has no mass".into()));
            }
            let u: f64 = rand::Rng::random::<f64>(rng) * total;
            let mut acc = 0.0;
            for (x, wi) in grid.points().iter().zip(w.iter()) {
                acc += wi;
                if acc >= u {
                    return Ok(*x);
                }
            }
            Ok(*grid.points().last().expect("non-empty grid"))
        }
    }
}

/// Record-time step indices (nearest step, tolerating off-multiple times).
fn record_steps(cfg: &SimConfig) -> Vec<usize> {
    cfg.record_times
        .iter()
        .map(|t| (t / cfg.dt).round() as usize)
        .collect()
}

struct PathOutcome {
    snapshots: Vec<(f64, bool)>,
    overflowed: bool,
}

fn run_paths<D: Fn(f64) -> f64 + Sync>(
    drift: &D,
    initial: &InitialLaw,
    grid: Option<&Grid>,
    cfg: &SimConfig,
    kill: bool,
    reflect_at: Option<f64>,
) -> Result<Vec<EmpiricalEnsemble>, SimError> {
    cfg.validate()?;
    let steps = record_steps(cfg);
    let max_step = steps.iter().copied().max().unwrap_or(0);
    let sqrt_dt = cfg.dt.sqrt();

    let outcomes: Result<Vec<PathOutcome>, SimError> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(p as u64);
            let mut x = sample_initial(initial, grid, &mut rng)?;
            let mut alive = true;
            let mut overflowed = false;
            let mut snapshots = Vec::with_capacity(steps.len());
            for &s in steps.iter() {
                if s == 0 {
                    snapshots.push((x, alive));
                }
            }
            'stepping: for step in 1..=max_step {
                let q = drift(x);
                let noise: f64 = StandardNormal.sample(&mut rng);
                let next = x - q * cfg.dt + sqrt_dt * noise;
                if !next.is_finite() {
                    alive = false;
                    overflowed = true;
                } else {
                    x = next;
                    if let Some(eps) = reflect_at {
                        if x < eps {
                            x = 2.0 * eps - x;
                        }
                    }
                    if kill && x <= cfg.left_kill_level {
                        alive = false;
                    }
                }
                for &s in steps.iter() {
                    if s == step {
                        snapshots.push((x, alive));
                    }
                }
                if !alive {
                    // a killed path stays killed: fill the remaining
                    // snapshots and stop burning noise
                    for &s in steps.iter() {
                        if s > step {
                            snapshots.push((x, false));
                        }
                    }
                    break 'stepping;
                }
            }
            Ok(PathOutcome {
                snapshots,
                overflowed,
            })
        })
        .collect();
    let outcomes = outcomes?;

    let mut ensembles = Vec::with_capacity(steps.len());
    for (j, &t) in cfg.record_times.iter().enumerate() {
        let mut positions = Vec::with_capacity(cfg.n_paths);
        let mut alive = Vec::with_capacity(cfg.n_paths);
        let mut n_alive = 0usize;
        let mut overflow_kills = 0usize;
        for o in outcomes.iter() {
            let (x, a) = o.snapshots[j];
            positions.push(if a { x } else { f64::NAN });
            alive.push(a);
            if a {
                n_alive += 1;
            }
            if o.overflowed {
                overflow_kills += 1;
            }
        }
        // overflow count is per-ensemble-wide, not per snapshot; divide out
        let overflow_kills = overflow_kills.min(cfg.n_paths);
        ensembles.push(EmpiricalEnsemble {
            time: t,
            positions,
            alive,
            n_alive,
            overflow_kills,
        });
    }
    Ok(ensembles)
}

/// Simulate the killed diffusion `dX = dB - q(X) dt`, absorbing on the
/// first step that lands at or below `left_kill_level`.
pub fn simulate_killed(
    model: &DiffusionModel,
    initial: &InitialLaw,
    grid: Option<&Grid>,
    cfg: &SimConfig,
) -> Result<Vec<EmpiricalEnsemble>, SimError> {
    let m = model.clone();
    run_paths(&move |x| m.drift(x), initial, grid, cfg, true, None)
}

/// Simulate the conditioned process `dY = dB - q~(Y) dt` with the drift
/// tabulated on the spectral grid (linear interpolation, constant beyond
/// the edges). No killing; positions fold back above the left truncation
/// point, since the conditioned process never reaches 0.
pub fn simulate_qprocess(
    spec: &SpectralData,
    initial: &InitialLaw,
    cfg: &SimConfig,
) -> Result<Vec<EmpiricalEnsemble>, SimError> {
    let table = LinearTable::new(
        spec.grid().points().to_vec(),
        spec.q_tilde().to_vec(),
    );
    let eps = spec.grid().eps().max(f64::MIN_POSITIVE);
    run_paths(
        &move |x| table.eval(x),
        initial,
        Some(spec.grid()),
        cfg,
        false,
        Some(eps),
    )
}

/// Empirical conditional law given survival: histogram over `bins` edges
/// normalized by the number of alive paths.
pub fn conditional_distribution(
    ens: &EmpiricalEnsemble,
    bin_edges: &[f64],
) -> Result<Vec<f64>, SimError> {
    if ens.n_alive == 0 {
        return Err(SimError::Initial(
            "conditional law undefined: no surviving paths".into(),
        ));
    }
    assert!(bin_edges.len() >= 2, "need at least one bin");
    let nb = bin_edges.len() - 1;
    let mut counts = vec![0usize; nb];
    for (x, a) in ens.positions.iter().zip(ens.alive.iter()) {
        if !*a {
            continue;
        }
        let b = match bin_edges.partition_point(|e| e <= x) {
            0 => 0,
            p if p > nb => nb - 1,
            p => p - 1,
        };
        counts[b] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / ens.n_alive as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::polynomial_drift_model;

    fn bm_config(dt: f64, t: f64, paths: usize) -> SimConfig {
        SimConfig::new(dt, t, paths, 42).with_record_times(vec![t])
    }

    #[test]
    fn killed_brownian_survival_matches_reflection_principle() {
        // P(BM from 1 stays positive up to t) = erf(1 / sqrt(2 t))
        let m = polynomial_drift_model(&[]);
        let t = 0.5;
        let cfg = bm_config(2e-4, t, 40_000);
        let ens = simulate_killed(&m, &InitialLaw::Point(1.0), None, &cfg).unwrap();
        let frac = ens[0].survival_fraction();
        let exact = erf(1.0 / (2.0 * t).sqrt());
        // 3 MC standard errors plus the O(sqrt(dt)) kill bias margin
        let se = (exact * (1.0 - exact) / 40_000f64).sqrt();
        assert!(
            (frac - exact).abs() < 3.0 * se + 0.011,
            "frac {frac}, exact {exact}, se {se}"
        );
    }

    #[test]
    fn fixed_seed_reproduces_bitwise() {
        let m = polynomial_drift_model(&[(1.0, 1.0)]);
        let cfg = bm_config(1e-3, 0.3, 500);
        let a = simulate_killed(&m, &InitialLaw::Point(1.0), None, &cfg).unwrap();
        let b = simulate_killed(&m, &InitialLaw::Point(1.0), None, &cfg).unwrap();
        assert_eq!(a[0].n_alive, b[0].n_alive);
        for (x, y) in a[0].positions.iter().zip(b[0].positions.iter()) {
            assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
        }
    }

    #[test]
    fn killing_is_monotone_across_record_times() {
        let m = polynomial_drift_model(&[]);
        let cfg = SimConfig::new(1e-3, 1.0, 2_000, 7)
            .with_record_times(vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let ens = simulate_killed(&m, &InitialLaw::Point(0.5), None, &cfg).unwrap();
        assert_eq!(ens[0].n_alive, 2_000);
        for w in ens.windows(2) {
            assert!(w[1].n_alive <= w[0].n_alive);
        }
    }

    #[test]
    fn dead_positions_are_invalid_alive_positive() {
        let m = polynomial_drift_model(&[]);
        let cfg = bm_config(1e-3, 1.0, 1_000);
        let ens = simulate_killed(&m, &InitialLaw::Point(0.3), None, &cfg).unwrap();
        let e = &ens[0];
        assert_eq!(e.n_alive, e.alive.iter().filter(|a| **a).count());
        for (x, a) in e.positions.iter().zip(e.alive.iter()) {
            if *a {
                assert!(*x > 0.0);
            } else {
                assert!(x.is_nan());
            }
        }
        assert_eq!(e.overflow_kills, 0);
    }

    #[test]
    fn uniform_initial_law_stays_in_range_at_time_zero() {
        let m = polynomial_drift_model(&[]);
        let cfg = SimConfig::new(1e-2, 0.1, 3_000, 3).with_record_times(vec![0.0]);
        let ens = simulate_killed(&m, &InitialLaw::Uniform(2.0, 3.0), None, &cfg).unwrap();
        for (x, a) in ens[0].positions.iter().zip(ens[0].alive.iter()) {
            assert!(*a && *x >= 2.0 && *x <= 3.0);
        }
    }

    #[test]
    fn conditional_distribution_basics() {
        let ens = EmpiricalEnsemble {
            time: 1.0,
            positions: vec![0.5, 1.5, f64::NAN, 2.5],
            alive: vec![true, true, false, true],
            n_alive: 3,
            overflow_kills: 0,
        };
        // all survivors in one bin -> indicator
        let p = conditional_distribution(&ens, &[0.0, 3.0]).unwrap();
        assert_eq!(p, vec![1.0]);
        // split into two bins at 1.0: one survivor left, two right
        let p2 = conditional_distribution(&ens, &[0.0, 1.0, 3.0]).unwrap();
        assert!((p2[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p2[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_ensemble_conditional_is_an_error() {
        let ens = EmpiricalEnsemble {
            time: 1.0,
            positions: vec![f64::NAN],
            alive: vec![false],
            n_alive: 0,
            overflow_kills: 0,
        };
        assert!(conditional_distribution(&ens, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_input() {
        assert!(SimConfig::new(1.0, 0.5, 10, 0).validate().is_err());
        assert!(SimConfig::new(1e-3, 1.0, 0, 0).validate().is_err());
        let bad = SimConfig::new(1e-3, 1.0, 10, 0).with_record_times(vec![0.5, 0.2]);
        assert!(bad.validate().is_err());
        let out = SimConfig::new(1e-3, 1.0, 10, 0).with_record_times(vec![2.0]);
        assert!(out.validate().is_err());
    }

    /// Error function via Abramowitz-Stegun 7.1.26 (|err| < 1.5e-7),
    /// sufficient for Monte Carlo comparisons.
    pub(crate) fn erf(x: f64) -> f64 {
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let x = x.abs();
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
                + 0.254829592)
                * t
                * (-x * x).exp();
        sign * y
    }
}
