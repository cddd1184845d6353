//! Experiment orchestration: runs the requested stages in dependency
//! order, emits every CSV/JSON artifact deterministically, and records a
//! manifest with the config hash, seed, and per-stage wall time.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analyze::{
    self, conditional_evolution_exact, equal_mass_bin_edges, fit_rate, fit_rate_in_window,
    psi_bound_check, psi_distance, quasi_ergodic_error, tv_distance, AnalyzeError, PsiSpec,
};
use crate::boundary::{classify_boundary, BoundaryError, BoundaryReport, IntegralTarget};
use crate::config::{ExperimentConfig, InitialSpec};
use crate::model::DiffusionModel;
use crate::report::{write_csv, write_flat_json, write_line_chart, Cell, Series};
use crate::semigroup::{Semigroup, SemigroupError};
use crate::simulate::{simulate_killed, SimConfig, SimError};
use crate::spectral::{
    build_grid, build_spectral_data, delta_tilde, discretize_generator, h_transform_generator,
    GeneratorMatrix, Grid, GridSpacing, SpectralData, SpectralError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage}: contract violated: {contract}")]
    Contract { stage: &'static str, contract: String },
    #[error("stage {stage} failed: {source}")]
    Boundary {
        stage: &'static str,
        source: BoundaryError,
    },
    #[error("stage {stage} failed: {source}")]
    Spectral {
        stage: &'static str,
        source: SpectralError,
    },
    #[error("stage {stage} failed: {source}")]
    Semigroup {
        stage: &'static str,
        source: SemigroupError,
    },
    #[error("stage {stage} failed: {source}")]
    Analyze {
        stage: &'static str,
        source: AnalyzeError,
    },
    #[error("stage {stage} failed: {source}")]
    Sim {
        stage: &'static str,
        source: SimError,
    },
    #[error("stage {stage} failed: {source}")]
    Io {
        stage: &'static str,
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(#[from] crate::config::ConfigError),
}

/// Pipeline stages in canonical execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Classify,
    Spectrum,
    Simulate,
    Converge,
    Thm22,
    QErgodic,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Classify => "classify",
            Stage::Spectrum => "spectrum",
            Stage::Simulate => "simulate",
            Stage::Converge => "converge",
            Stage::Thm22 => "thm22",
            Stage::QErgodic => "qergodic",
        }
    }

    pub fn all() -> [Stage; 6] {
        [
            Stage::Classify,
            Stage::Spectrum,
            Stage::Simulate,
            Stage::Converge,
            Stage::Thm22,
            Stage::QErgodic,
        ]
    }

    pub fn needs_spectrum(self) -> bool {
        matches!(self, Stage::Converge | Stage::Thm22 | Stage::QErgodic)
    }
}

#[derive(Debug)]
pub struct StageReport {
    pub name: &'static str,
    pub seconds: f64,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug)]
pub struct PipelineSummary {
    pub stages: Vec<StageReport>,
    pub auto_inserted: Vec<&'static str>,
    pub manifest: PathBuf,
}

/// Spectral context shared by the downstream stages.
struct SpectralContext {
    grid: Arc<Grid>,
    gen: GeneratorMatrix,
    spec: SpectralData,
}

/// Map an initial-law spec to a probability vector on the grid.
fn initial_on_grid(
    spec_law: &InitialSpec,
    grid: &Grid,
    alpha: &[f64],
) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    match spec_law {
        InitialSpec::Point(x) => {
            w[grid.nearest_node(*x)] = 1.0;
        }
        InitialSpec::Uniform(a, b) => {
            for (i, x) in grid.points().iter().enumerate() {
                if *x >= *a && *x <= *b {
                    w[i] = grid.cell_width(i);
                }
            }
        }
        InitialSpec::Alpha => {
            w.copy_from_slice(alpha);
        }
        InitialSpec::AlphaUpperHalf => {
            for i in n / 2..n {
                w[i] = alpha[i];
            }
        }
    }
    let total: f64 = w.iter().sum();
    assert!(total > 0.0, "initial law has no mass on the grid");
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

/// Run the requested stages (deduplicated, dependency-ordered); returns the
/// per-stage timings. `spectrum` is inserted automatically when a dependent
/// stage asks for it, and the manifest records the insertion.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    stages: &[Stage],
) -> Result<PipelineSummary, PipelineError> {
    let out_dir = PathBuf::from(&cfg.output.dir);
    let mut wanted: Vec<Stage> = Vec::new();
    for s in Stage::all() {
        if stages.contains(&s) {
            wanted.push(s);
        }
    }
    let mut auto_inserted = Vec::new();
    let needs_spectrum = wanted.iter().any(|s| s.needs_spectrum())
        || (wanted.contains(&Stage::Simulate)
            && matches!(cfg.sim.initial, InitialSpec::Alpha | InitialSpec::AlphaUpperHalf));
    if needs_spectrum && !wanted.contains(&Stage::Spectrum) {
        wanted.push(Stage::Spectrum);
        wanted.sort();
        auto_inserted.push(Stage::Spectrum.name());
    }

    let model = cfg.build_model()?;
    let mut ctx: Option<SpectralContext> = None;
    let mut reports = Vec::new();

    for stage in wanted {
        let start = Instant::now();
        let outputs = match stage {
            Stage::Classify => stage_classify(cfg, &model, &out_dir)?,
            Stage::Spectrum => {
                let (c, outs) = stage_spectrum(cfg, &model, &out_dir)?;
                ctx = Some(c);
                outs
            }
            Stage::Simulate => stage_simulate(cfg, &model, ctx.as_ref(), &out_dir)?,
            Stage::Converge => stage_converge(cfg, ctx.as_ref().expect("spectrum ran"), &out_dir)?,
            Stage::Thm22 => stage_thm22(cfg, ctx.as_ref().expect("spectrum ran"), &out_dir)?,
            Stage::QErgodic => stage_qergodic(cfg, &model, &out_dir)?,
        };
        let seconds = start.elapsed().as_secs_f64();
        println!("stage {}: done in {:.2} s", stage.name(), seconds);
        reports.push(StageReport {
            name: stage.name(),
            seconds,
            outputs,
        });
    }

    let manifest = write_manifest(cfg, &reports, &auto_inserted, &out_dir)
        .map_err(|source| PipelineError::Io {
            stage: "manifest",
            source,
        })?;
    Ok(PipelineSummary {
        stages: reports,
        auto_inserted,
        manifest,
    })
}

fn stage_classify(
    cfg: &ExperimentConfig,
    model: &DiffusionModel,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let wrap = |source| PipelineError::Boundary {
        stage: "classify",
        source,
    };
    let b = 1.0;
    let zero = classify_boundary(model, IntegralTarget::Zero, b).map_err(wrap)?;
    let inf = classify_boundary(model, IntegralTarget::Infinity, b).map_err(wrap)?;

    println!("endpoint  I-status      J-status      class");
    for (label, rep) in [("zero", &zero), ("infinity", &inf)] {
        println!(
            "{label:<9} {:<13} {:<13} {}",
            format!("{:?}", rep.i.status).to_lowercase(),
            format!("{:?}", rep.j.status).to_lowercase(),
            rep.classification
        );
    }

    let row = |label: &str, rep: &BoundaryReport| -> Vec<Cell> {
        vec![
            Cell::from(label),
            Cell::from(format!("{:?}", rep.i.status).to_lowercase()),
            Cell::from(rep.i.value.unwrap_or(f64::NAN)),
            Cell::from(format!("{:?}", rep.j.status).to_lowercase()),
            Cell::from(rep.j.value.unwrap_or(f64::NAN)),
            Cell::from(rep.classification.to_string()),
        ]
    };
    let path = write_csv(
        out_dir.join("boundary_report.csv"),
        &["endpoint", "I_status", "I_value", "J_status", "J_value", "class"],
        vec![row("zero", &zero), row("infinity", &inf)],
    )
    .map_err(|source| PipelineError::Io {
        stage: "classify",
        source,
    })?;
    let _ = cfg;
    Ok(vec![path])
}

fn stage_spectrum(
    cfg: &ExperimentConfig,
    model: &DiffusionModel,
    out_dir: &Path,
) -> Result<(SpectralContext, Vec<PathBuf>), PipelineError> {
    let wrap = |source| PipelineError::Spectral {
        stage: "spectrum",
        source,
    };
    let r = cfg.grid_r(model);
    let grid = Arc::new(
        build_grid(model, cfg.grid.eps, r, cfg.grid.n, cfg.grid.spacing).map_err(wrap)?,
    );
    let gen = discretize_generator(model, &grid).map_err(wrap)?;
    let spec = build_spectral_data(model, &gen, 4).map_err(wrap)?;
    let gen_tilde = h_transform_generator(&gen, &spec).map_err(wrap)?;

    let b_samples: Vec<f64> = (1..=40)
        .map(|i| {
            let f = i as f64 / 41.0;
            (2.0 * cfg.grid.eps.max(1e-6)) * (0.45 * r / cfg.grid.eps.max(1e-6)).powf(f)
        })
        .collect();
    let dt = delta_tilde(model, &spec, &b_samples).map_err(wrap)?;

    // algebraic identity probes, recorded alongside the spectral data
    let ortho = crate::spectral::orthonormality_residual(&gen, &spec, 4);
    let shift = crate::spectral::spectrum_shift_residual(&gen_tilde, &spec, 3).map_err(wrap)?;
    let (rev_asym, rev_scale) = crate::spectral::verify_reversibility(&gen_tilde);
    let alpha_res = crate::spectral::alpha_stationarity_residual(&gen, &spec);
    let beta_res = crate::spectral::beta_invariance_residual(&gen_tilde, &spec);
    let row_sums = gen_tilde.max_relative_row_sum();
    let ones = vec![1.0; grid.len()];
    let mut intertwine = [0.0f64; 3];
    for (slot, t) in intertwine.iter_mut().zip([0.5, 1.0, 2.0]) {
        *slot = crate::semigroup::verify_intertwining(&gen, &gen_tilde, &spec, t, &ones)
            .map_err(|source| PipelineError::Semigroup {
                stage: "spectrum",
                source,
            })?;
    }

    let io = |source| PipelineError::Io {
        stage: "spectrum",
        source,
    };
    let mut rows = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        rows.push(vec![
            Cell::from(grid.points()[i]),
            Cell::from(grid.speed_weights()[i]),
            Cell::from(spec.eta1()[i]),
            Cell::from(spec.eta(2)[i]),
            Cell::from(spec.alpha()[i]),
            Cell::from(spec.beta()[i]),
            Cell::from(spec.q_tilde()[i]),
        ]);
    }
    let csv = write_csv(
        out_dir.join("spectrum.csv"),
        &["x", "m_weight", "eta1", "eta2", "alpha", "beta", "q_tilde"],
        rows,
    )
    .map_err(io)?;
    let meta = write_flat_json(
        out_dir.join("spectrum_meta.json"),
        &[
            ("model", Cell::from(model.name())),
            ("lambda1", Cell::from(spec.lambda1())),
            ("lambda2", Cell::from(spec.lambda2())),
            ("lambda3", Cell::from(spec.lambda(3))),
            ("lambda4", Cell::from(spec.lambda(4))),
            ("gap", Cell::from(spec.gap())),
            ("m_eta1", Cell::from(spec.m_eta1())),
            ("delta_tilde", Cell::from(dt.value)),
            ("delta_tilde_argmax_b", Cell::from(dt.argmax_b)),
            ("grid_eps", Cell::from(cfg.grid.eps)),
            ("grid_r", Cell::from(r)),
            ("grid_n", Cell::from(grid.len())),
            (
                "grid_spacing",
                Cell::from(match cfg.grid.spacing {
                    GridSpacing::Log => "log",
                    GridSpacing::Uniform => "uniform",
                }),
            ),
            ("grid_dropped_nodes", Cell::from(grid.dropped_nodes())),
            ("orthonormality_residual", Cell::from(ortho)),
            ("spectrum_shift_relative_residual", Cell::from(shift)),
            ("reversibility_asymmetry", Cell::from(rev_asym)),
            ("reversibility_scale", Cell::from(rev_scale)),
            ("alpha_stationarity_residual", Cell::from(alpha_res)),
            ("beta_invariance_residual", Cell::from(beta_res)),
            ("h_transform_max_row_sum", Cell::from(row_sums)),
            ("intertwining_residual_t0.5", Cell::from(intertwine[0])),
            ("intertwining_residual_t1", Cell::from(intertwine[1])),
            ("intertwining_residual_t2", Cell::from(intertwine[2])),
        ],
    )
    .map_err(io)?;

    let mut outputs = vec![csv, meta];
    if cfg.output.plot {
        let pts = |v: &[f64]| -> Vec<(f64, f64)> {
            grid.points().iter().cloned().zip(v.iter().cloned()).collect()
        };
        let p = write_line_chart(
            out_dir.join("spectrum.svg"),
            "spectral weights",
            "x",
            "weight",
            &[
                Series { name: "alpha", points: pts(spec.alpha()) },
                Series { name: "beta", points: pts(spec.beta()) },
                Series { name: "eta1", points: pts(spec.eta1()) },
            ],
            false,
        )
        .map_err(io)?;
        outputs.push(p);
    }
    Ok((SpectralContext { grid, gen, spec }, outputs))
}

fn stage_simulate(
    cfg: &ExperimentConfig,
    model: &DiffusionModel,
    ctx: Option<&SpectralContext>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let wrap = |source| PipelineError::Sim {
        stage: "simulate",
        source,
    };
    let io = |source| PipelineError::Io {
        stage: "simulate",
        source,
    };
    let law = cfg
        .sim
        .initial
        .to_law(ctx.map(|c| c.spec.alpha()))
        .ok_or_else(|| PipelineError::Contract {
            stage: "simulate",
            contract: "alpha-based initial law requires the spectrum stage".into(),
        })?;
    let sim_cfg = SimConfig {
        dt: cfg.sim.dt,
        t_end: cfg.sim.t_end,
        n_paths: cfg.sim.paths,
        seed: cfg.sim.seed,
        record_times: cfg.sim.record_times.clone(),
        left_kill_level: 0.0,
    };
    let ensembles =
        simulate_killed(model, &law, ctx.map(|c| c.grid.as_ref()), &sim_cfg).map_err(wrap)?;

    let mut outputs = Vec::new();
    let mut survival_rows = Vec::new();
    for ens in ensembles.iter() {
        if ens.overflow_kills > 0 {
            return Err(PipelineError::Contract {
                stage: "simulate",
                contract: format!("{} path(s) died of drift overflow", ens.overflow_kills),
            });
        }
        let mut rows = Vec::with_capacity(ens.positions.len());
        for (pid, (x, a)) in ens.positions.iter().zip(ens.alive.iter()).enumerate() {
            rows.push(vec![Cell::from(pid), Cell::from(*a), Cell::from(*x)]);
        }
        let path = write_csv(
            out_dir.join(format!("ensemble_t{}.csv", ens.time)),
            &["path_id", "alive", "position"],
            rows,
        )
        .map_err(io)?;
        outputs.push(path);
        survival_rows.push(vec![
            Cell::from(ens.time),
            Cell::from(ens.n_alive),
            Cell::from(ens.survival_fraction()),
        ]);
    }
    let surv = write_csv(
        out_dir.join("survival.csv"),
        &["t", "n_alive", "fraction"],
        survival_rows,
    )
    .map_err(io)?;
    outputs.push(surv);
    if cfg.output.plot {
        let pts: Vec<(f64, f64)> = ensembles
            .iter()
            .map(|e| (e.time, e.survival_fraction()))
            .collect();
        let p = write_line_chart(
            out_dir.join("survival.svg"),
            "survival fraction",
            "t",
            "fraction",
            &[Series { name: "survival", points: pts }],
            false,
        )
        .map_err(io)?;
        outputs.push(p);
    }
    Ok(outputs)
}

fn stage_converge(
    cfg: &ExperimentConfig,
    ctx: &SpectralContext,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let wrap = |source| PipelineError::Analyze {
        stage: "converge",
        source,
    };
    let io = |source| PipelineError::Io {
        stage: "converge",
        source,
    };
    let times = &cfg.analysis.times;
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-3);
    let sg = Semigroup::for_horizon(&ctx.gen, t_min, 1e-12).map_err(|source| {
        PipelineError::Semigroup {
            stage: "converge",
            source,
        }
    })?;
    let psi: Vec<f64> = ctx
        .grid
        .points()
        .iter()
        .map(|x| cfg.analysis.psi.eval(*x))
        .collect();

    // primary decay series from the configured initial law
    let mu0 = initial_on_grid(&cfg.sim.initial, &ctx.grid, ctx.spec.alpha());
    let evo = conditional_evolution_exact(&sg, &ctx.spec, &mu0, times).map_err(wrap)?;
    let mut decay_rows = Vec::new();
    let mut tv_series = Vec::new();
    for (i, t) in times.iter().enumerate() {
        let tv = tv_distance(&evo.laws[i], ctx.spec.alpha()).map_err(wrap)?;
        let ps = psi_distance(&evo.laws[i], ctx.spec.alpha(), &psi).map_err(wrap)?;
        decay_rows.push(vec![
            Cell::from(*t),
            Cell::from(tv),
            Cell::from(ps),
            Cell::from(evo.survivals[i]),
        ]);
        tv_series.push((*t, tv));
    }
    let decay_csv = write_csv(
        out_dir.join("tv_decay.csv"),
        &["t", "tv", "psi", "survival"],
        decay_rows,
    )
    .map_err(io)?;

    // rate fits across a family of initial laws
    let family = [
        cfg.sim.initial.clone(),
        InitialSpec::Point(0.5),
        InitialSpec::Point(1.0),
        InitialSpec::Point(2.0),
        InitialSpec::Uniform(0.5, 3.0),
        InitialSpec::AlphaUpperHalf,
    ];
    let mut fit_rows = Vec::new();
    let mut seen = Vec::new();
    for law in family.iter() {
        let label = law.label();
        if seen.contains(&label) {
            continue;
        }
        seen.push(label.clone());
        let mu = initial_on_grid(law, &ctx.grid, ctx.spec.alpha());
        let evo = conditional_evolution_exact(&sg, &ctx.spec, &mu, times).map_err(wrap)?;
        let dists: Vec<f64> = evo
            .laws
            .iter()
            .map(|l| tv_distance(l, ctx.spec.alpha()))
            .collect::<Result<_, _>>()
            .map_err(wrap)?;
        let rep = match cfg.analysis.fit_window {
            Some(w) => fit_rate_in_window(times, &dists, w),
            None => fit_rate(times, &dists, 1e-14),
        }
        .map_err(wrap)?;
        fit_rows.push(vec![
            Cell::from(label),
            Cell::from(rep.fitted_c),
            Cell::from(rep.fitted_gamma),
            Cell::from(rep.r_squared),
            Cell::from(rep.fit_window.0),
            Cell::from(rep.fit_window.1),
        ]);
    }
    let fit_csv = write_csv(
        out_dir.join("rate_fit.csv"),
        &["mu0", "C", "gamma", "r2", "window_lo", "window_hi"],
        fit_rows,
    )
    .map_err(io)?;

    let mut outputs = vec![decay_csv, fit_csv];
    if cfg.output.plot {
        let p = write_line_chart(
            out_dir.join("tv_decay.svg"),
            "conditional law vs quasi-stationary law",
            "t",
            "tv",
            &[Series { name: "tv", points: tv_series }],
            true,
        )
        .map_err(io)?;
        outputs.push(p);
    }
    Ok(outputs)
}

fn stage_thm22(
    cfg: &ExperimentConfig,
    ctx: &SpectralContext,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let wrap = |source| PipelineError::Analyze {
        stage: "thm22",
        source,
    };
    let io = |source| PipelineError::Io {
        stage: "thm22",
        source,
    };
    let times = &cfg.analysis.times;
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-3);
    let sg = Semigroup::for_horizon(&ctx.gen, t_min, 1e-12).map_err(|source| {
        PipelineError::Semigroup {
            stage: "thm22",
            source,
        }
    })?;
    let psi = PsiSpec::new(&ctx.spec, |x| cfg.analysis.psi.eval(x), cfg.analysis.c)
        .map_err(wrap)?;
    let mu0 = initial_on_grid(&cfg.sim.initial, &ctx.grid, ctx.spec.alpha());
    let rep = psi_bound_check(&sg, &ctx.spec, &psi, &mu0, times).map_err(wrap)?;

    let mut rows = Vec::new();
    for i in 0..times.len() {
        rows.push(vec![
            Cell::from(times[i]),
            Cell::from(rep.lhs[i]),
            Cell::from(rep.rhs[i]),
            Cell::from(rep.holds[i]),
        ]);
    }
    let csv = write_csv(
        out_dir.join("thm22.csv"),
        &["t", "lhs", "rhs", "holds"],
        rows,
    )
    .map_err(io)?;
    let meta = write_flat_json(
        out_dir.join("thm22_meta.json"),
        &[
            ("gamma", Cell::from(rep.gamma)),
            ("gamma_halved", Cell::from(rep.gamma_halved)),
            ("divergence", Cell::from(rep.divergence)),
            ("t_mu", Cell::from(rep.t_mu.unwrap_or(f64::NAN))),
            ("trivially_true", Cell::from(rep.trivially_true)),
            ("mu0", Cell::from(cfg.sim.initial.label())),
        ],
    )
    .map_err(io)?;
    if rep.t_mu.is_none() && !rep.trivially_true {
        return Err(PipelineError::Contract {
            stage: "thm22",
            contract: "bound never took hold over the sampled times, even at gamma/2".into(),
        });
    }
    let mut outputs = vec![csv, meta];
    if cfg.output.plot {
        let p = write_line_chart(
            out_dir.join("thm22.svg"),
            "weighted-norm bound",
            "t",
            "distance",
            &[
                Series {
                    name: "lhs",
                    points: times.iter().cloned().zip(rep.lhs.iter().cloned()).collect(),
                },
                Series {
                    name: "rhs",
                    points: times.iter().cloned().zip(rep.rhs.iter().cloned()).collect(),
                },
            ],
            true,
        )
        .map_err(io)?;
        outputs.push(p);
    }
    Ok(outputs)
}

/// Node cap for the time-average stage: it needs the complete eigenbasis,
/// whose assembly cost grows as N^3.
const QE_MAX_NODES: usize = 800;

fn stage_qergodic(
    cfg: &ExperimentConfig,
    model: &DiffusionModel,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let swrap = |source| PipelineError::Spectral {
        stage: "qergodic",
        source,
    };
    let io = |source| PipelineError::Io {
        stage: "qergodic",
        source,
    };
    let n = cfg.grid.n.min(QE_MAX_NODES);
    let r = cfg.grid_r(model);
    let grid = Arc::new(build_grid(model, cfg.grid.eps, r, n, cfg.grid.spacing).map_err(swrap)?);
    let gen = discretize_generator(model, &grid).map_err(swrap)?;
    let spec = build_spectral_data(model, &gen, 4).map_err(swrap)?;
    let sg = Semigroup::with_modes(&gen, gen.n()).map_err(|source| PipelineError::Semigroup {
        stage: "qergodic",
        source,
    })?;

    // g = sign(x - beta median), the canonical bounded observable
    let mut cum = 0.0;
    let mut median = *grid.points().last().expect("non-empty grid");
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
    let rows = quasi_ergodic_error(&sg, &spec, &g, x_index, &cfg.analysis.qe_times, 64)
        .map_err(|source| PipelineError::Analyze {
            stage: "qergodic",
            source,
        })?;

    let csv_rows: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.t),
                Cell::from(r.estimate),
                Cell::from(r.beta_g),
                Cell::from(r.error),
            ]
        })
        .collect();
    let csv = write_csv(
        out_dir.join("qe_error.csv"),
        &["t", "estimate", "beta_g", "error"],
        csv_rows,
    )
    .map_err(io)?;
    let mut outputs = vec![csv];
    if cfg.output.plot {
        let p = write_line_chart(
            out_dir.join("qe_error.svg"),
            "time-averaged conditional expectation error",
            "t",
            "error",
            &[Series {
                name: "|estimate - beta(g)|",
                points: rows.iter().map(|r| (r.t, r.error)).collect(),
            }],
            true,
        )
        .map_err(io)?;
        outputs.push(p);
    }
    Ok(outputs)
}

fn write_manifest(
    cfg: &ExperimentConfig,
    reports: &[StageReport],
    auto_inserted: &[&'static str],
    out_dir: &Path,
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let mut hasher = Sha256::new();
    hasher.update(cfg.canonical_text.as_bytes());
    let hash = hasher.finalize();
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();

    let mut text = String::new();
    text.push_str(&format!("qsd1d version = {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("config sha256 = {hex}\n"));
    text.push_str(&format!("seed = {}\n", cfg.sim.seed));
    if !auto_inserted.is_empty() {
        text.push_str(&format!("auto-inserted stages = {}\n", auto_inserted.join(",")));
    }
    for r in reports {
        let outs: Vec<String> = r
            .outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|f| f.to_string_lossy().to_string())
                    .unwrap_or_default()
            })
            .collect();
        text.push_str(&format!(
            "stage {} = {:.3} s, outputs: {}\n",
            r.name,
            r.seconds,
            outs.join(" ")
        ));
    }
    let path = out_dir.join("manifest.txt");
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Used by the analyze stage tests and the MC acceptance: bin an exact and
/// an empirical conditional law on the same equal-mass edges and return
/// their total variation distance.
pub fn binned_tv_exact_vs_empirical(
    spec: &SpectralData,
    exact_law: &[f64],
    empirical_positions: &[f64],
    n_bins: usize,
) -> Result<f64, AnalyzeError> {
    let edges = equal_mass_bin_edges(spec, n_bins);
    let exact_binned = analyze::binned_law(exact_law, spec.grid(), &edges);
    let nb = edges.len() - 1;
    let mut counts = vec![0usize; nb];
    for x in empirical_positions {
        let b = match edges.partition_point(|e| e <= x) {
            0 => 0,
            p if p > nb => nb - 1,
            p => p - 1,
        };
        counts[b] += 1;
    }
    let total = empirical_positions.len() as f64;
    let emp: Vec<f64> = counts.into_iter().map(|c| c as f64 / total).collect();
    tv_distance(&exact_binned, &emp)
}
