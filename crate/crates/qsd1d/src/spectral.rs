//! Divergence-form discretization of the killed generator
//! `L = 1/2 d^2/dx^2 - q d/dx` on a truncated grid, its spectral data, and
//! the h-transform to the conditioned (Q-) process generator.
//!
//! The discrete `L` acts on node values as
//! `(L f)_i = [p_{i+1/2} (f_{i+1} - f_i) - p_{i-1/2} (f_i - f_{i-1})] / (2 m_i)`
//! with face conductances `p = exp(-Q(midpoint)) / dx` and node masses
//! `m_i = exp(-Q(x_i)) * cell_i`. This makes `D_m L` symmetric by
//! construction, mirroring the self-adjointness of `L` in `L^2(m)`.
//!
//! Boundary conditions: a Dirichlet ghost at the left truncation point
//! (absorption at 0, both for a regular and an exit boundary) and a
//! zero-flux ghost at the right truncation point (an entrance boundary is
//! inaccessible from the interior, so no probability may leak out there).

use std::sync::Arc;

use log::warn;
use thiserror::Error;

use crate::boundary::{self, BoundaryClass, BoundaryError};
use crate::model::{DiffusionModel, ModelError, QUAD_MAX_SUBDIV};
use crate::numerics::quad::{adaptive_log_quadrature, log_add, QuadError};
use crate::numerics::tridiag::{SymTridiag, TridiagError};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("model evaluation failed: {0}")]
    Model(#[from] ModelError),
    #[error("quadrature failed: {0}")]
    Quad(#[from] QuadError),
    #[error("eigensolver failed: {0}")]
    Eigen(#[from] TridiagError),
    #[error("m-weighted symmetry violated: residual {residual:.3e} of scale {scale:.3e}")]
    NotSymmetric { residual: f64, scale: f64 },
    #[error("eigenvalues {a:.12e} and {b:.12e} closer than 1e-12 relative: discretization is degenerate")]
    DegenerateSpectrum { a: f64, b: f64 },
    #[error("ground eigenfunction not strictly positive at node {index} (x = {x:.6e})")]
    NotPositive { index: usize, x: f64 },
    #[error("second eigenfunction has {count} sign changes, expected exactly 1")]
    SignChanges { count: usize },
    #[error("boundary probe failed: {0}")]
    Boundary(#[from] BoundaryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpacing {
    Uniform,
    Log,
}

/// Truncated grid with speed-measure masses at each node.
#[derive(Debug, Clone)]
pub struct Grid {
    points: Vec<f64>,
    eps: f64,
    r: f64,
    spacing: GridSpacing,
    speed_weights: Vec<f64>,
    log_speed_weights: Vec<f64>,
    dropped_nodes: usize,
}

impl Grid {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn right_truncation(&self) -> f64 {
        self.r
    }

    pub fn spacing(&self) -> GridSpacing {
        self.spacing
    }

    /// Mass `m_i` approximating the speed measure around node i.
    pub fn speed_weights(&self) -> &[f64] {
        &self.speed_weights
    }

    pub fn log_speed_weights(&self) -> &[f64] {
        &self.log_speed_weights
    }

    pub fn dropped_nodes(&self) -> usize {
        self.dropped_nodes
    }

    /// Width of the midpoint cell around node `i` (ghosts bound the edges).
    pub fn cell_width(&self, i: usize) -> f64 {
        let n = self.points.len();
        let left = if i == 0 { self.eps } else { self.points[i - 1] };
        let right = if i + 1 == n { self.r } else { self.points[i + 1] };
        0.5 * (right - left)
    }

    /// Index of the grid node nearest to `x`.
    pub fn nearest_node(&self, x: f64) -> usize {
        let p = self.points.partition_point(|&v| v < x);
        if p == 0 {
            return 0;
        }
        if p >= self.points.len() {
            return self.points.len() - 1;
        }
        if (x - self.points[p - 1]).abs() <= (self.points[p] - x).abs() {
            p - 1
        } else {
            p
        }
    }

    /// Relative mismatch between the summed node masses and the quadrature
    /// value of `int exp(-Q)` over the span the midpoint cells tile,
    /// `[(eps + x_1)/2, (x_N + R)/2]`.
    pub fn mass_defect(&self, model: &DiffusionModel) -> Result<f64, SpectralError> {
        let m = model.clone();
        let n = self.points.len();
        let lo = 0.5 * (self.eps + self.points[0]);
        let hi = 0.5 * (self.points[n - 1] + self.r);
        let ln_mass = adaptive_log_quadrature(
            move |y| m.eval_q(y).map(|q| -q).unwrap_or(f64::NAN),
            lo,
            hi,
            1e-10,
            QUAD_MAX_SUBDIV,
        )?;
        let ln_sum = self
            .log_speed_weights
            .iter()
            .fold(f64::NEG_INFINITY, |acc, v| log_add(acc, *v));
        Ok(((ln_sum - ln_mass).exp() - 1.0).abs())
    }
}

/// Nodes per the spacing rule on `(eps, r)` with ghost points at both
/// truncation ends; masses by midpoint rule on `exp(-Q)`. Nodes whose mass
/// underflows to exact zero are dropped with a warning (a zero weight
/// breaks the symmetrization).
pub fn build_grid(
    model: &DiffusionModel,
    eps: f64,
    r: f64,
    n: usize,
    spacing: GridSpacing,
) -> Result<Grid, SpectralError> {
    if n < 3 {
        return Err(SpectralError::Grid(format!("N must be >= 3, got {n}")));
    }
    if !(eps >= 0.0 && eps < r && r.is_finite()) {
        return Err(SpectralError::Grid(format!(
            "need 0 <= eps < R finite, got eps = {eps}, R = {r}"
        )));
    }
    if spacing == GridSpacing::Log && eps <= 0.0 {
        return Err(SpectralError::Grid(
            "log spacing requires eps > 0".to_string(),
        ));
    }
    // interior nodes x_1..x_N between ghosts x_0 = eps, x_{N+1} = r
    let mut all = Vec::with_capacity(n + 2);
    match spacing {
        GridSpacing::Uniform => {
            let h = (r - eps) / (n as f64 + 1.0);
            for i in 0..=(n + 1) {
                all.push(eps + h * i as f64);
            }
        }
        GridSpacing::Log => {
            let d = (r / eps).ln() / (n as f64 + 1.0);
            for i in 0..=(n + 1) {
                all.push(eps * (d * i as f64).exp());
            }
        }
    }
    // node mass = exact integral of exp(-Q) over the midpoint cell
    // [mid(x_{i-1}, x_i), mid(x_i, x_{i+1})]; one Gauss-Kronrod panel is
    // exact to machine precision on these smooth, narrow cells. Plain
    // node-value-times-width weights would leave a d^2/6 relative defect
    // on log grids, visibly above the mass-consistency tolerance.
    let cell_log_mass = |lo: f64, hi: f64| -> Result<f64, SpectralError> {
        let m = model.clone();
        let (lv, _) = crate::numerics::quad::gk15_log_probe(
            &move |y: f64| m.eval_q(y).map(|q| -q).unwrap_or(f64::NAN),
            lo,
            hi,
        );
        if lv.is_nan() {
            return Err(SpectralError::Grid(format!(
                "speed density evaluation failed in cell [{lo:.6e}, {hi:.6e}]"
            )));
        }
        Ok(lv)
    };
    let mut points = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    let mut dropped = 0usize;
    for i in 1..=n {
        let x = all[i];
        let lo = 0.5 * (all[i - 1] + all[i]);
        let hi = 0.5 * (all[i] + all[i + 1]);
        let lw = cell_log_mass(lo, hi)?;
        if lw.exp() == 0.0 {
            dropped += 1;
            continue;
        }
        points.push(x);
        log_w.push(lw);
    }
    if dropped > 0 {
        warn!(
            "build_grid: dropped {dropped} node(s) with underflowed speed weight (model {}, R = {r})",
            model.name()
        );
        // recompute cells from surviving neighbors
        let mut lw2 = Vec::with_capacity(points.len());
        for (i, &x) in points.iter().enumerate() {
            let left = if i == 0 { eps } else { points[i - 1] };
            let right = if i + 1 == points.len() { r } else { points[i + 1] };
            let lw = cell_log_mass(0.5 * (left + x), 0.5 * (x + right))?;
            lw2.push(lw);
        }
        log_w = lw2;
    }
    if points.len() < 3 {
        return Err(SpectralError::Grid(
            "fewer than 3 usable nodes after dropping underflowed weights".to_string(),
        ));
    }
    let weights: Vec<f64> = log_w.iter().map(|v| v.exp()).collect();
    Ok(Grid {
        points,
        eps,
        r,
        spacing,
        speed_weights: weights,
        log_speed_weights: log_w,
        dropped_nodes: dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Absorbing: ghost value pinned to zero (kills mass).
    DirichletAbsorbing,
    /// Reflecting: zero flux through the truncation face.
    NeumannReflecting,
}

/// Tridiagonal generator matrix together with its symmetrizing weights.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    grid: Arc<Grid>,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    left_bc: BoundaryCondition,
    right_bc: BoundaryCondition,
}

impl GeneratorMatrix {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn sup(&self) -> &[f64] {
        &self.sup
    }

    /// Symmetrizing weights: `diag(w) * L` is symmetric.
    pub fn symmetrizing_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_symmetrizing_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn boundary_conditions(&self) -> (BoundaryCondition, BoundaryCondition) {
        (self.left_bc, self.right_bc)
    }

    /// Apply `L` to a node vector.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(f.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * f[i];
            if i > 0 {
                v += self.sub[i - 1] * f[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * f[i + 1];
            }
            out[i] = v;
        }
        out
    }

    /// Max over rows of `|sum_j L_ij|` relative to the row magnitude
    /// `sum_j |L_ij|`. Zero row sums characterize a conservative generator.
    pub fn max_relative_row_sum(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut s = self.diag[i];
            let mut mag = self.diag[i].abs();
            if i > 0 {
                s += self.sub[i - 1];
                mag += self.sub[i - 1].abs();
            }
            if i + 1 < n {
                s += self.sup[i];
                mag += self.sup[i].abs();
            }
            if mag > 0.0 {
                worst = worst.max(s.abs() / mag);
            }
        }
        worst
    }

    /// Max asymmetry of `diag(w) L` relative to its largest entry.
    pub fn weighted_asymmetry(&self) -> (f64, f64) {
        let n = self.n();
        let mut asym = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            scale = scale.max((self.weights[i] * self.diag[i]).abs());
            if i + 1 < n {
                let a = self.weights[i] * self.sup[i];
                let b = self.weights[i + 1] * self.sub[i];
                asym = asym.max((a - b).abs());
                scale = scale.max(a.abs().max(b.abs()));
            }
        }
        (asym, scale)
    }

    /// Symmetric tridiagonal form of `-L` under `D_w^{1/2} . D_w^{-1/2}`.
    pub fn neg_symmetrized(&self) -> SymTridiag {
        let n = self.n();
        let mut diag = Vec::with_capacity(n);
        let mut off = Vec::with_capacity(n - 1);
        for i in 0..n {
            diag.push(-self.diag[i]);
        }
        for i in 0..n - 1 {
            // -L_{i,i+1} * sqrt(w_i / w_{i+1}) combined in log space:
            // the weights span hundreds of orders of magnitude, but the
            // symmetrized entry itself is moderate
            let ratio = 0.5 * (self.log_weights[i] - self.log_weights[i + 1]);
            off.push(-(self.sup[i].ln() + ratio).exp());
        }
        SymTridiag::new(diag, off)
    }
}

/// Divergence-form three-point discretization with absorbing-left /
/// reflecting-right boundary conditions.
pub fn discretize_generator(
    model: &DiffusionModel,
    grid: &Arc<Grid>,
) -> Result<GeneratorMatrix, SpectralError> {
    discretize_generator_with_bcs(
        model,
        grid,
        BoundaryCondition::DirichletAbsorbing,
        BoundaryCondition::NeumannReflecting,
    )
}

/// Same stencil with explicit boundary conditions (the all-Dirichlet
/// variant reproduces textbook interval spectra in tests).
pub fn discretize_generator_with_bcs(
    model: &DiffusionModel,
    grid: &Arc<Grid>,
    left_bc: BoundaryCondition,
    right_bc: BoundaryCondition,
) -> Result<GeneratorMatrix, SpectralError> {
    let n = grid.len();
    let x = grid.points();
    let log_w = grid.log_speed_weights();
    let ln2 = std::f64::consts::LN_2;

    // face log-conductances between node i and its right neighbor
    let mut log_p_right = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let mid = 0.5 * (x[i] + x[i + 1]);
        let dx = x[i + 1] - x[i];
        log_p_right.push(-model.eval_q(mid)? - dx.ln());
    }
    // ghost faces
    let log_p_ghost_left = {
        let mid = 0.5 * (grid.eps() + x[0]);
        let dx = x[0] - grid.eps();
        if dx > 0.0 {
            Some(-model.eval_q(mid.max(f64::MIN_POSITIVE))? - dx.ln())
        } else {
            None
        }
    };
    let log_p_ghost_right = {
        let mid = 0.5 * (x[n - 1] + grid.right_truncation());
        let dx = grid.right_truncation() - x[n - 1];
        if dx > 0.0 {
            Some(-model.eval_q(mid)? - dx.ln())
        } else {
            None
        }
    };

    let mut sub = vec![0.0; n - 1];
    let mut sup = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let mut total_flux = 0.0f64;
        if i > 0 {
            sub[i - 1] = (log_p_right[i - 1] - ln2 - log_w[i]).exp();
            total_flux += sub[i - 1];
        } else if left_bc == BoundaryCondition::DirichletAbsorbing {
            if let Some(lp) = log_p_ghost_left {
                total_flux += (lp - ln2 - log_w[i]).exp();
            }
        }
        if i + 1 < n {
            sup[i] = (log_p_right[i] - ln2 - log_w[i]).exp();
            total_flux += sup[i];
        } else if right_bc == BoundaryCondition::DirichletAbsorbing {
            if let Some(rp) = log_p_ghost_right {
                total_flux += (rp - ln2 - log_w[i]).exp();
            }
        }
        diag[i] = -total_flux;
    }

    let gen = GeneratorMatrix {
        grid: grid.clone(),
        sub,
        diag,
        sup,
        weights: grid.speed_weights().to_vec(),
        log_weights: grid.log_speed_weights().to_vec(),
        left_bc,
        right_bc,
    };
    let (asym, scale) = gen.weighted_asymmetry();
    if asym > 1e-12 * scale {
        return Err(SpectralError::NotSymmetric {
            residual: asym,
            scale,
        });
    }
    Ok(gen)
}

/// One eigenmode of `-L`: eigenvalue, eigenfunction at the nodes
/// (normalized to `sum eta^2 w = 1`), and the solver residual.
#[derive(Debug, Clone)]
pub struct EigenMode {
    pub lambda: f64,
    pub eta: Vec<f64>,
    pub residual: f64,
}

/// The `k` smallest eigenvalues of `-L` with weights-orthonormal
/// eigenfunctions. The ground mode is sign-fixed positive; every other
/// mode has its largest-magnitude component positive.
pub fn eigen_solve(gen: &GeneratorMatrix, k: usize) -> Result<Vec<EigenMode>, SpectralError> {
    eigen_solve_range(gen, 0, k)
}

/// Eigenmodes of `-L` with indices `lo..hi` (ascending eigenvalues).
pub fn eigen_solve_range(
    gen: &GeneratorMatrix,
    lo: usize,
    hi: usize,
) -> Result<Vec<EigenMode>, SpectralError> {
    let s = gen.neg_symmetrized();
    let pairs = s.eigenpairs_indexed(lo, hi)?;
    // simplicity check: clustering signals a broken discretization
    for w in pairs.windows(2) {
        let gap = (w[1].value - w[0].value).abs();
        if gap < 1e-12 * w[1].value.abs().max(w[0].value.abs()) {
            return Err(SpectralError::DegenerateSpectrum {
                a: w[0].value,
                b: w[1].value,
            });
        }
    }
    let log_w = gen.log_symmetrizing_weights();
    let mut modes = Vec::with_capacity(pairs.len());
    for (j, p) in pairs.into_iter().enumerate() {
        let mut eta: Vec<f64> = p
            .vector
            .iter()
            .zip(log_w.iter())
            .map(|(u, lw)| u * (-0.5 * lw).exp())
            .collect();
        // deterministic sign: ground mode positive, others by largest entry
        let flip = if lo + j == 0 {
            eta.iter().sum::<f64>() < 0.0
        } else {
            let imax = eta
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            eta[imax] < 0.0
        };
        if flip {
            for v in eta.iter_mut() {
                *v = -*v;
            }
        }
        modes.push(EigenMode {
            lambda: p.value,
            eta,
            residual: p.residual,
        });
    }
    Ok(modes)
}

/// Spectral data of a model on a grid: the leading eigenpairs, the
/// quasi-stationary weights `alpha ~ eta1 m`, the quasi-ergodic weights
/// `beta = eta1^2 m`, and the h-transformed drift
/// `q_tilde = q - eta1'/eta1`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    grid: Arc<Grid>,
    lambdas: Vec<f64>,
    etas: Vec<Vec<f64>>,
    m_eta1: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    q_tilde: Vec<f64>,
}

impl SpectralData {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.lambdas[n - 1]
    }

    pub fn lambda1(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn lambda2(&self) -> f64 {
        self.lambdas[1]
    }

    /// Spectral gap of the conditioned dynamics.
    pub fn gap(&self) -> f64 {
        self.lambdas[1] - self.lambdas[0]
    }

    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    /// Eigenfunction of `-L` for eigenvalue `lambda(n)`, 1-based.
    pub fn eta(&self, n: usize) -> &[f64] {
        &self.etas[n - 1]
    }

    pub fn eta1(&self) -> &[f64] {
        &self.etas[0]
    }

    /// `m(eta1) = sum eta1_i m_i`.
    pub fn m_eta1(&self) -> f64 {
        self.m_eta1
    }

    /// Quasi-stationary probability weights on the grid.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Quasi-ergodic probability weights on the grid.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// h-transformed drift at the nodes.
    pub fn q_tilde(&self) -> &[f64] {
        &self.q_tilde
    }

    /// Linear interpolation of `eta1` with power-law continuation below the
    /// grid and constant continuation above it.
    pub fn eta1_extended(&self, x: f64) -> f64 {
        let xs = self.grid.points();
        let eta = self.eta1();
        let n = xs.len();
        if x >= xs[n - 1] {
            return eta[n - 1];
        }
        if x <= xs[0] {
            // log-log linear continuation from the first two nodes
            let s = (eta[1] / eta[0]).ln() / (xs[1] / xs[0]).ln();
            return eta[0] * (x / xs[0]).powf(s.clamp(0.0, 8.0));
        }
        let p = xs.partition_point(|&v| v <= x).max(1);
        let (x0, x1) = (xs[p - 1], xs[p]);
        let (y0, y1) = (eta[p - 1], eta[p]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Three-point derivative on a nonuniform grid, one-sided at the ends.
fn derivative_nonuniform(xs: &[f64], f: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n];
    d[0] = (f[1] - f[0]) / (xs[1] - xs[0]);
    d[n - 1] = (f[n - 1] - f[n - 2]) / (xs[n - 1] - xs[n - 2]);
    for i in 1..n - 1 {
        let dm = xs[i] - xs[i - 1];
        let dp = xs[i + 1] - xs[i];
        d[i] = (dm * dm * f[i + 1] - dp * dp * f[i - 1] + (dp * dp - dm * dm) * f[i])
            / (dm * dp * (dm + dp));
    }
    d
}

/// Assemble all spectral data from `k >= 2` modes.
pub fn build_spectral_data(
    model: &DiffusionModel,
    gen: &GeneratorMatrix,
    k: usize,
) -> Result<SpectralData, SpectralError> {
    assert!(k >= 2, "need at least two modes");
    let modes = eigen_solve(gen, k)?;
    let grid = gen.grid().clone();
    let xs = grid.points();
    let w = gen.symmetrizing_weights();
    let eta1 = &modes[0].eta;
    for (i, v) in eta1.iter().enumerate() {
        if *v <= 0.0 {
            return Err(SpectralError::NotPositive { index: i, x: xs[i] });
        }
    }
    // the next mode must oscillate exactly once
    let eta2 = &modes[1].eta;
    let eta2_max = eta2.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let significant: Vec<f64> = eta2
        .iter()
        .copied()
        .filter(|v| v.abs() > 1e-10 * eta2_max)
        .collect();
    let changes = significant
        .windows(2)
        .filter(|p| p[0].signum() != p[1].signum())
        .count();
    if changes != 1 {
        return Err(SpectralError::SignChanges { count: changes });
    }

    let m_eta1: f64 = eta1.iter().zip(w).map(|(e, m)| e * m).sum();
    let alpha: Vec<f64> = eta1.iter().zip(w).map(|(e, m)| e * m / m_eta1).collect();
    let beta: Vec<f64> = eta1.iter().zip(w).map(|(e, m)| e * e * m).collect();
    let deta1 = derivative_nonuniform(xs, eta1);
    let q_tilde: Vec<f64> = xs
        .iter()
        .zip(eta1.iter().zip(deta1.iter()))
        .map(|(x, (e, de))| model.drift(*x) - de / e)
        .collect();

    Ok(SpectralData {
        grid,
        lambdas: modes.iter().map(|m| m.lambda).collect(),
        etas: modes.into_iter().map(|m| m.eta).collect(),
        m_eta1,
        alpha,
        beta,
        q_tilde,
    })
}

/// The conditioned-process generator `L~ = D_eta1^{-1} (L + lambda1) D_eta1`
/// as an explicit matrix, symmetrized by the quasi-ergodic weights `beta`.
pub fn h_transform_generator(
    gen: &GeneratorMatrix,
    spec: &SpectralData,
) -> Result<GeneratorMatrix, SpectralError> {
    let n = gen.n();
    let eta1 = spec.eta1();
    let lambda1 = spec.lambda1();
    let mut sub = vec![0.0; n - 1];
    let mut sup = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    for i in 0..n {
        diag[i] = gen.diag()[i] + lambda1;
        if i > 0 {
            sub[i - 1] = gen.sub()[i - 1] * eta1[i - 1] / eta1[i];
        }
        if i + 1 < n {
            sup[i] = gen.sup()[i] * eta1[i + 1] / eta1[i];
        }
    }
    let log_beta: Vec<f64> = eta1
        .iter()
        .zip(gen.log_symmetrizing_weights())
        .map(|(e, lw)| 2.0 * e.ln() + lw)
        .collect();
    Ok(GeneratorMatrix {
        grid: gen.grid().clone(),
        sub,
        diag,
        sup,
        weights: spec.beta().to_vec(),
        log_weights: log_beta,
        left_bc: gen.left_bc,
        right_bc: gen.right_bc,
    })
}

/// Reversibility probe: max asymmetry of `D_beta L~` and the magnitude of
/// its largest entry.
pub fn verify_reversibility(gen_tilde: &GeneratorMatrix) -> (f64, f64) {
    gen_tilde.weighted_asymmetry()
}

fn left_action_residual(gen: &GeneratorMatrix, row: &[f64], shift: f64) -> f64 {
    // max_j |(row^T L)_j + shift row_j| / (sum_i row_i |L_ij| + |shift| row_j)
    let n = gen.n();
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut s = row[j] * gen.diag()[j];
        let mut mag = (row[j] * gen.diag()[j]).abs();
        if j > 0 {
            s += row[j - 1] * gen.sup()[j - 1];
            mag += (row[j - 1] * gen.sup()[j - 1]).abs();
        }
        if j + 1 < n {
            s += row[j + 1] * gen.sub()[j];
            mag += (row[j + 1] * gen.sub()[j]).abs();
        }
        s += shift * row[j];
        mag += (shift * row[j]).abs();
        if mag > 0.0 {
            worst = worst.max(s.abs() / mag);
        }
    }
    worst
}

/// Max deviation of `sum_i eta_a(i) eta_b(i) m_i` from the identity over
/// the first `k` modes.
pub fn orthonormality_residual(gen: &GeneratorMatrix, spec: &SpectralData, k: usize) -> f64 {
    let w = gen.symmetrizing_weights();
    let k = k.min(spec.n_modes());
    let mut worst = 0.0f64;
    for a in 1..=k {
        for b in a..=k {
            let dot: f64 = spec
                .eta(a)
                .iter()
                .zip(spec.eta(b).iter())
                .zip(w.iter())
                .map(|((x, y), m)| x * y * m)
                .sum();
            let want = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - want).abs());
        }
    }
    worst
}

/// Max relative deviation of the conditioned-generator spectrum from the
/// shifted original spectrum, over the smallest `k` nonzero modes (the
/// ground eigenvalue of `-L~` is compared against zero on the scale of
/// `lambda1`).
pub fn spectrum_shift_residual(
    gen_tilde: &GeneratorMatrix,
    spec: &SpectralData,
    k: usize,
) -> Result<f64, SpectralError> {
    let k = k.min(spec.n_modes() - 1);
    let tilde = eigen_solve(gen_tilde, k + 1)?;
    let mut worst = tilde[0].lambda.abs() / spec.lambda1().max(1e-300);
    for j in 1..=k {
        let want = spec.lambda(j + 1) - spec.lambda1();
        worst = worst.max((tilde[j].lambda - want).abs() / want.abs().max(1e-300));
    }
    Ok(worst)
}

/// Discrete stationarity of the quasi-stationary law: max componentwise
/// residual of `alpha^T L = -lambda1 alpha^T`, relative to the
/// pre-cancellation magnitude of each component.
pub fn alpha_stationarity_residual(gen: &GeneratorMatrix, spec: &SpectralData) -> f64 {
    left_action_residual(gen, spec.alpha(), spec.lambda1())
}

/// Invariance of the quasi-ergodic law under the conditioned dynamics:
/// max componentwise residual of `beta^T L~ = 0`.
pub fn beta_invariance_residual(gen_tilde: &GeneratorMatrix, spec: &SpectralData) -> f64 {
    left_action_residual(gen_tilde, spec.beta(), 0.0)
}

/// Result of the spectral-gap criterion probe.
#[derive(Debug, Clone, Copy)]
pub struct DeltaTilde {
    pub value: f64,
    pub argmax_b: f64,
}

/// `sup_b int_eps^b exp(Q)/eta1^2 dy * int_b^R exp(-Q) eta1^2 dz`
/// over the sampled base points, the truncated-domain proxy for the
/// spectral-gap criterion of the conditioned process.
pub fn delta_tilde(
    model: &DiffusionModel,
    spec: &SpectralData,
    b_samples: &[f64],
) -> Result<DeltaTilde, SpectralError> {
    let eps = spec.grid().eps().max(1e-12);
    let r = spec.grid().right_truncation();
    let mut best = f64::NEG_INFINITY;
    let mut best_b = f64::NAN;
    for &b in b_samples {
        if !(b > eps && b < r) {
            continue;
        }
        let m1 = model.clone();
        let s1 = spec.clone();
        let left = adaptive_log_quadrature(
            move |y| {
                m1.eval_q(y)
                    .map(|q| q - 2.0 * s1.eta1_extended(y).ln())
                    .unwrap_or(f64::NAN)
            },
            eps,
            b,
            1e-8,
            QUAD_MAX_SUBDIV,
        )?;
        let m2 = model.clone();
        let s2 = spec.clone();
        let right = adaptive_log_quadrature(
            move |z| {
                m2.eval_q(z)
                    .map(|q| -q + 2.0 * s2.eta1_extended(z).ln())
                    .unwrap_or(f64::NAN)
            },
            b,
            r,
            1e-8,
            QUAD_MAX_SUBDIV,
        )?;
        let v = left + right;
        if v > best {
            best = v;
            best_b = b;
        }
    }
    Ok(DeltaTilde {
        value: best.exp(),
        argmax_b: best_b,
    })
}

/// The h-transformed dynamics as a standalone drift model: `q_tilde`
/// tabulated on the grid (linear interpolation) with the structural
/// off-grid continuation `q_tilde = q - (log eta1)'`, i.e. `q - s/x`
/// below the grid (power-law eta1 with fitted exponent `s`) and plain `q`
/// above it (eta1 flat under the reflecting truncation). A constant
/// extension would misclassify infinity: constant drift makes
/// `J(inf) = int dy / (2 q_inf)` diverge regardless of the true tail.
///
/// The antiderivative is exact: trapezoid cumulative of the interpolant
/// inside the table, the closed form of the continuation outside, anchored
/// at `Q~(1) = 0`.
pub fn q_tilde_model(spec: &SpectralData, model: &DiffusionModel) -> DiffusionModel {
    let xs = spec.grid().points().to_vec();
    let qs = spec.q_tilde().to_vec();
    let n = xs.len();
    let eta = spec.eta1();
    // power-law exponent of eta1 near the left edge
    let s_left = ((eta[1] / eta[0]).ln() / (xs[1] / xs[0]).ln()).clamp(0.0, 8.0);
    // cumulative int of 2 q~ from xs[0]
    let mut cum = vec![0.0f64; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + (qs[i - 1] + qs[i]) * (xs[i] - xs[i - 1]);
    }
    let (x_lo, x_hi) = (xs[0], xs[n - 1]);
    let base = model.clone();
    let q_at = {
        let xs = xs.clone();
        let qs = qs.clone();
        let base = base.clone();
        move |x: f64| -> f64 {
            if x <= x_lo {
                // int_x^{x_lo} 2 (q - s/t) dt subtracted from cum[0]
                let dq = base.eval_q(x_lo).unwrap_or(f64::NAN) - base.eval_q(x).unwrap_or(f64::NAN);
                return cum[0] - dq + 2.0 * s_left * (x_lo / x).ln();
            }
            if x >= x_hi {
                let dq =
                    base.eval_q(x).unwrap_or(f64::NAN) - base.eval_q(x_hi).unwrap_or(f64::NAN);
                return cum[n - 1] + dq;
            }
            let p = xs.partition_point(|&v| v <= x).max(1);
            let (x0, x1) = (xs[p - 1], xs[p]);
            let (q0, q1) = (qs[p - 1], qs[p]);
            let qx = q0 + (q1 - q0) * (x - x0) / (x1 - x0);
            cum[p - 1] + (q0 + qx) * (x - x0)
        }
    };
    let anchor = q_at(1.0);
    let drift_table = crate::numerics::interp::LinearTable::new(xs, qs);
    let base_drift = model.clone();
    DiffusionModel::new("q_tilde", move |x| {
        if x < x_lo {
            base_drift.drift(x) - s_left / x
        } else if x > x_hi {
            base_drift.drift(x)
        } else {
            drift_table.eval(x)
        }
    })
    .with_q_closed_form(move |x| q_at(x) - anchor)
    .with_domain_hint(spec.grid().eps().max(1e-6), spec.grid().right_truncation())
}

/// Boundary classification of the h-transformed dynamics at an endpoint.
pub fn classify_q_process_boundary(
    spec: &SpectralData,
    model: &DiffusionModel,
    endpoint: boundary::IntegralTarget,
    b: f64,
) -> Result<BoundaryClass, SpectralError> {
    let qt = q_tilde_model(spec, model);
    Ok(boundary::classify_boundary(&qt, endpoint, b)?.classification)
}
