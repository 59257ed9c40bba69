//! Step two of the fixed-point map: `div(grad u / D(u)) = n H`, `u = g` on the
//! boundary, by damped Newton iteration.
//!
//! The discrete equation is the stationarity condition of the piecewise-linear
//! area functional plus the bulk term `n int H u`: with
//! `F(p) = p / sqrt(1 + |p|^2)` and `G_i = sum_T |T| F(grad u_T) . grad phi_i`,
//! the residual is `R_i = -G_i / w_i - n H_i`. Its Jacobian is `-W^{-1} K`,
//! where `K` is assembled like the curvature step with the element tensor
//! `grad F(p) = (I - p p^T / D^2) / D`. `K` is symmetric positive definite,
//! so every Newton step is a conjugate-gradient solve and a descent direction
//! for the residual norm.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::calculus::area_density;
use crate::elliptic::{assemble, harmonic_extension, CoefficientField, Tensor};
use crate::field::{FieldKind, ScalarField};
use crate::geometry::{BoundaryData, Grid};
use crate::sparse::{pcg, CgOptions, CsrMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Tolerance on `sqrt(sum R_i^2 / N)` over interior nodes.
    pub tol: f64,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
    pub min_step: f64,
    /// Fractions of `H` tried in turn when the direct solve fails.
    pub continuation: Vec<f64>,
    pub cg_rel_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 50,
            tol: 1e-10,
            armijo: 1e-4,
            min_step: 1.0 / (1u64 << 20) as f64,
            continuation: vec![0.25, 0.5, 0.75, 1.0],
            cg_rel_tol: 1e-12,
            cg_max_iter: 50_000,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iter >= 1
            && self.tol > 0.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.min_step > 0.0
            && self.min_step <= 1.0
            && self.cg_rel_tol > 0.0
            && self.continuation.iter().all(|t| *t > 0.0 && *t <= 1.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidOption(alloc::format!("{self:?}")))
        }
    }

    fn cg(&self) -> CgOptions {
        CgOptions { rel_tol: self.cg_rel_tol, max_iter: self.cg_max_iter }
    }
}

/// One Newton iterate. Row `k` holds the residual after `k` steps of its
/// stage; `step` is the line-search length that produced it (zero for the
/// starting point of a stage).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NewtonRow {
    pub k: usize,
    pub res_l2: f64,
    pub res_inf: f64,
    pub step: f64,
    /// Fraction of `H` being solved for.
    pub t: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NewtonLog {
    pub rows: Vec<NewtonRow>,
    /// Whether the continuation schedule was used.
    pub continuation: bool,
}

impl NewtonLog {
    /// Newton steps taken over all stages.
    pub fn steps(&self) -> usize {
        self.rows.iter().filter(|r| r.k > 0).count()
    }

    /// Largest `|R_{k+1}| / |R_k|^2` over steps starting below `1e-3`,
    /// ignoring steps that land within a factor 100 of `floor`, where rounding
    /// dominates.
    pub fn kappa(&self, floor: f64) -> Option<f64> {
        self.rows
            .windows(2)
            .filter(|w| w[1].k == w[0].k + 1 && w[0].res_l2 <= 1e-3 && w[1].res_l2 > 100.0 * floor)
            .map(|w| w[1].res_l2 / (w[0].res_l2 * w[0].res_l2))
            .reduce(f64::max)
    }

    /// True if every step starting below `1e-3` was a full step.
    pub fn full_steps_in_tail(&self) -> bool {
        self.rows.windows(2).filter(|w| w[1].k == w[0].k + 1 && w[0].res_l2 <= 1e-3).all(|w| w[1].step == 1.0)
    }
}

/// Reported when no stage of the Newton solve converged.
#[derive(Debug, Clone, PartialEq)]
pub struct PmcFailure {
    /// Continuation fraction of the stage that failed; `1` for the direct solve.
    pub stage: f64,
    pub best_residual: f64,
    pub reason: FailureReason,
    pub log: NewtonLog,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureReason {
    MaxIterations,
    LineSearch,
    NonFinite,
    Linear(Error),
}

impl fmt::Display for PmcFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let why = match &self.reason {
            FailureReason::MaxIterations => "iteration limit reached",
            FailureReason::LineSearch => "line search stalled",
            FailureReason::NonFinite => "non-finite residual",
            FailureReason::Linear(_) => "linear solve failed",
        };
        write!(
            f,
            "prescribed mean curvature solve failed at continuation stage t = {}: {why}, best residual {:e}",
            self.stage, self.best_residual
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmcSolution {
    pub u: ScalarField,
    pub log: NewtonLog,
}

#[inline]
fn flux(p: [f64; 2]) -> [f64; 2] {
    let d = area_density(p);
    [p[0] / d, p[1] / d]
}

/// `grad F(p) = (I - p p^T / D^2) / D`, eigenvalues `1/D^3` along `p` and
/// `1/D` across it.
#[inline]
pub fn flux_jacobian(p: [f64; 2]) -> Tensor {
    let d2 = 1.0 + p[0] * p[0] + p[1] * p[1];
    let d = libm::sqrt(d2);
    let s = 1.0 / d;
    let c = 1.0 / (d2 * d);
    [[s - p[0] * p[0] * c, -p[0] * p[1] * c], [-p[1] * p[0] * c, s - p[1] * p[1] * c]]
}

/// Interior residual for full nodal vectors `u` and `h` (scaled by `t`).
fn residual_into(grid: &Grid, u: &[f64], h: &[f64], t: f64, r: &mut [f64]) {
    let ni = grid.num_interior();
    r.iter_mut().for_each(|x| *x = 0.0);
    for e in grid.elements() {
        let f = flux(e.gradient(u));
        for (&v, g) in e.verts().iter().zip(e.grads()) {
            if v < ni {
                r[v] += e.measure * (f[0] * g[0] + f[1] * g[1]);
            }
        }
    }
    let n = grid.dim() as f64;
    for i in 0..ni {
        r[i] = -r[i] / grid.weights()[i] - n * t * h[i];
    }
}

/// `sqrt(sum r_i^2 / N)`.
pub fn rms(r: &[f64]) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    libm::sqrt(r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64)
}

fn sup(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Nodal residual of the prescribed mean curvature equation for `u` with its
/// boundary values replaced by `g`; boundary entries are zero.
pub fn pmc_residual(u: &ScalarField, h: &ScalarField, bd: &BoundaryData, grid: &Grid) -> Result<ScalarField> {
    u.check_grid(grid)?;
    h.check_grid(grid)?;
    bd.check_grid(grid)?;
    let mut uv = u.values().to_vec();
    uv[grid.num_interior()..].copy_from_slice(bd.g_values());
    let mut r = vec![0.0; grid.num_nodes()];
    residual_into(grid, &uv, h.values(), 1.0, &mut r[..grid.num_interior()]);
    ScalarField::from_values(grid, FieldKind::Curvature, r)
}

/// The linearization of [`pmc_residual`] at a surface.
#[derive(Debug, Clone, PartialEq)]
pub struct PmcJacobian {
    grid_id: u64,
    matrix: CsrMatrix,
    tensors: Vec<Tensor>,
    inv_weights: Vec<f64>,
}

impl PmcJacobian {
    /// Symmetric positive definite `K`; the Jacobian is `-W^{-1} K`.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// `grad F` on every element.
    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// `J w` for an interior vector `w` (zero boundary values).
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut y = self.matrix.mul(w);
        for (yi, s) in y.iter_mut().zip(&self.inv_weights) {
            *yi = -*yi * s;
        }
        y
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }
}

fn jacobian_matrix(grid: &Grid, u: &[f64]) -> Result<(CsrMatrix, Vec<Tensor>)> {
    let tensors: Vec<Tensor> = grid.elements().iter().map(|e| flux_jacobian(e.gradient(u))).collect();
    let coef = CoefficientField::tensor(grid, tensors.clone())?;
    let zero = vec![0.0; grid.num_boundary()];
    let sys = assemble(&coef, grid, &zero)?;
    Ok((sys.matrix().clone(), tensors))
}

pub fn pmc_jacobian(u: &ScalarField, grid: &Grid) -> Result<PmcJacobian> {
    u.check_grid(grid)?;
    let (matrix, tensors) = jacobian_matrix(grid, u.values())?;
    let inv_weights = grid.weights()[..grid.num_interior()].iter().map(|w| 1.0 / w).collect();
    Ok(PmcJacobian { grid_id: grid.id(), matrix, tensors, inv_weights })
}

struct Stage<'a> {
    grid: &'a Grid,
    h: &'a [f64],
    t: f64,
    opts: &'a NewtonOptions,
}

impl Stage<'_> {
    /// Newton from `u` (full nodal vector, trace already set), in place.
    fn run(&self, u: &mut [f64], log: &mut NewtonLog) -> core::result::Result<(), (FailureReason, f64)> {
        let grid = self.grid;
        let ni = grid.num_interior();
        let w = &grid.weights()[..ni];
        let cg = self.opts.cg();
        let mut r = vec![0.0; ni];
        residual_into(grid, u, self.h, self.t, &mut r);
        let mut norm = rms(&r);
        log.rows.push(NewtonRow { k: 0, res_l2: norm, res_inf: sup(&r), step: 0.0, t: self.t, cg_iterations: 0 });
        if !norm.is_finite() {
            return Err((FailureReason::NonFinite, norm));
        }
        let mut best = norm;
        let mut trial = u.to_vec();
        let mut r_trial = vec![0.0; ni];
        for k in 1..=self.opts.max_iter {
            if norm <= self.opts.tol {
                return Ok(());
            }
            let (k_mat, _) = jacobian_matrix(grid, u).map_err(|e| (FailureReason::Linear(e), best))?;
            let rhs: Vec<f64> = r.iter().zip(w).map(|(ri, wi)| ri * wi).collect();
            let mut delta = vec![0.0; ni];
            let stats = pcg(&k_mat, &rhs, &mut delta, &cg).map_err(|e| (FailureReason::Linear(e), best))?;
            let mut alpha = 1.0;
            loop {
                for i in 0..ni {
                    trial[i] = u[i] + alpha * delta[i];
                }
                residual_into(grid, &trial, self.h, self.t, &mut r_trial);
                let tn = rms(&r_trial);
                if tn.is_finite() && tn <= (1.0 - self.opts.armijo * alpha) * norm {
                    u[..ni].copy_from_slice(&trial[..ni]);
                    core::mem::swap(&mut r, &mut r_trial);
                    norm = tn;
                    best = best.min(norm);
                    log.rows.push(NewtonRow {
                        k,
                        res_l2: norm,
                        res_inf: sup(&r),
                        step: alpha,
                        t: self.t,
                        cg_iterations: stats.iterations,
                    });
                    break;
                }
                alpha *= 0.5;
                if alpha < self.opts.min_step {
                    return Err((FailureReason::LineSearch, best));
                }
            }
        }
        if norm <= self.opts.tol {
            Ok(())
        } else {
            Err((FailureReason::MaxIterations, best))
        }
    }
}

/// Solves the prescribed mean curvature problem for the curvature field `h`
/// (its boundary entries are ignored) and boundary heights `g`.
///
/// Starts from the interior values of `u0`, or from the discrete harmonic
/// extension of `g`. If the direct solve fails, the problem is re-solved for
/// `t h` along the continuation schedule, each stage starting from the last.
pub fn solve_pmc(
    h: &ScalarField,
    bd: &BoundaryData,
    grid: &Grid,
    u0: Option<&ScalarField>,
    opts: &NewtonOptions,
) -> Result<PmcSolution> {
    h.check_grid(grid)?;
    bd.check_grid(grid)?;
    opts.validate()?;
    let ni = grid.num_interior();
    let start: Vec<f64> = match u0 {
        Some(u0) => {
            u0.check_grid(grid)?;
            let mut v = u0.values().to_vec();
            v[ni..].copy_from_slice(bd.g_values());
            v
        }
        None => harmonic_extension(grid, bd.g_values(), FieldKind::Height)?.into_values(),
    };
    let mut log = NewtonLog::default();
    let mut u = start.clone();
    let direct = Stage { grid, h: h.values(), t: 1.0, opts };
    let failure = match direct.run(&mut u, &mut log) {
        Ok(()) => return Ok(PmcSolution { u: ScalarField::from_values(grid, FieldKind::Height, u)?, log }),
        Err(f) => f,
    };
    if opts.continuation.is_empty() {
        return Err(Error::Pmc(alloc::boxed::Box::new(PmcFailure {
            stage: 1.0,
            best_residual: failure.1,
            reason: failure.0,
            log,
        })));
    }
    log.continuation = true;
    let mut u = start;
    for &t in &opts.continuation {
        let stage = Stage { grid, h: h.values(), t, opts };
        if let Err((reason, best)) = stage.run(&mut u, &mut log) {
            return Err(Error::Pmc(alloc::boxed::Box::new(PmcFailure { stage: t, best_residual: best, reason, log })));
        }
    }
    if opts.continuation.last() != Some(&1.0) {
        let stage = Stage { grid, h: h.values(), t: 1.0, opts };
        if let Err((reason, best)) = stage.run(&mut u, &mut log) {
            return Err(Error::Pmc(alloc::boxed::Box::new(PmcFailure { stage: 1.0, best_residual: best, reason, log })));
        }
    }
    Ok(PmcSolution { u: ScalarField::from_values(grid, FieldKind::Height, u)?, log })
}
