//! The fixed-point driver.
//!
//! `T(v) = u` where `H` solves the curvature step on `v` and `u` solves the
//! prescribed mean curvature problem for `H`. Starting from the minimal
//! surface with boundary values `g`, the driver iterates
//! `v <- (1 - omega) v + omega T(v)`.
//!
//! A run is converged when the iterate moves by at most `tol` in the sup norm
//! and the final pair passes the residual certificate: both the curvature
//! equation `div_h(a(u) grad H)` and the prescribed mean curvature residual
//! are at most ten times the Newton tolerance. Close to the fixed point the
//! warm-started Newton solve takes no step at all, after which `u` and `H`
//! are consistent to solver precision.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admissible::{check_h, check_h_field, AdmissibilityOptions, AdmissibilityReport};
use crate::calculus::{energy_geometric, energy_simplified, functional_j};
use crate::elliptic::{curvature_step, elliptic_residual};
use crate::field::{FieldKind, ScalarField};
use crate::geometry::{BoundaryData, Grid};
use crate::pmc::{pmc_residual, rms, solve_pmc, NewtonLog, NewtonOptions, PmcFailure};
use crate::{Clock, Error, Mode, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterateOptions {
    pub mode: Mode,
    /// Stop once `||v_{k+1} - v_k||_inf <= tol` (and the certificate holds).
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation in `(0, 1]`.
    pub omega: f64,
    /// Record energies at every step, not only the last.
    pub record_energy: bool,
    /// Run even if a required admissibility condition fails.
    pub force: bool,
    pub admissibility: AdmissibilityOptions,
    pub newton: NewtonOptions,
}

impl Default for IterateOptions {
    fn default() -> Self {
        IterateOptions {
            mode: Mode::Simplified,
            tol: 1e-8,
            max_iter: 50,
            omega: 1.0,
            record_energy: true,
            force: false,
            admissibility: AdmissibilityOptions::default(),
            newton: NewtonOptions::default(),
        }
    }
}

impl IterateOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::InvalidOption(alloc::format!(
                "tol = {}, max_iter = {}, omega = {}",
                self.tol,
                self.max_iter,
                self.omega
            )));
        }
        self.newton.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Status {
    Converged,
    MaxIters,
    PmcFailure,
}

/// One outer iteration `k`: the map was applied to `v_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OuterRow {
    pub k: usize,
    /// `||v_{k+1} - v_k||_inf`.
    pub dv: f64,
    /// `||H_k - H_{k-1}||_inf` (against zero for `k = 0`).
    pub dh: f64,
    /// Energies of the pair `(H_k, u_k)`; absent unless recorded.
    pub e_simplified: Option<f64>,
    pub e_geometric: Option<f64>,
    pub newton_steps: usize,
    pub omega: f64,
}

/// Residuals of the final pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Certificate {
    pub elliptic: f64,
    pub pmc: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FailureInfo {
    pub k: usize,
    pub stage: f64,
    pub best_residual: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Timings {
    pub total: f64,
    pub elliptic: f64,
    pub pmc: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveReport {
    pub status: Status,
    pub mode: Mode,
    pub outer_iterations: usize,
    pub history: Vec<OuterRow>,
    pub admissibility: AdmissibilityReport,
    /// Unit-ball bound on the final curvature field.
    pub field_check: Option<AdmissibilityReport>,
    pub certificate: Option<Certificate>,
    pub e_simplified: Option<f64>,
    pub e_geometric: Option<f64>,
    pub newton_steps_total: usize,
    pub initial_newton: Option<NewtonLog>,
    pub failure: Option<FailureInfo>,
    /// Wall-clock seconds; never serialized, so reports of identical runs
    /// compare equal as text.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub report: SolveReport,
    pub u: ScalarField,
    pub h: ScalarField,
}

/// What an observer sees after each outer iteration.
pub struct Snapshot<'a> {
    pub k: usize,
    pub v: &'a ScalarField,
    pub u: &'a ScalarField,
    pub h: &'a ScalarField,
}

pub struct TMapOutput {
    pub u: ScalarField,
    pub h: ScalarField,
    pub log: NewtonLog,
}

/// One application of the map, warm-starting Newton from `v`.
pub fn t_map(v: &ScalarField, bd: &BoundaryData, grid: &Grid, mode: Mode, newton: &NewtonOptions) -> Result<TMapOutput> {
    let h = curvature_step(v, bd, grid, mode)?;
    let sol = solve_pmc(&h, bd, grid, Some(v), newton)?;
    Ok(TMapOutput { u: sol.u, h, log: sol.log })
}

/// The residual certificate of a pair.
pub fn certificate(u: &ScalarField, h: &ScalarField, bd: &BoundaryData, grid: &Grid, mode: Mode, tol: f64) -> Result<Certificate> {
    let elliptic = rms(&elliptic_residual(h, u, grid, mode)?);
    let pmc = rms(pmc_residual(u, h, bd, grid)?.interior(grid));
    let bound = 10.0 * tol;
    Ok(Certificate { elliptic, pmc, bound, holds: elliptic <= bound && pmc <= bound })
}

fn relax(v: &ScalarField, u: &ScalarField, omega: f64) -> ScalarField {
    let mut out = v.clone();
    for (o, x) in out.values_mut().iter_mut().zip(u.values()) {
        *o = (1.0 - omega) * *o + omega * x;
    }
    out
}

/// Iterates the map to a fixed point. Refuses data that fails a required
/// admissibility condition unless `opts.force` is set.
pub fn fixed_point(
    bd: &BoundaryData,
    grid: &Grid,
    opts: &IterateOptions,
    clock: &dyn Clock,
    observer: &mut dyn FnMut(&Snapshot<'_>),
) -> Result<FixedPoint> {
    opts.validate()?;
    bd.check_grid(grid)?;
    let admissibility = check_h(bd, grid, &opts.admissibility)?;
    if !admissibility.required_ok() && !opts.force {
        return Err(Error::Inadmissible(Box::new(admissibility)));
    }
    let t_start = clock.now();
    let mut timings = Timings::default();
    let mode = opts.mode;
    let mut report = SolveReport {
        status: Status::MaxIters,
        mode,
        outer_iterations: 0,
        history: Vec::new(),
        admissibility,
        field_check: None,
        certificate: None,
        e_simplified: None,
        e_geometric: None,
        newton_steps_total: 0,
        initial_newton: None,
        failure: None,
        timings,
    };

    let zero = ScalarField::zeros(grid, FieldKind::Curvature);
    let t0 = clock.now();
    let start = solve_pmc(&zero, bd, grid, None, &opts.newton);
    timings.pmc += clock.now() - t0;
    let mut v = match start {
        Ok(sol) => {
            report.newton_steps_total += sol.log.steps();
            report.initial_newton = Some(sol.log);
            sol.u
        }
        Err(Error::Pmc(f)) => {
            report.status = Status::PmcFailure;
            report.failure = Some(FailureInfo { k: 0, stage: f.stage, best_residual: f.best_residual });
            timings.total = clock.now() - t_start;
            report.timings = timings;
            let u = harmonic_guess(bd, grid)?;
            return Ok(FixedPoint { report, u, h: zero });
        }
        Err(e) => return Err(e),
    };

    let mut omega = opts.omega;
    let mut prev: Option<(ScalarField, ScalarField)> = None; // (v_{k-1}, u_{k-1})
    let mut h_prev = zero.clone();
    let mut last_u = v.clone();
    let mut last_h = zero;

    for k in 0..opts.max_iter {
        let mut attempt = apply(&v, bd, grid, opts, clock, &mut timings);
        if let Err(Error::Pmc(_)) = &attempt {
            if let Some((pv, pu)) = &prev {
                omega *= 0.5;
                v = relax(pv, pu, omega);
                attempt = apply(&v, bd, grid, opts, clock, &mut timings);
            }
        }
        let out = match attempt {
            Ok(out) => out,
            Err(Error::Pmc(f)) => {
                let f: Box<PmcFailure> = f;
                report.status = Status::PmcFailure;
                report.failure = Some(FailureInfo { k, stage: f.stage, best_residual: f.best_residual });
                report.outer_iterations = k;
                break;
            }
            Err(e) => return Err(e),
        };
        report.newton_steps_total += out.log.steps();
        let v_next = relax(&v, &out.u, omega);
        let dv = v_next.max_abs_diff(&v);
        let dh = out.h.max_abs_diff(&h_prev);
        let last = dv <= opts.tol || k + 1 == opts.max_iter;
        let (es, eg) = if opts.record_energy || last {
            (Some(energy_simplified(&out.h, &out.u, grid)?), Some(energy_geometric(&out.h, &out.u, grid)?))
        } else {
            (None, None)
        };
        report.history.push(OuterRow {
            k,
            dv,
            dh,
            e_simplified: es,
            e_geometric: eg,
            newton_steps: out.log.steps(),
            omega,
        });
        observer(&Snapshot { k, v: &v, u: &out.u, h: &out.h });
        report.outer_iterations = k + 1;
        h_prev = out.h.clone();
        let done = dv <= opts.tol && {
            let c = certificate(&out.u, &out.h, bd, grid, mode, opts.newton.tol)?;
            report.certificate = Some(c);
            c.holds
        };
        prev = Some((v, out.u.clone()));
        v = v_next;
        last_u = out.u;
        last_h = out.h;
        if done {
            report.status = Status::Converged;
            break;
        }
    }

    if report.history.last().is_some_and(|r| r.e_simplified.is_none()) {
        let row = report.history.last_mut().unwrap();
        row.e_simplified = Some(energy_simplified(&last_h, &last_u, grid)?);
        row.e_geometric = Some(energy_geometric(&last_h, &last_u, grid)?);
    }
    if let Some(row) = report.history.last() {
        report.e_simplified = row.e_simplified;
        report.e_geometric = row.e_geometric;
    }
    if report.certificate.is_none() && !report.history.is_empty() {
        report.certificate = Some(certificate(&last_u, &last_h, bd, grid, mode, opts.newton.tol)?);
    }
    report.field_check = Some(check_h_field(&last_h, grid, opts.admissibility.eps0)?);
    timings.total = clock.now() - t_start;
    report.timings = timings;
    Ok(FixedPoint { report, u: last_u, h: last_h })
}

fn apply(
    v: &ScalarField,
    bd: &BoundaryData,
    grid: &Grid,
    opts: &IterateOptions,
    clock: &dyn Clock,
    timings: &mut Timings,
) -> Result<TMapOutput> {
    let t0 = clock.now();
    let h = curvature_step(v, bd, grid, opts.mode)?;
    let t1 = clock.now();
    let sol = solve_pmc(&h, bd, grid, Some(v), &opts.newton);
    let t2 = clock.now();
    timings.elliptic += t1 - t0;
    timings.pmc += t2 - t1;
    let sol = sol?;
    Ok(TMapOutput { u: sol.u, h, log: sol.log })
}

fn harmonic_guess(bd: &BoundaryData, grid: &Grid) -> Result<ScalarField> {
    crate::elliptic::harmonic_extension(grid, bd.g_values(), FieldKind::Height)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeReport {
    pub samples: usize,
    pub evaluations: usize,
    /// Smallest `J(u + eps delta) - J(u)` seen.
    pub worst_margin: f64,
    pub j_value: f64,
}

/// Perturbation amplitudes tried for every sampled direction.
pub const PROBE_EPS: [f64; 4] = [1e-2, -1e-2, 1e-3, -1e-3];

/// Random smooth direction vanishing on the boundary, with sup norm one.
pub fn random_bump(grid: &Grid, rng: &mut impl Rng) -> ScalarField {
    let spec = *grid.spec();
    let c = spec.center();
    let scale = 0.5 * spec.diameter();
    let a: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let k: [f64; 2] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
    let phase: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
    let b: f64 = rng.gen_range(-1.0..1.0);
    let ni = grid.num_interior();
    let mut vals: Vec<f64> = grid
        .positions()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i >= ni {
                return 0.0;
            }
            let x = (p[0] - c[0]) / scale;
            let y = (p[1] - c[1]) / scale;
            let smooth = a[0] + a[1] * x + a[2] * y + b * libm::cos(k[0] * x + k[1] * y + phase);
            spec.bubble(*p) * smooth
        })
        .collect();
    let m = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        vals.iter_mut().for_each(|v| *v /= m);
    }
    ScalarField::from_values(grid, FieldKind::Height, vals).expect("finite by construction")
}

/// Samples `J(u + eps delta) - J(u)` over random zero-trace directions.
pub fn local_minimality_probe(
    u: &ScalarField,
    h: &ScalarField,
    bd: &BoundaryData,
    grid: &Grid,
    samples: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let j0 = functional_j(u, h, bd, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut evaluations = 0;
    for _ in 0..samples {
        let delta = random_bump(grid, &mut rng);
        for eps in PROBE_EPS {
            let mut w = u.clone();
            for (x, d) in w.values_mut().iter_mut().zip(delta.values()) {
                *x += eps * d;
            }
            let j = functional_j(&w, h, bd, grid)?;
            worst = worst.min(j - j0);
            evaluations += 1;
        }
    }
    if evaluations == 0 {
        worst = 0.0;
    }
    Ok(ProbeReport { samples, evaluations, worst_margin: worst, j_value: j0 })
}
