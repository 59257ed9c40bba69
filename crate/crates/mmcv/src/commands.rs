//! The five subcommands. Each prints a human-readable summary to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use mmcv_core::admissible::{check_h, AdmissibilityReport};
use mmcv_core::calculus::{energy_geometric, energy_simplified, sandwich_violations};
use mmcv_core::elliptic::{assemble, build_coefficient};
use mmcv_core::expr::Expr;
use mmcv_core::iterate::{fixed_point, local_minimality_probe, Status};
use mmcv_core::mms::{convergence_study, Manufactured, Study};
use mmcv_core::{BoundaryData, Clock, Error, FieldKind, Grid};

use crate::config::RunConfig;
use crate::output::{mtx_string, read_csv, vector_mtx_string, write_csv, write_obj};
use crate::report::{GridSummary, Report, ReportTimings, SCHEMA_VERSION};
use crate::{CmdResult, ConfigError, Outcome};

/// Parses `src` for config key `key`, pointing at the offending byte on error.
pub fn parse_expr(key: &str, src: &str) -> Result<Expr, ConfigError> {
    Expr::parse(src).map_err(|e| expr_error(key, src, &e))
}

fn expr_error(key: &str, src: &str, e: &Error) -> ConfigError {
    match e.offset() {
        Some(at) => {
            let col = src[..at.min(src.len())].chars().count();
            ConfigError(anyhow!("{key}: {e}\n    {src}\n    {}^", " ".repeat(col)))
        }
        None => ConfigError(anyhow!("{key}: {e}")),
    }
}

/// Grid and boundary data for a validated config.
pub fn problem(cfg: &RunConfig) -> Result<(Grid, BoundaryData), ConfigError> {
    cfg.validate()?;
    cfg.require_data()?;
    let g = parse_expr("data.g_expr", &cfg.data.g_expr)?;
    let h = parse_expr("data.h_expr", &cfg.data.h_expr)?;
    let grid = Grid::build(cfg.domain, cfg.grid.m)?;
    for (key, e, src) in [("data.g_expr", &g, &cfg.data.g_expr), ("data.h_expr", &h, &cfg.data.h_expr)] {
        for p in grid.boundary_positions() {
            e.eval(&grid.bindings(*p)).map_err(|err| expr_error(key, src, &err))?;
        }
    }
    let bd = BoundaryData::new(&grid, g, h)?;
    Ok((grid, bd))
}

pub fn print_admissibility(report: &AdmissibilityReport) {
    for c in &report.conditions {
        println!(
            "{:<22} {:<10} margin={:<12.6e} threshold={:<12.6e} samples={} {}",
            c.name.as_str(),
            format!("{:?}", c.verdict).to_uppercase(),
            c.margin,
            c.threshold,
            c.samples,
            if c.required { "required" } else { "informational" }
        );
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
}

pub fn check(cfg: &RunConfig) -> CmdResult {
    let (grid, bd) = problem(cfg)?;
    let report = check_h(&bd, &grid, &cfg.admissibility_options())?;
    print_admissibility(&report);
    let ok = report.required_ok();
    println!("admissible: {}", if ok { "yes" } else { "no" });
    Ok(if ok { Outcome::Success } else { Outcome::Failure })
}

fn create_dir(dir: &Path) -> Result<(), ConfigError> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write(path: PathBuf, text: String) -> Result<(), ConfigError> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn solve(cfg: &RunConfig, clock: &dyn Clock) -> CmdResult {
    let (grid, bd) = problem(cfg)?;
    let opts = cfg.iterate_options();
    let dir = cfg.output.dir.clone();
    create_dir(&dir)?;
    let snap_dir = dir.join("snapshots");
    if cfg.output.snapshots {
        create_dir(&snap_dir)?;
    }
    let mut snap_err: Option<anyhow::Error> = None;
    let mut observer = |s: &mmcv_core::iterate::Snapshot<'_>| {
        if !cfg.output.snapshots || snap_err.is_some() {
            return;
        }
        let r = write_csv(&snap_dir.join(format!("u_{:03}.csv", s.k)), s.u, &grid)
            .and_then(|_| write_csv(&snap_dir.join(format!("H_{:03}.csv", s.k)), s.h, &grid));
        if let Err(e) = r {
            snap_err = Some(e);
        }
    };
    let fp = match fixed_point(&bd, &grid, &opts, clock, &mut observer) {
        Ok(fp) => fp,
        Err(Error::Inadmissible(report)) => {
            print_admissibility(&report);
            println!("refusing inadmissible data; pass --force to run anyway");
            return Ok(Outcome::Failure);
        }
        Err(e @ (Error::LinearSolve { .. } | Error::Breakdown(_))) => {
            println!("solve failed: {e}");
            return Ok(Outcome::Failure);
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(e) = snap_err {
        return Err(ConfigError(e));
    }
    let converged = fp.report.status == Status::Converged;

    let t0 = clock.now();
    let probe = if converged && cfg.probe.samples > 0 {
        Some(local_minimality_probe(&fp.u, &fp.h, &bd, &grid, cfg.probe.samples, cfg.seed)?)
    } else {
        None
    };
    let probe_time = clock.now() - t0;

    let mut files = vec!["report.json".to_string(), "u.csv".into(), "H.csv".into(), "surface.obj".into()];
    write_csv(&dir.join("u.csv"), &fp.u, &grid)?;
    write_csv(&dir.join("H.csv"), &fp.h, &grid)?;
    write_obj(&dir.join("surface.obj"), &fp.u, &grid)?;
    if cfg.output.dump_system {
        let coef = build_coefficient(&fp.u, &grid, opts.mode)?;
        let sys = assemble(&coef, &grid, bd.h_values())?;
        write(dir.join("system.mtx"), mtx_string(sys.matrix()))?;
        write(dir.join("system_rhs.mtx"), vector_mtx_string(sys.rhs()))?;
        files.push("system.mtx".into());
        files.push("system_rhs.mtx".into());
    }

    let t = fp.report.timings;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        grid: GridSummary::of(&grid),
        result: fp.report,
        probe,
        files,
        timings: ReportTimings { total: t.total + probe_time, elliptic: t.elliptic, pmc: t.pmc, probe: probe_time },
    };
    write(dir.join("report.json"), report.to_json())?;

    let r = &report.result;
    println!("status: {:?}", r.status);
    println!("mode: {}", r.mode);
    println!("outer iterations: {}", r.outer_iterations);
    println!("newton steps: {}", r.newton_steps_total);
    if let (Some(es), Some(eg)) = (r.e_simplified, r.e_geometric) {
        println!("energy simplified: {es:.12e}");
        println!("energy geometric:  {eg:.12e}");
    }
    if let Some(c) = r.certificate {
        println!("certificate: elliptic {:.3e}, pmc {:.3e}, bound {:.1e}, holds {}", c.elliptic, c.pmc, c.bound, c.holds);
    }
    if let Some(f) = r.failure {
        println!("failure at iteration {}: stage t = {}, best residual {:.3e}", f.k, f.stage, f.best_residual);
    }
    if let Some(p) = &report.probe {
        println!("probe: {} directions, worst margin {:.3e}", p.samples, p.worst_margin);
    }
    println!("wrote {}", dir.display());
    Ok(if converged { Outcome::Success } else { Outcome::Failure })
}

/// The manufactured solution named by the config.
pub fn manufactured(cfg: &RunConfig) -> Result<Manufactured, ConfigError> {
    if let Some(name) = &cfg.mms.preset {
        return Ok(Manufactured::preset(name)?);
    }
    let src = cfg.mms.u_exact_expr.as_deref().ok_or_else(|| anyhow!("set mms.preset or mms.u_exact_expr"))?;
    cfg.domain.validate()?;
    Ok(Manufactured::from_expr(cfg.domain, parse_expr("mms.u_exact_expr", src)?))
}

pub fn print_study(s: &Study) {
    println!("{}: ", s.name);
    println!("{:>5} {:>12} {:>12} {:>12} {:>12} {:>12} {:>7} {:>5}", "m", "h", "err_H", "err_u", "E_simpl", "E_geom", "newton", "tail");
    for r in &s.rows {
        println!(
            "{:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>7} {:>5}",
            r.m, r.h, r.err_h, r.err_u, r.e_simplified, r.e_geometric, r.newton_steps, r.quadratic_tail
        );
    }
    let f = |o: Option<f64>| o.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    println!("{:>11} {:>8} {:>8} {:>8} {:>8}", "orders", "err_H", "err_u", "E_simpl", "E_geom");
    for o in &s.orders {
        println!(
            "{:>5}->{:<5} {:>8} {:>8} {:>8} {:>8}",
            o.from_m,
            o.to_m,
            f(o.err_h),
            f(o.err_u),
            f(o.e_simplified),
            f(o.e_geometric)
        );
    }
    println!("minimum order {}: {}", s.min_order, if s.passed { "passed" } else { "FAILED" });
}

pub fn convergence(cfg: &RunConfig) -> CmdResult {
    let man = manufactured(cfg)?;
    let ms = &cfg.mms.resolutions;
    if ms.len() < 2 || ms.windows(2).any(|w| w[0] >= w[1]) || ms[0] < 4 {
        return Err(anyhow!("mms.resolutions must be increasing, at least two, all >= 4").into());
    }
    let newton = cfg.newton_options();
    newton.validate()?;
    let study = match convergence_study(&man, ms, &newton, cfg.mms.min_order) {
        Ok(s) => s,
        Err(e @ (Error::Pmc(_) | Error::LinearSolve { .. } | Error::Breakdown(_))) => {
            println!("study failed: {e}");
            return Ok(Outcome::Failure);
        }
        Err(e) => return Err(e.into()),
    };
    print_study(&study);
    create_dir(&cfg.output.dir)?;
    let json = serde_json::to_string_pretty(&study).expect("study serializes") + "\n";
    write(cfg.output.dir.join("convergence.json"), json)?;
    Ok(if study.passed { Outcome::Success } else { Outcome::Failure })
}

pub fn energy(cfg: &RunConfig, u_path: &Path, h_path: &Path) -> CmdResult {
    cfg.validate()?;
    let grid = Grid::build(cfg.domain, cfg.grid.m)?;
    let u = read_csv(u_path, &grid, FieldKind::Height)?;
    let h = read_csv(h_path, &grid, FieldKind::Curvature)?;
    let es = energy_simplified(&h, &u, &grid)?;
    let eg = energy_geometric(&h, &u, &grid)?;
    let violations = sandwich_violations(&h, &u, &grid, 1e-12)?;
    println!("energy simplified: {es:.12e}");
    println!("energy geometric:  {eg:.12e}");
    println!("sandwich violations: {violations}");
    Ok(if violations == 0 && eg <= es { Outcome::Success } else { Outcome::Failure })
}

pub fn export(cfg: &RunConfig, u_path: &Path) -> CmdResult {
    cfg.validate()?;
    let grid = Grid::build(cfg.domain, cfg.grid.m)?;
    let u = read_csv(u_path, &grid, FieldKind::Height)?;
    create_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join("surface.obj");
    write_obj(&path, &u, &grid)?;
    println!("wrote {}", path.display());
    Ok(Outcome::Success)
}
