use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmcv::report::without_timings;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmcv"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn check_prints_unit_disk_margins() {
    let o = run(&["check", configs().join("reference.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("H_SMALLNESS") && s.contains("margin=7.000000e-1"));
    assert!(s.contains("H_BOUNDARY_CURV") && s.contains("margin=2.000000e-1"));
}

#[test]
fn check_rejects_large_curvature() {
    let dir = scratch("large");
    let cfg = write_config(&dir, "data.g_expr = \"0\"\ndata.h_expr = \"0.6\"\n");
    assert_eq!(code(&run(&["check", &cfg])), 1);
    let out = dir.join("out");
    let o = run(&["solve", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("refusing"));
    assert!(!out.join("report.json").exists());
}

#[test]
fn malformed_expression_points_at_the_error() {
    let dir = scratch("malformed");
    let cfg = write_config(&dir, "data.g_expr = \"0\"\ndata.h_expr = \"0.3 * (x +\"\n");
    let o = run(&["check", &cfg]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("data.h_expr") && err.contains("byte 10"), "{err}");
    assert!(err.contains("          ^"), "{err}");
}

#[test]
fn config_errors_exit_two() {
    let dir = scratch("config");
    let unknown = write_config(&dir, "data.g_expr = \"0\"\ndata.h_expr = \"0\"\nsolve.speed = 3\n");
    assert_eq!(code(&run(&["check", &unknown])), 2);
    assert_eq!(code(&run(&["check", "/nonexistent/run.toml"])), 2);
    let small = write_config(&dir, "grid.m = 3\ndata.g_expr = \"0\"\ndata.h_expr = \"0\"\n");
    assert_eq!(code(&run(&["check", &small])), 2);
    let unbound = write_config(&dir, "data.g_expr = \"z\"\ndata.h_expr = \"0\"\n");
    assert_eq!(code(&run(&["check", &unbound])), 2);
    assert_eq!(code(&run(&["solve"])), 2);
}

#[test]
fn plane_fixed_point_is_flat() {
    let dir = scratch("plane");
    let out = dir.join("out");
    let o = run(&["solve", configs().join("plane.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let obj = fs::read_to_string(out.join("surface.obj")).unwrap();
    let mut vertices = 0;
    for l in obj.lines().filter(|l| l.starts_with("v ")) {
        let v: Vec<f64> = l[2..].split(' ').map(|t| t.parse().unwrap()).collect();
        assert!((v[2] - (3.0 * v[0] - 2.0 * v[1])).abs() < 1e-8);
        vertices += 1;
    }
    assert_eq!(vertices, 33 * 33);
    let csv = fs::read_to_string(out.join("u.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,value"));
}

#[test]
fn solve_writes_every_requested_file() {
    let dir = scratch("files");
    let out = dir.join("out");
    let o = run(&[
        "solve",
        configs().join("varying.toml").to_str().unwrap(),
        "--m",
        "17",
        "--snapshots",
        "--dump-system",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    for f in ["report.json", "u.csv", "H.csv", "surface.obj", "system.mtx", "system_rhs.mtx"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["grid"]["m"], 17);
    let iters = report["result"]["outer_iterations"].as_u64().unwrap() as usize;
    let snaps = fs::read_dir(out.join("snapshots")).unwrap().count();
    assert_eq!(snaps, 2 * iters);
    let mtx = fs::read_to_string(out.join("system.mtx")).unwrap();
    let n = report["grid"]["interior"].as_u64().unwrap();
    assert!(mtx.lines().nth(1).unwrap().starts_with(&format!("{n} {n} ")));
}

#[test]
fn varying_curvature_matches_golden() {
    let dir = scratch("varying");
    let out = dir.join("out");
    let o = run(&["solve", configs().join("varying.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/varying_simplified.json");
    let a = without_timings(&fs::read_to_string(golden).unwrap()).unwrap();
    let b = without_timings(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["e_simplified", "e_geometric"] {
        let (x, y) = (a["result"][key].as_f64().unwrap(), b["result"][key].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-6 * x.abs(), "{key}: {x} vs {y}");
    }
    assert_eq!(a["result"]["outer_iterations"], b["result"]["outer_iterations"]);
}

#[test]
fn curves_solve_and_export() {
    let dir = scratch("curve");
    let out = dir.join("out");
    let o = run(&["solve", configs().join("curve.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(out.join("u.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,value"));
    assert_eq!(csv.lines().count(), 1 + 129);
    let obj = fs::read_to_string(out.join("surface.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("l ")).count(), 1);
}

#[test]
fn energy_command_matches_analytic_values() {
    let dir = scratch("energy");
    let cfg = write_config(
        &dir,
        "domain.kind = \"rectangle\"\ndomain.ax = 0.0\ndomain.bx = 1.0\ndomain.ay = 0.0\ndomain.by = 1.0\ngrid.m = 17\n",
    );
    let field = |name: &str, f: &dyn Fn(f64, f64) -> f64| {
        let mut s = String::from("x,y,value\n");
        for j in 0..17 {
            for i in 0..17 {
                let (x, y) = (i as f64 / 16.0, j as f64 / 16.0);
                s.push_str(&format!("{x},{y},{}\n", f(x, y)));
            }
        }
        let p = dir.join(name);
        fs::write(&p, s).unwrap();
        p.to_str().unwrap().to_owned()
    };
    let zero = field("zero.csv", &|_, _| 0.0);
    let slope = field("slope.csv", &|x, _| x);
    let energies = |u: &str, h: &str| {
        let o = run(&["energy", &cfg, "--u", u, "--H", h]);
        assert_eq!(code(&o), 0);
        let s = stdout(&o);
        assert!(s.contains("sandwich violations: 0"));
        let grab = |key: &str| -> f64 {
            s.lines().find(|l| l.starts_with(key)).unwrap().split(':').nth(1).unwrap().trim().parse().unwrap()
        };
        (grab("energy simplified"), grab("energy geometric"))
    };
    let (es, eg) = energies(&zero, &slope);
    assert!((es - 0.5).abs() < 1e-12 && (eg - 0.5).abs() < 1e-12);
    let (es, eg) = energies(&slope, &slope);
    assert!((es - 0.5f64.sqrt()).abs() < 1e-12);
    assert!((eg - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-12);
    let constant = field("const.csv", &|_, _| 0.7);
    let (es, eg) = energies(&slope, &constant);
    assert!(es.abs() < 1e-24 && eg.abs() < 1e-24);

    // node layout must match the configured grid
    let coarse = write_config(&dir, "domain.kind = \"rectangle\"\ndomain.ax = 0.0\ndomain.bx = 1.0\ndomain.ay = 0.0\ndomain.by = 1.0\ngrid.m = 9\n");
    assert_eq!(code(&run(&["energy", &coarse, "--u", &zero, "--H", &slope])), 2);
}

#[test]
fn export_writes_obj_for_a_field() {
    let dir = scratch("export");
    let solved = dir.join("solved");
    let cfg = configs().join("varying.toml");
    assert_eq!(code(&run(&["solve", cfg.to_str().unwrap(), "--m", "17", "--out", solved.to_str().unwrap()])), 0);
    let out = dir.join("exported");
    let o = run(&[
        "export",
        cfg.to_str().unwrap(),
        "--m",
        "17",
        "--u",
        solved.join("u.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(out.join("surface.obj")).unwrap(), fs::read(solved.join("surface.obj")).unwrap());
}

#[test]
fn convergence_command_reports_orders() {
    let dir = scratch("convergence");
    let out = dir.join("out");
    let sine = configs().join("sine.toml");
    let o = run(&["convergence", sine.to_str().unwrap(), "--resolutions", "17,33,65", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("passed"));
    assert!(out.join("convergence.json").exists());
    let plane = configs().join("plane.toml");
    let o = run(&["convergence", plane.to_str().unwrap(), "--resolutions", "9,17", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = run(&["convergence", plane.to_str().unwrap(), "--preset", "nope", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
