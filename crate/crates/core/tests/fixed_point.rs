use mmcv_core::iterate::{fixed_point, local_minimality_probe, t_map, IterateOptions, Status};
use mmcv_core::{BoundaryData, DomainSpec, Error, Grid, Mode, NoClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(grid: &Grid, bd: &BoundaryData, opts: &IterateOptions) -> mmcv_core::iterate::FixedPoint {
    fixed_point(bd, grid, opts, &NoClock, &mut |_| {}).unwrap()
}

#[test]
fn reference_data_converges_in_both_modes() {
    let grid = Grid::build(DomainSpec::unit_disk(), 33).unwrap();
    let bd = BoundaryData::parse(&grid, "0.1*(x^2-y^2)", "0.3").unwrap();
    for mode in [Mode::Simplified, Mode::Geometric] {
        let fp = run(&grid, &bd, &IterateOptions { mode, ..Default::default() });
        let r = &fp.report;
        assert_eq!(r.status, Status::Converged);
        assert!(r.certificate.unwrap().holds);
        assert!(r.admissibility.required_ok());
        // constant boundary curvature propagates unchanged
        assert!(fp.h.values().iter().all(|&x| (x - 0.3).abs() < 1e-10));
        let probe = local_minimality_probe(&fp.u, &fp.h, &bd, &grid, 20, 1).unwrap();
        assert!(probe.worst_margin >= -1e-8);
    }
}

#[test]
fn varying_boundary_curvature_converges() {
    let grid = Grid::build(DomainSpec::unit_disk(), 33).unwrap();
    let bd = BoundaryData::parse(&grid, "0.2*x*y", "0.2 + 0.1*x").unwrap();
    for mode in [Mode::Simplified, Mode::Geometric] {
        let mut seen = 0;
        let opts = IterateOptions { mode, ..Default::default() };
        let fp = fixed_point(&bd, &grid, &opts, &NoClock, &mut |_| seen += 1).unwrap();
        let r = &fp.report;
        assert_eq!(r.status, Status::Converged, "{mode}");
        assert_eq!(seen, r.outer_iterations);
        assert!(r.certificate.unwrap().holds);
        let es = r.e_simplified.unwrap();
        let eg = r.e_geometric.unwrap();
        assert!(eg <= es && eg > 0.0);
    }
}

#[test]
fn relaxation_reaches_the_same_fixed_point() {
    let grid = Grid::build(DomainSpec::unit_disk(), 17).unwrap();
    let bd = BoundaryData::parse(&grid, "0.2*x*y", "0.2 + 0.1*x").unwrap();
    let full = run(&grid, &bd, &IterateOptions::default());
    let half = run(&grid, &bd, &IterateOptions { omega: 0.5, ..Default::default() });
    assert_eq!(half.report.status, Status::Converged);
    assert!(half.report.outer_iterations > full.report.outer_iterations);
    assert!(half.u.max_abs_diff(&full.u) < 1e-7);
}

#[test]
fn zero_curvature_data_gives_the_minimal_graph() {
    let grid = Grid::build(DomainSpec::unit_disk(), 25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let c: [f64; 4] = core::array::from_fn(|_| rng.gen_range(-0.5..0.5));
        let g = format!("{}*x + {}*y^2 + {}*sin(2*x + {})", c[0], c[1], c[2], c[3]);
        let bd = BoundaryData::parse(&grid, &g, "0").unwrap();
        let opts = IterateOptions::default();
        let fp = run(&grid, &bd, &opts);
        assert_eq!(fp.report.status, Status::Converged);
        assert!(fp.report.outer_iterations <= 2);
        assert_eq!(fp.h.max_abs(), 0.0);
        let again = t_map(&fp.u, &bd, &grid, opts.mode, &opts.newton).unwrap();
        assert!(again.u.max_abs_diff(&fp.u) <= 10.0 * opts.tol);
    }
}

#[test]
fn inadmissible_data_is_refused_unless_forced() {
    let grid = Grid::build(DomainSpec::unit_disk(), 17).unwrap();
    let bd = BoundaryData::parse(&grid, "0", "3").unwrap();
    let opts = IterateOptions::default();
    match fixed_point(&bd, &grid, &opts, &NoClock, &mut |_| {}) {
        Err(Error::Inadmissible(report)) => assert!(!report.required_ok()),
        other => panic!("expected refusal, got {other:?}"),
    }
    let forced = run(&grid, &bd, &IterateOptions { force: true, ..opts });
    assert_eq!(forced.report.status, Status::PmcFailure);
    assert!(forced.report.failure.is_some());
}

#[test]
fn curves_converge() {
    let grid = Grid::build(DomainSpec::Interval { a: -1.0, b: 1.0 }, 65).unwrap();
    let bd = BoundaryData::parse(&grid, "0.5*x", "0").unwrap();
    let fp = run(&grid, &bd, &IterateOptions::default());
    assert_eq!(fp.report.status, Status::Converged);
    for (p, u) in grid.positions().iter().zip(fp.u.values()) {
        assert!((u - 0.5 * p[0]).abs() < 1e-10);
    }
}

#[test]
fn runs_are_deterministic() {
    let grid = Grid::build(DomainSpec::unit_disk(), 17).unwrap();
    let bd = BoundaryData::parse(&grid, "0.2*x*y", "0.2 + 0.1*x").unwrap();
    let a = run(&grid, &bd, &IterateOptions::default());
    let b = run(&grid, &bd, &IterateOptions::default());
    assert_eq!(a, b);
}
