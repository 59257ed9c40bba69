use mmcv_core::elliptic::curvature_step;
use mmcv_core::mms::{convergence_study, observed_order, Manufactured};
use mmcv_core::pmc::NewtonOptions;
use mmcv_core::{BoundaryData, DomainSpec, FieldKind, Grid, Mode, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn plane_has_zero_energy_and_error() {
    let man = Manufactured::preset("plane").unwrap();
    let s = convergence_study(&man, &[17, 33], &NewtonOptions::default(), 1.9).unwrap();
    assert!(s.passed);
    for r in &s.rows {
        assert!(r.e_simplified <= 1e-12 && r.e_geometric <= 1e-12);
        assert!(r.err_u < 1e-11 && r.err_h < 1e-10);
        assert_eq!(r.newton_steps, 0);
    }
}

#[test]
fn sine_converges_at_second_order() {
    let man = Manufactured::preset("sine").unwrap();
    let s = convergence_study(&man, &[17, 33, 65], &NewtonOptions::default(), 1.9).unwrap();
    assert!(s.passed, "{s:?}");
    assert!(s.rows.iter().all(|r| r.quadratic_tail));
}

#[test]
fn cap_energy_shrinks() {
    let man = Manufactured::preset("cap").unwrap();
    let s = convergence_study(&man, &[17, 33], &NewtonOptions::default(), 1.9).unwrap();
    let [a, b] = [&s.rows[0], &s.rows[1]];
    assert!(a.e_simplified / b.e_simplified >= 3.5);
    assert!(a.e_geometric / b.e_geometric >= 3.5);
    assert!(b.e_geometric <= b.e_simplified);
}

#[test]
fn numerical_curvature_matches_analytic() {
    let sine = Manufactured::sine();
    let numeric = Manufactured::from_expr(sine.spec, sine.u.clone());
    let grid = Grid::build(sine.spec, 9).unwrap();
    for &p in grid.positions() {
        let (a, b) = (sine.h_at(&grid, p).unwrap(), numeric.h_at(&grid, p).unwrap());
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
    let cap = Manufactured::cap(2.0);
    let numeric = Manufactured::from_expr(cap.spec, cap.u.clone());
    let grid = Grid::build(cap.spec, 9).unwrap();
    assert!((numeric.h_at(&grid, [0.3, -0.2]).unwrap() + 0.5).abs() < 1e-7);
}

#[test]
fn presets_parse() {
    assert!(Manufactured::preset("cap-R=3").is_ok());
    assert!(Manufactured::preset("cap-R=0.5").is_err());
    assert!(Manufactured::preset("saddle").is_err());
    assert!((observed_order(4.0, 1.0, 0.2, 0.1) - 2.0).abs() < 1e-15);
}

#[test]
fn scalar_mode_obeys_the_maximum_principle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for spec in [DomainSpec::unit_disk(), DomainSpec::unit_square()] {
        let grid = Grid::build(spec, 21).unwrap();
        for _ in 0..20 {
            let mut r = |a: f64| rng.gen_range(-a..a);
            let v = format!("{}*sin({}*x+{})*cos({}*y) + {}*x^2", r(2.0), r(6.0), r(3.0), r(6.0), r(1.5));
            let h = format!("{} + {}*x + {}*sin({}*x + {}*y)", r(1.0), r(1.0), r(1.0), r(8.0), r(8.0));
            let bd = BoundaryData::parse(&grid, "0", &h).unwrap();
            let vf = ScalarField::from_expr(&grid, FieldKind::Height, &v.parse().unwrap()).unwrap();
            let hh = curvature_step(&vf, &bd, &grid, Mode::Simplified).unwrap();
            let lo = bd.h_values().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = bd.h_values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(hh.values().iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));
        }
    }
}
