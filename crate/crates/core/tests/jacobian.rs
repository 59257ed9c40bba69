use mmcv_core::elliptic::sym_eigenvalues;
use mmcv_core::pmc::{pmc_jacobian, pmc_residual};
use mmcv_core::{BoundaryData, DomainSpec, FieldKind, Grid, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smooth(grid: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
    let c: [f64; 7] = core::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    ScalarField::from_fn(grid, FieldKind::Height, |[x, y]| {
        amp * (c[0] * x + c[1] * y + c[2] * x * y + c[3] * libm::sin(3.0 * c[4] * x + 2.0 * c[5] * y + c[6]))
    })
    .unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn directional_differences_match_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (spec, m) in [(DomainSpec::unit_disk(), 17), (DomainSpec::unit_square(), 17), (DomainSpec::Interval { a: 0.0, b: 1.0 }, 33)] {
        let grid = Grid::build(spec, m).unwrap();
        let ni = grid.num_interior();
        let zero = ScalarField::zeros(&grid, FieldKind::Curvature);
        for _ in 0..10 {
            let u = smooth(&grid, &mut rng, 2.0);
            let bd = BoundaryData::new(&grid, "0".parse().unwrap(), "0".parse().unwrap()).unwrap();
            let mut u0 = u.clone();
            u0.set_trace(&grid, bd.g_values()).unwrap();
            let w = smooth(&grid, &mut rng, 1.0);
            let wi = &w.values()[..ni];
            let eps = 1e-5;
            let shifted = |s: f64| {
                let mut v = u0.values().to_vec();
                for (a, b) in v.iter_mut().zip(wi) {
                    *a += s * b;
                }
                let f = ScalarField::from_values(&grid, FieldKind::Height, v).unwrap();
                pmc_residual(&f, &zero, &bd, &grid).unwrap().values()[..ni].to_vec()
            };
            let (rp, rm) = (shifted(eps), shifted(-eps));
            let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let jw = pmc_jacobian(&u0, &grid).unwrap().apply(wi);
            let diff: Vec<f64> = fd.iter().zip(&jw).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / norm(&jw);
            assert!(rel <= 1e-6, "relative error {rel:e}");
        }
    }
}

#[test]
fn jacobian_is_symmetric_with_bracketed_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = Grid::build(DomainSpec::unit_disk(), 21).unwrap();
    for _ in 0..5 {
        let u = smooth(&grid, &mut rng, 3.0);
        let jac = pmc_jacobian(&u, &grid).unwrap();
        assert!(jac.matrix().is_bitwise_symmetric());
        for (e, a) in grid.elements().iter().zip(jac.tensors()) {
            let p = e.gradient(u.values());
            let d = (1.0 + p[0] * p[0] + p[1] * p[1]).sqrt();
            let [lo, hi] = sym_eigenvalues(a);
            assert!(lo >= 1.0 / (d * d * d) - 1e-12 && hi <= 1.0 / d + 1e-12);
        }
    }
}
