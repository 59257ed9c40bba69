//! The curvature step: `div(a(v) grad H) = 0` in the domain, `H = h` on the
//! boundary, with `a = D(v)` (simplified mode) or
//! `a = D(v) I - grad v grad v^T / D(v)` (geometric mode).
//!
//! Coefficients live on elements. The stiffness matrix
//! `K_ij = sum_T |T| grad phi_i . a_T grad phi_j` is the Hessian of the
//! discrete energy, so its Dirichlet solve is the exact discrete minimizer.
//! The discrete divergence is `div_h(a grad H)_i = -(K H)_i / w_i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::area_density;
use crate::field::{FieldKind, ScalarField};
use crate::geometry::{BoundaryData, Grid};
use crate::sparse::{pcg, CgOptions, CgStats, CsrMatrix};
use crate::{Error, Mode, Result};

pub type Tensor = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Scalar(Vec<f64>),
    Tensor(Vec<Tensor>),
}

/// One coefficient per element of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    grid_id: u64,
    values: Coefficients,
}

impl CoefficientField {
    pub fn scalar(grid: &Grid, c: Vec<f64>) -> Result<Self> {
        Self::checked(grid, Coefficients::Scalar(c))
    }

    pub fn tensor(grid: &Grid, a: Vec<Tensor>) -> Result<Self> {
        Self::checked(grid, Coefficients::Tensor(a))
    }

    pub fn constant_scalar(grid: &Grid, c: f64) -> Self {
        CoefficientField { grid_id: grid.id(), values: Coefficients::Scalar(vec![c; grid.elements().len()]) }
    }

    fn checked(grid: &Grid, values: Coefficients) -> Result<Self> {
        let len = match &values {
            Coefficients::Scalar(c) => c.len(),
            Coefficients::Tensor(a) => a.len(),
        };
        if len != grid.elements().len() {
            return Err(Error::SizeMismatch { expected: grid.elements().len(), got: len });
        }
        Ok(CoefficientField { grid_id: grid.id(), values })
    }

    pub fn values(&self) -> &Coefficients {
        &self.values
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }
}

/// `D(p) I - p p^T / D(p)`, eigenvalues `1/D` along `p` and `D` across it.
#[inline]
pub fn geometric_tensor(p: [f64; 2]) -> Tensor {
    let d = area_density(p);
    [[d - p[0] * p[0] / d, -p[0] * p[1] / d], [-p[1] * p[0] / d, d - p[1] * p[1] / d]]
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(a: &Tensor) -> [f64; 2] {
    let m = 0.5 * (a[0][0] + a[1][1]);
    let r = libm::hypot(0.5 * (a[0][0] - a[1][1]), a[0][1]);
    let hi = m + r;
    // the smaller one from the determinant avoids cancellation when r ~ m
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let lo = if hi != 0.0 && m > 0.0 { det / hi } else { m - r };
    [lo, hi]
}

/// Element coefficients from the element gradients of `v`.
pub fn build_coefficient(v: &ScalarField, grid: &Grid, mode: Mode) -> Result<CoefficientField> {
    v.check_grid(grid)?;
    let grads = grid.elements().iter().map(|e| e.gradient(v.values()));
    let values = match mode {
        Mode::Simplified => Coefficients::Scalar(grads.map(area_density).collect()),
        Mode::Geometric => Coefficients::Tensor(grads.map(geometric_tensor).collect()),
    };
    Ok(CoefficientField { grid_id: grid.id(), values })
}

/// `K H = rhs` over the interior nodes, with the Dirichlet trace moved to the
/// right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    grid_id: u64,
    matrix: CsrMatrix,
    rhs: Vec<f64>,
    trace: Vec<f64>,
}

impl LinearSystem {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }
}

#[inline]
fn local_entry(c: &Coefficients, e: usize, measure: f64, gp: [f64; 2], gq: [f64; 2]) -> f64 {
    match c {
        Coefficients::Scalar(c) => measure * c[e] * (gp[0] * gq[0] + gp[1] * gq[1]),
        Coefficients::Tensor(a) => {
            let a = &a[e];
            measure * (gp[0] * (a[0][0] * gq[0] + a[0][1] * gq[1]) + gp[1] * (a[1][0] * gq[0] + a[1][1] * gq[1]))
        }
    }
}

/// Visits every element matrix entry `(i, j, k_ij)` with `i <= j` in local
/// order; each unordered pair is computed once.
fn for_each_entry(coef: &Coefficients, grid: &Grid, mut f: impl FnMut(usize, usize, usize, f64)) {
    for (ei, e) in grid.elements().iter().enumerate() {
        let g = e.grads();
        for p in 0..g.len() {
            for q in p..g.len() {
                let k = local_entry(coef, ei, e.measure, g[p], g[q]);
                f(ei, p, q, k);
            }
        }
    }
}

/// Assembles the Dirichlet problem for the given boundary values of `H`.
pub fn assemble(coef: &CoefficientField, grid: &Grid, trace: &[f64]) -> Result<LinearSystem> {
    if coef.grid_id != grid.id() {
        return Err(Error::GridMismatch);
    }
    if trace.len() != grid.num_boundary() {
        return Err(Error::SizeMismatch { expected: grid.num_boundary(), got: trace.len() });
    }
    let ni = grid.num_interior();
    let mut matrix = grid.pattern().clone();
    let mut rhs = vec![0.0; ni];
    {
        let vals = matrix.vals_mut();
        let elements = grid.elements();
        for_each_entry(&coef.values, grid, |ei, p, q, k| {
            let v = elements[ei].verts();
            let (a, b) = (v[p], v[q]);
            match (a < ni, b < ni) {
                (true, true) => {
                    let slots = grid.element_slots(ei);
                    vals[slots[p][q] as usize] += k;
                    if p != q {
                        vals[slots[q][p] as usize] += k;
                    }
                }
                (true, false) => rhs[a] -= k * trace[b - ni],
                (false, true) => rhs[b] -= k * trace[a - ni],
                (false, false) => {}
            }
        });
    }
    Ok(LinearSystem { grid_id: grid.id(), matrix, rhs, trace: trace.to_vec() })
}

/// Conjugate-gradient settings for the curvature step. The tolerance is well
/// below the `1e-10` relative-residual contract so that the fixed-point
/// certificate, which measures the residual divided by nodal weights, can be
/// met.
pub const ELLIPTIC_CG: CgOptions = CgOptions { rel_tol: 1e-13, max_iter: 50_000 };

/// Solves the system; the returned field carries the system's trace.
pub fn solve_linear(sys: &LinearSystem, grid: &Grid) -> Result<ScalarField> {
    solve_linear_with(sys, grid, &ELLIPTIC_CG, None).map(|(f, _)| f)
}

/// [`solve_linear`] with explicit solver settings and an optional start.
pub fn solve_linear_with(
    sys: &LinearSystem,
    grid: &Grid,
    opts: &CgOptions,
    start: Option<&ScalarField>,
) -> Result<(ScalarField, CgStats)> {
    if sys.grid_id != grid.id() {
        return Err(Error::GridMismatch);
    }
    let ni = grid.num_interior();
    let mut x = match start {
        Some(s) => s.interior(grid).to_vec(),
        None => vec![0.0; ni],
    };
    let stats = pcg(&sys.matrix, &sys.rhs, &mut x, opts)?;
    x.extend_from_slice(&sys.trace);
    Ok((ScalarField::from_values(grid, FieldKind::Curvature, x)?, stats))
}

/// Step one of the fixed-point map: `H` with trace `h` minimizing the discrete
/// energy on the surface `v`.
pub fn curvature_step(v: &ScalarField, bd: &BoundaryData, grid: &Grid, mode: Mode) -> Result<ScalarField> {
    bd.check_grid(grid)?;
    let coef = build_coefficient(v, grid, mode)?;
    let sys = assemble(&coef, grid, bd.h_values())?;
    solve_linear(&sys, grid)
}

/// Discrete harmonic extension of `trace` (`c = 1`).
pub fn harmonic_extension(grid: &Grid, trace: &[f64], kind: FieldKind) -> Result<ScalarField> {
    let coef = CoefficientField::constant_scalar(grid, 1.0);
    let sys = assemble(&coef, grid, trace)?;
    let (f, _) = solve_linear_with(&sys, grid, &ELLIPTIC_CG, None)?;
    let vals = f.into_values();
    ScalarField::from_values(grid, kind, vals)
}

/// `div_h(a(v) grad H)` at interior nodes: `-(K H)_i / w_i` with the full
/// nodal vector of `H`, trace included.
pub fn elliptic_residual(h: &ScalarField, v: &ScalarField, grid: &Grid, mode: Mode) -> Result<Vec<f64>> {
    h.check_grid(grid)?;
    let coef = build_coefficient(v, grid, mode)?;
    let ni = grid.num_interior();
    let mut r = vec![0.0; ni];
    let hv = h.values();
    let elements = grid.elements();
    for_each_entry(&coef.values, grid, |ei, p, q, k| {
        let vs = elements[ei].verts();
        let (a, b) = (vs[p], vs[q]);
        if a < ni {
            r[a] += k * hv[b];
        }
        if p != q && b < ni {
            r[b] += k * hv[a];
        }
    });
    for (ri, w) in r.iter_mut().zip(grid.weights()) {
        *ri = -*ri / w;
    }
    Ok(r)
}

/// Discrete energy `1/2 sum_T |T| grad H . a grad H` for a given coefficient.
pub fn quadratic_energy(coef: &CoefficientField, h: &ScalarField, grid: &Grid) -> Result<f64> {
    if coef.grid_id != grid.id() {
        return Err(Error::GridMismatch);
    }
    h.check_grid(grid)?;
    let mut e = 0.0;
    for (ei, el) in grid.elements().iter().enumerate() {
        let q = el.gradient(h.values());
        e += 0.5 * local_entry(&coef.values, ei, el.measure, q, q);
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{energy_geometric, energy_simplified};
    use crate::geometry::DomainSpec;
    use proptest::prelude::*;

    fn field(g: &Grid, kind: FieldKind, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField::from_fn(g, kind, |p| f(p[0], p[1])).unwrap()
    }

    #[test]
    fn five_point_laplacian() {
        let g = Grid::build(DomainSpec::unit_square(), 5).unwrap();
        let coef = CoefficientField::constant_scalar(&g, 1.0);
        let sys = assemble(&coef, &g, &vec![0.0; g.num_boundary()]).unwrap();
        let a = sys.matrix();
        let h2 = 0.25 * 0.25;
        let c = g.lattice_node(2, 2).unwrap();
        // -(K/w) is the textbook stencil scaled by 1/h^2
        assert!((-a.get(c, c) / g.weights()[c] + 4.0 / h2).abs() < 1e-9);
        for (i, j) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            let n = g.lattice_node(i, j).unwrap();
            assert!((-a.get(c, n) / g.weights()[c] - 1.0 / h2).abs() < 1e-9);
        }
        assert_eq!(a.get(c, g.lattice_node(1, 1).unwrap()), 0.0);
        assert!(a.is_bitwise_symmetric());
    }

    #[test]
    fn identity_tensor_matches_scalar() {
        let g = Grid::build(DomainSpec::unit_disk(), 17).unwrap();
        let s = CoefficientField::constant_scalar(&g, 1.0);
        let t = CoefficientField::tensor(&g, vec![[[1.0, 0.0], [0.0, 1.0]]; g.elements().len()]).unwrap();
        let tr: Vec<f64> = g.boundary_positions().iter().map(|p| p[0]).collect();
        assert_eq!(assemble(&s, &g, &tr).unwrap(), assemble(&t, &g, &tr).unwrap());
    }

    #[test]
    fn exact_solutions() {
        let g = Grid::build(DomainSpec::unit_square(), 17).unwrap();
        let zero = ScalarField::zeros(&g, FieldKind::Height);
        for expr in ["x", "x^2 - y^2"] {
            let bd = BoundaryData::parse(&g, "0", expr).unwrap();
            let e = crate::expr::Expr::parse(expr).unwrap();
            let exact = ScalarField::from_expr(&g, FieldKind::Curvature, &e).unwrap();
            let h = curvature_step(&zero, &bd, &g, Mode::Simplified).unwrap();
            assert!(h.max_abs_diff(&exact) < 1e-10, "{expr}");
        }
        let bd = BoundaryData::parse(&g, "0", "x").unwrap();
        let exact = field(&g, FieldKind::Curvature, |x, _| x);
        for mode in [Mode::Simplified, Mode::Geometric] {
            let v = field(&g, FieldKind::Height, |x, _| 0.8 * x);
            let h = curvature_step(&v, &bd, &g, mode).unwrap();
            assert!(h.max_abs_diff(&exact) < 1e-10);
        }
    }

    #[test]
    fn zero_trace_gives_zero() {
        let g = Grid::build(DomainSpec::unit_disk(), 33).unwrap();
        let bd = BoundaryData::parse(&g, "0", "0").unwrap();
        let v = field(&g, FieldKind::Height, |x, y| libm::sin(3.0 * x) * y);
        for mode in [Mode::Simplified, Mode::Geometric] {
            assert_eq!(curvature_step(&v, &bd, &g, mode).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn energy_forms_agree() {
        let g = Grid::build(DomainSpec::unit_disk(), 25).unwrap();
        let v = field(&g, FieldKind::Height, |x, y| 0.3 * x * x - 0.5 * y);
        let h = field(&g, FieldKind::Curvature, |x, y| libm::cos(x + 2.0 * y));
        let cs = build_coefficient(&v, &g, Mode::Simplified).unwrap();
        let ct = build_coefficient(&v, &g, Mode::Geometric).unwrap();
        let es = energy_simplified(&h, &v, &g).unwrap();
        let eg = energy_geometric(&h, &v, &g).unwrap();
        assert!((quadratic_energy(&cs, &h, &g).unwrap() - es).abs() < 1e-12 * es.max(1.0));
        assert!((quadratic_energy(&ct, &h, &g).unwrap() - eg).abs() < 1e-12 * eg.max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn geometric_tensor_spectrum(px in -5.0f64..5.0, py in -5.0f64..5.0, xi0 in -1.0f64..1.0, xi1 in -1.0f64..1.0) {
            let a = geometric_tensor([px, py]);
            let d = area_density([px, py]);
            let [lo, hi] = sym_eigenvalues(&a);
            prop_assert!((lo - 1.0 / d).abs() <= 1e-12);
            prop_assert!((hi - d).abs() <= 1e-12 * d);
            prop_assert_eq!(a[0][1].to_bits(), a[1][0].to_bits());
            let q = xi0 * (a[0][0] * xi0 + a[0][1] * xi1) + xi1 * (a[1][0] * xi0 + a[1][1] * xi1);
            prop_assert!(q >= (xi0 * xi0 + xi1 * xi1) / d - 1e-12);
        }
    }
}
