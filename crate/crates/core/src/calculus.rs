//! Differential operators, energies and the relaxed area functional.
//!
//! Energies and the functional are integrated element by element with the
//! gradients of the piecewise-linear interpolants, which makes them the exact
//! quadratic forms (and convex functionals) whose minimizers the elliptic and
//! prescribed mean curvature solvers compute.
//!
//! Pointwise quantities (`gradient`, `area_factor`, `tangential_gradient_sq`,
//! `mean_curvature`) are nodal finite differences along lattice lines, using
//! the shortened arms where a line leaves the domain.
//!
//! Orientation: the normal is `(-grad u, 1) / D(u)`, pointing up, so a cap
//! bulging downward has negative mean curvature.

use alloc::vec;
use alloc::vec::Vec;

use crate::field::{FieldKind, ScalarField, VectorField};
use crate::geometry::{BoundaryData, Grid, EAST, NORTH, SOUTH, WEST};
use crate::stencil::fd_weights;
use crate::Result;

/// `sqrt(1 + |p|^2)`.
#[inline]
pub fn area_density(p: [f64; 2]) -> f64 {
    libm::sqrt(1.0 + p[0] * p[0] + p[1] * p[1])
}

fn same_grid(grid: &Grid, fields: &[&ScalarField]) -> Result<()> {
    fields.iter().try_for_each(|f| f.check_grid(grid))
}

/// Three-point derivative on `(-a h, 0, b h)`; central when `a = b = 1`.
#[inline]
fn three_point(fm: f64, f0: f64, fp: f64, a: f64, b: f64, h: f64) -> f64 {
    if a == 1.0 && b == 1.0 {
        return 0.5 * (fp - fm) / h;
    }
    (-b / (a * (a + b)) * fm + (b - a) / (a * b) * f0 + a / (b * (a + b)) * fp) / h
}

fn nodal_gradient(grid: &Grid, f: &[f64], node: usize) -> [f64; 2] {
    let arms = &grid.arms()[node];
    let [hx, hy] = grid.spacing();
    let axis = |pos: usize, neg: usize, h: f64| {
        let (p, n) = (arms[pos].unwrap(), arms[neg].unwrap());
        three_point(f[n.target], f[node], f[p.target], n.theta, p.theta, h)
    };
    let gx = axis(EAST, WEST, hx);
    let gy = if grid.dim() == 2 { axis(NORTH, SOUTH, hy) } else { 0.0 };
    [gx, gy]
}

/// Gradients at every node: finite differences at interior nodes, the
/// measure-weighted mean of the adjacent element gradients at boundary nodes.
fn all_gradients(grid: &Grid, f: &[f64]) -> Vec<[f64; 2]> {
    let ni = grid.num_interior();
    let mut g = vec![[0.0; 2]; grid.num_nodes()];
    for (node, gi) in g.iter_mut().enumerate().take(ni) {
        *gi = nodal_gradient(grid, f, node);
    }
    let mut mass = vec![0.0; grid.num_nodes()];
    for e in grid.elements() {
        let ge = e.gradient(f);
        for &v in e.verts() {
            if v >= ni {
                g[v][0] += e.measure * ge[0];
                g[v][1] += e.measure * ge[1];
                mass[v] += e.measure;
            }
        }
    }
    for v in ni..grid.num_nodes() {
        g[v][0] /= mass[v];
        g[v][1] /= mass[v];
    }
    g
}

/// Nodal gradient at interior nodes. Exact on quadratics along uncut lines.
pub fn gradient(f: &ScalarField, grid: &Grid) -> Result<VectorField> {
    same_grid(grid, &[f])?;
    let g = (0..grid.num_interior()).map(|k| nodal_gradient(grid, f.values(), k)).collect();
    Ok(VectorField::new(grid, g))
}

/// `D(u) = sqrt(1 + |grad u|^2)` at every node.
pub fn area_factor(u: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    same_grid(grid, &[u])?;
    let d = all_gradients(grid, u.values()).into_iter().map(area_density).collect();
    ScalarField::from_values(grid, FieldKind::Density, d)
}

/// `|grad H|^2 - (grad u . grad H)^2 / D(u)^2` at every node.
pub fn tangential_gradient_sq(h: &ScalarField, u: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    same_grid(grid, &[h, u])?;
    let gh = all_gradients(grid, h.values());
    let gu = all_gradients(grid, u.values());
    let vals = gh.iter().zip(&gu).map(|(q, p)| tangential_density(*p, *q)).collect();
    ScalarField::from_values(grid, FieldKind::Density, vals)
}

/// Squared tangential gradient of a function with gradient `q` on the graph
/// of a function with gradient `p`.
#[inline]
pub fn tangential_density(p: [f64; 2], q: [f64; 2]) -> f64 {
    let q2 = q[0] * q[0] + q[1] * q[1];
    let pq = p[0] * q[0] + p[1] * q[1];
    let d2 = 1.0 + p[0] * p[0] + p[1] * p[1];
    q2 - pq * pq / d2
}

/// Sample offsets and node indices along one lattice line through `node`,
/// at most `per_side` on each side. With `interior_only`, the walk stops
/// before the first boundary node; otherwise it includes it and stops.
fn line_samples(
    grid: &Grid,
    node: usize,
    pos: usize,
    neg: usize,
    h: f64,
    per_side: usize,
    interior_only: bool,
    out: &mut Vec<(f64, usize)>,
) {
    out.clear();
    out.push((0.0, node));
    let ni = grid.num_interior();
    for (dir, sign) in [(pos, 1.0), (neg, -1.0)] {
        let mut at = node;
        let mut off = 0.0;
        for _ in 0..per_side {
            let arm = grid.arms()[at][dir].unwrap();
            if interior_only && arm.target >= ni {
                break;
            }
            off += sign * arm.theta * h;
            out.push((off, arm.target));
            if arm.target >= ni {
                break;
            }
            at = arm.target;
        }
    }
    out.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(a.0.total_cmp(&b.0)));
}

fn apply(samples: &[(f64, usize)], d: usize, values: &[f64]) -> f64 {
    let mut x = [0.0; 8];
    let mut w = [0.0; 8];
    let n = samples.len();
    for (xi, s) in x.iter_mut().zip(samples) {
        *xi = s.0;
    }
    fd_weights(0.0, &x[..n], d, &mut w[..n]);
    samples.iter().zip(&w).map(|(s, wi)| wi * values[s.1]).sum()
}

/// Mean curvature `H = div(grad u / D(u)) / n` at interior nodes, from the
/// expanded form
/// `[(1 + uy^2) uxx - 2 ux uy uxy + (1 + ux^2) uyy] / (n D^3)`.
///
/// Derivatives along each lattice line use the five samples nearest to the
/// node, boundary intersections included, so the result is fourth-order
/// accurate away from the boundary and third-order accurate next to it. The
/// mixed derivative differentiates `ux` (resp. `uy`) across lines through
/// interior nodes only. Boundary entries of the result are zero; impose a
/// trace with [`ScalarField::set_trace`].
pub fn mean_curvature(u: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    same_grid(grid, &[u])?;
    let ni = grid.num_interior();
    let [hx, hy] = grid.spacing();
    let f = u.values();
    let mut s = Vec::with_capacity(8);
    let mut out = vec![0.0; grid.num_nodes()];

    if grid.dim() == 1 {
        for (k, o) in out.iter_mut().enumerate().take(ni) {
            line_samples(grid, k, EAST, WEST, hx, 3, false, &mut s);
            s.truncate(5);
            let ux = apply(&s, 1, f);
            let uxx = apply(&s, 2, f);
            let d2 = 1.0 + ux * ux;
            *o = uxx / (d2 * libm::sqrt(d2));
        }
        return ScalarField::from_values(grid, FieldKind::Curvature, out);
    }

    let mut ux = vec![0.0; grid.num_nodes()];
    let mut uy = vec![0.0; grid.num_nodes()];
    let mut uxx = vec![0.0; ni];
    let mut uyy = vec![0.0; ni];
    for k in 0..ni {
        line_samples(grid, k, EAST, WEST, hx, 3, false, &mut s);
        s.truncate(5);
        ux[k] = apply(&s, 1, f);
        uxx[k] = apply(&s, 2, f);
        line_samples(grid, k, NORTH, SOUTH, hy, 3, false, &mut s);
        s.truncate(5);
        uy[k] = apply(&s, 1, f);
        uyy[k] = apply(&s, 2, f);
    }
    for k in 0..ni {
        line_samples(grid, k, NORTH, SOUTH, hy, 3, true, &mut s);
        s.truncate(5);
        let ny = s.len();
        let dyx = if ny >= 2 { apply(&s, 1, &ux) } else { 0.0 };
        line_samples(grid, k, EAST, WEST, hx, 3, true, &mut s);
        s.truncate(5);
        let nx = s.len();
        let dxy = if nx >= 2 { apply(&s, 1, &uy) } else { 0.0 };
        let uxy = match (ny >= 3, nx >= 3) {
            (true, true) => 0.5 * (dyx + dxy),
            (true, false) => dyx,
            (false, true) => dxy,
            (false, false) if ny >= nx => dyx,
            (false, false) => dxy,
        };
        let (px, py) = (ux[k], uy[k]);
        let d2 = 1.0 + px * px + py * py;
        let num = (1.0 + py * py) * uxx[k] - 2.0 * px * py * uxy + (1.0 + px * px) * uyy[k];
        out[k] = num / (2.0 * d2 * libm::sqrt(d2));
    }
    ScalarField::from_values(grid, FieldKind::Curvature, out)
}

/// `1/2 int |grad H|^2 D(u) dx`.
pub fn energy_simplified(h: &ScalarField, u: &ScalarField, grid: &Grid) -> Result<f64> {
    same_grid(grid, &[h, u])?;
    let mut e = 0.0;
    for el in grid.elements() {
        let q = el.gradient(h.values());
        let d = area_density(el.gradient(u.values()));
        let q2 = q[0] * q[0] + q[1] * q[1];
        e += el.measure * 0.5 * q2 * d;
    }
    Ok(e)
}

/// `1/2 int (|grad H|^2 - (grad u . grad H)^2 / D^2) D(u) dx`; never exceeds
/// [`energy_simplified`] and equals it bit for bit when `u` is constant.
pub fn energy_geometric(h: &ScalarField, u: &ScalarField, grid: &Grid) -> Result<f64> {
    same_grid(grid, &[h, u])?;
    let mut e = 0.0;
    for el in grid.elements() {
        let q = el.gradient(h.values());
        let p = el.gradient(u.values());
        let d = area_density(p);
        let q2 = q[0] * q[0] + q[1] * q[1];
        let pq = p[0] * q[0] + p[1] * q[1];
        e += el.measure * 0.5 * (q2 - pq * pq / (d * d)) * d;
    }
    Ok(e)
}

/// Area of the piecewise-linear graph of `v`.
pub fn discrete_area(v: &ScalarField, grid: &Grid) -> Result<f64> {
    same_grid(grid, &[v])?;
    Ok(grid.elements().iter().map(|e| e.measure * area_density(e.gradient(v.values()))).sum())
}

/// `J[v] = int D(v) dx + n int H v dx + int_boundary |v - g| dS`.
///
/// Its stationary points over fields with fixed boundary values are exactly
/// the zeros of [`crate::pmc::pmc_residual`].
pub fn functional_j(v: &ScalarField, h: &ScalarField, bd: &BoundaryData, grid: &Grid) -> Result<f64> {
    same_grid(grid, &[v, h])?;
    bd.check_grid(grid)?;
    let area = discrete_area(v, grid)?;
    let n = grid.dim() as f64;
    let bulk: f64 = grid
        .weights()
        .iter()
        .zip(h.values())
        .zip(v.values())
        .map(|((w, hv), vv)| w * hv * vv)
        .sum();
    let ni = grid.num_interior();
    let misfit: f64 = grid
        .boundary_loop()
        .iter()
        .zip(grid.arc_weights())
        .map(|(&b, s)| s * (v.values()[b] - bd.g_values()[b - ni]).abs())
        .sum();
    Ok(area + n * bulk + misfit)
}

/// Checks `|grad H|^2 / D^2 <= |grad_M H|^2 <= |grad H|^2` at every node with
/// absolute tolerance `tol`; returns the number of violating nodes.
pub fn sandwich_violations(h: &ScalarField, u: &ScalarField, grid: &Grid, tol: f64) -> Result<usize> {
    same_grid(grid, &[h, u])?;
    let gh = all_gradients(grid, h.values());
    let gu = all_gradients(grid, u.values());
    Ok(gh
        .iter()
        .zip(&gu)
        .filter(|(q, p)| {
            let t = tangential_density(**p, **q);
            let q2 = q[0] * q[0] + q[1] * q[1];
            let d2 = 1.0 + p[0] * p[0] + p[1] * p[1];
            !(q2 / d2 - tol <= t && t <= q2 + tol)
        })
        .count())
}

/// Measure-weighted nodal gradients for every node; see [`gradient`] for the
/// interior formula.
pub fn gradients_everywhere(f: &ScalarField, grid: &Grid) -> Result<Vec<[f64; 2]>> {
    same_grid(grid, &[f])?;
    Ok(all_gradients(grid, f.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use proptest::prelude::*;

    fn square(m: usize) -> Grid {
        Grid::build(DomainSpec::unit_square(), m).unwrap()
    }

    fn field(g: &Grid, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField::from_fn(g, FieldKind::Height, |p| f(p[0], p[1])).unwrap()
    }

    #[test]
    fn gradient_exact_cases() {
        let g = square(9);
        let f = field(&g, |x, y| 3.0 * x - 2.0 * y);
        for v in gradient(&f, &g).unwrap().values() {
            assert!((v[0] - 3.0).abs() < 1e-12 && (v[1] + 2.0).abs() < 1e-12);
        }
        let g = square(5);
        let f = field(&g, |x, _| x * x);
        let k = g.lattice_node(2, 2).unwrap();
        assert_eq!(gradient(&f, &g).unwrap().values()[k][0], 1.0);
    }

    #[test]
    fn area_factor_values() {
        let g = square(9);
        for (f, want) in [
            (field(&g, |_, _| 0.0), 1.0),
            (field(&g, |x, _| x), 2f64.sqrt()),
            (field(&g, |x, y| 3.0 * x + 4.0 * y), 26f64.sqrt()),
        ] {
            for d in area_factor(&f, &g).unwrap().values() {
                assert!((d - want).abs() < 1e-12, "{d} vs {want}");
            }
        }
    }

    #[test]
    fn curvature_of_affine_and_parabola() {
        let g = square(17);
        let u = field(&g, |x, y| 0.7 * x - 1.3 * y + 0.2);
        let h = mean_curvature(&u, &g).unwrap();
        assert!(h.max_abs() < 1e-10);

        let line = Grid::build(DomainSpec::Interval { a: -1.0, b: 1.0 }, 65).unwrap();
        let u = ScalarField::from_fn(&line, FieldKind::Height, |p| p[0] * p[0]).unwrap();
        let h = mean_curvature(&u, &line).unwrap();
        let k = line.lattice_node(32, 0).unwrap();
        assert!((h.values()[k] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn energies_of_linear_fields() {
        let g = square(129);
        let h = field(&g, |x, _| x);
        let zero = field(&g, |_, _| 0.0);
        let es = energy_simplified(&h, &zero, &g).unwrap();
        assert!((es - 0.5).abs() < 1e-3);
        assert_eq!(es, energy_geometric(&h, &zero, &g).unwrap());
        let s = 1.5;
        let u = field(&g, |x, _| s * x);
        let d = (1.0f64 + s * s).sqrt();
        assert!((energy_simplified(&h, &u, &g).unwrap() - 0.5 * d).abs() < 1e-10);
        assert!((energy_geometric(&h, &u, &g).unwrap() - 0.5 / d).abs() < 1e-10);
        assert_eq!(energy_simplified(&field(&g, |_, _| 2.0), &u, &g).unwrap(), 0.0);
    }

    #[test]
    fn tangential_examples() {
        let g = square(9);
        let u = field(&g, |x, _| x);
        let h = field(&g, |x, _| x);
        for t in tangential_gradient_sq(&h, &u, &g).unwrap().values() {
            assert!((t - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn functional_examples() {
        let g = square(33);
        let zero = field(&g, |_, _| 0.0);
        let bd0 = BoundaryData::parse(&g, "0", "0").unwrap();
        let bd1 = BoundaryData::parse(&g, "1", "0").unwrap();
        assert!((functional_j(&zero, &zero, &bd0, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((functional_j(&zero, &zero, &bd1, &g).unwrap() - 5.0).abs() < 1e-12);
        let c = field(&g, |_, _| 0.8);
        assert!((functional_j(&zero, &c, &bd0, &g).unwrap() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sandwich_holds(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -2.0f64..2.0, k in 0.5f64..4.0) {
            let g = Grid::build(DomainSpec::unit_disk(), 21).unwrap();
            let u = field(&g, |x, y| a * x * y + b * libm::sin(k * x) + c * y * y);
            let h = field(&g, |x, y| libm::cos(k * y) * a + b * x - c * x * y);
            prop_assert_eq!(sandwich_violations(&h, &u, &g, 1e-12).unwrap(), 0);
            let es = energy_simplified(&h, &u, &g).unwrap();
            let eg = energy_geometric(&h, &u, &g).unwrap();
            prop_assert!(0.0 <= eg && eg <= es);
        }
    }
}
