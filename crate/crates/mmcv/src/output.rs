//! Field files: CSV, Wavefront OBJ and Matrix Market.
//!
//! CSV rows are written in node order and read back in any order. Values
//! use shortest round-trip form, so a written field reads back
//! bit-identically.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use mmcv_core::calculus::gradients_everywhere;
use mmcv_core::sparse::CsrMatrix;
use mmcv_core::{FieldKind, Grid, ScalarField};

/// Node coordinates may differ from the grid by this much when read back.
const COORD_TOL: f64 = 1e-9;

pub fn csv_string(field: &ScalarField, grid: &Grid) -> String {
    let mut s = String::new();
    let planar = grid.dim() == 2;
    s.push_str(if planar { "x,y,value\n" } else { "x,value\n" });
    for (p, v) in grid.positions().iter().zip(field.values()) {
        if planar {
            let _ = writeln!(s, "{},{},{}", p[0], p[1], v);
        } else {
            let _ = writeln!(s, "{},{}", p[0], v);
        }
    }
    s
}

pub fn write_csv(path: &Path, field: &ScalarField, grid: &Grid) -> anyhow::Result<()> {
    std::fs::write(path, csv_string(field, grid)).with_context(|| format!("writing {}", path.display()))
}

/// Finds the node at a position, to within `COORD_TOL`.
struct Locator<'a> {
    grid: &'a Grid,
    origin: [f64; 2],
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> Locator<'a> {
    fn new(grid: &'a Grid) -> Self {
        let origin = grid.positions().iter().fold([f64::INFINITY; 2], |o, p| [o[0].min(p[0]), o[1].min(p[1])]);
        let mut loc = Locator { grid, origin, buckets: HashMap::new() };
        for (i, &p) in grid.positions().iter().enumerate() {
            let key = loc.key(p);
            loc.buckets.entry(key).or_default().push(i);
        }
        loc
    }

    fn key(&self, p: [f64; 2]) -> (i64, i64) {
        let [hx, hy] = self.grid.spacing();
        let y = if self.grid.dim() == 2 { ((p[1] - self.origin[1]) / hy).round() as i64 } else { 0 };
        (((p[0] - self.origin[0]) / hx).round() as i64, y)
    }

    fn find(&self, p: [f64; 2]) -> Option<usize> {
        let (i, j) = self.key(p);
        for di in -1..=1 {
            for dj in -1..=1 {
                for &n in self.buckets.get(&(i + di, j + dj)).into_iter().flatten() {
                    let q = self.grid.positions()[n];
                    if (q[0] - p[0]).abs() <= COORD_TOL && (q[1] - p[1]).abs() <= COORD_TOL {
                        return Some(n);
                    }
                }
            }
        }
        None
    }
}

/// Parses a field for `grid`: one row per node, in any order.
pub fn parse_csv(text: &str, grid: &Grid, kind: FieldKind) -> anyhow::Result<ScalarField> {
    let planar = grid.dim() == 2;
    let cols = if planar { 3 } else { 2 };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty CSV")?;
    let expected = if planar { "x,y,value" } else { "x,value" };
    if header.trim() != expected {
        bail!("CSV header `{}` does not match `{expected}`", header.trim());
    }
    let locator = Locator::new(grid);
    let mut values = vec![None; grid.num_nodes()];
    for (k, line) in lines.enumerate() {
        let nums = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("CSV row {}", k + 1))?;
        if nums.len() != cols {
            bail!("CSV row {} has {} columns, expected {cols}", k + 1, nums.len());
        }
        let p = if planar { [nums[0], nums[1]] } else { [nums[0], 0.0] };
        let Some(node) = locator.find(p) else {
            bail!("CSV row {} at {:?} is not a grid node", k + 1, &nums[..cols - 1]);
        };
        if values[node].replace(nums[cols - 1]).is_some() {
            bail!("CSV row {} repeats the node at {:?}", k + 1, &nums[..cols - 1]);
        }
    }
    let missing = values.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        bail!("CSV lacks {missing} of the grid's {} nodes", grid.num_nodes());
    }
    Ok(ScalarField::from_values(grid, kind, values.into_iter().flatten().collect())?)
}

pub fn read_csv(path: &Path, grid: &Grid, kind: FieldKind) -> anyhow::Result<ScalarField> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_csv(&text, grid, kind).with_context(|| format!("in {}", path.display()))
}

/// The graph of `u` with upward unit normals `(-grad u, 1) / D` at the
/// vertices. Surfaces use the grid's conforming mesh; curves become
/// polylines in the `xz` plane.
pub fn obj_string(u: &ScalarField, grid: &Grid) -> anyhow::Result<String> {
    let grads = gradients_everywhere(u, grid)?;
    let mut s = String::from("# graph surface\n");
    for (p, v) in grid.positions().iter().zip(u.values()) {
        if grid.dim() == 2 {
            let _ = writeln!(s, "v {} {} {}", p[0], p[1], v);
        } else {
            let _ = writeln!(s, "v {} 0 {}", p[0], v);
        }
    }
    for g in &grads {
        let d = (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
        let _ = writeln!(s, "vn {} {} {}", -g[0] / d, -g[1] / d, 1.0 / d);
    }
    if grid.dim() == 2 {
        for t in grid.mesh() {
            let [a, b, c] = t.map(|i| i + 1);
            let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
        }
    } else {
        let mut order: Vec<usize> = (0..grid.num_nodes()).collect();
        order.sort_by(|&a, &b| grid.positions()[a][0].total_cmp(&grid.positions()[b][0]));
        s.push('l');
        for i in order {
            let _ = write!(s, " {}", i + 1);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_obj(path: &Path, u: &ScalarField, grid: &Grid) -> anyhow::Result<()> {
    std::fs::write(path, obj_string(u, grid)?).with_context(|| format!("writing {}", path.display()))
}

/// Coordinate format with one-based indices; every stored entry is listed.
pub fn mtx_string(a: &CsrMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.n(), a.n(), a.nnz());
    for i in 0..a.n() {
        for (j, v) in a.row(i) {
            let _ = writeln!(s, "{} {} {}", i + 1, j + 1, v);
        }
    }
    s
}

pub fn vector_mtx_string(b: &[f64]) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} 1", b.len());
    for v in b {
        let _ = writeln!(s, "{v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmcv_core::DomainSpec;

    #[test]
    fn csv_round_trips_bitwise() {
        for spec in [DomainSpec::unit_disk(), DomainSpec::Interval { a: -1.0, b: 2.0 }] {
            let grid = Grid::build(spec, 9).unwrap();
            let f = ScalarField::from_fn(&grid, FieldKind::Height, |p| (p[0] * 1.7).sin() / 3.0 + p[1]).unwrap();
            let back = parse_csv(&csv_string(&f, &grid), &grid, FieldKind::Height).unwrap();
            assert_eq!(back.values(), f.values());
        }
    }

    #[test]
    fn csv_mismatch_is_rejected() {
        let a = Grid::build(DomainSpec::unit_square(), 9).unwrap();
        let b = Grid::build(DomainSpec::unit_square(), 5).unwrap();
        let f = ScalarField::zeros(&a, FieldKind::Height);
        assert!(parse_csv(&csv_string(&f, &a), &b, FieldKind::Height).is_err());
        assert!(parse_csv("x,value\n0,1\n", &b, FieldKind::Height).is_err());
        let text = csv_string(&ScalarField::zeros(&b, FieldKind::Height), &b);
        let mut rows: Vec<&str> = text.lines().collect();
        rows[1..].reverse();
        assert!(parse_csv(&rows.join("\n"), &b, FieldKind::Height).is_ok());
        rows.pop();
        assert!(parse_csv(&rows.join("\n"), &b, FieldKind::Height).is_err());
        rows.push(rows[1]);
        assert!(parse_csv(&rows.join("\n"), &b, FieldKind::Height).is_err());
    }

    #[test]
    fn obj_lists_vertices_normals_faces() {
        let grid = Grid::build(DomainSpec::unit_square(), 5).unwrap();
        let u = ScalarField::from_fn(&grid, FieldKind::Height, |p| p[0]).unwrap();
        let obj = obj_string(&u, &grid).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 25);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 32);
        let r = 0.5f64.sqrt();
        for l in obj.lines().filter(|l| l.starts_with("vn ")) {
            let n: Vec<f64> = l[3..].split(' ').map(|t| t.parse().unwrap()).collect();
            assert!((n[0] + r).abs() < 1e-12 && n[1].abs() < 1e-12 && (n[2] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn mtx_lists_entries() {
        let a = CsrMatrix::from_pattern(2, &[vec![0, 1], vec![0, 1]]);
        let s = mtx_string(&a);
        assert!(s.starts_with("%%MatrixMarket"));
        assert_eq!(s.lines().count(), 2 + 4);
        assert_eq!(vector_mtx_string(&[1.5, 2.0]).lines().nth(2), Some("1.5"));
    }
}
