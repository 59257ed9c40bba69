//! Domains, their lattice discretization, and boundary geometry.
//!
//! A [`Grid`] is a uniform lattice clipped to the domain. Lattice points
//! strictly inside are interior nodes, points on the boundary (within
//! `1e-10 * diam`) are boundary nodes, and wherever a lattice edge leaves a
//! disk its intersection with the circle becomes an extra boundary node. The
//! fractional distance to that intersection is the arm length `theta` of the
//! interior endpoint, as in the Shortley-Weller construction.
//!
//! Each lattice cell, clipped to the domain, is a convex polygon whose
//! vertices are grid nodes. A full cell is split both ways along its
//! diagonals, each half-weighted, so the Laplacian of the resulting
//! piecewise-linear element complex is the five-point stencil. A cut cell is
//! triangulated to minimize its largest angle, which keeps the gradient
//! error of the interpolant bounded next to the boundary. All discrete
//! operators of the crate are built on these elements.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::expr::Expr;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// The computational domain.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Rectangle { ax: f64, bx: f64, ay: f64, by: f64 },
    Disk { center: [f64; 2], radius: f64 },
}

impl DomainSpec {
    pub fn unit_square() -> Self {
        DomainSpec::Rectangle { ax: 0.0, bx: 1.0, ay: 0.0, by: 1.0 }
    }

    pub fn unit_disk() -> Self {
        DomainSpec::Disk { center: [0.0, 0.0], radius: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            DomainSpec::Interval { a, b } if ok(&[a, b]) && b > a => Ok(()),
            DomainSpec::Rectangle { ax, bx, ay, by } if ok(&[ax, bx, ay, by]) && bx > ax && by > ay => {
                Ok(())
            }
            DomainSpec::Disk { center, radius } if ok(&[center[0], center[1], radius]) && radius > 0.0 => {
                Ok(())
            }
            other => Err(Error::InvalidDomain(format!("{other:?}"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Origin of the polar variables `r` and `t` in expressions.
    pub fn center(&self) -> [f64; 2] {
        match *self {
            DomainSpec::Interval { a, b } => [0.5 * (a + b), 0.0],
            DomainSpec::Rectangle { ax, bx, ay, by } => [0.5 * (ax + bx), 0.5 * (ay + by)],
            DomainSpec::Disk { center, .. } => center,
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            DomainSpec::Interval { a, b } => b - a,
            DomainSpec::Rectangle { ax, bx, ay, by } => libm::hypot(bx - ax, by - ay),
            DomainSpec::Disk { radius, .. } => 2.0 * radius,
        }
    }

    pub(crate) fn boundary_tol(&self) -> f64 {
        1e-10 * self.diameter()
    }

    /// Smooth function vanishing on the boundary and positive inside, with
    /// supremum one.
    pub fn bubble(&self, p: [f64; 2]) -> f64 {
        match *self {
            DomainSpec::Interval { a, b } => {
                let s = (p[0] - a) * (b - p[0]);
                4.0 * s / ((b - a) * (b - a))
            }
            DomainSpec::Rectangle { ax, bx, ay, by } => {
                let sx = 4.0 * (p[0] - ax) * (bx - p[0]) / ((bx - ax) * (bx - ax));
                let sy = 4.0 * (p[1] - ay) * (by - p[1]) / ((by - ay) * (by - ay));
                sx * sy
            }
            DomainSpec::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                1.0 - (dx * dx + dy * dy) / (radius * radius)
            }
        }
    }

    /// Points along the boundary at which boundary data is sampled: `count`
    /// equally spaced angles on a circle, `count / 4` points on each open edge
    /// of a rectangle, both endpoints of an interval.
    pub fn boundary_samples(&self, count: usize) -> Vec<[f64; 2]> {
        let count = count.max(4);
        match *self {
            DomainSpec::Interval { a, b } => vec![[a, 0.0], [b, 0.0]],
            DomainSpec::Disk { center, radius } => (0..count)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / count as f64;
                    [center[0] + radius * libm::cos(t), center[1] + radius * libm::sin(t)]
                })
                .collect(),
            DomainSpec::Rectangle { ax, bx, ay, by } => {
                let per = count.div_ceil(4);
                let mut out = Vec::with_capacity(4 * per);
                for k in 0..per {
                    let s = (k as f64 + 0.5) / per as f64;
                    out.push([ax + s * (bx - ax), ay]);
                    out.push([bx, ay + s * (by - ay)]);
                    out.push([bx - s * (bx - ax), by]);
                    out.push([ax, by - s * (by - ay)]);
                }
                out
            }
        }
    }
}

/// `|B_1|` in dimension `n`.
pub fn ball_volume(n: usize) -> Result<f64> {
    match n {
        1 => Ok(2.0),
        2 => Ok(PI),
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// Exact `|Omega|`.
pub fn domain_volume(spec: &DomainSpec) -> f64 {
    match *spec {
        DomainSpec::Interval { a, b } => b - a,
        DomainSpec::Rectangle { ax, bx, ay, by } => (bx - ax) * (by - ay),
        DomainSpec::Disk { radius, .. } => PI * radius * radius,
    }
}

/// Mean curvature of the boundary at `p` with respect to the inner normal.
/// Zero at interval endpoints, where the admissibility check uses its own rule.
pub fn boundary_mean_curvature(spec: &DomainSpec, p: [f64; 2]) -> Result<f64> {
    let tol = spec.boundary_tol();
    let off = Error::NotOnBoundary { x: p[0], y: p[1] };
    match *spec {
        DomainSpec::Interval { a, b } => {
            if (p[0] - a).abs() <= tol || (p[0] - b).abs() <= tol {
                Ok(0.0)
            } else {
                Err(off)
            }
        }
        DomainSpec::Disk { center, radius } => {
            let d = libm::hypot(p[0] - center[0], p[1] - center[1]);
            if (d - radius).abs() <= tol {
                Ok(1.0 / radius)
            } else {
                Err(off)
            }
        }
        DomainSpec::Rectangle { ax, bx, ay, by } => {
            let on_x = (p[0] - ax).abs() <= tol || (p[0] - bx).abs() <= tol;
            let on_y = (p[1] - ay).abs() <= tol || (p[1] - by).abs() <= tol;
            let in_x = p[0] >= ax - tol && p[0] <= bx + tol;
            let in_y = p[1] >= ay - tol && p[1] <= by + tol;
            match (on_x && in_y, on_y && in_x) {
                (true, true) => Err(Error::Corner { x: p[0], y: p[1] }),
                (true, false) | (false, true) => Ok(0.0),
                (false, false) => Err(off),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

/// Step from an interior node to its neighbour along one axis direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    /// Fraction of the lattice spacing, in `(0, 1]`.
    pub theta: f64,
    /// Node index of the neighbour or of the boundary intersection.
    pub target: usize,
}

/// Arm directions in the order stored by [`Grid::arms`].
pub const EAST: usize = 0;
pub const WEST: usize = 1;
pub const NORTH: usize = 2;
pub const SOUTH: usize = 3;

/// A weighted linear element: a segment in one dimension, a triangle in two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    verts: [usize; 3],
    len: usize,
    /// Weight times length or area.
    pub measure: f64,
    /// Gradients of the nodal basis functions, in vertex order.
    pub grads: [[f64; 2]; 3],
}

impl Element {
    pub fn verts(&self) -> &[usize] {
        &self.verts[..self.len]
    }

    pub fn grads(&self) -> &[[f64; 2]] {
        &self.grads[..self.len]
    }

    /// Gradient of the interpolant of nodal `values` on this element.
    #[inline]
    pub fn gradient(&self, values: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..self.len {
            let v = values[self.verts[k]];
            g[0] += v * self.grads[k][0];
            g[1] += v * self.grads[k][1];
        }
        g
    }
}

const NO_SLOT: u32 = u32::MAX;

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

/// A clipped lattice with its element complex. Immutable once built.
#[derive(Debug, Clone)]
pub struct Grid {
    id: u64,
    spec: DomainSpec,
    m: usize,
    spacing: [f64; 2],
    lattice_dims: [usize; 2],
    lattice_kind: Vec<NodeKind>,
    lattice_node: Vec<Option<usize>>,
    positions: Vec<[f64; 2]>,
    node_lattice: Vec<Option<[usize; 2]>>,
    num_interior: usize,
    arms: Vec<[Option<Arm>; 4]>,
    elements: Vec<Element>,
    weights: Vec<f64>,
    boundary_loop: Vec<usize>,
    arc_weights: Vec<f64>,
    pattern: CsrMatrix,
    slots: Vec<[[u32; 3]; 3]>,
    mesh: Vec<[usize; 3]>,
}

struct Raw {
    positions: Vec<[f64; 2]>,
    lattice: Vec<Option<[usize; 2]>>,
    lattice_node: Vec<Option<usize>>,
    num_interior: usize,
    arms: Vec<[Option<Arm>; 4]>,
    polys: Vec<Vec<usize>>,
}

fn axis(a: f64, b: f64, m: usize) -> (Vec<f64>, f64) {
    let h = (b - a) / (m - 1) as f64;
    let xs = (0..m).map(|i| if i == m - 1 { b } else { a + i as f64 * h }).collect();
    (xs, h)
}

impl Grid {
    /// Builds the grid with `m` lattice points per axis. For a disk the lattice
    /// spans the bounding box.
    pub fn build(spec: DomainSpec, m: usize) -> Result<Grid> {
        spec.validate()?;
        if m < 4 {
            return Err(Error::TooFewNodes(m));
        }
        let (xs, ys, hx, hy) = match spec {
            DomainSpec::Interval { a, b } => {
                let (xs, h) = axis(a, b, m);
                (xs, vec![0.0], h, 0.0)
            }
            DomainSpec::Rectangle { ax, bx, ay, by } => {
                let (xs, hx) = axis(ax, bx, m);
                let (ys, hy) = axis(ay, by, m);
                (xs, ys, hx, hy)
            }
            DomainSpec::Disk { center, radius } => {
                let (xs, h) = axis(center[0] - radius, center[0] + radius, m);
                let (ys, _) = axis(center[1] - radius, center[1] + radius, m);
                (xs, ys, h, h)
            }
        };
        let dims = [xs.len(), ys.len()];
        let lattice_kind: Vec<NodeKind> = (0..dims[1])
            .flat_map(|j| (0..dims[0]).map(move |i| (i, j)))
            .map(|(i, j)| classify(&spec, [i, j], dims, [xs[i], ys[j]]))
            .collect();

        let raw = match spec {
            DomainSpec::Interval { .. } => raw_interval(&xs, &lattice_kind),
            _ => raw_planar(&spec, &xs, &ys, hx, &lattice_kind, dims),
        };
        Ok(Self::finish(spec, m, [hx, hy], dims, lattice_kind, raw))
    }

    fn finish(
        spec: DomainSpec,
        m: usize,
        spacing: [f64; 2],
        dims: [usize; 2],
        lattice_kind: Vec<NodeKind>,
        raw: Raw,
    ) -> Grid {
        let dim = spec.dim();
        let cell_area = if dim == 1 { spacing[0] } else { spacing[0] * spacing[1] };

        // elements first, so unused boundary nodes can be dropped
        // (vertices, vertex count, weight, part of the display mesh)
        let mut tris: Vec<([usize; 3], usize, f64, bool)> = Vec::new();
        for poly in &raw.polys {
            if dim == 1 {
                tris.push(([poly[0], poly[1], 0], 2, 1.0, false));
                continue;
            }
            let k = poly.len();
            if k < 3 {
                continue;
            }
            if k == 3 {
                tris.push(([poly[0], poly[1], poly[2]], 3, 1.0, true));
                continue;
            }
            if k == 4 && poly.iter().all(|&v| raw.lattice[v].is_some()) {
                for apex in 0..2 {
                    for s in 1..3 {
                        tris.push(([poly[apex], poly[(apex + s) % 4], poly[(apex + s + 1) % 4]], 3, 0.5, apex == 0));
                    }
                }
                continue;
            }
            for t in min_max_angle(&raw.positions, poly) {
                tris.push((t, 3, 1.0, true));
            }
        }
        let mut elements = Vec::with_capacity(tris.len());
        let mut mesh_elements = Vec::new();
        let mut used = vec![false; raw.positions.len()];
        for (v, len, weight, in_mesh) in tris {
            let e = if len == 2 {
                let h = raw.positions[v[1]][0] - raw.positions[v[0]][0];
                Element {
                    verts: v,
                    len,
                    measure: weight * h,
                    grads: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0; 2]],
                }
            } else {
                let [p0, p1, p2] = [raw.positions[v[0]], raw.positions[v[1]], raw.positions[v[2]]];
                let a2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
                if a2.abs() <= 1e-13 * cell_area {
                    continue;
                }
                let g = |pj: [f64; 2], pk: [f64; 2]| [(pj[1] - pk[1]) / a2, (pk[0] - pj[0]) / a2];
                Element {
                    verts: v,
                    len,
                    measure: weight * 0.5 * a2.abs(),
                    grads: [g(p1, p2), g(p2, p0), g(p0, p1)],
                }
            };
            for &i in e.verts() {
                used[i] = true;
            }
            if in_mesh {
                mesh_elements.push(elements.len());
            }
            elements.push(e);
        }
        for u in used.iter_mut().take(raw.num_interior) {
            debug_assert!(*u);
            *u = true;
        }

        // compaction
        let mut remap = vec![usize::MAX; used.len()];
        let mut next = 0;
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = next;
                next += 1;
            }
        }
        let keep = |v: &Vec<[f64; 2]>| -> Vec<[f64; 2]> {
            v.iter().zip(&used).filter(|(_, u)| **u).map(|(p, _)| *p).collect()
        };
        let positions = keep(&raw.positions);
        let node_lattice: Vec<Option<[usize; 2]>> =
            raw.lattice.iter().zip(&used).filter(|(_, u)| **u).map(|(l, _)| *l).collect();
        let lattice_node: Vec<Option<usize>> = raw
            .lattice_node
            .iter()
            .map(|o| o.and_then(|i| (remap[i] != usize::MAX).then(|| remap[i])))
            .collect();
        let arms: Vec<[Option<Arm>; 4]> = raw
            .arms
            .iter()
            .map(|a| a.map(|o| o.map(|arm| Arm { theta: arm.theta, target: remap[arm.target] })))
            .collect();
        for e in &mut elements {
            for k in 0..e.len {
                e.verts[k] = remap[e.verts[k]];
            }
        }
        let mesh: Vec<[usize; 3]> = mesh_elements.iter().map(|&e| elements[e].verts).collect();
        let num_interior = raw.num_interior;
        let n = positions.len();

        let mut weights = vec![0.0; n];
        for e in &elements {
            let share = e.measure / e.len as f64;
            for &i in e.verts() {
                weights[i] += share;
            }
        }

        let (boundary_loop, arc_weights) = boundary_loop(&spec, &positions, num_interior);

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_interior];
        for e in &elements {
            for &a in e.verts() {
                for &b in e.verts() {
                    if a < num_interior && b < num_interior {
                        rows[a].push(b);
                    }
                }
            }
        }
        let pattern = CsrMatrix::from_pattern(num_interior, &rows);
        let slots = elements
            .iter()
            .map(|e| {
                let mut s = [[NO_SLOT; 3]; 3];
                for (p, &a) in e.verts().iter().enumerate() {
                    for (q, &b) in e.verts().iter().enumerate() {
                        if a < num_interior && b < num_interior {
                            s[p][q] = pattern.slot(a, b).expect("pattern covers element") as u32;
                        }
                    }
                }
                s
            })
            .collect();

        Grid {
            id: NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed),
            spec,
            m,
            spacing,
            lattice_dims: dims,
            lattice_kind,
            lattice_node,
            positions,
            node_lattice,
            num_interior,
            arms,
            elements,
            weights,
            boundary_loop,
            arc_weights,
            pattern,
            slots,
            mesh,
        }
    }

    /// Process-unique identity, used to catch fields from a different grid.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Lattice points per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    /// `[hx, hy]`; `hy` is zero in one dimension.
    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn lattice_dims(&self) -> [usize; 2] {
        self.lattice_dims
    }

    /// Classification of lattice point `(i, j)`.
    pub fn lattice_kind(&self, i: usize, j: usize) -> NodeKind {
        self.lattice_kind[j * self.lattice_dims[0] + i]
    }

    /// Node index of lattice point `(i, j)`, if it is a node.
    pub fn lattice_node(&self, i: usize, j: usize) -> Option<usize> {
        self.lattice_node[j * self.lattice_dims[0] + i]
    }

    /// Lattice coordinates of a node; `None` for boundary intersections.
    pub fn node_lattice(&self, node: usize) -> Option<[usize; 2]> {
        self.node_lattice[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn num_interior(&self) -> usize {
        self.num_interior
    }

    pub fn num_boundary(&self) -> usize {
        self.positions.len() - self.num_interior
    }

    pub fn node_kind(&self, node: usize) -> NodeKind {
        if node < self.num_interior {
            NodeKind::Interior
        } else {
            NodeKind::Boundary
        }
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn boundary_positions(&self) -> &[[f64; 2]] {
        &self.positions[self.num_interior..]
    }

    /// Arms of every interior node, indexed by [`EAST`], [`WEST`], [`NORTH`],
    /// [`SOUTH`]. Only east and west exist in one dimension.
    pub fn arms(&self) -> &[[Option<Arm>; 4]] {
        &self.arms
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Lumped quadrature weight of every node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Boundary nodes in order along the boundary (closed loop in two dimensions).
    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary_loop
    }

    /// Arc-length weight of each entry of [`Grid::boundary_loop`].
    pub fn arc_weights(&self) -> &[f64] {
        &self.arc_weights
    }

    /// Zero matrix with the interior-interior sparsity of the element complex.
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// A conforming, non-overlapping triangulation of the discrete domain
    /// (one diagonal per full cell); empty in one dimension.
    pub fn mesh(&self) -> &[[usize; 3]] {
        &self.mesh
    }

    /// Value-array positions of the local matrix entries of element `e`.
    pub(crate) fn element_slots(&self, e: usize) -> &[[u32; 3]; 3] {
        &self.slots[e]
    }
}

/// Longest boundary chord of a cut cell, as a fraction of the spacing.
const MAX_CHORD: f64 = 0.5;

/// Inserts points of the circle strictly between boundary nodes `a` and `b`
/// so that no chord of the arc from `a` to `b` exceeds `MAX_CHORD * h`.
#[allow(clippy::too_many_arguments)]
fn refine_arc(
    positions: &mut Vec<[f64; 2]>,
    lattice: &mut Vec<Option<[usize; 2]>>,
    poly: &mut Vec<usize>,
    center: [f64; 2],
    radius: f64,
    a: usize,
    b: usize,
    h: f64,
) {
    let angle = |p: [f64; 2]| libm::atan2(p[1] - center[1], p[0] - center[0]);
    let a0 = angle(positions[a]);
    let mut d = angle(positions[b]) - a0;
    if d > PI {
        d -= 2.0 * PI;
    } else if d < -PI {
        d += 2.0 * PI;
    }
    let chord = 2.0 * radius * libm::sin(0.5 * d.abs());
    let pieces = libm::ceil(chord / (MAX_CHORD * h)) as usize;
    for k in 1..pieces {
        let t = a0 + d * k as f64 / pieces as f64;
        poly.push(positions.len());
        positions.push([center[0] + radius * libm::cos(t), center[1] + radius * libm::sin(t)]);
        lattice.push(None);
    }
}

fn max_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let d2 = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]);
    let (ab, bc, ca) = (d2(a, b), d2(b, c), d2(c, a));
    // the largest angle is opposite the longest side
    let (opp, s1, s2) = if ab >= bc && ab >= ca {
        (ab, bc, ca)
    } else if bc >= ca {
        (bc, ab, ca)
    } else {
        (ca, ab, bc)
    };
    let den = 2.0 * libm::sqrt(s1 * s2);
    if den <= 0.0 {
        return PI;
    }
    libm::acos(((s1 + s2 - opp) / den).clamp(-1.0, 1.0))
}

/// Triangulation of a convex polygon minimizing the largest angle.
fn min_max_angle(pos: &[[f64; 2]], poly: &[usize]) -> Vec<[usize; 3]> {
    let k = poly.len();
    // best[i][j]: (largest angle, split) for the sub-polygon i..=j
    let mut best = vec![vec![(0.0f64, usize::MAX); k]; k];
    for len in 2..k {
        for i in 0..k - len {
            let j = i + len;
            let mut cell = (f64::INFINITY, usize::MAX);
            for s in i + 1..j {
                let a = max_angle(pos[poly[i]], pos[poly[s]], pos[poly[j]]);
                let c = a.max(best[i][s].0).max(best[s][j].0);
                if c < cell.0 {
                    cell = (c, s);
                }
            }
            best[i][j] = cell;
        }
    }
    let mut out = Vec::with_capacity(k - 2);
    let mut stack = vec![(0, k - 1)];
    while let Some((i, j)) = stack.pop() {
        if j < i + 2 {
            continue;
        }
        let s = best[i][j].1;
        out.push([poly[i], poly[s], poly[j]]);
        stack.push((i, s));
        stack.push((s, j));
    }
    out
}

fn classify(spec: &DomainSpec, ij: [usize; 2], dims: [usize; 2], p: [f64; 2]) -> NodeKind {
    match *spec {
        DomainSpec::Interval { .. } => {
            if ij[0] == 0 || ij[0] == dims[0] - 1 {
                NodeKind::Boundary
            } else {
                NodeKind::Interior
            }
        }
        DomainSpec::Rectangle { .. } => {
            if ij[0] == 0 || ij[1] == 0 || ij[0] == dims[0] - 1 || ij[1] == dims[1] - 1 {
                NodeKind::Boundary
            } else {
                NodeKind::Interior
            }
        }
        DomainSpec::Disk { center, radius } => {
            let d = libm::hypot(p[0] - center[0], p[1] - center[1]);
            if (d - radius).abs() <= spec.boundary_tol() {
                NodeKind::Boundary
            } else if d < radius {
                NodeKind::Interior
            } else {
                NodeKind::Exterior
            }
        }
    }
}

/// Lattice nodes in order: interior first, then boundary, both row-major.
fn number_lattice(kinds: &[NodeKind]) -> (Vec<Option<usize>>, usize, usize) {
    let mut idx = vec![None; kinds.len()];
    let mut next = 0;
    for (k, kind) in kinds.iter().enumerate() {
        if *kind == NodeKind::Interior {
            idx[k] = Some(next);
            next += 1;
        }
    }
    let ni = next;
    for (k, kind) in kinds.iter().enumerate() {
        if *kind == NodeKind::Boundary {
            idx[k] = Some(next);
            next += 1;
        }
    }
    (idx, ni, next)
}

fn raw_interval(xs: &[f64], kinds: &[NodeKind]) -> Raw {
    let m = xs.len();
    let (lattice_node, ni, n) = number_lattice(kinds);
    let mut positions = vec![[0.0; 2]; n];
    let mut lattice = vec![None; n];
    for i in 0..m {
        let k = lattice_node[i].unwrap();
        positions[k] = [xs[i], 0.0];
        lattice[k] = Some([i, 0]);
    }
    let mut arms = vec![[None; 4]; ni];
    for i in 1..m - 1 {
        let k = lattice_node[i].unwrap();
        arms[k][EAST] = Some(Arm { theta: 1.0, target: lattice_node[i + 1].unwrap() });
        arms[k][WEST] = Some(Arm { theta: 1.0, target: lattice_node[i - 1].unwrap() });
    }
    let polys = (0..m - 1).map(|i| vec![lattice_node[i].unwrap(), lattice_node[i + 1].unwrap()]).collect();
    Raw { positions, lattice, lattice_node, num_interior: ni, arms, polys }
}

fn raw_planar(
    spec: &DomainSpec,
    xs: &[f64],
    ys: &[f64],
    h: f64,
    kinds: &[NodeKind],
    dims: [usize; 2],
) -> Raw {
    let [mx, my] = dims;
    let at = |i: usize, j: usize| j * mx + i;
    let (lattice_node, ni, nl) = number_lattice(kinds);
    let mut positions = vec![[0.0; 2]; nl];
    let mut lattice = vec![None; nl];
    for j in 0..my {
        for i in 0..mx {
            if let Some(k) = lattice_node[at(i, j)] {
                positions[k] = [xs[i], ys[j]];
                lattice[k] = Some([i, j]);
            }
        }
    }

    // Boundary intersections per lattice edge, ordered by increasing
    // coordinate. Edge id: 2 * (j * mx + i), plus one for vertical edges.
    let mut crossings: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    if let DomainSpec::Disk { center, radius } = *spec {
        let margin = 1e-9;
        let mut add = |positions: &mut Vec<[f64; 2]>,
                       lattice: &mut Vec<Option<[usize; 2]>>,
                       edge: usize,
                       roots: [f64; 2],
                       fixed: f64,
                       lo: f64,
                       vertical: bool,
                       ends: [NodeKind; 2]| {
            let mut list = Vec::new();
            for x in roots {
                let t = (x - lo) / h;
                if !(t > 0.0 && t < 1.0) {
                    continue;
                }
                if (t < margin && ends[0] == NodeKind::Boundary) || (t > 1.0 - margin && ends[1] == NodeKind::Boundary)
                {
                    continue;
                }
                list.push(t);
            }
            if list.len() == 2 && (list[1] - list[0]).abs() < 1e-6 {
                // grazing contact: the sliver of domain beyond this edge is negligible
                list.clear();
            }
            if list.is_empty() {
                return;
            }
            list.sort_by(f64::total_cmp);
            let entry = crossings.entry(edge).or_default();
            for t in list {
                let x = lo + t * h;
                let p = if vertical { [fixed, x] } else { [x, fixed] };
                entry.push((t, positions.len()));
                positions.push(p);
                lattice.push(None);
            }
        };
        for j in 0..my {
            for i in 0..mx {
                if i + 1 < mx {
                    let ends = [kinds[at(i, j)], kinds[at(i + 1, j)]];
                    if ends.contains(&NodeKind::Exterior) {
                        let dy = ys[j] - center[1];
                        let s = radius * radius - dy * dy;
                        if s > 0.0 {
                            let r = libm::sqrt(s);
                            add(
                                &mut positions,
                                &mut lattice,
                                2 * at(i, j),
                                [center[0] - r, center[0] + r],
                                ys[j],
                                xs[i],
                                false,
                                ends,
                            );
                        }
                    }
                }
                if j + 1 < my {
                    let ends = [kinds[at(i, j)], kinds[at(i, j + 1)]];
                    if ends.contains(&NodeKind::Exterior) {
                        let dx = xs[i] - center[0];
                        let s = radius * radius - dx * dx;
                        if s > 0.0 {
                            let r = libm::sqrt(s);
                            add(
                                &mut positions,
                                &mut lattice,
                                2 * at(i, j) + 1,
                                [center[1] - r, center[1] + r],
                                xs[i],
                                ys[j],
                                true,
                                ends,
                            );
                        }
                    }
                }
            }
        }
    }

    let inside = |i: usize, j: usize| kinds[at(i, j)] != NodeKind::Exterior;
    let edge_points = |edge: usize| crossings.get(&edge).map(|v| v.as_slice()).unwrap_or(&[]);

    let mut arms = vec![[None; 4]; ni];
    for j in 0..my {
        for i in 0..mx {
            if kinds[at(i, j)] != NodeKind::Interior {
                continue;
            }
            let k = lattice_node[at(i, j)].unwrap();
            // neighbours exist: interior lattice points are never on the outer frame
            let dirs = [(EAST, i + 1, j), (WEST, i - 1, j), (NORTH, i, j + 1), (SOUTH, i, j - 1)];
            for (d, ni_, nj) in dirs {
                let arm = if inside(ni_, nj) {
                    Arm { theta: 1.0, target: lattice_node[at(ni_, nj)].unwrap() }
                } else {
                    let (edge, forward) = match d {
                        EAST => (2 * at(i, j), true),
                        WEST => (2 * at(i - 1, j), false),
                        NORTH => (2 * at(i, j) + 1, true),
                        _ => (2 * at(i, j - 1) + 1, false),
                    };
                    let pts = edge_points(edge);
                    let (t, node) = if forward { pts[0] } else { pts[pts.len() - 1] };
                    Arm { theta: if forward { t } else { 1.0 - t }, target: node }
                };
                arms[k][d] = Some(arm);
            }
        }
    }

    let mut polys = Vec::new();
    for j in 0..my - 1 {
        for i in 0..mx - 1 {
            // (node, on the circle, bit set of cell sides S=1, E=2, N=4, W=8)
            let mut walk: Vec<(usize, bool, u8)> = Vec::with_capacity(8);
            let corner = |walk: &mut Vec<(usize, bool, u8)>, i: usize, j: usize, sides: u8| {
                if let Some(k) = lattice_node[at(i, j)] {
                    walk.push((k, kinds[at(i, j)] == NodeKind::Boundary, sides));
                }
            };
            corner(&mut walk, i, j, 9);
            walk.extend(edge_points(2 * at(i, j)).iter().map(|p| (p.1, true, 1)));
            corner(&mut walk, i + 1, j, 3);
            walk.extend(edge_points(2 * at(i + 1, j) + 1).iter().map(|p| (p.1, true, 2)));
            corner(&mut walk, i + 1, j + 1, 6);
            walk.extend(edge_points(2 * at(i, j + 1)).iter().rev().map(|p| (p.1, true, 4)));
            corner(&mut walk, i, j + 1, 12);
            walk.extend(edge_points(2 * at(i, j) + 1).iter().rev().map(|p| (p.1, true, 8)));
            if walk.len() < 3 {
                continue;
            }
            let mut poly = Vec::with_capacity(walk.len() + 4);
            for (k, &(node, circ, sides)) in walk.iter().enumerate() {
                poly.push(node);
                let (next, next_circ, next_sides) = walk[(k + 1) % walk.len()];
                // consecutive boundary nodes not joined along a cell side bound an arc
                if let DomainSpec::Disk { center, radius } = *spec {
                    if circ && next_circ && sides & next_sides == 0 {
                        refine_arc(&mut positions, &mut lattice, &mut poly, center, radius, node, next, h);
                    }
                }
            }
            polys.push(poly);
        }
    }
    Raw { positions, lattice, lattice_node, num_interior: ni, arms, polys }
}

fn boundary_loop(spec: &DomainSpec, positions: &[[f64; 2]], ni: usize) -> (Vec<usize>, Vec<f64>) {
    let n = positions.len();
    let mut nodes: Vec<usize> = (ni..n).collect();
    match *spec {
        DomainSpec::Interval { .. } => {
            nodes.sort_by(|&a, &b| positions[a][0].total_cmp(&positions[b][0]));
            let w = vec![1.0; nodes.len()];
            return (nodes, w);
        }
        DomainSpec::Disk { center, .. } => {
            let key = |p: [f64; 2]| libm::atan2(p[1] - center[1], p[0] - center[0]);
            nodes.sort_by(|&a, &b| key(positions[a]).total_cmp(&key(positions[b])));
        }
        DomainSpec::Rectangle { ax, bx, ay, by } => {
            let (w, hgt) = (bx - ax, by - ay);
            let tol = spec.boundary_tol();
            let key = |p: [f64; 2]| {
                if (p[1] - ay).abs() <= tol && p[0] < bx - tol {
                    p[0] - ax
                } else if (p[0] - bx).abs() <= tol && p[1] < by - tol {
                    w + (p[1] - ay)
                } else if (p[1] - by).abs() <= tol && p[0] > ax + tol {
                    w + hgt + (bx - p[0])
                } else {
                    2.0 * w + hgt + (by - p[1])
                }
            };
            nodes.sort_by(|&a, &b| key(positions[a]).total_cmp(&key(positions[b])));
        }
    }
    let k = nodes.len();
    let dist = |a: usize, b: usize| {
        let (p, q) = (positions[a], positions[b]);
        libm::hypot(p[0] - q[0], p[1] - q[1])
    };
    let weights = (0..k)
        .map(|s| 0.5 * (dist(nodes[(s + k - 1) % k], nodes[s]) + dist(nodes[s], nodes[(s + 1) % k])))
        .collect();
    (nodes, weights)
}

/// Boundary traces `g` (height) and `h` (curvature), cached at the boundary
/// nodes of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    grid_id: u64,
    g: Expr,
    h: Expr,
    g_values: Vec<f64>,
    h_values: Vec<f64>,
}

impl BoundaryData {
    pub fn new(grid: &Grid, g: Expr, h: Expr) -> Result<Self> {
        let eval = |e: &Expr| -> Result<Vec<f64>> {
            grid.boundary_positions().iter().map(|&p| e.eval(&grid.bindings(p))).collect()
        };
        let g_values = eval(&g)?;
        let h_values = eval(&h)?;
        Ok(BoundaryData { grid_id: grid.id(), g, h, g_values, h_values })
    }

    pub fn parse(grid: &Grid, g: &str, h: &str) -> Result<Self> {
        Self::new(grid, Expr::parse(g)?, Expr::parse(h)?)
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn g(&self) -> &Expr {
        &self.g
    }

    pub fn h(&self) -> &Expr {
        &self.h
    }

    /// `g` at the boundary nodes, in grid order.
    pub fn g_values(&self) -> &[f64] {
        &self.g_values
    }

    /// `h` at the boundary nodes, in grid order.
    pub fn h_values(&self) -> &[f64] {
        &self.h_values
    }

    /// Same expressions with `h` replaced.
    pub fn with_h(&self, grid: &Grid, h: Expr) -> Result<Self> {
        Self::new(grid, self.g.clone(), h)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid_id != grid.id() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn square_grid() {
        let g = Grid::build(DomainSpec::unit_square(), 5).unwrap();
        assert_eq!(g.num_nodes(), 25);
        assert_eq!(g.num_interior(), 9);
        assert_eq!(g.spacing(), [0.25, 0.25]);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let perim: f64 = g.arc_weights().iter().sum();
        assert!((perim - 4.0).abs() < 1e-12);
    }

    #[test]
    fn interval_grid() {
        let g = Grid::build(DomainSpec::Interval { a: 0.0, b: 1.0 }, 11).unwrap();
        assert_eq!(g.num_nodes(), 11);
        assert_eq!(g.num_boundary(), 2);
        let total: f64 = g.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disk_grid() {
        let g = Grid::build(DomainSpec::unit_disk(), 65).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - PI).abs() < 0.01 * PI);
        for p in g.boundary_positions() {
            assert!((libm::hypot(p[0], p[1]) - 1.0).abs() <= 1e-12);
        }
        for arms in g.arms() {
            for a in arms {
                let a = a.unwrap();
                assert!(a.theta > 0.0 && a.theta <= 1.0);
            }
        }
        let perim: f64 = g.arc_weights().iter().sum();
        assert!((perim - 2.0 * PI).abs() < 1e-4);
        let lp = g.boundary_loop();
        let h = g.spacing()[0];
        for k in 0..lp.len() {
            let (p, q) = (g.positions()[lp[k]], g.positions()[lp[(k + 1) % lp.len()]]);
            assert!(libm::hypot(p[0] - q[0], p[1] - q[1]) <= MAX_CHORD * h * (1.0 + 1e-9));
        }
        let slots = g.elements().len();
        assert!(g.elements().iter().all(|e| e.measure > 0.0) && slots > 0);
    }

    #[test]
    fn mesh_is_watertight() {
        for (spec, m) in [(DomainSpec::unit_disk(), 33), (DomainSpec::unit_square(), 9), (DomainSpec::unit_disk(), 18)] {
            let g = Grid::build(spec, m).unwrap();
            let mut edges = BTreeMap::new();
            let mut area = 0.0;
            for t in g.mesh() {
                let p: [[f64; 2]; 3] = core::array::from_fn(|k| g.positions()[t[k]]);
                area += 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            let total: f64 = g.weights().iter().sum();
            assert!((area - total).abs() < 1e-12);
            assert!(edges.values().all(|&c| c == 1 || c == 2));
            let lp = g.boundary_loop();
            let open: usize = edges.values().filter(|&&c| c == 1).count();
            assert_eq!(open, lp.len());
            for k in 0..lp.len() {
                let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
                assert_eq!(edges.get(&(a.min(b), a.max(b))), Some(&1));
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(Grid::build(DomainSpec::unit_square(), 3).unwrap_err(), Error::TooFewNodes(3));
        assert!(Grid::build(DomainSpec::Disk { center: [0.0, 0.0], radius: -1.0 }, 9).is_err());
        assert!(Grid::build(DomainSpec::Interval { a: 1.0, b: 1.0 }, 9).is_err());
    }

    #[test]
    fn volumes_and_curvature() {
        assert_eq!(ball_volume(1), Ok(2.0));
        assert_eq!(ball_volume(2), Ok(PI));
        assert_eq!(ball_volume(3), Err(Error::UnsupportedDimension(3)));
        assert_eq!(domain_volume(&DomainSpec::unit_square()), 1.0);
        assert_eq!(domain_volume(&DomainSpec::unit_disk()), PI);
        assert_eq!(domain_volume(&DomainSpec::Interval { a: 0.0, b: 3.0 }), 3.0);
        let d2 = DomainSpec::Disk { center: [0.0, 0.0], radius: 2.0 };
        assert_eq!(boundary_mean_curvature(&d2, [0.0, 2.0]), Ok(0.5));
        assert_eq!(boundary_mean_curvature(&DomainSpec::unit_disk(), [1.0, 0.0]), Ok(1.0));
        assert_eq!(boundary_mean_curvature(&DomainSpec::unit_square(), [0.5, 0.0]), Ok(0.0));
        assert!(matches!(
            boundary_mean_curvature(&DomainSpec::unit_square(), [1.0, 1.0]),
            Err(Error::Corner { .. })
        ));
        assert!(matches!(
            boundary_mean_curvature(&DomainSpec::unit_disk(), [0.5, 0.0]),
            Err(Error::NotOnBoundary { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn refinement_keeps_classification(m in 4usize..40, cx in -1.0f64..1.0, r in 0.3f64..3.0) {
            let spec = DomainSpec::Disk { center: [cx, 0.25], radius: r };
            let a = Grid::build(spec, m).unwrap();
            let b = Grid::build(spec, 2 * m - 1).unwrap();
            prop_assert_eq!(b.spacing()[0], 0.5 * a.spacing()[0]);
            for j in 0..m {
                for i in 0..m {
                    prop_assert_eq!(a.lattice_kind(i, j), b.lattice_kind(2 * i, 2 * j));
                }
            }
            let total: f64 = b.weights().iter().sum();
            prop_assert!((total - domain_volume(&spec)).abs() < 0.05 * domain_volume(&spec));
            for p in b.boundary_positions() {
                prop_assert!((libm::hypot(p[0] - cx, p[1] - 0.25) - r).abs() <= 1e-12 * r);
            }
        }
    }
}
