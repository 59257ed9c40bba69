//! Nodal fields on a [`Grid`].

use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{Bindings, Expr};
use crate::geometry::Grid;
use crate::{Error, Result};

/// What a scalar field measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FieldKind {
    /// Surface height, length units.
    Height,
    /// Mean curvature, inverse length units.
    Curvature,
    /// Dimensionless density.
    Density,
}

/// One value per non-exterior node: interior nodes first, then boundary nodes,
/// in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid_id: u64,
    kind: FieldKind,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid, kind: FieldKind) -> Self {
        ScalarField { grid_id: grid.id(), kind, values: vec![0.0; grid.num_nodes()] }
    }

    pub fn constant(grid: &Grid, kind: FieldKind, c: f64) -> Self {
        ScalarField { grid_id: grid.id(), kind, values: vec![c; grid.num_nodes()] }
    }

    /// Checks length and finiteness.
    pub fn from_values(grid: &Grid, kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::SizeMismatch { expected: grid.num_nodes(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ScalarField { grid_id: grid.id(), kind, values })
    }

    pub fn from_fn(grid: &Grid, kind: FieldKind, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = grid.positions().iter().map(|&p| f(p)).collect();
        Self::from_values(grid, kind, values)
    }

    /// Evaluates `e` at every node, with `r` and `t` measured about the domain center.
    pub fn from_expr(grid: &Grid, kind: FieldKind, e: &Expr) -> Result<Self> {
        let values = grid
            .positions()
            .iter()
            .map(|&p| e.eval(&grid.bindings(p)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(grid, kind, values)
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn interior<'a>(&'a self, grid: &Grid) -> &'a [f64] {
        &self.values[..grid.num_interior()]
    }

    pub fn boundary<'a>(&'a self, grid: &Grid) -> &'a [f64] {
        &self.values[grid.num_interior()..]
    }

    /// Overwrites the boundary entries.
    pub fn set_trace(&mut self, grid: &Grid, trace: &[f64]) -> Result<()> {
        let b = &mut self.values[grid.num_interior()..];
        if b.len() != trace.len() {
            return Err(Error::SizeMismatch { expected: b.len(), got: trace.len() });
        }
        b.copy_from_slice(trace);
        Ok(())
    }

    pub fn with_trace(mut self, grid: &Grid, trace: &[f64]) -> Result<Self> {
        self.set_trace(grid, trace)?;
        Ok(self)
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid_id != grid.id() || self.values.len() != grid.num_nodes() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup norm of the difference. Both fields must share a grid.
    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid_id, other.grid_id);
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `n` components per interior node, stored as `[f64; 2]` with a zero second
/// component when `n = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid_id: u64,
    dim: usize,
    values: Vec<[f64; 2]>,
}

impl VectorField {
    pub(crate) fn new(grid: &Grid, values: Vec<[f64; 2]>) -> Self {
        debug_assert_eq!(values.len(), grid.num_interior());
        VectorField { grid_id: grid.id(), dim: grid.dim(), values }
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }
}

impl Grid {
    /// Expression bindings at `p`, polar coordinates about the domain center.
    pub fn bindings(&self, p: [f64; 2]) -> Bindings {
        let mut b = Bindings::polar_about(p, self.spec().center());
        if self.dim() == 1 {
            b.y = None;
            b.r = Some((p[0] - self.spec().center()[0]).abs());
            b.t = None;
        }
        b
    }
}
