//! Numerical core for graph surfaces of minimum mean curvature variation.
//!
//! A surface is the graph of `u` over a bounded domain. Its mean curvature
//! `H` is found alternately from a linear elliptic problem
//! `div(a(v) grad H) = 0, H = h on the boundary` and the surface from the
//! prescribed mean curvature problem `div(grad u / D(u)) = n H, u = g`. The
//! composition of the two solves is iterated to a fixed point.
//!
//! Every operator is built from one piecewise-linear element complex
//! ([`geometry::Grid`]), so that all assembled matrices are exact Hessians of
//! discrete energies: they are symmetric, and the Newton iteration for the
//! prescribed mean curvature problem is the Newton iteration of a convex
//! discrete area functional.
//!
//! The crate is `no_std` and only needs `alloc`. Clocks, files and the
//! command line live in the `mmcv` companion crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod admissible;
pub mod calculus;
pub mod elliptic;
mod error;
pub mod expr;
pub mod field;
pub mod geometry;
pub mod iterate;
pub mod mms;
pub mod pmc;
pub mod sparse;
mod stencil;

pub use error::{Error, Result};
pub use field::{FieldKind, ScalarField, VectorField};
pub use geometry::{BoundaryData, DomainSpec, Grid};

/// Energy mode of the curvature step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    /// `1/2 int |grad H|^2 D(u) dx`, scalar coefficient `D(v)`.
    Simplified,
    /// `1/2 int |grad_M H|^2 dA`, tensor coefficient `D(v) I - grad v grad v^T / D(v)`.
    Geometric,
}

impl core::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplified" => Ok(Mode::Simplified),
            "geometric" => Ok(Mode::Geometric),
            other => Err(Error::InvalidOption(alloc::format!("unknown mode `{other}`"))),
        }
    }
}

impl core::fmt::Display for Mode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Mode::Simplified => "simplified",
            Mode::Geometric => "geometric",
        })
    }
}

/// Source of wall-clock time for reports. The core has no clock of its own.
pub trait Clock {
    /// Seconds since an arbitrary fixed origin.
    fn now(&self) -> f64;
}

/// A clock that always reads zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}
