//! The JSON report written by `solve`.

use mmcv_core::iterate::{ProbeReport, SolveReport};
use mmcv_core::Grid;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Bumped whenever a field changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: RunConfig,
    pub grid: GridSummary,
    pub result: SolveReport,
    /// Sampled minimality of the final pair; absent unless converged.
    pub probe: Option<ProbeReport>,
    /// Files written next to the report, in order.
    pub files: Vec<String>,
    /// The only run-dependent part of a report.
    pub timings: ReportTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub dim: usize,
    pub m: usize,
    pub spacing: [f64; 2],
    pub nodes: usize,
    pub interior: usize,
    pub boundary: usize,
    pub elements: usize,
}

impl GridSummary {
    pub fn of(grid: &Grid) -> Self {
        GridSummary {
            dim: grid.dim(),
            m: grid.m(),
            spacing: grid.spacing(),
            nodes: grid.num_nodes(),
            interior: grid.num_interior(),
            boundary: grid.num_boundary(),
            elements: grid.elements().len(),
        }
    }
}

/// Seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTimings {
    pub total: f64,
    pub elliptic: f64,
    pub pmc: f64,
    pub probe: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// A report as JSON with the `timings` member removed, for comparisons.
pub fn without_timings(json: &str) -> serde_json::Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timings");
    }
    Ok(v)
}
