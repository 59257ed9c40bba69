//! Hypotheses on the data under which the fixed-point map is well defined.
//!
//! For boundary curvature data `h` on a domain in dimension `n`:
//!
//! * `H_SMALLNESS`: `max |h| < (|B_1| / |Omega|)^(1/n)` (strict). By the
//!   maximum principle this bounds every curvature step output.
//! * `H_BOUNDARY_CURV`: `|h(y)| <= (n-1)/n * H_boundary(y)` for `n = 2`.
//! * `ONE_D_DEGENERATE`: for `n = 1` the previous bound reads `h = 0` at both
//!   endpoints. It can be downgraded to informational.
//! * `GIAQUINTA_SUFFICIENT`: the smallness bound tightened by `1 - eps0`,
//!   together with the boundary-curvature bound. Informational.
//!
//! For a curvature field `H`:
//!
//! * `H_LN_BALL`: `||H||_{L^n} < |B_1|^(1/n)` (strict).
//! * `GIAQUINTA_SUFFICIENT`: `||H||_{L^n} <= (1 - eps0) |B_1|^(1/n)`. Informational.
//!
//! A strict condition whose margin lies in `[0, 1e-12]` is borderline and
//! does not count as satisfied.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::field::ScalarField;
use crate::geometry::{ball_volume, boundary_mean_curvature, domain_volume, BoundaryData, DomainSpec, Grid};
use crate::{Error, Result};

/// Margins at or below this value are borderline for strict conditions.
pub const BORDERLINE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum ConditionName {
    HBoundaryCurv,
    HSmallness,
    HLnBall,
    GiaquintaSufficient,
    OneDDegenerate,
}

impl ConditionName {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionName::HBoundaryCurv => "H_BOUNDARY_CURV",
            ConditionName::HSmallness => "H_SMALLNESS",
            ConditionName::HLnBall => "H_LN_BALL",
            ConditionName::GiaquintaSufficient => "GIAQUINTA_SUFFICIENT",
            ConditionName::OneDDegenerate => "ONE_D_DEGENERATE",
        }
    }
}

impl fmt::Display for ConditionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Verdict {
    Satisfied,
    Borderline,
    Violated,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Condition {
    pub name: ConditionName,
    pub verdict: Verdict,
    pub satisfied: bool,
    pub margin: f64,
    /// The threshold that the sampled quantity is compared against.
    pub threshold: f64,
    pub samples: usize,
    /// Whether a failure blocks a solve.
    pub required: bool,
}

impl Condition {
    fn new(name: ConditionName, margin: f64, threshold: f64, samples: usize, strict: bool, required: bool) -> Self {
        let verdict = if margin < 0.0 || margin.is_nan() {
            Verdict::Violated
        } else if strict && margin <= BORDERLINE {
            Verdict::Borderline
        } else {
            Verdict::Satisfied
        };
        Condition { name, verdict, satisfied: verdict == Verdict::Satisfied, margin, threshold, samples, required }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdmissibilityReport {
    pub conditions: Vec<Condition>,
    pub warnings: Vec<String>,
}

impl AdmissibilityReport {
    pub fn get(&self, name: ConditionName) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// True if no required condition fails or is borderline.
    pub fn required_ok(&self) -> bool {
        self.conditions.iter().all(|c| !c.required || c.satisfied)
    }

    pub fn merge(&mut self, other: AdmissibilityReport) {
        self.conditions.extend(other.conditions);
        self.warnings.extend(other.warnings);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdmissibilityOptions {
    pub eps0: f64,
    /// Treat nonzero `h` at interval endpoints as a warning instead of a failure.
    pub allow_1d_nonzero_h: bool,
}

impl Default for AdmissibilityOptions {
    fn default() -> Self {
        AdmissibilityOptions { eps0: 0.05, allow_1d_nonzero_h: false }
    }
}

fn root(x: f64, n: usize) -> f64 {
    match n {
        1 => x,
        2 => libm::sqrt(x),
        _ => libm::pow(x, 1.0 / n as f64),
    }
}

fn check_eps0(eps0: f64) -> Result<()> {
    if eps0 > 0.0 && eps0 < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidOption(format!("eps0 must lie in (0, 1), got {eps0}")))
    }
}

/// Checks the boundary curvature data against the domain. Samples are the
/// grid's boundary nodes plus four times as many points spread along the
/// boundary.
pub fn check_h(bd: &BoundaryData, grid: &Grid, opts: &AdmissibilityOptions) -> Result<AdmissibilityReport> {
    bd.check_grid(grid)?;
    check_eps0(opts.eps0)?;
    let spec = grid.spec();
    let mut points: Vec<[f64; 2]> = grid.boundary_positions().to_vec();
    points.extend(spec.boundary_samples(4 * grid.num_boundary()));
    let values = points.iter().map(|&p| bd.h().eval(&grid.bindings(p))).collect::<Result<Vec<f64>>>()?;
    check_h_samples(spec, &points, &values, opts)
}

/// [`check_h`] on explicit boundary samples.
pub fn check_h_samples(
    spec: &DomainSpec,
    points: &[[f64; 2]],
    values: &[f64],
    opts: &AdmissibilityOptions,
) -> Result<AdmissibilityReport> {
    check_eps0(opts.eps0)?;
    let n = spec.dim();
    let mut report = AdmissibilityReport::default();
    let max_h = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let t1 = root(ball_volume(n)? / domain_volume(spec), n);
    report.conditions.push(Condition::new(ConditionName::HSmallness, t1 - max_h, t1, values.len(), true, true));

    let curv_margin = if n == 1 {
        let margin = -max_h;
        report.conditions.push(Condition::new(
            ConditionName::OneDDegenerate,
            margin,
            0.0,
            values.len(),
            false,
            !opts.allow_1d_nonzero_h,
        ));
        if opts.allow_1d_nonzero_h && margin < 0.0 {
            report.warnings.push(format!("nonzero h at interval endpoints allowed by override (max |h| = {max_h})"));
        }
        margin
    } else {
        let factor = (n - 1) as f64 / n as f64;
        let mut margin = f64::INFINITY;
        let mut threshold = f64::INFINITY;
        let mut count = 0;
        let mut corners = 0;
        for (p, v) in points.iter().zip(values) {
            match boundary_mean_curvature(spec, *p) {
                Ok(hb) => {
                    let t = factor * hb;
                    threshold = threshold.min(t);
                    margin = margin.min(t - v.abs());
                    count += 1;
                }
                Err(Error::Corner { .. }) => corners += 1,
                Err(e) => return Err(e),
            }
        }
        if let DomainSpec::Rectangle { .. } = spec {
            report.warnings.push(format!(
                "rectangle corners are not C^2; boundary curvature is checked on open edges only ({corners} corner samples skipped)"
            ));
        }
        report.conditions.push(Condition::new(ConditionName::HBoundaryCurv, margin, threshold, count, false, true));
        margin
    };

    let t3 = (1.0 - opts.eps0) * t1;
    let margin = (t3 - max_h).min(curv_margin);
    report.conditions.push(Condition::new(
        ConditionName::GiaquintaSufficient,
        margin,
        t3,
        values.len(),
        false,
        false,
    ));
    Ok(report)
}

/// `||H||_{L^n}` by nodal quadrature.
pub fn ln_norm(h: &ScalarField, grid: &Grid) -> Result<f64> {
    h.check_grid(grid)?;
    let n = grid.dim();
    let s: f64 = grid
        .weights()
        .iter()
        .zip(h.values())
        .map(|(w, v)| w * libm::pow(v.abs(), n as f64))
        .sum();
    Ok(root(s, n))
}

/// Checks a curvature field against the unit-ball bound.
pub fn check_h_field(h: &ScalarField, grid: &Grid, eps0: f64) -> Result<AdmissibilityReport> {
    check_eps0(eps0)?;
    let n = grid.dim();
    let norm = ln_norm(h, grid)?;
    let t = root(ball_volume(n)?, n);
    let samples = grid.num_nodes();
    let mut report = AdmissibilityReport::default();
    report.conditions.push(Condition::new(ConditionName::HLnBall, t - norm, t, samples, true, true));
    let tg = (1.0 - eps0) * t;
    report.conditions.push(Condition::new(ConditionName::GiaquintaSufficient, tg - norm, tg, samples, false, false));
    Ok(report)
}
