//! Run configuration: a flat TOML file with dotted keys.
//!
//! ```toml
//! domain.kind = "disk"
//! domain.center = [0.0, 0.0]
//! domain.radius = 1.0
//! grid.m = 65
//! data.g_expr = "0.1*(x^2 - y^2)"
//! data.h_expr = "0.3"
//! solve.mode = "simplified"
//! ```
//!
//! Every key except `data.g_expr` and `data.h_expr` has a default. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mmcv_core::admissible::AdmissibilityOptions;
use mmcv_core::iterate::IterateOptions;
use mmcv_core::pmc::NewtonOptions;
use mmcv_core::{DomainSpec, Mode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub grid: GridSection,
    pub data: DataSection,
    pub solve: SolveSection,
    pub newton: NewtonSection,
    pub admissibility: AdmissibilitySection,
    pub mms: MmsSection,
    pub probe: ProbeSection,
    /// Where files go; left out of reports so that runs writing to
    /// different directories produce identical reports.
    #[serde(skip_serializing)]
    pub output: OutputSection,
    /// Seed for every randomized step.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: DomainSpec::unit_disk(),
            grid: GridSection::default(),
            data: DataSection::default(),
            solve: SolveSection::default(),
            newton: NewtonSection::default(),
            admissibility: AdmissibilitySection::default(),
            mms: MmsSection::default(),
            probe: ProbeSection::default(),
            output: OutputSection::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub m: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { m: 65 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub g_expr: String,
    pub h_expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub mode: Mode,
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    pub force: bool,
    pub record_energy: bool,
}

impl Default for SolveSection {
    fn default() -> Self {
        let d = IterateOptions::default();
        SolveSection {
            mode: d.mode,
            tol: d.tol,
            max_iter: d.max_iter,
            omega: d.omega,
            force: d.force,
            record_energy: d.record_energy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSection {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub min_step: f64,
    pub continuation: Vec<f64>,
    pub cg_rel_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for NewtonSection {
    fn default() -> Self {
        let d = NewtonOptions::default();
        NewtonSection {
            tol: d.tol,
            max_iter: d.max_iter,
            armijo: d.armijo,
            min_step: d.min_step,
            continuation: d.continuation.clone(),
            cg_rel_tol: d.cg_rel_tol,
            cg_max_iter: d.cg_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissibilitySection {
    pub eps0: f64,
    pub allow_1d_nonzero_h: bool,
}

impl Default for AdmissibilitySection {
    fn default() -> Self {
        let d = AdmissibilityOptions::default();
        AdmissibilitySection { eps0: d.eps0, allow_1d_nonzero_h: d.allow_1d_nonzero_h }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmsSection {
    /// `plane`, `cap`, `cap-R=<r>` or `sine`; overrides `domain` when set.
    pub preset: Option<String>,
    /// Exact surface on the configured domain, used when no preset is set.
    pub u_exact_expr: Option<String>,
    pub resolutions: Vec<usize>,
    pub min_order: f64,
}

impl Default for MmsSection {
    fn default() -> Self {
        MmsSection { preset: None, u_exact_expr: None, resolutions: vec![33, 65, 129], min_order: 1.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    /// Random directions for the sampled minimality check after a solve;
    /// zero disables it.
    pub samples: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write per-iteration `u` and `H` under `dir/snapshots`.
    pub snapshots: bool,
    /// Write the final elliptic system as Matrix Market files.
    pub dump_system: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), snapshots: false, dump_system: false }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub m: Option<usize>,
    pub omega: Option<f64>,
    pub eps0: Option<f64>,
    pub force: bool,
    pub allow_1d_nonzero_h: bool,
    pub snapshots: bool,
    pub dump_system: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(mode) = o.mode {
            self.solve.mode = mode;
        }
        if let Some(m) = o.m {
            self.grid.m = m;
        }
        if let Some(omega) = o.omega {
            self.solve.omega = omega;
        }
        if let Some(eps0) = o.eps0 {
            self.admissibility.eps0 = eps0;
        }
        self.solve.force |= o.force;
        self.admissibility.allow_1d_nonzero_h |= o.allow_1d_nonzero_h;
        self.output.snapshots |= o.snapshots;
        self.output.dump_system |= o.dump_system;
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
    }

    /// Checks everything that does not need a grid.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.domain.validate()?;
        if self.grid.m < 4 {
            bail!("grid.m must be at least 4, got {}", self.grid.m);
        }
        self.iterate_options().validate()?;
        Ok(())
    }

    /// Checks that the boundary data expressions are present.
    pub fn require_data(&self) -> anyhow::Result<()> {
        if self.data.g_expr.trim().is_empty() {
            bail!("data.g_expr is required");
        }
        if self.data.h_expr.trim().is_empty() {
            bail!("data.h_expr is required");
        }
        Ok(())
    }

    pub fn newton_options(&self) -> NewtonOptions {
        let n = &self.newton;
        NewtonOptions {
            max_iter: n.max_iter,
            tol: n.tol,
            armijo: n.armijo,
            min_step: n.min_step,
            continuation: n.continuation.clone(),
            cg_rel_tol: n.cg_rel_tol,
            cg_max_iter: n.cg_max_iter,
        }
    }

    pub fn admissibility_options(&self) -> AdmissibilityOptions {
        AdmissibilityOptions {
            eps0: self.admissibility.eps0,
            allow_1d_nonzero_h: self.admissibility.allow_1d_nonzero_h,
        }
    }

    pub fn iterate_options(&self) -> IterateOptions {
        let s = &self.solve;
        IterateOptions {
            mode: s.mode,
            tol: s.tol,
            max_iter: s.max_iter,
            omega: s.omega,
            record_energy: s.record_energy,
            force: s.force,
            admissibility: self.admissibility_options(),
            newton: self.newton_options(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_parse() {
        let cfg = RunConfig::from_toml(
            r#"
domain.kind = "rectangle"
domain.ax = 0.0
domain.bx = 2.0
domain.ay = 0.0
domain.by = 1.0
grid.m = 33
data.g_expr = "x"
data.h_expr = "0"
solve.mode = "geometric"
newton.tol = 1e-11
seed = 7
"#,
        )
        .unwrap();
        assert_eq!(cfg.domain, DomainSpec::Rectangle { ax: 0.0, bx: 2.0, ay: 0.0, by: 1.0 });
        assert_eq!(cfg.grid.m, 33);
        assert_eq!(cfg.solve.mode, Mode::Geometric);
        assert_eq!(cfg.newton.tol, 1e-11);
        assert_eq!(cfg.newton.max_iter, NewtonOptions::default().max_iter);
        assert_eq!(cfg.seed, 7);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("grid.n = 3").is_err());
        assert!(RunConfig::from_toml("solve.mode = \"fast\"").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides { m: Some(17), omega: Some(0.5), force: true, ..Default::default() });
        assert_eq!(cfg.grid.m, 17);
        assert_eq!(cfg.iterate_options().omega, 0.5);
        assert!(cfg.iterate_options().force);
        cfg.grid.m = 3;
        assert!(cfg.validate().is_err());
    }
}
