use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmcv::config::{Overrides, RunConfig};
use mmcv::{commands, exit_code, CmdResult, StdClock};
use mmcv_core::Mode;

/// Graph surfaces of minimum mean curvature variation.
#[derive(Parser)]
#[command(name = "mmcv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the admissibility of the boundary data.
    Check(Common),
    /// Iterate to a fixed point and write the report and fields.
    Solve(Common),
    /// Grid-convergence study of a manufactured solution.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Preset name (plane, cap, cap-R=<r>, sine); overrides mms.preset.
        #[arg(long)]
        preset: Option<String>,
        /// Comma-separated grid sizes; overrides mms.resolutions.
        #[arg(long, value_delimiter = ',')]
        resolutions: Option<Vec<usize>>,
    },
    /// Energies and sandwich check of a (u, H) pair read from CSV.
    Energy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        u: PathBuf,
        #[arg(long = "H", alias = "h")]
        h: PathBuf,
    },
    /// Write surface.obj for a height field read from CSV.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        u: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML with dotted keys).
    config: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    /// Run even if a required admissibility condition fails.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    allow_1d_nonzero_h: bool,
    /// Write u and H after every outer iteration.
    #[arg(long)]
    snapshots: bool,
    /// Write the final elliptic system in Matrix Market format.
    #[arg(long)]
    dump_system: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: mmcv_core::Error| e.to_string())
}

impl Common {
    fn load(&self) -> Result<RunConfig, mmcv::ConfigError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            mode: self.mode,
            m: self.m,
            omega: self.omega,
            eps0: self.eps0,
            force: self.force,
            allow_1d_nonzero_h: self.allow_1d_nonzero_h,
            snapshots: self.snapshots,
            dump_system: self.dump_system,
            seed: self.seed,
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Check(c) => commands::check(&c.load()?),
        Command::Solve(c) => commands::solve(&c.load()?, &StdClock::new()),
        Command::Convergence { common, preset, resolutions } => {
            let mut cfg = common.load()?;
            if preset.is_some() {
                cfg.mms.preset = preset;
            }
            if let Some(r) = resolutions {
                cfg.mms.resolutions = r;
            }
            commands::convergence(&cfg)
        }
        Command::Energy { common, u, h } => commands::energy(&common.load()?, &u, &h),
        Command::Export { common, u } => commands::export(&common.load()?, &u),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = run(cli);
    if let Err(e) = &result {
        eprintln!("error: {:#}", e.0);
    }
    exit_code(&result)
}
