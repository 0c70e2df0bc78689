use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use epflow_cli::config::{GridSpec, RunConfig};
use epflow_cli::{exit_code, RunOptions, Status, EXIT_NOT_CONVERGED, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "epflow", version, about = "Steady subsonic Euler-Poisson nozzle flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: hardware parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Grid override.
    #[arg(long, num_args = 3, value_names = ["N1", "N2", "N3"])]
    grid: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the background profile and report its properties.
    Background {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the perturbation problem and write fields and reports.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the final elliptic system in Matrix Market format.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Recompute diagnostics on fields written by `run`.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Directory holding the fields (default: the output directory).
        #[arg(long)]
        fields: Option<PathBuf>,
    },
    /// Solve for several perturbation scales and fit the linear scaling.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated perturbation scales.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
}

impl Common {
    /// Config from `--config`, or the `config.json` a previous run left in `fallback`.
    fn load(&self, fallback: Option<&Path>) -> Result<(RunConfig, PathBuf)> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
        }
        let path = match (&self.config, fallback) {
            (Some(p), _) => p.clone(),
            (None, Some(dir)) => dir.join("config.json"),
            (None, None) => anyhow::bail!(epflow_cli::config::ConfigError::Invalid {
                pointer: "/".into(),
                message: "--config is required".into(),
            }),
        };
        let mut cfg = RunConfig::load(&path)?;
        if let Some(g) = &self.grid {
            cfg = cfg.with_grid(GridSpec {
                n1: g[0],
                n2: g[1],
                n3: g[2],
            })?;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.output.clone());
        Ok((cfg, out))
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Background { common } => {
            let (cfg, out) = common.load(None)?;
            epflow_cli::write_background(&cfg, &out)?;
            Ok(EXIT_OK)
        }
        Command::Run { common, dump_matrix } => {
            let (cfg, out) = common.load(None)?;
            let status = epflow_cli::run(&cfg, &out, RunOptions { dump_matrix })?;
            if status != Status::Converged {
                eprintln!(
                    "epflow: fixed-point iteration {status:?}; see {}",
                    out.join("convergence.json").display()
                );
            }
            Ok(status.exit_code())
        }
        Command::Verify { common, fields } => {
            let fallback = fields.clone().or_else(|| common.out.clone());
            let (cfg, out) = common.load(fallback.as_deref())?;
            let fields = fields.unwrap_or_else(|| out.clone());
            epflow_cli::verify(&cfg, &fields, &out)?;
            Ok(EXIT_OK)
        }
        Command::Sweep { common, eps } => {
            let (cfg, out) = common.load(None)?;
            let report = epflow_cli::sweep(&cfg, &eps, &out)?;
            Ok(if report.complete { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = execute(cli).unwrap_or_else(|e| {
        eprintln!("epflow: {e:#}");
        exit_code(&e)
    });
    ExitCode::from(code as u8)
}
