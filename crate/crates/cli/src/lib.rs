//! Driver for the `epflow` solver: configuration, the `background`, `run`,
//! `verify` and `sweep` commands, and their on-disk artifacts.

pub mod artifacts;
pub mod config;

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use epflow::background::{integrate_resolved, smallness_report, BackgroundSolution, Branch, SmallnessReport};
use epflow::elliptic::assemble;
use epflow::fixpoint::{reconstruct, solve_fixed_point, ConvergenceReport, PerturbState, Scheme};
use epflow::verify::{
    beltrami_mu, bernoulli_residual, euler_poisson_residual, riccati_residual, vorticity_quantity, FlowSolution,
    ResidualReport, VerifyOptions,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_field, write_field, write_json};
use crate::config::{ConfigError, Diagnostic, RunConfig};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Diverged,
    NotConverged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => EXIT_OK,
            Status::Diverged | Status::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

/// Exit code for an error surfaced by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_INVALID;
        }
        if let Some(e) = cause.downcast_ref::<epflow::Error>() {
            return match e {
                epflow::Error::Domain { .. }
                | epflow::Error::Precondition(_)
                | epflow::Error::Compatibility(_)
                | epflow::Error::GridMismatch(_) => EXIT_INVALID,
                _ => EXIT_NOT_CONVERGED,
            };
        }
    }
    EXIT_INVALID
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundReport {
    pub branch: Branch,
    pub samples: usize,
    pub gamma: f64,
    pub b0: f64,
    pub j: f64,
    pub rho_inlet: f64,
    pub e_inlet: f64,
    pub sonic_density: f64,
    pub bernoulli_constant: f64,
    /// `max - min` of `½u₀² + h(ρ₀) - φ₀` over the samples.
    pub bernoulli_variation: f64,
    /// Largest deviation from the phase-plane orbit through the inlet state.
    pub trajectory_drift: f64,
    pub density_increasing: bool,
    pub smallness: SmallnessReport,
}

pub fn background(cfg: &RunConfig) -> Result<(BackgroundSolution, BackgroundReport)> {
    let plane = cfg.phase_plane()?;
    let bg =
        integrate_resolved(&plane, cfg.grid.n1, cfg.background.min_intervals).context("integrating the background")?;
    let bern = bg.bernoulli_samples();
    let (lo, hi) = bern
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let drift = (0..bg.n)
        .map(|i| plane.trajectory_residual(bg.rho0[i], bg.e0[i]).abs())
        .fold(0.0, f64::max);
    let report = BackgroundReport {
        branch: bg.branch,
        samples: bg.n,
        gamma: cfg.gas.gamma,
        b0: plane.b0,
        j: plane.j,
        rho_inlet: plane.rho_inlet,
        e_inlet: plane.e_inlet,
        sonic_density: plane.sonic_density(),
        bernoulli_constant: bg.bernoulli,
        bernoulli_variation: hi - lo,
        trajectory_drift: drift,
        density_increasing: bg.rho0.windows(2).all(|w| w[1] > w[0]),
        smallness: smallness_report(&bg),
    };
    Ok((bg, report))
}

/// `background` command: profile CSV and report.
pub fn write_background(cfg: &RunConfig, out: &Path) -> Result<BackgroundSolution> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (bg, report) = background(cfg)?;
    let csv = out.join("background.csv");
    fs::write(&csv, bg.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    write_json(&out.join("background.json"), &report)?;
    Ok(bg)
}

/// Residual report restricted to the requested diagnostics.
pub fn diagnostics(f: &FlowSolution, list: &[Diagnostic], opts: &VerifyOptions) -> ResidualReport {
    let mut report = ResidualReport {
        spacing: [f.grid.h1(), f.grid.h2(), f.grid.h3()],
        ..Default::default()
    };
    let mut list = list.to_vec();
    list.sort();
    list.dedup();
    for d in list {
        match d {
            Diagnostic::EulerPoisson => report.merge(euler_poisson_residual(f)),
            Diagnostic::Bernoulli => report.merge(bernoulli_residual(f).1),
            Diagnostic::Vorticity => report.merge(vorticity_quantity(f, opts).1),
            Diagnostic::Beltrami => match beltrami_mu(f, opts) {
                Some((_, r)) => report.merge(r),
                None => report.not_applicable.push("beltrami".into()),
            },
            Diagnostic::Riccati => report.merge(riccati_residual(f)),
        }
    }
    report.scalars.insert("max_mach".into(), f.max_mach());
    report.scalars.insert("min_rho".into(), f.min_rho());
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: Status,
    pub eps: f64,
    pub grid: [usize; 3],
    /// `‖W‖_Ξ` proxy of the final iterate, when converged.
    pub xi_norm: Option<f64>,
    pub convergence: ConvergenceReport,
}

/// Outcome of a fixed-point solve, kept whether or not it converged.
pub struct Solve {
    pub scheme: Scheme,
    pub state: Option<PerturbState>,
    pub report: RunReport,
}

pub fn solve(cfg: &RunConfig, bg: BackgroundSolution) -> Result<Solve> {
    let grid = cfg.grid3();
    let scheme = Scheme::new(bg, grid, cfg.boundary.to_data(), cfg.solver.options())?;
    let eps = cfg.boundary.eps;
    let dims = [grid.n1, grid.n2, grid.n3];
    let (status, state, convergence) = match solve_fixed_point(&scheme) {
        Ok((w, rep)) => (Status::Converged, Some(w), rep),
        Err(epflow::Error::Diverged { report, .. }) => (Status::Diverged, None, *report),
        Err(epflow::Error::FixedPointNonConvergence { report, .. }) => (Status::NotConverged, None, *report),
        Err(e) => return Err(e).context("fixed-point iteration"),
    };
    let xi_norm = state.as_ref().map(|w| w.xi_norm());
    Ok(Solve {
        scheme,
        state,
        report: RunReport {
            status,
            eps,
            grid: dims,
            xi_norm,
            convergence,
        },
    })
}

pub const FLOW_FIELDS: [&str; 6] = ["rho", "u1", "u2", "u3", "phi", "b"];

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dump_matrix: bool,
}

/// `run` command: background, fixed point, fields and reports.
pub fn run(cfg: &RunConfig, out: &Path, opts: RunOptions) -> Result<Status> {
    let bg = write_background(cfg, out)?;
    write_json(&out.join("config.json"), cfg)?;
    let solved = solve(cfg, bg)?;
    write_json(&out.join("convergence.json"), &solved.report)?;
    let Some(w) = solved.state else {
        return Ok(solved.report.status);
    };
    let scheme = &solved.scheme;
    let flow = reconstruct(&scheme.bg, &w, &scheme.data).context("reconstructing the flow")?;
    let fields = [&flow.rho, &flow.u1, &flow.u2, &flow.u3, &flow.phi, &flow.b];
    for (name, f) in FLOW_FIELDS.iter().zip(fields) {
        write_field(out, name, f)?;
    }
    for (m, f) in w.fields().iter().enumerate() {
        write_field(out, &format!("w{}", m + 1), f)?;
    }
    let report = diagnostics(&flow, &cfg.diagnostics, &cfg.verify);
    write_json(&out.join("residuals.json"), &report)?;
    if opts.dump_matrix {
        let sys = assemble(&scheme.elliptic_problem(&w, &w.w4)?)?;
        fs::write(out.join("elliptic.mtx"), sys.to_matrix_market()).context("writing elliptic.mtx")?;
        fs::write(out.join("elliptic_rhs.mtx"), sys.rhs_to_matrix_market()).context("writing elliptic_rhs.mtx")?;
    }
    Ok(Status::Converged)
}

/// Flow fields previously written by [`run`].
pub fn load_flow(cfg: &RunConfig, dir: &Path) -> Result<FlowSolution> {
    let mut f = Vec::with_capacity(FLOW_FIELDS.len());
    for name in FLOW_FIELDS {
        f.push(read_field(dir, name)?);
    }
    let grid = f[0].grid;
    if let Some(bad) = f.iter().position(|x| x.grid != grid) {
        bail!("{}: {} has a different grid than rho", dir.display(), FLOW_FIELDS[bad]);
    }
    let mut it = f.into_iter();
    let mut next = || it.next().expect("six fields");
    Ok(FlowSolution {
        grid,
        gas: cfg.gas_model(),
        rho: next(),
        u1: next(),
        u2: next(),
        u3: next(),
        phi: next(),
        b: next(),
    })
}

/// `verify` command: diagnostics on saved fields, written to `out/verify.json`.
pub fn verify(cfg: &RunConfig, fields: &Path, out: &Path) -> Result<ResidualReport> {
    let flow = load_flow(cfg, fields)?;
    let report = diagnostics(&flow, &cfg.diagnostics, &cfg.verify);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("verify.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub status: Status,
    pub xi_norm: Option<f64>,
    pub iterations: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub grid: [usize; 3],
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `xi_norm` against `eps` through the origin.
    pub slope: Option<f64>,
    /// Coefficient of determination of that fit.
    pub r_squared: Option<f64>,
    /// `xi_norm[m+1] / xi_norm[m]` for consecutive converged rows.
    pub ratios: Vec<f64>,
    pub complete: bool,
}

/// Fit `y = s·x` and return `(s, R²)`; `None` without two distinct points.
pub fn fit_through_origin(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    if points.len() < 2 || sxx == 0.0 {
        return None;
    }
    let slope = points.iter().map(|(x, y)| x * y).sum::<f64>() / sxx;
    let mean = points.iter().map(|(_, y)| y).sum::<f64>() / points.len() as f64;
    let ss_res: f64 = points.iter().map(|(x, y)| (y - slope * x).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN };
    Some((slope, r2))
}

/// `sweep` command: one fixed-point solve per `eps`, written to `out/sweep.json`.
pub fn sweep(cfg: &RunConfig, eps_list: &[f64], out: &Path) -> Result<SweepReport> {
    if eps_list.is_empty() {
        return Err(ConfigError::Invalid {
            pointer: "/boundary/eps".into(),
            message: "sweep needs at least one eps value".into(),
        }
        .into());
    }
    let (bg, _) = background(cfg)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let member = cfg.with_eps(eps)?;
        let row = match solve(&member, bg.clone()) {
            Ok(s) => SweepRow {
                eps,
                status: s.report.status,
                xi_norm: s.report.xi_norm,
                iterations: s.report.convergence.iterations.len(),
                failure: s.report.convergence.diagnosis.clone(),
            },
            Err(e) => SweepRow {
                eps,
                status: Status::Diverged,
                xi_norm: None,
                iterations: 0,
                failure: Some(format!("{e:#}")),
            },
        };
        rows.push(row);
    }
    let points: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.xi_norm.map(|y| (r.eps, y))).collect();
    let fit = fit_through_origin(&points);
    let ratios = points
        .windows(2)
        .filter(|w| w[0].1 > 0.0)
        .map(|w| w[1].1 / w[0].1)
        .collect();
    let g = cfg.grid;
    let report = SweepReport {
        grid: [g.n1, g.n2, g.n3],
        complete: rows.iter().all(|r| r.status == Status::Converged),
        rows,
        slope: fit.map(|f| f.0),
        r_squared: fit.map(|f| f.1).filter(|r| r.is_finite()),
        ratios,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("sweep.json"), &report)?;
    Ok(report)
}
