//! Command-line driver: `odmr-lab <subcommand> --config <path> [--set k=v]...
//! [--out <path>]`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{dominant_frequency, fit_fid, fit_loglog, fit_saturation, find_peaks};
use crate::config::{load_config_with, ExperimentConfig, ProtocolKind, ProtocolSpec};
use crate::error::{Error, Result};
use crate::master_eq::Trajectory;
use crate::output::{read_xy, render_csv, CsvTable, FitRow};
use crate::sequences::{
    branch_slopes, cw_spectrum, field_sweep, simulate_fid, simulate_rabi, transition_map, CwSettings,
    InhomogeneityModel,
};

#[derive(Debug, Parser)]
#[command(name = "odmr-lab", version, about = "Multi-photon ODMR simulations of spin-3/2 silicon vacancies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set drive.omega1_mhz=4`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// CSV destination; defaults to `output.path`, then standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// CW ODMR spectrum over a carrier grid.
    Cw(Common),
    /// Rabi nutation trace.
    Rabi(Common),
    /// Phase-cycled free induction decay.
    Fid(Common),
    /// CW contrast over a field path and carrier grid.
    FieldSweep(Common),
    /// Eigenvalue transition map with branch slopes.
    Transitions(Common),
    /// Saturation-law fit to (Lambda, S) data.
    FitPower(Common),
    /// Damped-cosine fit to an FID trace.
    FitFid(Common),
    /// Log-log slope fit to (Omega1, R) data.
    FitLoglog(Common),
}

impl Command {
    fn split(&self) -> (ProtocolKind, &Common) {
        match self {
            Command::Cw(c) => (ProtocolKind::Cw, c),
            Command::Rabi(c) => (ProtocolKind::Rabi, c),
            Command::Fid(c) => (ProtocolKind::Fid, c),
            Command::FieldSweep(c) => (ProtocolKind::FieldSweep, c),
            Command::Transitions(c) => (ProtocolKind::Transitions, c),
            Command::FitPower(c) => (ProtocolKind::FitPower, c),
            Command::FitFid(c) => (ProtocolKind::FitFid, c),
            Command::FitLoglog(c) => (ProtocolKind::FitLoglog, c),
        }
    }
}

/// CSV text plus a one-line human summary.
struct Outcome {
    csv: String,
    summary: String,
}

fn fmt_list(v: &[String]) -> String {
    if v.is_empty() {
        "none".to_string()
    } else {
        v.join(", ")
    }
}

fn cw_settings(cfg: &ExperimentConfig, duration_us: f64, steps: usize) -> CwSettings {
    let steps = match cfg.dt_us {
        Some(dt) => steps.max((duration_us / dt).ceil() as usize),
        None => steps,
    };
    CwSettings { duration_us, steps, scale: cfg.output_scale }
}

fn fit_input(cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    let p = PathBuf::from(cfg.fit_input.as_deref().unwrap_or_default());
    if p.is_relative() {
        config_path.parent().map_or(p.clone(), |dir| dir.join(&p))
    } else {
        p
    }
}

fn execute(cfg: &ExperimentConfig, config_path: &Path) -> Result<Outcome> {
    let sys = cfg.system();
    let inhom = cfg.inhomogeneity.model();
    match &cfg.protocol {
        ProtocolSpec::Cw { duration_us, steps } => {
            let grid = cfg.drive.omega_grid_mhz.as_ref().expect("validated").values();
            let settings = cw_settings(cfg, *duration_us, *steps);
            let sp = cw_spectrum(&sys, &cfg.relaxation, &cfg.drive.at(grid[0]), &grid, inhom.as_ref(), &settings)?;
            let scale = sp.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let peaks: Vec<String> = find_peaks(&sp, 0.01 * scale)
                .iter()
                .map(|p| format!("{:.3} MHz ({:+.4e})", p.freq_mhz, p.amplitude))
                .collect();
            Ok(Outcome { csv: render_csv(CsvTable::Spectrum(&sp)), summary: format!("cw peaks: {}", fmt_list(&peaks)) })
        }
        ProtocolSpec::Rabi { tau_grid_us } => {
            let drive = cfg.drive.at(cfg.drive.omega_mhz.expect("validated"));
            let model = inhom.unwrap_or_else(InhomogeneityModel::homogeneous);
            let tr = simulate_rabi(&sys, &drive, &cfg.relaxation, &model, &tau_grid_us.values(), cfg.dt_us)?;
            let summary = match dominant_frequency(&tr) {
                Ok(f) => format!("rabi dominant frequency: {f:.4} MHz"),
                Err(e) => format!("rabi dominant frequency: unavailable ({e})"),
            };
            Ok(Outcome { csv: render_csv(CsvTable::Trajectory(&tr)), summary })
        }
        ProtocolSpec::Fid { tau_grid_us, f_det_mhz, pulse_us } => {
            let drive = cfg.drive.at(cfg.drive.omega_mhz.expect("validated"));
            let tr = simulate_fid(&sys, &drive, &cfg.relaxation, *f_det_mhz, *pulse_us, &tau_grid_us.values(), cfg.dt_us)?;
            let summary = match fit_fid(&tr) {
                Ok(f) => format!("fid: f = {:.4} MHz, T2* = {:.4} us", f.f_mhz, f.t2_star_us),
                Err(e) => format!("fid: fit unavailable ({e})"),
            };
            Ok(Outcome { csv: render_csv(CsvTable::Trajectory(&tr)), summary })
        }
        ProtocolSpec::FieldSweep { duration_us, steps } => {
            let grid = cfg.drive.omega_grid_mhz.as_ref().expect("validated").values();
            let path = cfg.field.path();
            let settings = cw_settings(cfg, *duration_us, *steps);
            let map = field_sweep(&sys, &cfg.relaxation, &cfg.drive.at(grid[0]), &path, &grid, inhom.as_ref(), &settings)?;
            let summary = format!("field-sweep: {} fields x {} frequencies", path.len(), grid.len());
            Ok(Outcome { csv: render_csv(CsvTable::FieldMap(&map)), summary })
        }
        ProtocolSpec::Transitions { max_photons } => {
            let b = match &cfg.field {
                crate::config::FieldSpec::Parallel { sweep_mt } => sweep_mt.values(),
                _ => unreachable!("validated"),
            };
            let lines = transition_map(&sys, &b, *max_photons)?;
            let slopes: Vec<String> =
                branch_slopes(&lines).iter().map(|s| format!("{} {:.6e} mT/MHz", s.label, s.mt_per_mhz)).collect();
            Ok(Outcome {
                csv: render_csv(CsvTable::Transitions(&lines)),
                summary: format!("transition slopes: {}", fmt_list(&slopes)),
            })
        }
        ProtocolSpec::FitPower => {
            let pts = read_xy(&fit_input(cfg, config_path))?;
            let f = fit_saturation(&pts, cfg.fit_exponent)?;
            let rows = [
                FitRow::new("s_max", f.s_max, f.stderr[0]),
                FitRow::new("lambda0", f.lambda0, f.stderr[1]),
                FitRow::new("c", f.c, f.stderr[2]),
            ];
            let flag = if f.degenerate { " (degenerate)" } else if !f.converged { " (not converged)" } else { "" };
            Ok(Outcome {
                csv: render_csv(CsvTable::Fit(&rows)),
                summary: format!("saturation: S_max = {:.4e}, Lambda0 = {:.4e}, c = {:.4}{flag}", f.s_max, f.lambda0, f.c),
            })
        }
        ProtocolSpec::FitFid => {
            let pts = read_xy(&fit_input(cfg, config_path))?;
            let tr = Trajectory::from_signal(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect())?;
            let f = fit_fid(&tr)?;
            let rows = [
                FitRow::new("a", f.a, f.stderr[0]),
                FitRow::new("f_mhz", f.f_mhz, f.stderr[1]),
                FitRow::new("phi_rad", f.phi, f.stderr[2]),
                FitRow::new("t2_star_us", f.t2_star_us, f.stderr[3]),
            ];
            let flag = if f.t2_at_bound { " (T2* at bound)" } else if !f.converged { " (not converged)" } else { "" };
            Ok(Outcome {
                csv: render_csv(CsvTable::Fit(&rows)),
                summary: format!("fid fit: f = {:.4} MHz, T2* = {:.4} us{flag}", f.f_mhz, f.t2_star_us),
            })
        }
        ProtocolSpec::FitLoglog => {
            let pts = read_xy(&fit_input(cfg, config_path))?;
            let f = fit_loglog(&pts)?;
            let rows = [FitRow::new("a", f.a, f.stderr_a), FitRow::new("b", f.b, f.stderr_b)];
            Ok(Outcome {
                csv: render_csv(CsvTable::Fit(&rows)),
                summary: format!("log-log: a = {:.4} +- {:.4}, b = {:.4}", f.a, f.stderr_a, f.b),
            })
        }
    }
}

fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let (kind, common) = cli.command.split();
    let text = std::fs::read_to_string(&common.config)
        .map_err(|source| Error::Io { path: common.config.clone(), source })?;
    let cfg = load_config_with(&text, &common.overrides, Some(kind))?;
    let outcome = execute(&cfg, &common.config)?;
    let out_path = common.out.clone().or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
    let io = |path: &str, e: std::io::Error| Error::Io { path: PathBuf::from(path), source: e };
    match out_path {
        Some(p) => {
            std::fs::write(&p, outcome.csv).map_err(|source| Error::Io { path: p.clone(), source })?;
            writeln!(stdout, "{}", outcome.summary).map_err(|e| io("<stdout>", e))?;
        }
        None => {
            stdout.write_all(outcome.csv.as_bytes()).map_err(|e| io("<stdout>", e))?;
            writeln!(stderr, "{}", outcome.summary).map_err(|e| io("<stderr>", e))?;
        }
    }
    Ok(())
}

/// Runs one invocation (`argv[0]` is the program name) and returns the exit
/// code. Diagnostics go to `stderr`.
pub fn run_command_with_io(argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(rendered.as_bytes()) } else { stderr.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match run(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "odmr-lab: {e}");
            e.exit_code()
        }
    }
}

pub fn run_command(argv: &[String]) -> i32 {
    run_command_with_io(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

pub fn main_with_env() -> i32 {
    let argv: Vec<String> = std::env::args().collect();
    run_command(&argv)
}
