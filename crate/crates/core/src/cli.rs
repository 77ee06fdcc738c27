//! Command-line front end.
//!
//! Exit status:
//!
//! | code | meaning |
//! |------|---------|
//! | 0  | success |
//! | 1  | `check-observability` finished with a FAIL verdict |
//! | 2  | invalid configuration, mode list or `FLYCAP_SEED` |
//! | 3  | numerical abort during simulation |
//! | 4  | file system error |
//! | 64 | command-line usage error |

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::analysis::{build_matrices, check_condition16, eigenvalues3, pe_check};
use crate::config::parse_config;
use crate::error::FlycapError;
use crate::format::sig9;
use crate::luenberger::{certify_gains, natural_certificate};
use crate::modelist::parse_mode_list;
use crate::observability::{default_z, rank_table, z_observability_check};
use crate::sim::{metrics, run_scenario, ScenarioConfig};
use crate::switching::{trajectory_from_pwm, HybridTimeTrajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable overriding `noise.seed`.
pub const SEED_ENV: &str = "FLYCAP_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "flycap",
    version,
    about = "Flying-capacitor converter observers: simulation and analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObserverChoice {
    Sosml,
    Luenberger,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write timeseries.csv, metrics.txt and gains_report.txt.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ObserverChoice::Both)]
        observer: ObserverChoice,
    },
    /// Print the stability condition, Lyapunov eigenvalues, excitation level
    /// and Luenberger certification for the configured gains.
    AnalyzeGains {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the per-mode rank table and the observability verdict for the
    /// capacitor voltages along a trajectory (one PWM period by default).
    CheckObservability {
        #[arg(long)]
        config: PathBuf,
        /// File with a mode list such as `[1,0,0];[1,1,0]`.
        #[arg(long)]
        modes: Option<PathBuf>,
    },
    /// Run both observers, write the output files and print the error table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<FlycapError> for CliError {
    fn from(e: FlycapError) -> Self {
        match e {
            FlycapError::NumericalAbort { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn load_config(path: &Path, seed_env: Option<&str>) -> Result<ScenarioConfig, CliError> {
    let text = read_text(path)?;
    let mut cfg = parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(raw) = seed_env {
        cfg.noise.seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV} must be a non-negative integer, got `{raw}`")))?;
    }
    Ok(cfg)
}

/// Condition check, Lyapunov spectra, excitation and Luenberger certification.
pub fn gains_report(cfg: &ScenarioConfig) -> Result<String, FlycapError> {
    let mut out = String::new();
    let one_period = trajectory_from_pwm(&cfg.pwm, 0.0, cfg.pwm.period())?;
    if let Some(prm) = &cfg.sosml {
        let c16 = check_condition16(prm);
        let m = build_matrices(prm);
        let _ = writeln!(
            out,
            "sosml gains: lambda0={} alpha0={} k_lambda0={} k_alpha0={} k={} kappa={} l_init={} eps_dz={}",
            sig9(prm.lambda0),
            sig9(prm.alpha0),
            sig9(prm.k_lambda0),
            sig9(prm.k_alpha0),
            sig9(prm.adaptation_rate),
            sig9(prm.kappa),
            sig9(prm.l_init),
            sig9(prm.eps_dz)
        );
        let _ = writeln!(
            out,
            "condition 4*alpha0*k_alpha0 > 8*k_lambda0^2*alpha0 + 9*lambda0^2*k_lambda0^2: {} (margin {})",
            if c16.pass { "PASS" } else { "FAIL" },
            sig9(c16.margin)
        );
        for (name, mat) in [("P", &m.p), ("Omega1", &m.omega1), ("Omega2", &m.omega2), ("Q", &m.q)] {
            let ev = eigenvalues3(mat);
            let _ = writeln!(out, "eig({name}) = [{}, {}, {}]", sig9(ev[0]), sig9(ev[1]), sig9(ev[2]));
        }
        let _ = writeln!(
            out,
            "P, Omega1, Omega2 positive definite: {}",
            if m.all_positive_definite() { "yes" } else { "no" }
        );
        let _ = writeln!(
            out,
            "gamma1={} gamma2={}*F gamma3={} gamma4={}",
            sig9(m.gamma1),
            sig9(m.gamma2_per_f),
            sig9(m.gamma3),
            sig9(m.gamma4)
        );
        let scale = prm.kappa / cfg.params.inductance;
        let pe = pe_check(&one_period, cfg.pwm.period(), scale)?;
        let _ = writeln!(
            out,
            "excitation over one PWM period (scale kappa/L = {}): min eigenvalue {} ({})",
            sig9(scale),
            sig9(pe.min_eigenvalue),
            if pe.is_persistently_exciting() { "PE" } else { "not PE" }
        );
    } else {
        let pe = pe_check(&one_period, cfg.pwm.period(), 1.0)?;
        let _ = writeln!(
            out,
            "excitation over one PWM period (unit scale): min eigenvalue {}",
            sig9(pe.min_eigenvalue)
        );
    }
    if let Some(gains) = &cfg.luenberger {
        let k: Vec<String> = gains.kappa.iter().map(|&x| sig9(x)).collect();
        let _ = writeln!(out, "luenberger gains: kappa0..6 = [{}]", k.join(", "));
        match natural_certificate(&cfg.params, gains) {
            Some(p) => {
                let p = DMatrix::from_iterator(3, 3, p.iter().copied());
                let r = certify_gains(gains, &cfg.params, &p)?;
                let forms: Vec<String> = r.form_max_eigenvalues.iter().map(|&x| sig9(x)).collect();
                let _ = writeln!(
                    out,
                    "luenberger certification with P~ = blockdiag(1, -G^-1/L): {} (lambda_min(P~) = {}, max eig of forms = [{}])",
                    if r.passed() { "PASS" } else { "FAIL" },
                    sig9(r.p_min_eigenvalue),
                    forms.join(", ")
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "luenberger certification: no candidate P~ (voltage gain block singular or not symmetric)"
                );
            }
        }
    }
    Ok(out)
}

fn write_outputs(cfg: &ScenarioConfig, out_dir: &Path, stdout: &mut dyn Write, table: bool) -> Result<(), CliError> {
    let ts = run_scenario(cfg)?;
    let m = metrics(&ts, cfg.settle_threshold, cfg.steady_window_start())?;
    let report = gains_report(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let csv_path = out_dir.join("timeseries.csv");
    let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut w = BufWriter::new(file);
    ts.write_csv(&mut w).map_err(|e| io_err(&csv_path, e))?;
    w.flush().map_err(|e| io_err(&csv_path, e))?;

    let metrics_path = out_dir.join("metrics.txt");
    fs::write(&metrics_path, m.render()).map_err(|e| io_err(&metrics_path, e))?;
    let report_path = out_dir.join("gains_report.txt");
    fs::write(&report_path, &report).map_err(|e| io_err(&report_path, e))?;

    let text = if table { m.comparison_table() } else { m.render() };
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn observability(cfg: &ScenarioConfig, modes: Option<&Path>, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let traj = match modes {
        Some(path) => {
            let text = read_text(path)?;
            let modes = parse_mode_list(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if modes[0].cells() != cfg.params.cells() {
                return Err(CliError::Config(format!(
                    "{}: modes have {} switches but the converter has {} cells",
                    path.display(),
                    modes[0].cells(),
                    cfg.params.cells()
                )));
            }
            HybridTimeTrajectory::from_modes(modes, cfg.pwm.period())?
        }
        None => trajectory_from_pwm(&cfg.pwm, 0.0, cfg.pwm.period())?,
    };
    let mut text = String::new();
    if cfg.params.cells() == 3 {
        text.push_str(&rank_table(&cfg.params)?);
        text.push('\n');
    }
    let report = z_observability_check(&traj, &default_z(&cfg.params), &cfg.params)?;
    text.push_str(&report.render());
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(if report.verdict.is_pass() {
        EXIT_OK
    } else {
        EXIT_VERDICT_FAIL
    })
}

fn dispatch(cli: Cli, seed_env: Option<&str>, stdout: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate { config, out, observer } => {
            let mut cfg = load_config(&config, seed_env)?;
            match observer {
                ObserverChoice::Sosml => cfg.luenberger = None,
                ObserverChoice::Luenberger => cfg.sosml = None,
                ObserverChoice::Both => {}
            }
            write_outputs(&cfg, &out, stdout, false)?;
            Ok(EXIT_OK)
        }
        Command::AnalyzeGains { config } => {
            let cfg = load_config(&config, seed_env)?;
            let report = gains_report(&cfg)?;
            stdout
                .write_all(report.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))?;
            Ok(EXIT_OK)
        }
        Command::CheckObservability { config, modes } => {
            let cfg = load_config(&config, seed_env)?;
            observability(&cfg, modes.as_deref(), stdout)
        }
        Command::Compare { config, out } => {
            let mut cfg = load_config(&config, seed_env)?;
            if cfg.sosml.is_none() || cfg.luenberger.is_none() {
                return Err(CliError::Config("compare needs both observers enabled".into()));
            }
            cfg.steady_from.get_or_insert(cfg.load.t_switch);
            write_outputs(&cfg, &out, stdout, true)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
///
/// `seed_env` is the value of [`SEED_ENV`], if set.
pub fn execute<I, T>(args: I, seed_env: Option<&str>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli, seed_env, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}
