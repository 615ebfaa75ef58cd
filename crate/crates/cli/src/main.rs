mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use spectramech::config::{ScenarioConfig, SolverSettings};
use spectramech::Error;

use crate::output::{sha256_hex, RunResult, SCHEMA};

const EXIT_PARSE: u8 = 3;
const EXIT_INVARIANT: u8 = 4;
const EXIT_SOLVER: u8 = 5;
const EXIT_VERIFICATION: u8 = 6;

const AFTER_HELP: &str = "\
Exit codes: 0 success, 2 usage, 3 unreadable config, 4 invalid scenario or
irregular prior, 5 solver or numerical failure, 6 a verification check failed.

CSV columns (--format csv):
  validate    user, type_min, type_max, regularity, theta_a, theta_b
  allocate    user, theta, virtual_type, allocation, rate, payment, eps_tax, nonmonotone_steps
  tax         user, theta, payment, eps_tax, z_payment, z_eps, nonmonotone_steps
  interim     user, report, samples, expected_rate, expected_rate_se, expected_payment,
              expected_payment_se, eps_tax, nonmonotone_steps
  verify      check, user, theta, report, value, std_error, tolerance, passed
  revenue     metric, mean, std_error
  sweep       param, value, users, revenue_payments, revenue_payments_se,
              revenue_virtual_surplus, revenue_virtual_surplus_se, difference_se,
              omniscient, eps_total, identity_holds, nonmonotone_steps, eps_user_0, ...
  rate-curve  theta, virtual_type, allocation, rate

Allocations are Hz (fd) or watts (ss); rates are nats/s.
SPECTRAMECH_THREADS caps the worker threads.";

#[derive(Parser)]
#[command(name = "spectramech", version, about = "Optimal spectrum and power auctions", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    /// Riemann subintervals for taxes.
    #[arg(long, global = true)]
    grid_m: Option<usize>,
    /// Random starts of the spread-spectrum solver.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Run even if a virtual type fails the regularity check.
    #[arg(long, global = true)]
    override_regularity: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads.
    #[arg(long, global = true, env = "SPECTRAMECH_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check every invariant and the regularity of each prior.
    Validate,
    /// Allocation, payments and solver diagnostics for one type vector.
    Allocate(ProfileArgs),
    /// Taxes for one type vector, with the fd cross-check route.
    Tax(TaxArgs),
    /// Interim expected rate and payment of one user at one report.
    Interim(InterimArgs),
    /// Incentive-compatibility, participation, identity and monotonicity checks.
    Verify(VerifyArgs),
    /// Expected revenue from payments and from virtual surplus.
    Revenue,
    /// Revenue and tax bounds over a range of one parameter.
    Sweep(SweepArgs),
    /// Rate of one user as its type varies, others fixed.
    RateCurve(RateCurveArgs),
}

#[derive(Args)]
pub struct ProfileArgs {
    /// Comma-separated type vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "sample")]
    pub theta: Vec<f64>,
    /// Draw the type vector from the priors with this seed instead.
    #[arg(long)]
    pub sample: Option<u64>,
}

#[derive(Args)]
pub struct TaxArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Cells of the rate-axis integral in the fd cross-check.
    #[arg(long, default_value_t = 64)]
    pub z_grid: usize,
}

#[derive(Args)]
pub struct InterimArgs {
    #[arg(long, default_value_t = 0)]
    pub user: usize,
    #[arg(long)]
    pub report: f64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SuiteArg {
    Ic,
    Ir,
    Identity,
    Monotone,
    All,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,
    /// Points per user in the type/misreport grid.
    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SweepParam {
    #[value(name = "W")]
    Bandwidth,
    #[value(name = "P_total")]
    TotalPower,
    #[value(name = "N")]
    Users,
    #[value(name = "grid_M")]
    GridM,
    #[value(name = "mc_samples")]
    McSamples,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required_unless_present = "range", conflicts_with = "range")]
    pub values: Vec<f64>,
    /// `start:stop:count`, equispaced and inclusive.
    #[arg(long)]
    pub range: Option<String>,
}

#[derive(Args)]
pub struct RateCurveArgs {
    #[arg(long, default_value_t = 0)]
    pub user: usize,
    /// Type vector fixing the other users; the entry of `--user` is ignored.
    /// Defaults to the midpoint of every support.
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 65)]
    pub points: usize,
}

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_) => EXIT_PARSE,
            Error::Config(_) | Error::Domain(_) | Error::Regularity { .. } => EXIT_INVARIANT,
            Error::Solver(_) | Error::Numerical(_) => EXIT_SOLVER,
        };
        Self { code, message: e.to_string() }
    }
}

/// Everything a command needs: the parsed file and the effective settings.
pub struct Context {
    pub config: ScenarioConfig,
    pub settings: SolverSettings,
    pub seed: u64,
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::Validate => "validate",
        Command::Allocate(_) => "allocate",
        Command::Tax(_) => "tax",
        Command::Interim(_) => "interim",
        Command::Verify(_) => "verify",
        Command::Revenue => "revenue",
        Command::Sweep(_) => "sweep",
        Command::RateCurve(_) => "rate-curve",
    }
}

fn run(cli: &Cli) -> Result<(String, u8), CliError> {
    let path = cli.common.config.as_ref().ok_or_else(|| CliError {
        code: 2,
        message: "--config <FILE> is required".into(),
    })?;
    let bytes = std::fs::read(path).map_err(|e| CliError {
        code: EXIT_PARSE,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError {
        code: EXIT_PARSE,
        message: format!("{} is not UTF-8", path.display()),
    })?;
    let mut config = ScenarioConfig::from_toml_str(&text)?;
    let c = &cli.common;
    if let Some(v) = c.mc_samples {
        config.solver.mc_samples = v;
    }
    if let Some(v) = c.grid_m {
        config.solver.grid_m = v;
    }
    if let Some(v) = c.restarts {
        config.solver.restarts = v;
    }
    if c.override_regularity {
        config.solver.override_regularity = true;
    }
    if let Some(v) = c.seed {
        config.seed = v;
    }
    let ctx = Context { settings: config.solver, seed: config.seed, config };

    let out = match &cli.command {
        Command::Validate => commands::validate(&ctx),
        Command::Allocate(a) => commands::allocate(&ctx, a),
        Command::Tax(a) => commands::tax(&ctx, a),
        Command::Interim(a) => commands::interim(&ctx, a),
        Command::Verify(a) => commands::verify(&ctx, a),
        Command::Revenue => commands::revenue(&ctx),
        Command::Sweep(a) => commands::sweep(&ctx, a),
        Command::RateCurve(a) => commands::rate_curve(&ctx, a),
    }?;
    let text = match c.format {
        Format::Csv => out.table.to_csv(),
        Format::Json => {
            let result = RunResult {
                schema: SCHEMA,
                command: name(&cli.command),
                config_sha256: sha256_hex(&bytes),
                seed: ctx.seed,
                settings: &ctx.settings,
                payload: &out.payload,
            };
            let mut s = serde_json::to_string_pretty(&result).expect("result serializes");
            s.push('\n');
            s
        }
    };
    Ok((text, out.status))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if n == 0 {
            Cli::command()
                .error(clap::error::ErrorKind::ValueValidation, "SPECTRAMECH_THREADS must be at least 1")
                .exit();
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool configured once");
    }
    match run(&cli) {
        Ok((text, status)) => {
            print!("{text}");
            ExitCode::from(status)
        }
        Err(e) if e.code == 2 => Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, e.message).exit(),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_distinct_codes() {
        let code = |e| CliError::from(e).code;
        assert_eq!(code(Error::Parse("x".into())), EXIT_PARSE);
        assert_eq!(code(Error::Config("x".into())), EXIT_INVARIANT);
        assert_eq!(code(Error::Domain("x".into())), EXIT_INVARIANT);
        assert_eq!(code(Error::Solver("x".into())), EXIT_SOLVER);
        assert_eq!(code(Error::Numerical("x".into())), EXIT_SOLVER);
        assert_ne!(EXIT_SOLVER, EXIT_VERIFICATION);
    }
}
