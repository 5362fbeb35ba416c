mod config;
mod table;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use fransonsim_core::analysis::{self, VisibilityTrace};
use fransonsim_core::analytic::{self, Axis};
use fransonsim_core::circuit::{self, builtin, EvaluationPlan};
use fransonsim_core::compare;
use fransonsim_core::numfmt::sig9;
use fransonsim_core::runner::{self, ScanProfile};
use thiserror::Error;

use crate::config::{RunConfig, ENV_PREFIX};

#[derive(Debug, Error)]
enum CliError {
    /// Bad input data or a failed check; exit 1.
    #[error("{0}")]
    Domain(String),
    /// Unreadable or unwritable files; exit 2.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

fn domain(e: impl ToString) -> CliError {
    CliError::Domain(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "fransonsim",
    version,
    about = "Polarization-basis Franson interferometer simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a circuit file for structural and losslessness violations.
    Validate {
        /// Circuit file, or the name of a builtin circuit.
        circuit: String,
    },
    /// Tabulate the closed-form intensities over a phase grid.
    Sweep {
        /// Bob's phase: a value or START:STEP:STOP, in radians.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        phi: String,
        /// Alice's phase.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        psi: String,
        /// Global phase.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        theta: String,
        /// Mean detector intensity.
        #[arg(long, default_value_t = 1.0)]
        i0: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a timed PZT scan and write the detection time series.
    Simulate(SimulateArgs),
    /// Sliding-window visibility of one column of a CSV table.
    Visibility {
        /// Input CSV, or `-` for standard input.
        #[arg(default_value = "-")]
        input: String,
        /// Column name; `product` is D1·D2 (or I_alpha·I_beta) when absent.
        #[arg(long, default_value = "product")]
        column: String,
        /// Window length in rows, or `all`. Defaults to one fringe for time
        /// series and to `all` otherwise.
        #[arg(long)]
        window: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a circuit against the closed-form model on random phases.
    Compare {
        circuit: String,
        #[arg(short = 'n', long = "samples", default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = compare::DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
}

#[derive(clap::Args)]
#[command(after_help = config_keys_help())]
struct SimulateArgs {
    /// `key = value` file applied before environment and flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    circuit: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// analytic or monte-carlo.
    #[arg(long)]
    mode: Option<String>,
    /// constant:X, linear:RATE[:START] or drift[:SIGMA[:TAU[:STEP]]].
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    psi: Option<String>,
    /// Seconds.
    #[arg(long)]
    duration: Option<String>,
    /// Bin length in seconds.
    #[arg(long)]
    bin: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Any config key, repeatable: --set dark_rate=0.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn config_keys_help() -> String {
    let mut s = String::from("Config keys (file, FRANSONSIM_<KEY>, or --set):\n");
    for (k, unit) in config::KEYS {
        s.push_str(&format!("  {k:<22} {unit}\n"));
    }
    s
}

/// Circuit text from a path, falling back to the builtin of that name.
fn load_circuit_text(name: &str) -> Result<String> {
    let path = Path::new(name);
    if path.exists() {
        return fs::read_to_string(path).map_err(|e| CliError::Io(format!("{name}: {e}")));
    }
    builtin::lookup(name)
        .map(str::to_string)
        .ok_or_else(|| CliError::Io(format!("{name}: no such file or builtin circuit")))
}

fn load_plan(name: &str) -> Result<EvaluationPlan> {
    let text = load_circuit_text(name)?;
    circuit::load(&text)
        .map(|(_, plan)| plan)
        .map_err(|e| CliError::Domain(format!("{name}: {}: {e}", e.code())))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) if p == Path::new("-") => Ok(Box::new(io::stdout().lock())),
        Some(p) => fs::File::create(p)
            .map(|f| Box::new(f) as Box<dyn Write>)
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
    }
}

/// A closed downstream pipe (`| head`) ends output quietly.
fn finish_write(result: io::Result<()>, path: Option<&Path>) -> Result<()> {
    match result {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Io(format!(
            "{}: {e}",
            path.map_or("stdout".into(), |p| p.display().to_string())
        ))),
        _ => Ok(()),
    }
}

fn cmd_validate(name: &str) -> Result<ExitCode> {
    let text = load_circuit_text(name)?;
    let spec = match circuit::parse(&text) {
        Ok(spec) => spec,
        Err(e) => {
            println!("{}: {e}", e.code());
            return Ok(ExitCode::from(1));
        }
    };
    let report = circuit::validate(&spec);
    print!("{report}");
    Ok(if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_sweep(
    phi: &str,
    psi: &str,
    theta: &str,
    i0: f64,
    output: Option<&Path>,
) -> Result<ExitCode> {
    let axis = |flag: &str, text: &str| {
        text.parse::<Axis>().map_err(|e| {
            let mut cli = Cli::command();
            cli.build();
            let usage = cli
                .find_subcommand_mut("sweep")
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            CliError::Domain(format!("--{flag}: {e}\n{usage}"))
        })
    };
    let (phi, psi, theta) = (axis("phi", phi)?, axis("psi", psi)?, axis("theta", theta)?);
    if !i0.is_finite() || i0 < 0.0 {
        return Err(domain(format!(
            "--i0 must be finite and non-negative, got {i0}"
        )));
    }
    let points = analytic::sweep(&phi, &psi, &theta, i0);
    let out = open_output(output)?;
    finish_write(analytic::write_sweep_csv(&points, out), output)?;
    Ok(ExitCode::SUCCESS)
}

fn resolve_config(args: &SimulateArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let file = args
        .config
        .clone()
        .or_else(|| std::env::var_os(format!("{ENV_PREFIX}CONFIG")).map(PathBuf::from));
    if let Some(path) = file {
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        cfg.apply_file_text(&text, &path).map_err(domain)?;
    }
    cfg.apply_env(std::env::vars()).map_err(domain)?;

    let mut flags: Vec<(&str, String)> = Vec::new();
    if let Some(v) = &args.circuit {
        flags.push(("circuit", v.clone()));
    }
    if let Some(v) = args.seed {
        flags.push(("seed", v.to_string()));
    }
    for (key, value) in [
        ("mode", &args.mode),
        ("theta", &args.theta),
        ("psi", &args.psi),
        ("duration", &args.duration),
        ("bin", &args.bin),
    ] {
        if let Some(v) = value {
            flags.push((key, v.clone()));
        }
    }
    if let Some(v) = &args.output {
        flags.push(("output", v.display().to_string()));
    }
    for item in &args.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| domain(format!("--set expects KEY=VALUE, got `{item}`")))?;
        flags.push((k.trim(), v.trim().to_string()));
    }
    for (k, v) in flags {
        cfg.apply(k, &v).map_err(|e| domain(format!("flag: {e}")))?;
    }
    Ok(cfg)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let cfg = resolve_config(args)?;
    let plan = load_plan(&cfg.circuit)?;
    let series = runner::run(&plan, &cfg.settings, cfg.seed).map_err(domain)?;
    let s = &cfg.settings;
    let metadata = [
        ("circuit", cfg.circuit.clone()),
        ("mode", s.mode.name().to_string()),
        ("seed", cfg.seed.map_or("none".into(), |x| x.to_string())),
        ("theta", s.theta.to_string()),
        ("i0", sig9(series.i0)),
        ("fringe_bins", sig9(s.scan.fringe_bins(s.schedule.bin_s))),
        ("config_hash", cfg.hash()),
    ];
    let path = cfg.output.as_deref();
    let out = open_output(path)?;
    finish_write(series.write_csv(&metadata, out), path)?;
    Ok(ExitCode::SUCCESS)
}

fn read_input(input: &str) -> Result<String> {
    let mut text = String::new();
    if input == "-" {
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
    } else {
        text = fs::read_to_string(input).map_err(|e| CliError::Io(format!("{input}: {e}")))?;
    }
    Ok(text)
}

fn cmd_visibility(
    input: &str,
    column: &str,
    window: Option<&str>,
    output: Option<&Path>,
) -> Result<ExitCode> {
    let text = read_input(input)?;
    let table = table::Table::parse(&text).map_err(domain)?;
    let values = table.column_or_product(column).map_err(domain)?;
    let times = table.times();

    let window = match window {
        Some("all") => None,
        Some(w) => Some(
            w.parse::<usize>()
                .map_err(|_| domain(format!("--window expects a row count or `all`, got `{w}`")))?,
        ),
        None => table.default_window(|step| ScanProfile::default().fringe_bins(step)),
    };

    let trace = match window {
        Some(w) => analysis::windowed_visibility(&times, &values, w).map_err(domain)?,
        None => {
            let v = analysis::global_visibility(&values).map_err(domain)?;
            let t = match (times.first(), times.last()) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                _ => 0.0,
            };
            VisibilityTrace {
                window: values.len(),
                rows: vec![analysis::VisibilityPoint { t, v }],
            }
        }
    };
    let mut out = io::BufWriter::new(open_output(output)?);
    let mut emit = || -> io::Result<()> {
        writeln!(out, "# column={column}")?;
        writeln!(out, "t,V,window")?;
        for p in &trace.rows {
            writeln!(out, "{},{},{}", sig9(p.t), sig9(p.v), trace.window)?;
        }
        out.flush()
    };
    finish_write(emit(), output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(name: &str, samples: usize, seed: u64, tolerance: f64) -> Result<ExitCode> {
    let text = load_circuit_text(name)?;
    let spec = circuit::parse(&text).map_err(|e| domain(format!("{}: {e}", e.code())))?;
    let report = circuit::validate(&spec);
    if !report.is_ok() {
        print!("{report}");
        return Ok(ExitCode::from(1));
    }
    let plan = circuit::compile(&spec).map_err(domain)?;
    let report = compare::compare(&plan, samples, seed, tolerance).map_err(domain)?;
    print!("{report}");
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { circuit } => cmd_validate(circuit),
        Command::Sweep {
            phi,
            psi,
            theta,
            i0,
            output,
        } => cmd_sweep(phi, psi, theta, *i0, output.as_deref()),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Visibility {
            input,
            column,
            window,
            output,
        } => cmd_visibility(input, column, window.as_deref(), output.as_deref()),
        Command::Compare {
            circuit,
            samples,
            seed,
            tolerance,
        } => cmd_compare(circuit, *samples, *seed, *tolerance),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
