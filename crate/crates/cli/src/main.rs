mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opaque_inv::analytics::{self, SchemeParams};
use opaque_inv::experiments::{self, ResultRow, ScenarioGrid};
use opaque_inv::{CostParams, Error};
use serde_json::json;

use config::{ParamArgs, Resolved};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Csv { .. } | Error::Json { .. } => {
                Self::runtime(e.to_string())
            }
            _ => Self::usage(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "opaque-inv",
    version,
    about = "Opaque selling for perishable inventory: bounds, simulation and presets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true, env = "OPAQUE_INV_THREADS")]
    threads: Option<usize>,
    /// JSON file with scenario keys; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (simulate, analytic, threshold) or directory (reproduce).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Echo the resolved configuration to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form quantities.
    Analytic {
        #[command(subcommand)]
        what: Analytic,
    },
    /// Run a simulation grid and write one row per cell.
    Simulate(ParamArgs),
    /// Largest pooled variance whose cost lower bound stays below delta.
    Threshold(ParamArgs),
    /// Canned experiments.
    Reproduce {
        #[command(subcommand)]
        preset: Preset,
    },
}

#[derive(Subcommand, Debug)]
enum Analytic {
    /// Cost lower and upper bounds under full pooling.
    Clb(ParamArgs),
    /// Relative variance of adjusted demand.
    SigmaRel {
        #[command(flatten)]
        params: ParamArgs,
        /// Also evaluate the exact two-product value.
        #[arg(long)]
        exact: bool,
    },
    /// Expected shortage under full pooling.
    Shortage(ParamArgs),
    /// Wastage bounds under full pooling.
    Wastage(ParamArgs),
}

#[derive(Args, Debug, Clone)]
struct PresetArgs {
    /// Simulated periods per replication.
    #[arg(long)]
    periods: Option<usize>,
    /// Replications per cell.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Preset {
    /// Simulated cost next to its analytic bounds for 20 cells.
    Table2(PresetArgs),
    /// Relative variance against p for two products and several lambdas.
    FigCv(PresetArgs),
    /// Relative variance against p for one to twelve products.
    FigNpr(PresetArgs),
    /// Shortage, wastage and cost against base stock for twelve products.
    FigCost {
        #[command(flatten)]
        run: PresetArgs,
        /// Shelflives to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = [2u32, 3])]
        m: Vec<u32>,
    },
}

fn f6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Prints `text`, and also writes it to `out` when given.
fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    print!("{text}");
    if let Some(path) = out {
        fs::write(path, text)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// `key value` lines, or one JSON object.
fn render(pairs: &[(&str, f64)], format: Format) -> String {
    match format {
        Format::Csv => pairs.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} {}", f6(*v));
            s
        }),
        Format::Json => {
            let map: serde_json::Map<_, _> = pairs
                .iter()
                .map(|(k, v)| (k.to_string(), json!(v)))
                .collect();
            format!("{}\n", serde_json::Value::Object(map))
        }
    }
}

fn cost_params(cfg: &Resolved) -> Result<CostParams, CliError> {
    Ok(CostParams::new(
        cfg.r,
        cfg.theta,
        cfg.one_m()?,
        cfg.one_q()?,
    )?)
}

fn cmd_analytic(what: &Analytic, g: &GlobalArgs) -> Result<(), CliError> {
    let (params, exact) = match what {
        Analytic::Clb(p) | Analytic::Shortage(p) | Analytic::Wastage(p) => (p, false),
        Analytic::SigmaRel { params, exact } => (params, *exact),
    };
    let cfg = config::resolve(params, g.seed, g.config.as_deref())?;
    echo(&cfg, g);
    let pairs: Vec<(&str, f64)> = match what {
        Analytic::Clb(_) => {
            let b = analytics::cost_bounds(
                cfg.one_n()?,
                cfg.one_lambda()?,
                cfg.mu,
                &cost_params(&cfg)?,
            )?;
            vec![
                ("cost_lb", b.cost_lb),
                ("cost_ub", b.cost_ub),
                ("expected_shortage", b.expected_shortage),
                ("wastage_lb", b.wastage_lb),
                ("wastage_ub", b.wastage_ub),
            ]
        }
        Analytic::Shortage(_) => {
            let s = analytics::expected_shortage(
                cfg.one_n()?,
                cfg.one_lambda()?,
                cfg.mu,
                cfg.one_q()?,
            )?;
            vec![("expected_shortage", s)]
        }
        Analytic::Wastage(_) => {
            let (lb, ub) = analytics::wastage_bounds(
                cfg.one_n()?,
                cfg.one_lambda()?,
                cfg.mu,
                cfg.one_q()?,
                cfg.one_m()?,
            )?;
            vec![("wastage_lb", lb), ("wastage_ub", ub)]
        }
        Analytic::SigmaRel { .. } => {
            // the relative variance depends on p and lambda only
            let n = if cfg.n.is_empty() { 2 } else { cfg.one_n()? };
            let scheme = SchemeParams::new(n.max(2), cfg.one_p()?, cfg.one_lambda()?, cfg.mu)?;
            let mut out = vec![
                ("alpha", scheme.alpha()),
                ("sigma_rel_approx", analytics::sigma_rel_approx(&scheme)),
            ];
            if exact {
                let two = SchemeParams::new(2, scheme.p, scheme.lambda, scheme.mu)?;
                out.push((
                    "sigma_rel_exact",
                    analytics::sigma_rel_exact(&two, analytics::DEFAULT_MASS_TOLERANCE)?,
                ));
            }
            out
        }
    };
    emit(&render(&pairs, g.format), g.out.as_deref())
}

fn cmd_threshold(params: &ParamArgs, g: &GlobalArgs) -> Result<(), CliError> {
    let cfg = config::resolve(params, g.seed, g.config.as_deref())?;
    echo(&cfg, g);
    let lambda = cfg.one_lambda()?;
    let cost = cost_params(&cfg)?;
    let found = analytics::threshold_variance(lambda, cfg.mu, &cost, cfg.delta, cfg.n_max)?;
    let table = analytics::cost_lb_by_n(lambda, cfg.mu, &cost, cfg.n_max)?;
    let text = match g.format {
        Format::Json => {
            let rows: Vec<_> = table
                .iter()
                .map(|&(n, lb)| json!({"n": n, "sigma2": cfg.mu * cfg.mu / (n as f64 * lambda), "cost_lb": lb}))
                .collect();
            let value = json!({
                "delta": cfg.delta,
                "n_max": cfg.n_max,
                "sigma2_th": found.map(|t| t.sigma2),
                "n_th": found.map(|t| t.n),
                "cost_lb_by_n": rows,
            });
            format!("{value}\n")
        }
        Format::Csv => {
            let mut s = String::new();
            match found {
                Some(t) => {
                    let _ = writeln!(s, "sigma2_th {}", f6(t.sigma2));
                    let _ = writeln!(s, "n_th {}", t.n);
                }
                None => {
                    let _ = writeln!(s, "none <= n_max ({})", cfg.n_max);
                }
            }
            let _ = writeln!(s, "n,sigma2,cost_lb");
            for (n, lb) in table {
                let _ = writeln!(
                    s,
                    "{n},{},{}",
                    f6(cfg.mu * cfg.mu / (n as f64 * lambda)),
                    f6(lb)
                );
            }
            s
        }
    };
    emit(&text, g.out.as_deref())
}

fn grid_from(cfg: &Resolved) -> Result<ScenarioGrid, CliError> {
    cfg.require(cfg.n.is_empty(), "n")?;
    cfg.require(cfg.p.is_empty(), "p")?;
    cfg.require(cfg.lambda.is_empty(), "lambda")?;
    if cfg.mq_pairs.is_none() {
        cfg.require(cfg.m.is_empty(), "m")?;
        cfg.require(cfg.q.is_empty(), "q")?;
    }
    Ok(ScenarioGrid {
        n_values: cfg.n.clone(),
        p_values: cfg.p.clone(),
        lambda_values: cfg.lambda.clone(),
        mu: cfg.mu,
        m_values: cfg.m.clone(),
        q_values: cfg.q.clone(),
        mq_pairs: cfg.mq_pairs.clone(),
        r: cfg.r,
        theta: cfg.theta,
        periods: cfg.periods.unwrap_or(experiments::DEFAULT_PERIODS),
        replications: cfg.reps.unwrap_or(1),
        seed: cfg.seed,
        burn_in: cfg.burn_in,
    })
}

fn write_rows(rows: &[ResultRow], path: &Path, format: Format) -> Result<(), CliError> {
    match format {
        Format::Csv => experiments::emit_csv(rows, path)?,
        Format::Json => experiments::emit_json(rows, path)?,
    }
    Ok(())
}

fn summary_line(r: &ResultRow) -> String {
    format!(
        "n={} p={} lambda={} m={} q={} mean_cost={} se={} sigma_np={}",
        r.n,
        r.p,
        r.lambda,
        r.m,
        r.q,
        f6(r.mean_cost),
        f6(r.std_error_cost),
        f6(r.sigma_np)
    )
}

fn cmd_simulate(params: &ParamArgs, g: &GlobalArgs) -> Result<(), CliError> {
    let cfg = config::resolve(params, g.seed, g.config.as_deref())?;
    echo(&cfg, g);
    let grid = grid_from(&cfg)?;
    let rows = experiments::run_sweep(&grid)?;
    let out = g
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("results.{}", g.format.ext())));
    write_rows(&rows, &out, g.format)?;
    for r in &rows {
        println!("{}", summary_line(r));
    }
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn out_dir(g: &GlobalArgs) -> Result<PathBuf, CliError> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn cmd_reproduce(preset: &Preset, g: &GlobalArgs) -> Result<(), CliError> {
    let seed = g.seed.unwrap_or(config::DEFAULT_SEED);
    let dir = out_dir(g)?;
    let ext = g.format.ext();
    let periods = |a: &PresetArgs| a.periods.unwrap_or(experiments::DEFAULT_PERIODS);
    match preset {
        Preset::Table2(a) => {
            let reps = a.reps.unwrap_or(experiments::DEFAULT_TABLE_REPLICATIONS);
            let rows = experiments::reproduce_table2(seed, periods(a), reps)?;
            let path = dir.join(format!("table2.{ext}"));
            match g.format {
                Format::Csv => experiments::emit_table2_csv(&rows, &path)?,
                Format::Json => experiments::emit_table2_json(&rows, &path)?,
            }
            println!("m,q,n,sigma_n1,mean_cost,cost_lb,cost_ub,threshold_cell");
            for r in &rows {
                println!(
                    "{},{},{},{},{},{},{},{}",
                    r.m,
                    r.q,
                    r.n,
                    f6(r.sigma_n1),
                    f6(r.mean_cost),
                    f6(r.cost_lb),
                    f6(r.cost_ub),
                    u8::from(r.threshold_cell)
                );
            }
            eprintln!("wrote {}", path.display());
        }
        Preset::FigCv(a) | Preset::FigNpr(a) => {
            let reps = a.reps.unwrap_or(1);
            let (grid, name) = match preset {
                Preset::FigCv(_) => (experiments::fig_cv_grid(seed, periods(a), reps), "fig_cv"),
                _ => (experiments::fig_npr_grid(seed, periods(a), reps), "fig_npr"),
            };
            let rows = experiments::run_sweep(&grid)?;
            let path = dir.join(format!("{name}.{ext}"));
            write_rows(&rows, &path, g.format)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        Preset::FigCost { run, m } => {
            let reps = run.reps.unwrap_or(1);
            for &shelf in m {
                let grid = experiments::fig_cost_grid(&[shelf], seed, periods(run), reps);
                let rows = experiments::run_sweep(&grid)?;
                let path = dir.join(format!("fig_cost_m{shelf}.{ext}"));
                write_rows(&rows, &path, g.format)?;
                eprintln!("wrote {} rows to {}", rows.len(), path.display());
            }
        }
    }
    Ok(())
}

fn echo(cfg: &Resolved, g: &GlobalArgs) {
    if g.verbose > 0 {
        match serde_json::to_string_pretty(cfg) {
            Ok(text) => eprintln!("{text}"),
            Err(e) => eprintln!("cannot echo configuration: {e}"),
        }
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        None => Ok(()),
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::runtime(format!("thread pool: {e}"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    set_threads(cli.global.threads)?;
    let g = &cli.global;
    match &cli.command {
        Command::Analytic { what } => cmd_analytic(what, g),
        Command::Simulate(p) => cmd_simulate(p, g),
        Command::Threshold(p) => cmd_threshold(p, g),
        Command::Reproduce { preset } => cmd_reproduce(preset, g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            if e.code == 2 {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(e.code)
        }
    }
}
