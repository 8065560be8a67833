//! Scenario parameters gathered from a JSON file and command-line flags.
//!
//! The file uses flat keys named like the CSV columns. List-valued keys take
//! either a scalar or an array. Any flag given on the command line replaces
//! the file's value for that key.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<OneOrMany<usize>>,
    p: Option<OneOrMany<f64>>,
    lambda: Option<OneOrMany<f64>>,
    mu: Option<f64>,
    m: Option<OneOrMany<u32>>,
    q: Option<OneOrMany<f64>>,
    mq_pairs: Option<Vec<(u32, f64)>>,
    r: Option<f64>,
    theta: Option<f64>,
    delta: Option<f64>,
    periods: Option<usize>,
    #[serde(alias = "replications")]
    reps: Option<usize>,
    burn_in: Option<usize>,
    seed: Option<u64>,
    n_max: Option<usize>,
}

/// Scenario flags shared by every subcommand. List flags accept
/// comma-separated values.
#[derive(Args, Clone, Debug, Default)]
pub struct ParamArgs {
    /// Number of non-opaque products.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Probability that a customer switches to the opaque product.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<f64>,
    /// Base Poisson rate; the coefficient of variation is 1/sqrt(lambda).
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    /// Mean demand per product.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Shelflife in periods.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<u32>,
    /// Base-stock level.
    #[arg(long, value_delimiter = ',')]
    pub q: Vec<f64>,
    /// Unit shortage cost.
    #[arg(long)]
    pub r: Option<f64>,
    /// Unit wastage cost.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Cost tolerance for the threshold search.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Largest pool size tried by the threshold search.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Simulated periods per replication.
    #[arg(long)]
    pub periods: Option<usize>,
    /// Replications per cell.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Periods discarded at the start of each replication.
    #[arg(long)]
    pub burn_in: Option<usize>,
}

/// Fully merged parameters; unset keys stay empty or `None`.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub m: Vec<u32>,
    pub q: Vec<f64>,
    pub mq_pairs: Option<Vec<(u32, f64)>>,
    pub r: f64,
    pub theta: f64,
    pub delta: f64,
    pub n_max: usize,
    pub periods: Option<usize>,
    pub reps: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: u64,
}

fn pick<T>(flag: Vec<T>, file: Option<OneOrMany<T>>) -> Vec<T> {
    if flag.is_empty() {
        file.map(Vec::from).unwrap_or_default()
    } else {
        flag
    }
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

pub fn resolve(
    args: &ParamArgs,
    seed: Option<u64>,
    config: Option<&Path>,
) -> Result<Resolved, CliError> {
    let file = match config {
        Some(path) => read_file(path)?,
        None => FileConfig::default(),
    };
    let a = args.clone();
    let flags_set_mq = !a.m.is_empty() || !a.q.is_empty();
    Ok(Resolved {
        n: pick(a.n, file.n),
        p: pick(a.p, file.p),
        lambda: pick(a.lambda, file.lambda),
        mu: a
            .mu
            .or(file.mu)
            .unwrap_or(opaque_inv::experiments::DEFAULT_MU),
        m: pick(a.m, file.m),
        q: pick(a.q, file.q),
        // explicit m or q flags take precedence over pairs from the file
        mq_pairs: if flags_set_mq { None } else { file.mq_pairs },
        r: a.r.or(file.r).unwrap_or(1.0),
        theta: a.theta.or(file.theta).unwrap_or(1.0),
        delta: a
            .delta
            .or(file.delta)
            .unwrap_or(opaque_inv::analytics::DEFAULT_DELTA),
        n_max: a
            .n_max
            .or(file.n_max)
            .unwrap_or(opaque_inv::analytics::DEFAULT_N_MAX),
        periods: a.periods.or(file.periods),
        reps: a.reps.or(file.reps),
        burn_in: a.burn_in.or(file.burn_in),
        seed: seed.or(file.seed).unwrap_or(DEFAULT_SEED),
    })
}

impl Resolved {
    fn single<T: Copy>(values: &[T], name: &str) -> Result<T, CliError> {
        match values {
            [x] => Ok(*x),
            [] => Err(CliError::usage(format!("missing --{name}"))),
            _ => Err(CliError::usage(format!(
                "--{name} takes a single value here"
            ))),
        }
    }

    pub fn one_n(&self) -> Result<usize, CliError> {
        Self::single(&self.n, "n")
    }

    pub fn one_p(&self) -> Result<f64, CliError> {
        Self::single(&self.p, "p")
    }

    pub fn one_lambda(&self) -> Result<f64, CliError> {
        Self::single(&self.lambda, "lambda")
    }

    pub fn one_m(&self) -> Result<u32, CliError> {
        Self::single(&self.m, "m")
    }

    pub fn one_q(&self) -> Result<f64, CliError> {
        Self::single(&self.q, "q")
    }

    pub fn require(&self, values_empty: bool, name: &str) -> Result<(), CliError> {
        if values_empty {
            Err(CliError::usage(format!("missing --{name}")))
        } else {
            Ok(())
        }
    }
}
