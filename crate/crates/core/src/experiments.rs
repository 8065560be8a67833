//! Scenario sweeps over `(n, p, λ, m, q)` and their CSV/JSON output.
//!
//! Every replication is keyed by `(seed, n, λ, replication)` only, so all
//! `p`, `m` and `q` values in a sweep see the same base Poisson counts and
//! the same per-order switching uniforms (common random numbers).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, CostParams, SchemeParams};
use crate::dist::{stream_key, RandomStream};
use crate::error::{Error, Result};
use crate::inventory::{default_burn_in, run_replication_with_stats, Replication};
use crate::opaque::DemandProfile;

pub const DEFAULT_CELL_BUDGET: usize = 100_000;
pub const DEFAULT_MU: f64 = 10.0;
pub const DEFAULT_PERIODS: usize = 10_000;
pub const DEFAULT_TABLE_REPLICATIONS: usize = 20;

/// Column order of the results CSV.
pub const CSV_HEADER: [&str; 14] = [
    "n",
    "p",
    "lambda",
    "m",
    "q",
    "sigma_np",
    "sigma_rel",
    "sigma_rel_approx",
    "mean_shortage",
    "mean_wastage",
    "mean_cost",
    "cost_lb",
    "cost_ub",
    "std_error_cost",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub n_values: Vec<usize>,
    pub p_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub mu: f64,
    pub m_values: Vec<u32>,
    pub q_values: Vec<f64>,
    /// Explicit `(m, q)` pairs; replaces the `m_values × q_values` product.
    #[serde(default)]
    pub mq_pairs: Option<Vec<(u32, f64)>>,
    pub r: f64,
    pub theta: f64,
    pub periods: usize,
    pub replications: usize,
    pub seed: u64,
    /// `None` uses `max(100, 5m)` per cell.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

/// One point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub p: f64,
    pub lambda: f64,
    pub m: u32,
    pub q: f64,
}

impl ScenarioGrid {
    /// Single-cell grid with the default economics (`μ = 10`, `r = θ = 1`).
    pub fn single(n: usize, p: f64, lambda: f64, m: u32, q: f64) -> Self {
        Self {
            n_values: vec![n],
            p_values: vec![p],
            lambda_values: vec![lambda],
            mu: DEFAULT_MU,
            m_values: vec![m],
            q_values: vec![q],
            mq_pairs: None,
            r: 1.0,
            theta: 1.0,
            periods: DEFAULT_PERIODS,
            replications: 1,
            seed: 1,
            burn_in: None,
        }
    }

    fn mq(&self) -> Vec<(u32, f64)> {
        match &self.mq_pairs {
            Some(pairs) => pairs.clone(),
            None => self
                .m_values
                .iter()
                .flat_map(|&m| self.q_values.iter().map(move |&q| (m, q)))
                .collect(),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.n_values.len() * self.p_values.len() * self.lambda_values.len() * self.mq().len()
    }

    pub fn burn_in_for(&self, m: u32) -> usize {
        self.burn_in.unwrap_or_else(|| default_burn_in(m))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGrid(msg));
        if self.n_values.is_empty() || self.p_values.is_empty() || self.lambda_values.is_empty() {
            return bad("n, p and lambda lists must be non-empty".into());
        }
        let mq = self.mq();
        if mq.is_empty() {
            return bad("no (m, q) combinations".into());
        }
        if self.n_values.contains(&0) {
            return bad("n must be at least 1".into());
        }
        if let Some(p) = self.p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("p = {p} outside [0, 1]"));
        }
        if let Some(l) = self
            .lambda_values
            .iter()
            .find(|&&l| !(l > 0.0) || !l.is_finite())
        {
            return bad(format!("lambda = {l} must be positive"));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return bad(format!("mu = {} must be positive", self.mu));
        }
        for &(m, q) in &mq {
            CostParams::new(self.r, self.theta, m, q)
                .map_err(|e| Error::InvalidGrid(e.to_string()))?;
            if self.periods <= self.burn_in_for(m) {
                return bad(format!(
                    "periods ({}) must exceed burn-in ({}) for m = {m}",
                    self.periods,
                    self.burn_in_for(m)
                ));
            }
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        Ok(())
    }

    /// Cells in output order: `n`, then `p`, then `λ`, then `(m, q)`.
    pub fn cells(&self) -> Vec<Cell> {
        let mq = self.mq();
        let mut out = Vec::with_capacity(self.cell_count());
        for &n in &self.n_values {
            for &p in &self.p_values {
                for &lambda in &self.lambda_values {
                    for &(m, q) in &mq {
                        out.push(Cell { n, p, lambda, m, q });
                    }
                }
            }
        }
        out
    }

    /// Stream for replication `rep` of cell `cell`; independent of `p`,
    /// `m` and `q`.
    pub fn stream_for(&self, cell: &Cell, rep: usize) -> RandomStream {
        RandomStream::new(
            self.seed,
            stream_key(&[cell.n as u64, cell.lambda.to_bits(), rep as u64]),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: usize,
    pub p: f64,
    pub lambda: f64,
    pub m: u32,
    pub q: f64,
    pub sigma_np: f64,
    pub sigma_rel: Option<f64>,
    pub sigma_rel_approx: Option<f64>,
    pub mean_shortage: f64,
    pub mean_wastage: f64,
    pub mean_cost: f64,
    pub cost_lb: Option<f64>,
    pub cost_ub: Option<f64>,
    pub std_error_cost: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, k) = xs.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    sum / k as f64
}

fn summarize(grid: &ScenarioGrid, cell: &Cell, reps: &[Replication<f64>]) -> Result<ResultRow> {
    let k = reps.len() as f64;
    let mean_cost = mean(reps.iter().map(|r| r.metrics.mean_cost));
    // across-replication spread when available; within-run otherwise
    let std_error_cost = if reps.len() >= 2 {
        let ss: f64 = reps
            .iter()
            .map(|r| (r.metrics.mean_cost - mean_cost).powi(2))
            .sum();
        (ss / (k - 1.0) / k).sqrt()
    } else {
        reps[0].metrics.std_error_cost
    };
    let sigma_np = mean(reps.iter().map(|r| r.demand.avg_variance));
    let sigma2 = grid.mu * grid.mu / cell.lambda;
    let (sigma_rel, sigma_rel_approx) = if cell.n >= 2 {
        let scheme = SchemeParams::new(cell.n, cell.p, cell.lambda, grid.mu)?;
        (
            Some(analytics::rel_from_sigma_np(cell.n, sigma2, sigma_np)?),
            Some(analytics::sigma_rel_approx(&scheme)),
        )
    } else {
        (None, None)
    };
    // with one product the scheme has no effect, so the pooled bound applies at any p
    let (cost_lb, cost_ub) = if cell.p == 1.0 || cell.n == 1 {
        let cp = CostParams::new(grid.r, grid.theta, cell.m, cell.q)?;
        let b = analytics::cost_bounds(cell.n, cell.lambda, grid.mu, &cp)?;
        (Some(b.cost_lb), Some(b.cost_ub))
    } else {
        (None, None)
    };
    Ok(ResultRow {
        n: cell.n,
        p: cell.p,
        lambda: cell.lambda,
        m: cell.m,
        q: cell.q,
        sigma_np,
        sigma_rel,
        sigma_rel_approx,
        mean_shortage: mean(reps.iter().map(|r| r.metrics.mean_shortage)),
        mean_wastage: mean(reps.iter().map(|r| r.metrics.mean_wastage)),
        mean_cost,
        cost_lb,
        cost_ub,
        std_error_cost,
    })
}

/// Runs every cell of the grid on the current rayon pool.
pub fn run_sweep(grid: &ScenarioGrid) -> Result<Vec<ResultRow>> {
    run_sweep_with_budget(grid, DEFAULT_CELL_BUDGET)
}

pub fn run_sweep_with_budget(grid: &ScenarioGrid, cell_budget: usize) -> Result<Vec<ResultRow>> {
    grid.validate()?;
    let cells = grid.cells();
    if cells.len() > cell_budget {
        return Err(Error::CellBudget {
            cells: cells.len(),
            budget: cell_budget,
        });
    }
    let reps = grid.replications;
    let units: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();
    let results: Vec<Replication<f64>> = units
        .par_iter()
        .map(|&(c, r)| {
            let cell = &cells[c];
            let profile = DemandProfile::homogeneous(cell.n, cell.p, cell.lambda, grid.mu)?;
            let cost = CostParams::new(grid.r, grid.theta, cell.m, cell.q)?;
            run_replication_with_stats(
                &profile,
                &cost,
                &grid.stream_for(cell, r),
                grid.periods,
                grid.burn_in_for(cell.m),
            )
        })
        .collect::<Result<_>>()?;
    cells
        .iter()
        .zip(results.chunks(reps))
        .map(|(cell, chunk)| summarize(grid, cell, chunk))
        .collect()
}

fn fixed(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn opt_fixed(x: Option<f64>) -> String {
    x.map(fixed).unwrap_or_default()
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Writes rows as CSV: fixed header, reals at six decimals, empty fields for
/// undefined analytic columns.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            fixed(r.p),
            fixed(r.lambda),
            r.m.to_string(),
            fixed(r.q),
            fixed(r.sigma_np),
            opt_fixed(r.sigma_rel),
            opt_fixed(r.sigma_rel_approx),
            fixed(r.mean_shortage),
            fixed(r.mean_wastage),
            fixed(r.mean_cost),
            opt_fixed(r.cost_lb),
            opt_fixed(r.cost_ub),
            fixed(r.std_error_cost),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_csv(rows, BufWriter::new(file)).map_err(|e| csv_err(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<csv::Result<Vec<ResultRow>>>()
        .map_err(|e| csv_err(path, e))
}

pub fn emit_json(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, rows).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_json(path: &Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

/// `(m, q)` blocks of the shortage/wastage comparison table.
pub const TABLE2_BLOCKS: [(u32, f64); 4] = [(2, 15.0), (2, 18.0), (3, 18.0), (3, 22.0)];
pub const TABLE2_N: [usize; 5] = [1, 2, 4, 8, 12];
pub const TABLE2_LAMBDA: f64 = 10.0;
pub const TABLE2_DELTA: f64 = 0.01;

pub const TABLE2_HEADER: [&str; 9] = [
    "m",
    "q",
    "n",
    "sigma_n1",
    "mean_cost",
    "std_error_cost",
    "cost_lb",
    "cost_ub",
    "threshold_cell",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub m: u32,
    pub q: f64,
    pub n: usize,
    /// Pooled variance `μ²/(nλ)`.
    pub sigma_n1: f64,
    pub mean_cost: f64,
    pub std_error_cost: f64,
    pub cost_lb: f64,
    pub cost_ub: f64,
    /// Largest `C̄_LB ≤ δ` among `n ≥ 2` in its `(m, q)` block.
    pub threshold_cell: bool,
}

pub fn table2_grid(seed: u64, periods: usize, replications: usize) -> ScenarioGrid {
    ScenarioGrid {
        n_values: TABLE2_N.to_vec(),
        p_values: vec![1.0],
        lambda_values: vec![TABLE2_LAMBDA],
        mu: DEFAULT_MU,
        m_values: vec![2, 3],
        q_values: vec![15.0, 18.0, 22.0],
        mq_pairs: Some(TABLE2_BLOCKS.to_vec()),
        r: 1.0,
        theta: 1.0,
        periods,
        replications,
        seed,
        burn_in: None,
    }
}

/// Simulated and analytic costs for every `(m, q, n)` cell, ordered by
/// block then `n`.
pub fn reproduce_table2(seed: u64, periods: usize, replications: usize) -> Result<Vec<Table2Row>> {
    let grid = table2_grid(seed, periods, replications);
    let rows = run_sweep(&grid)?;
    let mut table = Vec::with_capacity(rows.len());
    for &(m, q) in &TABLE2_BLOCKS {
        for &n in &TABLE2_N {
            let r = rows
                .iter()
                .find(|r| r.m == m && r.q == q && r.n == n)
                .expect("cell present in sweep");
            table.push(Table2Row {
                m,
                q,
                n,
                sigma_n1: grid.mu * grid.mu / (n as f64 * TABLE2_LAMBDA),
                mean_cost: r.mean_cost,
                std_error_cost: r.std_error_cost,
                cost_lb: r.cost_lb.expect("p = 1"),
                cost_ub: r.cost_ub.expect("p = 1"),
                threshold_cell: false,
            });
        }
    }
    mark_threshold_cells(&mut table, TABLE2_DELTA);
    Ok(table)
}

/// Flags, per `(m, q)` block, the row with the largest `cost_lb ≤ delta`
/// among `n ≥ 2`.
pub fn mark_threshold_cells(table: &mut [Table2Row], delta: f64) {
    for &(m, q) in &TABLE2_BLOCKS {
        let best = table
            .iter()
            .enumerate()
            .filter(|(_, r)| r.m == m && r.q == q && r.n >= 2 && r.cost_lb <= delta)
            .max_by(|a, b| a.1.cost_lb.total_cmp(&b.1.cost_lb))
            .map(|(i, _)| i);
        if let Some(i) = best {
            table[i].threshold_cell = true;
        }
    }
}

pub fn write_table2_csv<W: Write>(rows: &[Table2Row], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE2_HEADER)?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            fixed(r.q),
            r.n.to_string(),
            fixed(r.sigma_n1),
            fixed(r.mean_cost),
            fixed(r.std_error_cost),
            fixed(r.cost_lb),
            fixed(r.cost_ub),
            u8::from(r.threshold_cell).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_table2_csv(rows: &[Table2Row], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_table2_csv(rows, BufWriter::new(file)).map_err(|e| csv_err(path, e))
}

pub fn emit_table2_json(rows: &[Table2Row], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, rows).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))
}

/// `{0, step, 2·step, …, 1}`
pub fn unit_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

/// Variance vs `p` for two products at λ from 4 to 14.
pub fn fig_cv_grid(seed: u64, periods: usize, replications: usize) -> ScenarioGrid {
    ScenarioGrid {
        n_values: vec![2],
        p_values: unit_grid(20),
        lambda_values: vec![4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
        mq_pairs: Some(vec![(2, 15.0)]),
        periods,
        replications,
        seed,
        ..ScenarioGrid::single(2, 0.0, 10.0, 2, 15.0)
    }
}

/// Variance vs `p` for `n = 1..=12` at `λ = 10`.
pub fn fig_npr_grid(seed: u64, periods: usize, replications: usize) -> ScenarioGrid {
    ScenarioGrid {
        n_values: (1..=12).collect(),
        p_values: unit_grid(20),
        lambda_values: vec![10.0],
        mq_pairs: Some(vec![(2, 15.0)]),
        periods,
        replications,
        seed,
        ..ScenarioGrid::single(1, 0.0, 10.0, 2, 15.0)
    }
}

/// Shortage, wastage and cost vs `q` for twelve products at `λ = 10`.
pub fn fig_cost_grid(
    m_values: &[u32],
    seed: u64,
    periods: usize,
    replications: usize,
) -> ScenarioGrid {
    ScenarioGrid {
        n_values: vec![12],
        p_values: unit_grid(10),
        lambda_values: vec![10.0],
        m_values: m_values.to_vec(),
        q_values: (0..=30).map(f64::from).collect(),
        mq_pairs: None,
        periods,
        replications,
        seed,
        ..ScenarioGrid::single(12, 0.0, 10.0, 2, 15.0)
    }
}

/// Integer base-stock level in `[0, q_max]` minimizing simulated cost at
/// full pooling; ties go to the smaller `q`.
#[allow(clippy::too_many_arguments)]
pub fn optimal_base_stock(
    n: usize,
    lambda: f64,
    mu: f64,
    m: u32,
    r: f64,
    theta: f64,
    q_max: u32,
    seed: u64,
    periods: usize,
    replications: usize,
) -> Result<(f64, f64)> {
    let grid = ScenarioGrid {
        n_values: vec![n],
        p_values: vec![1.0],
        lambda_values: vec![lambda],
        mu,
        m_values: vec![m],
        q_values: (0..=q_max).map(f64::from).collect(),
        mq_pairs: None,
        r,
        theta,
        periods,
        replications,
        seed,
        burn_in: None,
    };
    let rows = run_sweep(&grid)?;
    let best = rows
        .iter()
        .fold(None::<&ResultRow>, |best, r| match best {
            Some(b) if b.mean_cost <= r.mean_cost => Some(b),
            _ => Some(r),
        })
        .expect("non-empty grid");
    Ok((best.q, best.mean_cost))
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}
