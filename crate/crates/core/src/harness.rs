//! Staircase mutual-information benchmark.
//!
//! A critic is trained on fresh batches from a Gaussian (or cubic) task whose
//! true MI steps up level by level. Every step records the objective and an
//! MI readout appropriate to the estimator:
//!
//! | objective | readout |
//! |-----------|---------|
//! | RPC | mean log of the ratio recovered by [`invert_critic`] on joint rows |
//! | DV, NWJ | the objective value |
//! | SMILE | clipped DV value (the critic itself trains on the JS surrogate) |
//! | JS | NWJ value of the shifted critic `f + 1` |
//! | CPC | the objective value, which already includes `log N` |

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critic::{BackwardOutput, CriticConfig, CriticState, OptimizerConfig};
use crate::error::{Error, Result};
use crate::numeric::{mean, variance};
use crate::objectives::{
    self, baseline_value, bounds, invert_critic, mi_from_ratios, optimal_critic, rpc_value, ObjectiveKind,
    RelativeParams, ScoreBatch,
};
use crate::rng::{derive_seed, Rng};
use crate::tasks::{analytic_log_ratio, ground_truth_mi, sample, sample_pre_cubic, GaussianTask, PairBatch};
use crate::format_sig9;

/// Header of the per-step trace CSV.
pub const TRACE_HEADER: &str = "step,true_mi,objective,mi_estimate,clamped";
/// Header of the sweep CSV.
pub const SWEEP_HEADER: &str = "alpha,beta,gamma,level,bias,variance,status";

// Stream identifiers mixed into the master seed.
const STREAM_INIT: u64 = 0;
const STREAM_DATA: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub total_steps: usize,
    pub steps_per_level: usize,
    /// True MI per level, in nats.
    pub mi_levels: Vec<f64>,
    pub batch_n: usize,
    pub batch_m: usize,
    pub dim: usize,
    pub cubic: bool,
    pub objective: ObjectiveKind,
    pub params: RelativeParams,
    pub critic: CriticConfig,
    pub opt: OptimizerConfig,
    pub master_seed: u64,
    /// Trailing steps of each level used for bias and variance.
    pub summary_window: usize,
    /// Fill the rest of the trace with NaN after the first non-finite step.
    pub stop_on_explosion: bool,
    /// Recovered ratios are clamped to `[ratio_floor, ratio_ceiling]` before the log.
    pub ratio_floor: f64,
    pub ratio_ceiling: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let dim = 20;
        Self {
            total_steps: 20_000,
            steps_per_level: 4_000,
            mi_levels: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            batch_n: 64,
            batch_m: 64,
            dim,
            cubic: false,
            objective: ObjectiveKind::Rpc,
            params: RelativeParams::default(),
            critic: CriticConfig::new(2 * dim),
            opt: OptimizerConfig::default(),
            master_seed: 0,
            summary_window: 500,
            stop_on_explosion: false,
            ratio_floor: 1e-6,
            ratio_ceiling: 1e12,
        }
    }
}

impl BenchmarkConfig {
    /// Staircase over `mi_levels` with `steps_per_level` steps each.
    pub fn with_levels(mut self, mi_levels: Vec<f64>, steps_per_level: usize) -> Self {
        self.total_steps = steps_per_level * mi_levels.len();
        self.steps_per_level = steps_per_level;
        self.mi_levels = mi_levels;
        self.summary_window = self.summary_window.min(steps_per_level);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mi_levels.is_empty() {
            return Err(Error::Config("mi_levels must not be empty".into()));
        }
        if self.steps_per_level == 0 || self.total_steps != self.steps_per_level * self.mi_levels.len() {
            return Err(Error::Config(format!(
                "total_steps ({}) must equal steps_per_level ({}) x number of levels ({})",
                self.total_steps,
                self.steps_per_level,
                self.mi_levels.len()
            )));
        }
        if self.summary_window == 0 || self.summary_window > self.steps_per_level {
            return Err(Error::Config(format!(
                "summary_window must lie in 1..={}, got {}",
                self.steps_per_level, self.summary_window
            )));
        }
        if self.batch_n == 0 || self.batch_m == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.objective == ObjectiveKind::Cpc && self.batch_n < 2 {
            return Err(Error::Config("cpc needs batch_n >= 2".into()));
        }
        if self.critic.input_dim != 2 * self.dim {
            return Err(Error::Config(format!(
                "critic input_dim ({}) must be twice the task dimension ({})",
                self.critic.input_dim, self.dim
            )));
        }
        if !(self.ratio_floor > 0.0 && self.ratio_floor < self.ratio_ceiling && self.ratio_ceiling.is_finite()) {
            return Err(Error::Config("need 0 < ratio_floor < ratio_ceiling < inf".into()));
        }
        for &mi in &self.mi_levels {
            GaussianTask::with_mi(self.dim, mi, self.cubic).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.objective.validate()?;
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.objective == ObjectiveKind::Rpc && !self.params.ratio_identifiable() {
            return Err(Error::Config("the rpc readout needs alpha > 0 or gamma > 0".into()));
        }
        self.critic.validate()?;
        self.opt.validate()
    }

    fn tasks(&self) -> Result<Vec<GaussianTask>> {
        self.mi_levels
            .iter()
            .map(|&mi| GaussianTask::with_mi(self.dim, mi, self.cubic))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub true_mi: f64,
    pub objective: f64,
    pub mi_estimate: f64,
    /// Ratios clamped by the readout in this step.
    pub clamped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub true_mi: f64,
    /// Mean finite estimate over the window minus the true MI.
    pub bias: f64,
    pub variance: f64,
    /// Finite estimates in the window.
    pub finite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTrace {
    pub objective: String,
    pub rows: Vec<TraceRow>,
    pub summaries: Vec<LevelSummary>,
    /// Steps whose objective or readout was not finite.
    pub non_finite_steps: usize,
    /// First non-finite step, if any.
    pub exploded_at: Option<usize>,
}

impl EstimateTrace {
    fn from_rows(objective: String, rows: Vec<TraceRow>, cfg: &BenchmarkConfig) -> Self {
        let summaries = cfg
            .mi_levels
            .iter()
            .enumerate()
            .map(|(level, &true_mi)| {
                let end = (level + 1) * cfg.steps_per_level;
                let window: Vec<f64> = rows[end - cfg.summary_window..end]
                    .iter()
                    .map(|r| r.mi_estimate)
                    .filter(|v| v.is_finite())
                    .collect();
                LevelSummary {
                    level,
                    true_mi,
                    bias: mean(&window) - true_mi,
                    variance: if window.is_empty() { f64::NAN } else { variance(&window) },
                    finite: window.len(),
                }
            })
            .collect();
        let bad = |r: &TraceRow| !(r.objective.is_finite() && r.mi_estimate.is_finite());
        Self {
            objective,
            non_finite_steps: rows.iter().filter(|r| bad(r)).count(),
            exploded_at: rows.iter().find(|r| bad(r)).map(|r| r.step),
            rows,
            summaries,
        }
    }

    pub fn exploded(&self) -> bool {
        self.exploded_at.is_some()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.step,
                format_sig9(r.true_mi),
                format_sig9(r.objective),
                format_sig9(r.mi_estimate),
                r.clamped
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Summary without the per-step rows.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            objective: &'a str,
            steps: usize,
            non_finite_steps: usize,
            exploded_at: Option<usize>,
            levels: Vec<LevelJson>,
        }
        #[derive(Serialize)]
        struct LevelJson {
            level: usize,
            true_mi: f64,
            bias: Option<f64>,
            variance: Option<f64>,
            finite: usize,
        }
        let finite = |v: f64| v.is_finite().then_some(v);
        let s = Summary {
            objective: &self.objective,
            steps: self.rows.len(),
            non_finite_steps: self.non_finite_steps,
            exploded_at: self.exploded_at,
            levels: self
                .summaries
                .iter()
                .map(|l| LevelJson {
                    level: l.level,
                    true_mi: l.true_mi,
                    bias: finite(l.bias),
                    variance: finite(l.variance),
                    finite: l.finite,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&s).map_err(|e| Error::Io(e.to_string()))
    }
}

/// MI readout for one step and the number of ratios clamped on the way.
fn readout(kind: ObjectiveKind, out: &BackwardOutput, cfg: &BenchmarkConfig) -> (f64, usize) {
    match kind {
        ObjectiveKind::Rpc => rpc_readout(&out.pos_scores, &cfg.params, cfg.ratio_floor, cfg.ratio_ceiling),
        ObjectiveKind::Cpc | ObjectiveKind::Dv | ObjectiveKind::Nwj => (out.value, 0),
        ObjectiveKind::Smile { .. } => {
            let scores = ScoreBatch {
                pos: out.pos_scores.clone(),
                neg: out.neg_scores.clone(),
            };
            (baseline_value(kind, &scores).unwrap_or(f64::NAN), 0)
        }
        ObjectiveKind::Js => {
            let shifted = ScoreBatch {
                pos: out.pos_scores.iter().map(|f| f + 1.0).collect(),
                neg: out.neg_scores.iter().map(|f| f + 1.0).collect(),
            };
            (baseline_value(ObjectiveKind::Nwj, &shifted).unwrap_or(f64::NAN), 0)
        }
    }
}

/// `(1/n) Σ log r̂` with `r̂` recovered from critic values on joint rows.
///
/// Values at or past the pole `1/β` map to `ceiling`, values below `−α/γ` to
/// `floor`; both are counted.
pub fn rpc_readout(joint_scores: &[f64], params: &RelativeParams, floor: f64, ceiling: f64) -> (f64, usize) {
    let mut clamped = 0;
    let logs: Vec<f64> = joint_scores
        .iter()
        .map(|&f| {
            let r = match invert_critic(f, params) {
                Ok(inv) if !inv.clamped => inv.ratio,
                Ok(_) => {
                    clamped += 1;
                    floor
                }
                Err(_) if f.is_finite() => {
                    clamped += 1;
                    ceiling
                }
                Err(_) => f64::NAN,
            };
            let bounded = r.clamp(floor, ceiling);
            if bounded != r && !r.is_nan() {
                clamped += 1;
            }
            bounded.ln()
        })
        .collect();
    (mi_from_ratios(&logs).unwrap_or(f64::NAN), clamped)
}

fn nan_row(step: usize, true_mi: f64) -> TraceRow {
    TraceRow {
        step,
        true_mi,
        objective: f64::NAN,
        mi_estimate: f64::NAN,
        clamped: 0,
    }
}

/// Trains a critic over the staircase and records every step.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<EstimateTrace> {
    cfg.validate()?;
    let tasks = cfg.tasks()?;
    let mut critic = CriticState::new(cfg.critic, &mut Rng::derive(cfg.master_seed, &[STREAM_INIT]))?;
    let mut data_rng = Rng::derive(cfg.master_seed, &[STREAM_DATA]);
    let mut rows = Vec::with_capacity(cfg.total_steps);
    let mut halted = false;
    for step in 0..cfg.total_steps {
        let level = step / cfg.steps_per_level;
        let true_mi = cfg.mi_levels[level];
        // Draw the batch even when halted so later levels see the same data
        // regardless of what happened earlier.
        let batch = sample(&tasks[level], cfg.batch_n, cfg.batch_m, &mut data_rng)?;
        if halted {
            rows.push(nan_row(step, true_mi));
            continue;
        }
        let row = match critic.backward(&batch, cfg.objective, &cfg.params) {
            Ok(mut out) => {
                let (estimate, clamped) = readout(cfg.objective, &out, cfg);
                out.grads.scale(-1.0);
                critic.step(&out.grads, &cfg.opt)?;
                if !critic.params.all_finite() {
                    halted = true;
                }
                TraceRow {
                    step,
                    true_mi,
                    objective: out.value,
                    mi_estimate: estimate,
                    clamped,
                }
            }
            Err(Error::NonFiniteGradient { .. } | Error::NonFinite { .. }) => nan_row(step, true_mi),
            Err(e) => return Err(e),
        };
        if cfg.stop_on_explosion && !(row.objective.is_finite() && row.mi_estimate.is_finite()) {
            halted = true;
        }
        rows.push(row);
    }
    Ok(EstimateTrace::from_rows(cfg.objective.name().to_string(), rows, cfg))
}

/// Log-ratio matrix `log r(x_i, y_j)` for every joint `x` against every joint `y`.
fn log_ratio_matrix(task: &GaussianTask, batch: &PairBatch) -> Result<ndarray::Array2<f64>> {
    let n = batch.n();
    let mut out = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        let x = batch.joint_x.row(i);
        for j in 0..n {
            let y = batch.joint_y.row(j);
            out[[i, j]] = analytic_log_ratio(
                task,
                x.as_slice().expect("contiguous row"),
                y.as_slice().expect("contiguous row"),
            )?;
        }
    }
    Ok(out)
}

fn row_log_ratios(task: &GaussianTask, x: &ndarray::Array2<f64>, y: &ndarray::Array2<f64>) -> Result<Vec<f64>> {
    x.rows()
        .into_iter()
        .zip(y.rows())
        .map(|(xr, yr)| {
            analytic_log_ratio(
                task,
                xr.as_slice().expect("contiguous row"),
                yr.as_slice().expect("contiguous row"),
            )
        })
        .collect()
}

/// Each objective's optimal critic as a function of the log ratio.
fn oracle_score(kind: ObjectiveKind, log_r: f64, params: &RelativeParams) -> Result<f64> {
    match kind {
        ObjectiveKind::Rpc => optimal_critic(log_r.exp(), params),
        ObjectiveKind::Nwj => Ok(1.0 + log_r),
        _ => Ok(log_r),
    }
}

/// Same protocol as [`run_benchmark`] with the trained critic replaced by each
/// objective's analytic optimum. Isolates the estimator arithmetic from optimization.
pub fn oracle_benchmark(cfg: &BenchmarkConfig) -> Result<EstimateTrace> {
    cfg.validate()?;
    let tasks = cfg.tasks()?;
    let mut data_rng = Rng::derive(cfg.master_seed, &[STREAM_DATA]);
    let mut rows = Vec::with_capacity(cfg.total_steps);
    for step in 0..cfg.total_steps {
        let level = step / cfg.steps_per_level;
        let task = &tasks[level];
        // The ratio is invariant under the per-coordinate cube, so the oracle
        // evaluates it on the untransformed coordinates.
        let batch = sample_pre_cubic(task, cfg.batch_n, cfg.batch_m, &mut data_rng)?;
        let (objective, pos_scores, neg_scores) = if cfg.objective == ObjectiveKind::Cpc {
            let m = log_ratio_matrix(task, &batch)?;
            let n = batch.n();
            let pos = (0..n).map(|i| m[[i, i]]).collect();
            (objectives::cpc_value(m.view())?, pos, Vec::new())
        } else {
            let pos_lr = row_log_ratios(task, &batch.joint_x, &batch.joint_y)?;
            let neg_lr = row_log_ratios(task, &batch.prod_x, &batch.prod_y)?;
            let score = |lr: &f64| oracle_score(cfg.objective, *lr, &cfg.params);
            let pos = pos_lr.iter().map(score).collect::<Result<Vec<_>>>()?;
            let neg = neg_lr.iter().map(score).collect::<Result<Vec<_>>>()?;
            let sb = ScoreBatch {
                pos: pos.clone(),
                neg: neg.clone(),
            };
            let value = objectives::training_value(cfg.objective, &sb, &cfg.params)?;
            (value, pos, neg)
        };
        let out = BackwardOutput {
            value: objective,
            grads: crate::critic::Parameters::zeros(0, 0),
            pos_scores,
            neg_scores,
        };
        let (mi_estimate, clamped) = readout(cfg.objective, &out, cfg);
        rows.push(TraceRow {
            step,
            true_mi: ground_truth_mi(task),
            objective,
            mi_estimate,
            clamped,
        });
    }
    Ok(EstimateTrace::from_rows(format!("{}-oracle", cfg.objective.name()), rows, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub alpha_set: Vec<f64>,
    pub beta_set: Vec<f64>,
    pub gamma_set: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        let set = vec![0.0, 0.001, 1.0];
        Self {
            alpha_set: set.clone(),
            beta_set: set.clone(),
            gamma_set: set,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, set) in [("alpha_set", &self.alpha_set), ("beta_set", &self.beta_set), ("gamma_set", &self.gamma_set)] {
            if set.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            if set.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("{name} entries must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Cells in α-major, then β, then γ order.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &a in &self.alpha_set {
            for &b in &self.beta_set {
                for &g in &self.gamma_set {
                    out.push((a, b, g));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Exploded,
    Invalid,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Exploded => "exploded",
            CellStatus::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub status: CellStatus,
    pub levels: Vec<LevelSummary>,
}

impl SweepCell {
    pub fn level(&self, index: usize) -> Option<&LevelSummary> {
        self.levels.iter().find(|l| l.level == index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, alpha: f64, beta: f64, gamma: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.beta == beta && c.gamma == gamma)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SWEEP_HEADER}")?;
        for c in &self.cells {
            for l in &c.levels {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    format_sig9(c.alpha),
                    format_sig9(c.beta),
                    format_sig9(c.gamma),
                    l.level,
                    format_sig9(l.bias),
                    format_sig9(l.variance),
                    c.status.as_str()
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Seed for one sweep cell; depends only on the master seed and the cell's parameters.
pub fn cell_seed(master: u64, alpha: f64, beta: f64, gamma: f64) -> u64 {
    derive_seed(master, &[alpha.to_bits(), beta.to_bits(), gamma.to_bits()])
}

fn run_cell(base: &BenchmarkConfig, (alpha, beta, gamma): (f64, f64, f64)) -> Result<SweepCell> {
    let invalid = |base: &BenchmarkConfig| SweepCell {
        alpha,
        beta,
        gamma,
        status: CellStatus::Invalid,
        levels: base
            .mi_levels
            .iter()
            .enumerate()
            .map(|(level, &true_mi)| LevelSummary {
                level,
                true_mi,
                bias: f64::NAN,
                variance: f64::NAN,
                finite: 0,
            })
            .collect(),
    };
    let params = match RelativeParams::new(alpha, beta, gamma) {
        Ok(p) if p.ratio_identifiable() => p.with_tau(base.params.tau)?,
        _ => return Ok(invalid(base)),
    };
    let cfg = BenchmarkConfig {
        objective: ObjectiveKind::Rpc,
        params,
        master_seed: cell_seed(base.master_seed, alpha, beta, gamma),
        ..base.clone()
    };
    let trace = run_benchmark(&cfg)?;
    Ok(SweepCell {
        alpha,
        beta,
        gamma,
        status: if trace.exploded() { CellStatus::Exploded } else { CellStatus::Ok },
        levels: trace.summaries,
    })
}

/// Runs the RPC benchmark for every cell of the grid. Cells rejected by
/// [`RelativeParams::validate`] are marked invalid, as are cells with α = γ = 0.
/// `threads = None` uses the global rayon pool; results are in grid order
/// regardless of scheduling.
pub fn run_sweep(grid: &SweepGrid, base: &BenchmarkConfig, threads: Option<usize>) -> Result<SweepReport> {
    grid.validate()?;
    base.validate()?;
    let cells = grid.cells();
    let work = || cells.par_iter().map(|&c| run_cell(base, c)).collect::<Result<Vec<_>>>();
    let cells = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(SweepReport { cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceProbe {
    pub empirical_var: f64,
    pub bound: f64,
    pub mean: f64,
    /// Fewer than two repeats, so the variance carries no information.
    pub degenerate: bool,
}

/// Variance of the RPC estimate at the analytic optimal critic over
/// `repeats` independent batches, next to the analytic bound.
pub fn variance_probe(
    params: &RelativeParams,
    n: usize,
    m: usize,
    repeats: usize,
    task: &GaussianTask,
    seed: u64,
) -> Result<VarianceProbe> {
    let bound = bounds(params, n, m)?.var_bound;
    if repeats == 0 {
        return Err(Error::Empty("variance probe repeats"));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let batch = sample_pre_cubic(task, n, m, &mut rng)?;
        let score = |lr: f64| optimal_critic(lr.exp(), params);
        let pos = row_log_ratios(task, &batch.joint_x, &batch.joint_y)?
            .into_iter()
            .map(score)
            .collect::<Result<Vec<_>>>()?;
        let neg = row_log_ratios(task, &batch.prod_x, &batch.prod_y)?
            .into_iter()
            .map(score)
            .collect::<Result<Vec<_>>>()?;
        values.push(rpc_value(&ScoreBatch { pos, neg }, params)?);
    }
    Ok(VarianceProbe {
        empirical_var: variance(&values),
        bound,
        mean: mean(&values),
        degenerate: repeats < 2,
    })
}

/// Trailing moving average that skips non-finite entries; NaN where a window has none.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let finite: Vec<f64> = values[lo..=i].iter().copied().filter(|v| v.is_finite()).collect();
            if finite.is_empty() {
                f64::NAN
            } else {
                mean(&finite)
            }
        })
        .collect()
}
