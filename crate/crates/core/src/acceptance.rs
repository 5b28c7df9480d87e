//! End-to-end acceptance checks, shared by the `acceptance` test target and the
//! CLI `verify` command. Each check returns a [`CriterionResult`] instead of
//! panicking, so a failing check is reported next to the others.

use std::fmt;
use std::time::{Duration, Instant};

use crate::critic::{CriticConfig, CriticState};
use crate::error::Result;
use crate::harness::{run_benchmark, run_sweep, variance_probe, BenchmarkConfig, EstimateTrace, SweepGrid};
use crate::numeric::{mean, variance};
use crate::objectives::{
    bounds, invert_critic, mixture_form_value_weighted, optimal_critic, rpc_value, rpc_value_weighted,
    ImportanceBatch, ObjectiveKind, RelativeParams, ScoreBatch,
};
use crate::rng::Rng;
use crate::tasks::{analytic_log_ratio, chi2_oracle_1d, relative_ratio_curve, sample_pre_cubic, GaussianTask, PairBatch};

pub const CRITERIA: [u8; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

pub fn name(id: u8) -> &'static str {
    match id {
        1 => "optimal critic range and monotonicity",
        2 => "critic inversion round trip",
        3 => "chi-squared recovery",
        4 => "mixture-form identity",
        5 => "objective upper bound",
        6 => "estimator variance bound",
        7 => "gradient correctness",
        8 => "staircase benchmark accuracy",
        9 => "cpc log-batch saturation",
        10 => "training stability ordering",
        11 => "bounded relative ratio",
        12 => "relative parameter sweep",
        _ => "unknown criterion",
    }
}

/// Runs one criterion. Errors inside a check count as a failure.
pub fn run(id: u8) -> CriterionResult {
    let start = Instant::now();
    let outcome = match id {
        1 => range_and_monotonicity(),
        2 => round_trip(),
        3 => chi_squared_recovery(),
        4 => mixture_identity(),
        5 => upper_bound(),
        6 => variance_bound(),
        7 => gradient_check(),
        8 => staircase_accuracy(),
        9 => cpc_saturation(),
        10 => stability_ordering(),
        11 => bounded_ratio(),
        12 => sweep_ordering(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name: name(id),
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

type Outcome = Result<(bool, String)>;

/// α ∈ {0, ½, 1}, β ∈ {10⁻³, ¼, 1}, γ ∈ {1, 2, 4}. Every α/γ is a power of two
/// (or zero), so the lower end of the critic range is exact.
pub fn parameter_grid() -> Vec<RelativeParams> {
    let mut out = Vec::new();
    for a in [0.0, 0.5, 1.0] {
        for b in [0.001, 0.25, 1.0] {
            for g in [1.0, 2.0, 4.0] {
                out.push(RelativeParams::new(a, b, g).expect("grid values are valid"));
            }
        }
    }
    out
}

/// 10⁴ log-spaced ratios on `[10⁻⁵, 10⁵]`. Near `r → 0` the round trip loses
/// about `α·u/r` relative accuracy and near `r → ∞` about `u·βr/γ`, so this is
/// the widest decade range on which 10⁻¹⁰ is attainable in double precision.
pub fn ratio_grid() -> Vec<f64> {
    let k = 10_000;
    (0..k)
        .map(|i| 10f64.powf(-5.0 + 10.0 * i as f64 / (k - 1) as f64))
        .collect()
}

fn range_and_monotonicity() -> Outcome {
    let mut grid = vec![0.0];
    grid.extend(ratio_grid());
    grid.push(1e12);
    let mut violations = 0usize;
    for p in parameter_grid() {
        let (lo, hi) = (p.critic_lo(), p.critic_hi());
        let mut prev = f64::NEG_INFINITY;
        for &r in &grid {
            let f = optimal_critic(r, &p)?;
            if !(lo <= f && f <= hi) || f < prev {
                violations += 1;
            }
            prev = f;
        }
    }
    let checked = grid.len() * parameter_grid().len();
    Ok((violations == 0, format!("{violations} violations in {checked} evaluations")))
}

fn round_trip() -> Outcome {
    let mut worst = 0.0f64;
    for p in parameter_grid() {
        for r in ratio_grid() {
            let back = invert_critic(optimal_critic(r, &p)?, &p)?;
            worst = worst.max((back.ratio - r).abs() / r);
        }
    }
    Ok((worst < 1e-10, format!("max relative error {worst:.3e} (limit 1e-10)")))
}

fn pos_neg_log_ratios(task: &GaussianTask, batch: &PairBatch) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = |x: &ndarray::Array2<f64>, y: &ndarray::Array2<f64>| -> Result<Vec<f64>> {
        x.rows()
            .into_iter()
            .zip(y.rows())
            .map(|(a, b)| analytic_log_ratio(task, a.as_slice().expect("row"), b.as_slice().expect("row")))
            .collect()
    };
    Ok((rows(&batch.joint_x, &batch.joint_y)?, rows(&batch.prod_x, &batch.prod_y)?))
}

fn chi_squared_recovery() -> Outcome {
    let params = RelativeParams::pearson_chi_squared();
    let n = 1_000_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, rho) in [0.3, 0.5, 0.8].into_iter().enumerate() {
        let task = GaussianTask::new(1, rho, false)?;
        let batch = sample_pre_cubic(&task, n, n, &mut Rng::derive(3, &[k as u64]))?;
        let (pos_lr, neg_lr) = pos_neg_log_ratios(&task, &batch)?;
        let pos: Vec<f64> = pos_lr.iter().map(|l| optimal_critic(l.exp(), &params)).collect::<Result<_>>()?;
        let neg: Vec<f64> = neg_lr.iter().map(|l| optimal_critic(l.exp(), &params)).collect::<Result<_>>()?;
        let j = rpc_value(&ScoreBatch { pos: pos.clone(), neg: neg.clone() }, &params)?;
        let estimate = 2.0 * j - 1.0;
        // Var(2J) = 4 Var(f⁺)/n + Var(f⁻²)/m
        let sq: Vec<f64> = neg.iter().map(|f| f * f).collect();
        let se = (4.0 * variance(&pos) / n as f64 + variance(&sq) / n as f64).sqrt();
        let truth = chi2_oracle_1d(rho)?;
        let z = (estimate - truth) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!("rho={rho}: {estimate:.5} vs {truth:.5} (z={z:+.2})"));
    }
    Ok((ok, parts.join("; ")))
}

fn mixture_identity() -> Outcome {
    let task = GaussianTask::new(1, 0.8, false)?;
    let mut rng = Rng::seed_from_u64(4);
    let batch = sample_pre_cubic(&task, 1, 100_000, &mut rng)?;
    let (_, lr) = pos_neg_log_ratios(&task, &batch)?;
    let ratios: Vec<f64> = lr.iter().map(|l| l.exp()).collect();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let p = RelativeParams::new(
            rng.uniform_range(0.0, 2.0),
            rng.uniform_range(0.1, 2.0),
            rng.uniform_range(0.1, 2.0),
        )?;
        let scores = ratios.iter().map(|&r| optimal_critic(r, &p)).collect::<Result<Vec<_>>>()?;
        let b = ImportanceBatch::new(scores, ratios.clone())?;
        let diff = (rpc_value_weighted(&b, &p)? - mixture_form_value_weighted(&b, &p)?).abs();
        worst = worst.max(diff);
    }
    Ok((worst < 1e-12, format!("max |difference| {worst:.3e} over 10 triples (limit 1e-12)")))
}

fn probe_triples() -> Vec<RelativeParams> {
    [(1.0, 0.25, 1.0), (1.0, 0.001, 1.0), (0.5, 1.0, 2.0), (0.0, 0.5, 1.0), (2.0, 0.1, 0.5)]
        .iter()
        .map(|&(a, b, g)| RelativeParams::new(a, b, g).expect("valid triple"))
        .collect()
}

fn upper_bound() -> Outcome {
    let mut ok = true;
    let mut worst_margin = f64::INFINITY;
    let tasks = [GaussianTask::new(1, 0.8, false)?, GaussianTask::with_mi(20, 2.0, false)?];
    let mut count = 0;
    for (t, task) in tasks.iter().enumerate() {
        let batch = sample_pre_cubic(task, 100_000, 100_000, &mut Rng::derive(5, &[t as u64]))?;
        let (pos_lr, neg_lr) = pos_neg_log_ratios(task, &batch)?;
        for p in probe_triples().iter().chain(&parameter_grid()) {
            let pos = pos_lr.iter().map(|l| optimal_critic(l.exp(), p)).collect::<Result<Vec<_>>>()?;
            let neg = neg_lr.iter().map(|l| optimal_critic(l.exp(), p)).collect::<Result<Vec<_>>>()?;
            let pos_terms: Vec<f64> = pos.iter().map(|f| f - 0.5 * p.beta * f * f).collect();
            let neg_terms: Vec<f64> = neg.iter().map(|f| p.alpha * f + 0.5 * p.gamma * f * f).collect();
            let se = (variance(&pos_terms) / pos.len() as f64 + variance(&neg_terms) / neg.len() as f64).sqrt();
            let j = rpc_value(&ScoreBatch { pos, neg }, p)?;
            let upper = bounds(p, 1, 1)?.j_upper;
            ok &= j >= -3.0 * se && j <= upper + 3.0 * se;
            worst_margin = worst_margin.min((upper - j) / upper);
            count += 1;
        }
    }
    Ok((ok, format!("{count} (task, triple) pairs inside [-3 SE, bound + 3 SE]; tightest relative slack {worst_margin:.3}")))
}

fn variance_bound() -> Outcome {
    let task = GaussianTask::with_mi(20, 2.0, false)?;
    let mut ok = true;
    let mut worst_ratio = 0.0f64;
    let mut trend_ok = 0;
    let triples = probe_triples();
    for (k, p) in triples.iter().enumerate() {
        let mut v = Vec::new();
        for n in [16, 64, 256] {
            let probe = variance_probe(p, n, n, 1_000, &task, crate::rng::derive_seed(6, &[k as u64, n as u64]))?;
            ok &= probe.empirical_var <= probe.bound;
            worst_ratio = worst_ratio.max(probe.empirical_var / probe.bound);
            v.push(probe.empirical_var);
        }
        if v[2] <= v[1] {
            trend_ok += 1;
        }
    }
    let trend = trend_ok == triples.len();
    Ok((
        ok && trend,
        format!(
            "max empirical/bound {worst_ratio:.2e}; variance at n=256 <= n=64 for {trend_ok}/{} triples",
            triples.len()
        ),
    ))
}

/// Largest relative error between backpropagated and central-difference
/// gradients over every parameter of a small random critic.
pub fn max_gradient_error(kind: ObjectiveKind, seed: u64) -> Result<f64> {
    let task = GaussianTask::new(2, 0.7, false)?;
    let batch = crate::tasks::sample(&task, 6, 7, &mut Rng::derive(seed, &[1]))?;
    let params = RelativeParams::new(0.5, 0.3, 1.5)?;
    let cfg = CriticConfig {
        hidden_dim: 6,
        ..CriticConfig::new(4)
    };
    let mut critic = CriticState::new(cfg, &mut Rng::derive(seed, &[0]))?;
    let analytic = critic.backward(&batch, kind, &params)?.grads.to_vec();
    let theta = critic.params.to_vec();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, &g) in analytic.iter().enumerate() {
        let mut eval = |delta: f64| -> Result<f64> {
            let mut t = theta.clone();
            t[i] += delta;
            critic.params.set_from_slice(&t)?;
            Ok(critic.backward(&batch, kind, &params)?.value)
        };
        let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
        worst = worst.max((fd - g).abs() / g.abs().max(fd.abs()).max(1e-6));
    }
    Ok(worst)
}

fn gradient_check() -> Outcome {
    let kinds = [
        ObjectiveKind::Rpc,
        ObjectiveKind::Dv,
        ObjectiveKind::Nwj,
        ObjectiveKind::Js,
        ObjectiveKind::Cpc,
        ObjectiveKind::Smile {
            clip: ObjectiveKind::DEFAULT_SMILE_CLIP,
        },
    ];
    let mut worst = 0.0f64;
    for kind in kinds {
        for seed in 0..3 {
            worst = worst.max(max_gradient_error(kind, seed)?);
        }
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e} over 6 objectives x 3 critics (limit 1e-4)")))
}

/// The staircase up to MI 6 with the default RPC settings. Its first 12 000
/// steps are identical to the full five-level protocol.
pub fn staircase_config(objective: ObjectiveKind, cubic: bool, seed: u64) -> BenchmarkConfig {
    BenchmarkConfig {
        objective,
        cubic,
        master_seed: seed,
        params: RelativeParams::new(1.0, 1e-3, 1.0).expect("valid"),
        ..Default::default()
    }
    .with_levels(vec![2.0, 4.0, 6.0], 4_000)
}

fn staircase_accuracy() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for cubic in [false, true] {
        let trace = run_benchmark(&staircase_config(ObjectiveKind::Rpc, cubic, 0))?;
        let rel: Vec<String> = trace
            .summaries
            .iter()
            .map(|l| {
                let r = l.bias / l.true_mi;
                ok &= r.abs() <= 0.25;
                format!("{:+.1}%", 100.0 * r)
            })
            .collect();
        parts.push(format!("{}: {}", if cubic { "cubic" } else { "gaussian" }, rel.join(" ")));
    }
    Ok((ok, format!("relative bias at MI 2/4/6 (band ±25%): {}", parts.join("; "))))
}

fn cpc_saturation() -> Outcome {
    let cap = 64f64.ln() + 1e-6;
    let mut ok = true;
    let mut parts = Vec::new();
    for cubic in [false, true] {
        let trace = run_benchmark(&staircase_config(ObjectiveKind::Cpc, cubic, 0))?;
        let max = trace.rows.iter().map(|r| r.mi_estimate).fold(f64::NEG_INFINITY, f64::max);
        let bad = trace.rows.iter().filter(|r| !(r.mi_estimate <= cap)).count();
        ok &= bad == 0;
        parts.push(format!(
            "{}: max {max:.4}, {bad} readouts above cap",
            if cubic { "cubic" } else { "gaussian" }
        ));
    }
    Ok((ok, format!("log 64 = {:.4}; {}", 64f64.ln(), parts.join("; "))))
}

fn final_variance(trace: &EstimateTrace) -> f64 {
    let last = trace.summaries.last().expect("at least one level");
    if last.finite < 2 {
        f64::INFINITY
    } else {
        last.variance
    }
}

fn stability_ordering() -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let run = |kind| {
            run_benchmark(&BenchmarkConfig {
                objective: kind,
                master_seed: seed,
                params: RelativeParams::new(1.0, 1e-3, 1.0).expect("valid"),
                ..Default::default()
            })
        };
        let rpc = run(ObjectiveKind::Rpc)?;
        let dv = run(ObjectiveKind::Dv)?;
        let nwj = run(ObjectiveKind::Nwj)?;
        let counts_ok = rpc.non_finite_steps <= dv.non_finite_steps && rpc.non_finite_steps <= nwj.non_finite_steps;
        let (vr, vn) = (final_variance(&rpc), final_variance(&nwj));
        let var_ok = vr <= vn;
        if counts_ok && var_ok {
            wins += 1;
        }
        parts.push(format!(
            "seed {seed}: non-finite rpc/dv/nwj {}/{}/{}, MI-10 variance rpc {vr:.3} vs nwj {vn:.3}",
            rpc.non_finite_steps, dv.non_finite_steps, nwj.non_finite_steps
        ));
    }
    Ok((wins >= 2, format!("{wins}/3 seeds satisfy both orderings; {}", parts.join("; "))))
}

fn bounded_ratio() -> Outcome {
    let grid: Vec<f64> = (0..=1200).map(|i| -10.0 + i as f64 * 0.01).collect();
    let sup = |beta: f64| -> Result<f64> {
        Ok(relative_ratio_curve(beta, &grid)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    };
    let (s50, s95, s0) = (sup(0.5)?, sup(0.95)?, sup(0.0)?);
    let ok = s50 <= 2.0 && s95 <= 1.0 / 0.95 && s0 > 10.0;
    Ok((
        ok,
        format!("sup r_0.5 = {s50:.4} (<= 2), sup r_0.95 = {s95:.4} (<= {:.4}), sup r_0 = {s0:.1} (> 10)", 1.0 / 0.95),
    ))
}

fn sweep_ordering() -> Outcome {
    let base = staircase_config(ObjectiveKind::Rpc, false, 0);
    let set = vec![0.0, 0.001, 1.0];
    let slice = SweepGrid {
        alpha_set: set.clone(),
        beta_set: vec![1.0],
        gamma_set: set,
    };
    let target = SweepGrid {
        alpha_set: vec![1.0],
        beta_set: vec![0.001],
        gamma_set: vec![1.0],
    };
    let level = 2;
    let abs_bias = |c: &crate::harness::SweepCell| {
        c.level(level)
            .map(|l| l.bias.abs())
            .filter(|b| b.is_finite())
            .unwrap_or(f64::INFINITY)
    };
    let t = run_sweep(&target, &base, None)?;
    let reference = abs_bias(&t.cells[0]);
    let others = run_sweep(&slice, &base, None)?;
    let best_other = others.cells.iter().map(abs_bias).fold(f64::INFINITY, f64::min);
    let ok = others.cells.iter().all(|c| reference < abs_bias(c));
    let invalid = others
        .cells
        .iter()
        .filter(|c| c.status == crate::harness::CellStatus::Invalid)
        .count();
    Ok((
        ok,
        format!(
            "|bias| at MI 6: (1, 0.001, 1) = {reference:.3}; best of {} beta=1 cells = {best_other:.3} ({invalid} invalid)",
            others.cells.len()
        ),
    ))
}

/// Mean of the readout over a trace's finite rows; handy for quick reports.
pub fn finite_mean(trace: &EstimateTrace) -> f64 {
    let v: Vec<f64> = trace.rows.iter().map(|r| r.mi_estimate).filter(|v| v.is_finite()).collect();
    mean(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_criteria_pass() {
        for id in [1, 2, 4, 7, 11] {
            let r = run(id);
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn unknown_criterion_fails() {
        assert!(!run(99).passed);
    }

    #[test]
    fn grids_have_the_stated_size() {
        assert_eq!(parameter_grid().len(), 27);
        let g = ratio_grid();
        assert_eq!(g.len(), 10_000);
        assert!((g[0] - 1e-5).abs() < 1e-18);
        assert!((g[9_999] - 1e5).abs() < 1e-6);
    }
}
