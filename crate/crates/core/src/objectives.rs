//! Contrastive objectives evaluated on critic scores.
//!
//! Every function here is a pure function of its inputs. Scores on joint
//! (positive) samples and on product-of-marginals (negative) samples are
//! supplied by the caller; no supremum over critics is taken.
//!
//! | objective | value on scores |
//! |-----------|-----------------|
//! | RPC   | `mean(f⁺) − α·mean(f⁻) − β/2·mean(f⁺²) − γ/2·mean(f⁻²)` |
//! | DV    | `mean(f⁺) − log mean(exp f⁻)` |
//! | NWJ   | `mean(f⁺) − mean(exp(f⁻ − 1))` |
//! | JS    | `mean(−softplus(−f⁺)) − mean(softplus(f⁻))` |
//! | SMILE | `mean(f⁺) − log mean(clamp(exp f⁻, e^{−c}, e^{c}))` |
//! | CPC   | `mean_i log(exp S_ii / (1/N · Σ_j exp S_ij))` |
//!
//! The RPC optimum is the relative density ratio
//! `r_{α,β,γ} = (r − α) / (β r + γ)`, which lies in `[−α/γ, 1/β]`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::numeric::{self, log_mean_exp, log_sum_exp, sigmoid, softplus, DoubleDouble};

/// Relative parameters `(α, β, γ)` plus the score temperature `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.0
}

impl Default for RelativeParams {
    /// `α = 1, β = 10⁻³, γ = 1, τ = 1`: the benchmark's default setting.
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1e-3,
            gamma: 1.0,
            tau: 1.0,
        }
    }
}

impl RelativeParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            gamma,
            tau: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = tau;
        self.validate()?;
        Ok(self)
    }

    /// `α = β = 0, γ = 1`: the setting under which `2·J − 1` is the Pearson χ² divergence.
    pub fn pearson_chi_squared() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 1.0,
            tau: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_coefficients()?;
        if self.beta == 0.0 && self.gamma == 0.0 {
            return Err(Error::InvalidParams(
                "beta and gamma must not both be zero".into(),
            ));
        }
        Ok(())
    }

    /// Finite non-negative coefficients and a positive temperature. Enough for
    /// plain loss evaluation, which never divides by a coefficient.
    pub fn validate_coefficients(&self) -> Result<()> {
        let Self {
            alpha,
            beta,
            gamma,
            tau,
        } = *self;
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "tau must be positive, got {tau}"
            )));
        }
        Ok(())
    }

    /// False when α = γ = 0: the product samples then drop out of the
    /// objective, the optimum is the constant 1/β, and no ratio can be read back.
    pub fn ratio_identifiable(&self) -> bool {
        self.alpha > 0.0 || self.gamma > 0.0
    }

    fn require_identifiable(&self, op: &str) -> Result<()> {
        if self.ratio_identifiable() {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "{op} needs alpha > 0 or gamma > 0 to identify the density ratio"
            )))
        }
    }

    fn require_positive_beta(&self, op: &str) -> Result<()> {
        if self.beta > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{op} requires beta > 0")))
        }
    }

    /// Lower end of the optimal critic's range, `−α/γ` (−∞ when γ = 0 and α > 0).
    pub fn critic_lo(&self) -> f64 {
        if self.gamma > 0.0 {
            -self.alpha / self.gamma
        } else if self.alpha > 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }

    /// Upper end of the optimal critic's range, `1/β` (+∞ when β = 0).
    pub fn critic_hi(&self) -> f64 {
        if self.beta > 0.0 {
            1.0 / self.beta
        } else {
            f64::INFINITY
        }
    }
}

/// Critic scores on `n` joint samples (`pos`) and `m` product samples (`neg`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBatch {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl ScoreBatch {
    pub fn new(pos: Vec<f64>, neg: Vec<f64>) -> Result<Self> {
        let b = Self { pos, neg };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pos.is_empty() {
            return Err(Error::Empty("positive scores"));
        }
        if self.neg.is_empty() {
            return Err(Error::Empty("negative scores"));
        }
        check_finite("positive score", &self.pos)?;
        check_finite("negative score", &self.neg)
    }

    pub fn n(&self) -> usize {
        self.pos.len()
    }

    pub fn m(&self) -> usize {
        self.neg.len()
    }
}

/// Which contrastive objective a critic is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectiveKind {
    Rpc,
    Dv,
    Nwj,
    Js,
    Cpc,
    Smile { clip: f64 },
}

impl ObjectiveKind {
    pub const DEFAULT_SMILE_CLIP: f64 = 5.0;

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::Rpc => "rpc",
            ObjectiveKind::Dv => "dv",
            ObjectiveKind::Nwj => "nwj",
            ObjectiveKind::Js => "js",
            ObjectiveKind::Cpc => "cpc",
            ObjectiveKind::Smile { .. } => "smile",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "rpc" => ObjectiveKind::Rpc,
            "dv" => ObjectiveKind::Dv,
            "nwj" => ObjectiveKind::Nwj,
            "js" => ObjectiveKind::Js,
            "cpc" => ObjectiveKind::Cpc,
            "smile" => ObjectiveKind::Smile {
                clip: Self::DEFAULT_SMILE_CLIP,
            },
            other => return Err(Error::Config(format!("unknown objective '{other}'"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ObjectiveKind::Smile { clip } if !(clip.is_finite() && clip >= 0.0) => Err(
                Error::Config(format!("smile clip must be finite and >= 0, got {clip}")),
            ),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Empirical RPC objective on a score batch.
pub fn rpc_value(batch: &ScoreBatch, params: &RelativeParams) -> Result<f64> {
    batch.validate()?;
    params.validate()?;
    let n = batch.n() as f64;
    let m = batch.m() as f64;
    let pos: f64 = numeric::sum(batch.pos.iter().map(|&f| f - 0.5 * params.beta * f * f)) / n;
    let neg: f64 =
        numeric::sum(batch.neg.iter().map(|&f| params.alpha * f + 0.5 * params.gamma * f * f)) / m;
    Ok(pos - neg)
}

/// DV, NWJ, JS and SMILE values. CPC needs the full score matrix; see [`cpc_value`].
pub fn baseline_value(kind: ObjectiveKind, batch: &ScoreBatch) -> Result<f64> {
    batch.validate()?;
    kind.validate()?;
    let v = match kind {
        ObjectiveKind::Dv => numeric::mean(&batch.pos) - log_mean_exp(&batch.neg),
        ObjectiveKind::Nwj => {
            let shifted: Vec<f64> = batch.neg.iter().map(|f| f - 1.0).collect();
            numeric::mean(&batch.pos) - log_mean_exp(&shifted).exp()
        }
        ObjectiveKind::Js => {
            let p = numeric::sum(batch.pos.iter().map(|&f| -softplus(-f))) / batch.n() as f64;
            let q = numeric::sum(batch.neg.iter().map(|&f| softplus(f))) / batch.m() as f64;
            p - q
        }
        ObjectiveKind::Smile { clip } => {
            // log clamp(e^f, e^-c, e^c) = clamp(f, -c, c)
            let clipped: Vec<f64> = batch.neg.iter().map(|f| f.clamp(-clip, clip)).collect();
            numeric::mean(&batch.pos) - log_mean_exp(&clipped)
        }
        ObjectiveKind::Rpc => return Err(Error::UnsupportedObjective("rpc (use rpc_value)")),
        ObjectiveKind::Cpc => return Err(Error::UnsupportedObjective("cpc (use cpc_value)")),
    };
    Ok(v)
}

/// InfoNCE / CPC value of an `N × N` score matrix whose diagonal holds the positives.
///
/// Each row contributes `S_ii − log((1/N) Σ_j exp S_ij)`, so the value never exceeds `log N`.
pub fn cpc_value(scores: ArrayView2<'_, f64>) -> Result<f64> {
    let n = check_cpc_matrix(scores)?;
    let log_n = (n as f64).ln();
    let terms = scores
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row.to_vec();
            row[i] - log_sum_exp(&row) + log_n
        });
    Ok(numeric::sum(terms) / n as f64)
}

fn check_cpc_matrix(scores: ArrayView2<'_, f64>) -> Result<usize> {
    let (rows, cols) = scores.dim();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: cols,
        });
    }
    if rows < 2 {
        return Err(Error::Domain(format!(
            "cpc needs at least 2 candidates per anchor, got {rows}"
        )));
    }
    if let Some((idx, v)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "cpc score",
            index: idx,
            value: *v,
        });
    }
    Ok(rows)
}

/// Objective value together with its gradient with respect to every score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// The quantity a critic maximizes for `kind`. Equal to the estimator value
/// except for SMILE, whose clipped value has no useful gradient in the
/// positives; its critic is trained on the JS surrogate instead.
pub fn training_value(kind: ObjectiveKind, batch: &ScoreBatch, params: &RelativeParams) -> Result<f64> {
    match kind {
        ObjectiveKind::Rpc => rpc_value(batch, params),
        ObjectiveKind::Smile { .. } => {
            kind.validate()?;
            baseline_value(ObjectiveKind::Js, batch)
        }
        k => baseline_value(k, batch),
    }
}

/// [`training_value`] and its exact gradient in the scores (everything except CPC).
pub fn objective_with_grad(
    kind: ObjectiveKind,
    batch: &ScoreBatch,
    params: &RelativeParams,
) -> Result<ScoreGradient> {
    batch.validate()?;
    let n = batch.n() as f64;
    let m = batch.m() as f64;
    let (value, d_pos, d_neg) = match kind {
        ObjectiveKind::Rpc => {
            let v = rpc_value(batch, params)?;
            let dp = batch.pos.iter().map(|f| (1.0 - params.beta * f) / n).collect();
            let dn = batch
                .neg
                .iter()
                .map(|f| -(params.alpha + params.gamma * f) / m)
                .collect();
            (v, dp, dn)
        }
        ObjectiveKind::Dv => {
            let lse = log_sum_exp(&batch.neg);
            let v = numeric::mean(&batch.pos) - (lse - m.ln());
            let dn = batch.neg.iter().map(|f| -(f - lse).exp()).collect();
            (v, vec![1.0 / n; batch.n()], dn)
        }
        ObjectiveKind::Nwj => {
            let v = baseline_value(kind, batch)?;
            let dn = batch.neg.iter().map(|f| -(f - 1.0).exp() / m).collect();
            (v, vec![1.0 / n; batch.n()], dn)
        }
        ObjectiveKind::Js | ObjectiveKind::Smile { .. } => {
            let v = baseline_value(ObjectiveKind::Js, batch)?;
            let dp = batch.pos.iter().map(|&f| sigmoid(-f) / n).collect();
            let dn = batch.neg.iter().map(|&f| -sigmoid(f) / m).collect();
            (v, dp, dn)
        }
        ObjectiveKind::Cpc => {
            return Err(Error::UnsupportedObjective(
                "cpc (use cpc_with_grad on a score matrix)",
            ))
        }
    };
    Ok(ScoreGradient {
        value,
        d_pos,
        d_neg,
    })
}

/// CPC value and its gradient with respect to every entry of the score matrix.
pub fn cpc_with_grad(scores: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    let n = check_cpc_matrix(scores)?;
    let log_n = (n as f64).ln();
    let mut grad = Array2::zeros((n, n));
    let mut total = numeric::KahanSum::new();
    for (i, row) in scores.rows().into_iter().enumerate() {
        let row = row.to_vec();
        let lse = log_sum_exp(&row);
        total.add(row[i] - lse + log_n);
        for (j, s) in row.iter().enumerate() {
            let softmax = (s - lse).exp();
            grad[[i, j]] = ((i == j) as u8 as f64 - softmax) / n as f64;
        }
    }
    Ok((total.value() / n as f64, grad))
}

/// Closed-form optimal RPC critic `(r − α)/(β r + γ)` for a density ratio `r ≥ 0`.
///
/// Evaluated in double-double arithmetic so that the result is correctly rounded;
/// the inversion in [`invert_critic`] is only as accurate as this rounding allows.
pub fn optimal_critic(r: f64, params: &RelativeParams) -> Result<f64> {
    params.validate()?;
    params.require_identifiable("optimal_critic")?;
    if r.is_nan() || r < 0.0 {
        return Err(Error::Domain(format!(
            "density ratio must be non-negative, got {r}"
        )));
    }
    if r.is_infinite() {
        return Ok(params.critic_hi());
    }
    let num = DoubleDouble::from_sum(r, -params.alpha);
    let den = DoubleDouble::from_product(params.beta, r).add_f64(params.gamma);
    if den.hi == 0.0 {
        // gamma = 0 and r = 0: the ratio is -alpha/0
        return Ok(params.critic_lo());
    }
    Ok(num.div_to_f64(den))
}

/// Result of mapping a critic value back to a density ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub ratio: f64,
    /// The critic value was below `−α/γ` and the ratio was clamped to zero.
    pub clamped: bool,
}

/// Inverts the optimal-critic map: `r = (α + γ f) / (1 − β f)`.
///
/// This equals `(γ/β + α)/(1 − β f) − γ/β` but never divides by β, so it is
/// also defined for β = 0. Values at or above the pole `1/β` are rejected.
/// Values below `−α/γ` are clamped to ratio 0 and flagged.
pub fn invert_critic(f: f64, params: &RelativeParams) -> Result<Inversion> {
    params.validate()?;
    params.require_identifiable("invert_critic")?;
    if !f.is_finite() {
        return Err(Error::NonFinite {
            what: "critic value",
            index: 0,
            value: f,
        });
    }
    if params.beta > 0.0 && f >= params.critic_hi() {
        return Err(Error::Domain(format!(
            "critic value {f} is at or beyond the pole 1/beta = {}",
            params.critic_hi()
        )));
    }
    if f < params.critic_lo() {
        return Ok(Inversion {
            ratio: 0.0,
            clamped: true,
        });
    }
    let num = params.gamma.mul_add(f, params.alpha);
    let den = (-params.beta).mul_add(f, 1.0);
    Ok(Inversion {
        ratio: (num / den).max(0.0),
        clamped: false,
    })
}

/// Mutual-information estimate `(1/n) Σ log r̂`.
pub fn mi_from_ratios(log_ratios: &[f64]) -> Result<f64> {
    if log_ratios.is_empty() {
        return Err(Error::Empty("log ratios"));
    }
    check_finite("log ratio", log_ratios)?;
    Ok(numeric::mean(log_ratios))
}

/// `(β+γ)/2 · E_{P'}[r²_{α,β,γ}]` from relative ratios observed on mixture samples.
pub fn mixture_form_value(relative_ratios: &[f64], params: &RelativeParams) -> Result<f64> {
    params.validate()?;
    let w = params.beta + params.gamma;
    if w <= 0.0 {
        return Err(Error::InvalidParams("beta + gamma must be positive".into()));
    }
    if relative_ratios.is_empty() {
        return Err(Error::Empty("relative ratios"));
    }
    check_finite("relative ratio", relative_ratios)?;
    let second = numeric::sum(relative_ratios.iter().map(|r| r * r)) / relative_ratios.len() as f64;
    Ok(0.5 * w * second)
}

/// Mixture form with the two components sampled separately:
/// `β/2 · E_{P_XY}[r²_{α,β,γ}] + γ/2 · E_{P_X P_Y}[r²_{α,β,γ}]`.
pub fn mixture_form_value_split(
    joint: &[f64],
    product: &[f64],
    params: &RelativeParams,
) -> Result<f64> {
    params.validate()?;
    let b = ScoreBatch::new(joint.to_vec(), product.to_vec())?;
    let pos = numeric::sum(b.pos.iter().map(|r| r * r)) / b.n() as f64;
    let neg = numeric::sum(b.neg.iter().map(|r| r * r)) / b.m() as f64;
    Ok(0.5 * params.beta * pos + 0.5 * params.gamma * neg)
}

/// Scores on a single sample set drawn from `P_X P_Y`, each carrying its true
/// density ratio so that joint expectations can be taken by importance weighting
/// (`E_{P_XY}[g] = E_{P_X P_Y}[r g]`).
///
/// On such a shared sample set the RPC objective at the optimal critic and the
/// mixture form agree term by term, not just in expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceBatch {
    pub scores: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl ImportanceBatch {
    pub fn new(scores: Vec<f64>, ratios: Vec<f64>) -> Result<Self> {
        if scores.len() != ratios.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: ratios.len(),
            });
        }
        if scores.is_empty() {
            return Err(Error::Empty("importance batch"));
        }
        check_finite("score", &scores)?;
        check_finite("density ratio", &ratios)?;
        if let Some(i) = ratios.iter().position(|r| *r < 0.0) {
            return Err(Error::Domain(format!(
                "density ratio at {i} is negative: {}",
                ratios[i]
            )));
        }
        Ok(Self { scores, ratios })
    }
}

/// RPC objective with the joint expectation importance-weighted from product samples.
pub fn rpc_value_weighted(batch: &ImportanceBatch, params: &RelativeParams) -> Result<f64> {
    params.validate()?;
    let RelativeParams {
        alpha, beta, gamma, ..
    } = *params;
    let terms = batch.scores.iter().zip(&batch.ratios).map(|(&f, &r)| {
        r * f - alpha * f - 0.5 * beta * r * f * f - 0.5 * gamma * f * f
    });
    Ok(numeric::sum(terms) / batch.scores.len() as f64)
}

/// Mixture form `β/2 · E[r f²] + γ/2 · E[f²]` over the same importance-weighted samples.
pub fn mixture_form_value_weighted(
    batch: &ImportanceBatch,
    params: &RelativeParams,
) -> Result<f64> {
    params.validate()?;
    let terms = batch
        .scores
        .iter()
        .zip(&batch.ratios)
        .map(|(&f, &r)| 0.5 * (params.beta * r + params.gamma) * f * f);
    Ok(numeric::sum(terms) / batch.scores.len() as f64)
}

/// Analytic bounds for the RPC objective and its empirical estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `1/(2β) + α²/(2γ)`
    pub j_upper: f64,
    /// `−α/γ`
    pub critic_lo: f64,
    /// `1/β`
    pub critic_hi: f64,
    /// Upper bound on `Var[Ĵ]` for `n` joint and `m` product samples.
    pub var_bound: f64,
}

pub fn bounds(params: &RelativeParams, n: usize, m: usize) -> Result<BoundReport> {
    params.validate()?;
    params.require_positive_beta("bounds")?;
    if params.gamma <= 0.0 {
        return Err(Error::InvalidParams("bounds require gamma > 0".into()));
    }
    if n == 0 || m == 0 {
        return Err(Error::Empty("sample counts"));
    }
    let RelativeParams {
        alpha: a,
        beta: b,
        gamma: g,
        ..
    } = *params;
    // Ranges of f - β/2 f² (joint) and α f + γ/2 f² (product) over f ∈ [−α/γ, 1/β].
    let joint_spread = ((2.0 * a * g + b * a * a) / (2.0 * g * g))
        .powi(2)
        .max((1.0 / (2.0 * b)).powi(2));
    let product_spread = (a * a / (2.0 * g))
        .powi(2)
        .max(((2.0 * a * b + g) / (2.0 * b * b)).powi(2));
    Ok(BoundReport {
        j_upper: 1.0 / (2.0 * b) + a * a / (2.0 * g),
        critic_lo: -a / g,
        critic_hi: 1.0 / b,
        var_bound: joint_spread / n as f64 + product_spread / m as f64,
    })
}
