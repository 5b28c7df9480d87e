//! Relative predictive coding and contrastive mutual-information estimation.
//!
//! The crate provides the relative objective and its baselines
//! ([`objectives`]), a trainable score network ([`critic`]), Gaussian
//! benchmark tasks with exact ground truth ([`tasks`]), self-supervised
//! batch losses ([`ssl`]), and the staircase benchmark runner ([`harness`]).

// Checks like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod critic;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod objectives;
pub mod quad;
pub mod rng;
pub mod ssl;
pub mod tasks;

pub use critic::{Checkpoint, CriticConfig, CriticState, OptimizerConfig, Parameters};
pub use error::{Error, Result};
pub use harness::{BenchmarkConfig, EstimateTrace, SweepGrid, SweepReport};
pub use objectives::{
    baseline_value, bounds, cpc_value, invert_critic, mi_from_ratios, optimal_critic, rpc_value, BoundReport,
    ObjectiveKind, RelativeParams, ScoreBatch,
};
pub use rng::Rng;
pub use tasks::{GaussianTask, PairBatch};

/// Formats like C's `%.9g`: nine significant digits, trailing zeros dropped,
/// scientific notation for exponents below −4 or at least 9.
pub fn format_sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
