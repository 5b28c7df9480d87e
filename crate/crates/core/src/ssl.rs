//! In-batch self-supervised losses on precomputed score matrices.
//!
//! A vision batch holds `2N` views, where view `i` has exactly one positive
//! partner `pairing[i]`. Scores are similarities already divided by the
//! temperature. The relative loss for anchor `i` and partner `j` is
//!
//! ```text
//! ℓ_ij = −( s_ij − α/(2(N−1)) Σ_{k≠i} s_ik − β/2 s_ij² − γ/(2·2(N−1)) Σ_{k≠i} s_ik² )
//! ```
//!
//! The sums run over all `2N − 1` columns other than the anchor, so they
//! include the positive, while the normalizer counts `2(N − 1)` terms.
//! [`NegativeSet::ExcludePositive`] drops the positive to make the two agree.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{check_finite, Error, Result};
use crate::numeric::log_sum_exp;
use crate::objectives::RelativeParams;

/// Scores seen by one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorScores {
    pub pos: f64,
    pub neg: Vec<f64>,
    /// Divisor for the negative sums.
    pub neg_norm: f64,
}

impl AnchorScores {
    /// Negatives averaged over their own count.
    pub fn new(pos: f64, neg: Vec<f64>) -> Result<Self> {
        let neg_norm = neg.len() as f64;
        let a = Self { pos, neg, neg_norm };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.neg.is_empty() {
            return Err(Error::Empty("anchor negatives"));
        }
        if !(self.neg_norm >= 1.0 && self.neg_norm.is_finite()) {
            return Err(Error::InvalidParams(format!("neg_norm must be >= 1, got {}", self.neg_norm)));
        }
        check_finite("positive score", &[self.pos])?;
        check_finite("negative score", &self.neg)
    }
}

/// Which columns enter the negative sums of the vision loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeSet {
    /// Every `k ≠ i`, positive included, divided by `2(N − 1)`.
    #[default]
    Verbatim,
    /// Every `k ∉ {i, j}`, divided by `2(N − 1)`.
    ExcludePositive,
}

/// `−(pos − α·Σneg/norm − β/2·pos² − γ/2·Σneg²/norm)`.
pub fn rpc_anchor_loss(a: &AnchorScores, params: &RelativeParams) -> Result<f64> {
    a.validate()?;
    params.validate_coefficients()?;
    let s1: f64 = a.neg.iter().sum();
    let s2: f64 = a.neg.iter().map(|v| v * v).sum();
    let value = a.pos - params.alpha * s1 / a.neg_norm - 0.5 * params.beta * a.pos * a.pos
        - 0.5 * params.gamma * s2 / a.neg_norm;
    Ok(-value)
}

/// Partial derivatives of [`rpc_anchor_loss`] with respect to the positive and each negative.
pub fn rpc_anchor_loss_grad(a: &AnchorScores, params: &RelativeParams) -> Result<(f64, Vec<f64>)> {
    a.validate()?;
    params.validate_coefficients()?;
    let d_pos = -(1.0 - params.beta * a.pos);
    let d_neg = a
        .neg
        .iter()
        .map(|&s| (params.alpha + params.gamma * s) / a.neg_norm)
        .collect();
    Ok((d_pos, d_neg))
}

/// Checks that `pairing` is a fixed-point-free involution on `0..2N` with `N ≥ 2`.
pub fn validate_pairing(pairing: &[usize], views: usize) -> Result<()> {
    if views < 4 || views % 2 != 0 {
        return Err(Error::InvalidPairing(format!(
            "need an even number of views with N >= 2, got {views}"
        )));
    }
    if pairing.len() != views {
        return Err(Error::InvalidPairing(format!(
            "pairing has {} entries for {views} views",
            pairing.len()
        )));
    }
    for (i, &j) in pairing.iter().enumerate() {
        if j >= views {
            return Err(Error::InvalidPairing(format!("view {i} paired with out-of-range {j}")));
        }
        if j == i {
            return Err(Error::InvalidPairing(format!("view {i} paired with itself")));
        }
        if pairing[j] != i {
            return Err(Error::InvalidPairing(format!(
                "pairing is not symmetric: {i}→{j} but {j}→{}",
                pairing[j]
            )));
        }
    }
    Ok(())
}

/// Pairing `i ↔ i + N` for two stacked augmentations of `N` items.
pub fn stacked_pairing(n: usize) -> Vec<usize> {
    (0..2 * n).map(|i| if i < n { i + n } else { i - n }).collect()
}

fn check_scores(scores: ArrayView2<'_, f64>, pairing: &[usize]) -> Result<usize> {
    let (r, c) = scores.dim();
    if r != c {
        return Err(Error::DimensionMismatch { expected: r, got: c });
    }
    validate_pairing(pairing, r)?;
    if let Some(idx) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "score",
            index: idx,
            value: scores.iter().nth(idx).copied().unwrap_or(f64::NAN),
        });
    }
    Ok(r)
}

/// Anchor `i`'s scores under the vision rule.
pub fn vision_anchor(
    scores: ArrayView2<'_, f64>,
    pairing: &[usize],
    i: usize,
    negatives: NegativeSet,
) -> Result<AnchorScores> {
    let views = check_scores(scores, pairing)?;
    Ok(anchor_unchecked(scores, pairing, i, views, negatives))
}

fn anchor_unchecked(
    scores: ArrayView2<'_, f64>,
    pairing: &[usize],
    i: usize,
    views: usize,
    negatives: NegativeSet,
) -> AnchorScores {
    let j = pairing[i];
    let neg = (0..views)
        .filter(|&k| k != i && (negatives == NegativeSet::Verbatim || k != j))
        .map(|k| scores[[i, k]])
        .collect();
    AnchorScores {
        pos: scores[[i, j]],
        neg,
        neg_norm: (views - 2) as f64,
    }
}

/// Mean relative loss over all `2N` anchors, negatives per [`NegativeSet::Verbatim`].
pub fn rpc_vision_batch_loss(scores: ArrayView2<'_, f64>, pairing: &[usize], params: &RelativeParams) -> Result<f64> {
    rpc_vision_batch_loss_with(scores, pairing, params, NegativeSet::Verbatim)
}

pub fn rpc_vision_batch_loss_with(
    scores: ArrayView2<'_, f64>,
    pairing: &[usize],
    params: &RelativeParams,
    negatives: NegativeSet,
) -> Result<f64> {
    let views = check_scores(scores, pairing)?;
    params.validate_coefficients()?;
    let mut total = 0.0;
    for i in 0..views {
        total += rpc_anchor_loss(&anchor_unchecked(scores, pairing, i, views, negatives), params)?;
    }
    Ok(total / views as f64)
}

/// Mean in-batch cross-entropy of each positive against its row (anchor column excluded).
pub fn cpc_vision_batch_loss(scores: ArrayView2<'_, f64>, pairing: &[usize]) -> Result<f64> {
    let views = check_scores(scores, pairing)?;
    let mut total = 0.0;
    let mut row = Vec::with_capacity(views - 1);
    for i in 0..views {
        row.clear();
        row.extend((0..views).filter(|&k| k != i).map(|k| scores[[i, k]]));
        total += log_sum_exp(&row) - scores[[i, pairing[i]]];
    }
    Ok(total / views as f64)
}

/// `z_i · z_j / τ`, optionally on L2-normalized rows.
pub fn similarity_matrix(embeddings: ArrayView2<'_, f64>, tau: f64, cosine: bool) -> Result<Array2<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParams(format!("temperature must be positive, got {tau}")));
    }
    let mut z = embeddings.to_owned();
    if cosine {
        for mut row in z.axis_iter_mut(Axis(0)) {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 {
                return Err(Error::Domain("cannot normalize a zero embedding".into()));
            }
            row /= norm;
        }
    }
    Ok(z.dot(&z.t()) / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rp(a: f64, b: f64, g: f64) -> RelativeParams {
        RelativeParams::new(a, b, g).unwrap()
    }

    #[test]
    fn anchor_loss_examples() {
        let a = AnchorScores::new(1.0, vec![0.0, 0.0]).unwrap();
        assert_relative_eq!(rpc_anchor_loss(&a, &rp(1.0, 0.25, 1.0)).unwrap(), -0.875);
        let zero = AnchorScores::new(0.0, vec![0.0; 3]).unwrap();
        assert_eq!(rpc_anchor_loss(&zero, &rp(1.0, 0.5, 2.0)).unwrap(), 0.0);
        let b = AnchorScores::new(2.5, vec![1.0, -4.0]).unwrap();
        let none = RelativeParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            tau: 1.0,
        };
        assert_eq!(rpc_anchor_loss(&b, &none).unwrap(), -2.5);
    }

    #[test]
    fn anchor_rejects_bad_input() {
        assert!(AnchorScores::new(1.0, vec![]).is_err());
        assert!(AnchorScores::new(f64::NAN, vec![1.0]).is_err());
        let a = AnchorScores {
            pos: 0.0,
            neg: vec![1.0],
            neg_norm: 0.5,
        };
        assert!(rpc_anchor_loss(&a, &RelativeParams::default()).is_err());
    }

    #[test]
    fn vision_loss_n2_uniform() {
        let c = 0.7;
        let (beta, gamma) = (0.5, 2.0);
        let s = Array2::from_elem((4, 4), c);
        let pairing = stacked_pairing(2);
        let want = -(c - 3.0 * c / 2.0 - 0.5 * beta * c * c - gamma * 3.0 * c * c / 4.0);
        let got = rpc_vision_batch_loss(s.view(), &pairing, &rp(1.0, beta, gamma)).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-15);
        let zero = Array2::zeros((4, 4));
        assert_eq!(rpc_vision_batch_loss(zero.view(), &pairing, &rp(1.0, beta, gamma)).unwrap(), 0.0);
    }

    #[test]
    fn vision_loss_decomposes_into_anchor_losses() {
        let n = 3;
        let s = Array2::from_shape_fn((6, 6), |(i, k)| ((i * 7 + k * 3) % 5) as f64 * 0.3 - 0.4);
        let pairing = stacked_pairing(n);
        let params = rp(0.5, 0.25, 1.5);
        for negatives in [NegativeSet::Verbatim, NegativeSet::ExcludePositive] {
            let per: f64 = (0..6)
                .map(|i| rpc_anchor_loss(&vision_anchor(s.view(), &pairing, i, negatives).unwrap(), &params).unwrap())
                .sum();
            let batch = rpc_vision_batch_loss_with(s.view(), &pairing, &params, negatives).unwrap();
            assert_relative_eq!(batch, per / 6.0, epsilon = 1e-14);
        }
        let a = vision_anchor(s.view(), &pairing, 0, NegativeSet::Verbatim).unwrap();
        assert_eq!(a.neg.len(), 5);
        assert_eq!(a.neg_norm, 4.0);
        let b = vision_anchor(s.view(), &pairing, 0, NegativeSet::ExcludePositive).unwrap();
        assert_eq!(b.neg.len(), 4);
    }

    #[test]
    fn pairing_validation() {
        let s = Array2::zeros((4, 4));
        let params = RelativeParams::default();
        assert!(rpc_vision_batch_loss(s.view(), &[1, 0, 3, 2], &params).is_ok());
        assert!(rpc_vision_batch_loss(s.view(), &[0, 1, 3, 2], &params).is_err());
        assert!(rpc_vision_batch_loss(s.view(), &[1, 2, 3, 0], &params).is_err());
        assert!(rpc_vision_batch_loss(s.view(), &[1, 0, 3], &params).is_err());
        assert!(rpc_vision_batch_loss(s.view(), &[1, 0, 3, 9], &params).is_err());
        let small = Array2::zeros((2, 2));
        assert!(cpc_vision_batch_loss(small.view(), &[1, 0]).is_err());
    }

    #[test]
    fn cpc_vision_uniform_and_peaked() {
        for n in [2usize, 3, 8] {
            let s = Array2::from_elem((2 * n, 2 * n), 0.3);
            let got = cpc_vision_batch_loss(s.view(), &stacked_pairing(n)).unwrap();
            assert_relative_eq!(got, ((2 * n - 1) as f64).ln(), epsilon = 1e-13);
        }
        let pairing = stacked_pairing(2);
        let s = Array2::from_shape_fn((4, 4), |(i, k)| if pairing[i] == k { 60.0 } else { 0.0 });
        assert!(cpc_vision_batch_loss(s.view(), &pairing).unwrap() < 1e-20);
    }

    #[test]
    fn similarity_matrix_scales_and_normalizes() {
        let z = ndarray::array![[3.0, 4.0], [1.0, 0.0]];
        let s = similarity_matrix(z.view(), 0.5, false).unwrap();
        assert_eq!(s[[0, 0]], 50.0);
        assert_eq!(s[[0, 1]], 6.0);
        let c = similarity_matrix(z.view(), 1.0, true).unwrap();
        assert_relative_eq!(c[[0, 0]], 1.0, epsilon = 1e-15);
        assert_relative_eq!(c[[0, 1]], 0.6, epsilon = 1e-15);
        assert!(similarity_matrix(z.view(), 0.0, false).is_err());
    }

    fn params_strategy() -> impl Strategy<Value = RelativeParams> {
        (0.0..2.0f64, 0.05..2.0f64, 0.05..4.0f64).prop_map(|(a, b, g)| rp(a, b, g))
    }

    proptest! {
        #[test]
        fn gradient_signs_in_unsaturated_region(
            params in params_strategy(),
            u in 0.0..1.0f64,
            neg in prop::collection::vec(-5.0..5.0f64, 1..8),
        ) {
            let pos = u * 0.999 / params.beta - 3.0 * (1.0 - u);
            let a = AnchorScores::new(pos, neg.clone()).unwrap();
            let (d_pos, d_neg) = rpc_anchor_loss_grad(&a, &params).unwrap();
            prop_assert!(d_pos < 0.0);
            for (s, d) in neg.iter().zip(d_neg) {
                if *s > params.critic_lo() {
                    prop_assert!(d > 0.0);
                }
            }
        }

        #[test]
        fn minimizer_sits_at_critic_range_ends(
            params in params_strategy(),
            dp in -1.0..1.0f64,
            dn in prop::collection::vec(-1.0..1.0f64, 3),
        ) {
            let best = AnchorScores::new(params.critic_hi(), vec![params.critic_lo(); 3]).unwrap();
            let moved = AnchorScores::new(
                params.critic_hi() + dp,
                dn.iter().map(|d| params.critic_lo() + d).collect(),
            ).unwrap();
            let l0 = rpc_anchor_loss(&best, &params).unwrap();
            let l1 = rpc_anchor_loss(&moved, &params).unwrap();
            prop_assert!(l1 >= l0 - 1e-12 * l0.abs().max(1.0));
        }

        #[test]
        fn temperature_equivariance(
            raw in prop::collection::vec(-3.0..3.0f64, 16),
            tau in 0.05..2.0f64,
            c in 0.1..10.0f64,
        ) {
            let raw = Array2::from_shape_vec((4, 4), raw).unwrap();
            let pairing = stacked_pairing(2);
            let params = RelativeParams::default();
            let base = raw.mapv(|v| v / tau);
            let scaled = raw.mapv(|v| (v * c) / (tau * c));
            let l0 = rpc_vision_batch_loss(base.view(), &pairing, &params).unwrap();
            let l1 = rpc_vision_batch_loss(scaled.view(), &pairing, &params).unwrap();
            prop_assert!((l0 - l1).abs() <= 1e-12 * l0.abs().max(1.0));
            let c0 = cpc_vision_batch_loss(base.view(), &pairing).unwrap();
            let c1 = cpc_vision_batch_loss(scaled.view(), &pairing).unwrap();
            prop_assert!((c0 - c1).abs() <= 1e-12 * c0.abs().max(1.0));
        }
    }
}
