//! A three-layer ReLU score network `f_θ(x, y)` on concatenated inputs, with
//! exact backpropagation for every objective in [`crate::objectives`] and an
//! Adam optimizer.
//!
//! ```text
//! [x, y] ─ W1,b1 ─ relu ─ W2,b2 ─ relu ─ w3,b3 ─ (optional clamp) ─ f
//! ```

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{self, ObjectiveKind, RelativeParams, ScoreBatch};
use crate::rng::Rng;
use crate::tasks::PairBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_init_scale")]
    pub weight_init_scale: f64,
    #[serde(default)]
    pub clip_output: Option<(f64, f64)>,
}

fn default_hidden() -> usize {
    256
}

fn default_init_scale() -> f64 {
    1.0
}

impl CriticConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: default_hidden(),
            activation: Activation::Relu,
            weight_init_scale: default_init_scale(),
            clip_output: None,
        }
    }

    /// Clamps scores to the optimal critic's range `[−α/γ, 1/β]`.
    pub fn with_range_clip(mut self, params: &RelativeParams) -> Self {
        self.clip_output = Some((params.critic_lo(), params.critic_hi()));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 2 {
            return Err(Error::Config(format!("critic input_dim must be >= 2, got {}", self.input_dim)));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("critic hidden_dim must be >= 1".into()));
        }
        if !(self.weight_init_scale.is_finite() && self.weight_init_scale > 0.0) {
            return Err(Error::Config("weight_init_scale must be positive".into()));
        }
        if let Some((lo, hi)) = self.clip_output {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Config(format!("invalid clip range ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Weights and biases of the three affine layers. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// hidden × input
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// hidden × hidden
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
}

impl Parameters {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, input_dim)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            w3: Array1::zeros(hidden),
            b3: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn slices(&self) -> [&[f64]; 5] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
            self.w3.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.w3.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b3),
        ]
    }

    /// All values in a fixed order: w1, b1, w2, b2, w3, b3.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for s in self.slices() {
            out.extend_from_slice(s);
        }
        out.push(self.b3);
        out
    }

    /// Inverse of [`Parameters::to_vec`].
    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            let k = s.len();
            s.copy_from_slice(&values[offset..offset + k]);
            offset += k;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite())) && self.b3.is_finite()
    }

    /// Multiplies every entry by `c`.
    pub fn scale(&mut self, c: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= c);
        }
    }

    fn first_non_finite(&self) -> Option<(&'static str, usize, f64)> {
        const NAMES: [&str; 6] = ["w1", "b1", "w2", "b2", "w3", "b3"];
        let b3 = [self.b3];
        let all: [&[f64]; 6] = {
            let [a, b, c, d, e] = self.slices();
            [a, b, c, d, e, &b3]
        };
        all.iter().zip(NAMES).find_map(|(s, name)| {
            s.iter()
                .position(|v| !v.is_finite())
                .map(|i| (name, i, s[i]))
        })
    }
}

/// Trainable critic: parameters, Adam moment buffers, and step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticState {
    pub config: CriticConfig,
    pub params: Parameters,
    pub first_moment: Parameters,
    pub second_moment: Parameters,
    pub step: u64,
}

/// Network input: explicit `[x | y]` rows, or every `(x_i, y_j)` combination
/// (row `i·n + j`) without materializing the `n²` concatenations.
#[derive(Clone, Copy)]
enum Input<'a> {
    Rows(ArrayView2<'a, f64>),
    Grid {
        x: ArrayView2<'a, f64>,
        y: ArrayView2<'a, f64>,
    },
}

/// Hidden activations kept for the backward pass. ReLU masks are recovered
/// from `h > 0`, which matches `z > 0`.
struct Forward {
    h1: Array2<f64>,
    h2: Array2<f64>,
    raw: Array1<f64>,
    out: Array1<f64>,
}

/// Gradient of the minibatch objective plus the scores it was computed from.
#[derive(Debug, Clone)]
pub struct BackwardOutput {
    pub value: f64,
    /// d objective / d θ (ascent direction).
    pub grads: Parameters,
    /// Scores on the joint rows, in batch order. For CPC, the diagonal of the score matrix.
    pub pos_scores: Vec<f64>,
    /// Scores on the product rows. For CPC, the off-diagonal entries row by row.
    pub neg_scores: Vec<f64>,
}

impl CriticState {
    /// Fan-in uniform initialization: every weight and bias of a layer with fan-in
    /// `k` is drawn from `U(−s/√k, s/√k)` where `s` is `weight_init_scale`.
    pub fn new(config: CriticConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (d, h) = (config.input_dim, config.hidden_dim);
        let mut params = Parameters::zeros(d, h);
        let bound1 = config.weight_init_scale / (d as f64).sqrt();
        let bound2 = config.weight_init_scale / (h as f64).sqrt();
        params.w1.mapv_inplace(|_| rng.uniform_range(-bound1, bound1));
        params.b1.mapv_inplace(|_| rng.uniform_range(-bound1, bound1));
        params.w2.mapv_inplace(|_| rng.uniform_range(-bound2, bound2));
        params.b2.mapv_inplace(|_| rng.uniform_range(-bound2, bound2));
        params.w3.mapv_inplace(|_| rng.uniform_range(-bound2, bound2));
        params.b3 = rng.uniform_range(-bound2, bound2);
        Ok(Self::with_params(config, params))
    }

    pub fn zeros(config: CriticConfig) -> Result<Self> {
        config.validate()?;
        let p = Parameters::zeros(config.input_dim, config.hidden_dim);
        Ok(Self::with_params(config, p))
    }

    fn with_params(config: CriticConfig, params: Parameters) -> Self {
        let zeros = Parameters::zeros(config.input_dim, config.hidden_dim);
        Self {
            config,
            params,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    pub fn forward(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let got = x.len() + y.len();
        if got != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got,
            });
        }
        let input = Array1::from_iter(x.iter().chain(y).copied()).insert_axis(Axis(0));
        Ok(self.forward_cached(Input::Rows(input.view())).out[0])
    }

    /// Scores for each row of `[x | y]` inputs.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if inputs.ncols() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: inputs.ncols(),
            });
        }
        Ok(self.forward_cached(Input::Rows(inputs)).out)
    }

    /// Scores for row-aligned `x` and `y` matrices.
    pub fn score_pairs(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let input = concat_rows(x, y)?;
        self.forward_batch(input.view())
    }

    fn forward_cached(&self, input: Input<'_>) -> Forward {
        let p = &self.params;
        let mut h1 = match input {
            Input::Rows(rows) => {
                let mut z = rows.dot(&p.w1.t());
                z += &p.b1;
                z
            }
            Input::Grid { x, y } => {
                // The first layer splits as W1·[x; y] = W1x·x + W1y·y.
                let dx = x.ncols();
                let (n, h) = (x.nrows(), p.b1.len());
                let mut ax = x.dot(&p.w1.slice(s![.., ..dx]).t());
                ax += &p.b1;
                let ay = y.dot(&p.w1.slice(s![.., dx..]).t());
                let mut z = Array2::zeros((n * n, h));
                for (k, mut row) in z.rows_mut().into_iter().enumerate() {
                    let (i, j) = (k / n, k % n);
                    Zip::from(&mut row)
                        .and(ax.row(i))
                        .and(ay.row(j))
                        .for_each(|z, &a, &b| *z = a + b);
                }
                z
            }
        };
        h1.mapv_inplace(relu);
        let mut h2 = h1.dot(&p.w2.t());
        h2 += &p.b2;
        h2.mapv_inplace(relu);
        let mut raw = h2.dot(&p.w3);
        raw += p.b3;
        let out = match self.config.clip_output {
            Some((lo, hi)) => raw.mapv(|v| v.clamp(lo, hi)),
            None => raw.clone(),
        };
        Forward { h1, h2, raw, out }
    }

    fn backprop(&self, input: Input<'_>, fw: &Forward, d_out: &Array1<f64>) -> Parameters {
        let p = &self.params;
        let d_raw = match self.config.clip_output {
            Some((lo, hi)) => Zip::from(d_out)
                .and(&fw.raw)
                .map_collect(|&g, &r| if r < lo || r > hi { 0.0 } else { g }),
            None => d_out.clone(),
        };
        let b3 = d_raw.sum();
        let w3 = fw.h2.t().dot(&d_raw);
        // dZ2 = (d_raw ⊗ w3) ⊙ 1[h2 > 0]
        let mut dz2 = &d_raw.view().insert_axis(Axis(1)) * &p.w3;
        Zip::from(&mut dz2).and(&fw.h2).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        let w2 = dz2.t().dot(&fw.h1);
        let b2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&p.w2);
        drop(dz2);
        Zip::from(&mut dz1).and(&fw.h1).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        let b1 = dz1.sum_axis(Axis(0));
        let w1 = match input {
            Input::Rows(rows) => dz1.t().dot(&rows),
            Input::Grid { x, y } => {
                let (n, h) = (x.nrows(), p.b1.len());
                let cube = dz1
                    .view()
                    .into_shape_with_order((n, n, h))
                    .expect("grid rows are n·n contiguous");
                let sx = cube.sum_axis(Axis(1));
                let sy = cube.sum_axis(Axis(0));
                let dx = x.ncols();
                let mut w1 = Array2::zeros(p.w1.raw_dim());
                w1.slice_mut(s![.., ..dx]).assign(&sx.t().dot(&x));
                w1.slice_mut(s![.., dx..]).assign(&sy.t().dot(&y));
                w1
            }
        };
        Parameters {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        }
    }

    /// `n × n` matrix of `f(x_i, y_j)`.
    pub fn score_matrix(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let n = x.nrows();
        if y.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.nrows() });
        }
        if x.ncols() + y.ncols() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.ncols() + y.ncols(),
            });
        }
        let out = self.forward_cached(Input::Grid { x: x.view(), y: y.view() }).out;
        Ok(out.into_shape_with_order((n, n)).expect("n·n scores"))
    }

    /// Objective value and its exact gradient with respect to every parameter.
    ///
    /// Pairwise objectives score the `n` joint rows and `m` product rows of the
    /// batch. CPC scores every `(x_i, y_j)` combination of the joint rows, with
    /// the diagonal as positives.
    pub fn backward(
        &self,
        batch: &PairBatch,
        objective: ObjectiveKind,
        params: &RelativeParams,
    ) -> Result<BackwardOutput> {
        let d = batch.dim();
        if 2 * d != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: 2 * d,
            });
        }
        let step = self.step;
        let non_finite = |e: Error| match e {
            Error::NonFinite { what, index, value } => Error::NonFiniteGradient {
                step,
                detail: format!("{what} {index} = {value}"),
            },
            e => e,
        };
        let (value, grads, pos_scores, neg_scores) = match objective {
            ObjectiveKind::Cpc => {
                let n = batch.n();
                let input = Input::Grid {
                    x: batch.joint_x.view(),
                    y: batch.joint_y.view(),
                };
                let fw = self.forward_cached(input);
                let matrix = fw.out.view().into_shape_with_order((n, n)).expect("n·n scores");
                let (value, grad) = objectives::cpc_with_grad(matrix).map_err(non_finite)?;
                let pos = (0..n).map(|i| matrix[[i, i]]).collect();
                let neg = (0..n)
                    .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|(i, j)| matrix[[i, j]])
                    .collect();
                let d_out = Array1::from_iter(grad.iter().copied());
                (value, self.backprop(input, &fw, &d_out), pos, neg)
            }
            kind => {
                let joint = concat_rows(batch.joint_x.view(), batch.joint_y.view())?;
                let prod = concat_rows(batch.prod_x.view(), batch.prod_y.view())?;
                let rows = ndarray::concatenate(Axis(0), &[joint.view(), prod.view()])
                    .map_err(|e| Error::Domain(e.to_string()))?;
                let input = Input::Rows(rows.view());
                let fw = self.forward_cached(input);
                let n = batch.n();
                let scores = ScoreBatch {
                    pos: fw.out.slice(s![..n]).to_vec(),
                    neg: fw.out.slice(s![n..]).to_vec(),
                };
                let g = objectives::objective_with_grad(kind, &scores, params).map_err(non_finite)?;
                let d_out = Array1::from_iter(g.d_pos.iter().chain(&g.d_neg).copied());
                (g.value, self.backprop(input, &fw, &d_out), scores.pos, scores.neg)
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFiniteGradient {
                step: self.step,
                detail: format!("objective value {value}"),
            });
        }
        if let Some((name, idx, v)) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient {
                step: self.step,
                detail: format!("d/d{name}[{idx}] = {v}"),
            });
        }
        Ok(BackwardOutput {
            value,
            grads,
            pos_scores,
            neg_scores,
        })
    }

    /// One Adam step that descends along `grads` (pass the negated objective
    /// gradient to maximize an objective).
    pub fn step(&mut self, grads: &Parameters, opt: &OptimizerConfig) -> Result<()> {
        opt.validate()?;
        if let Some((name, idx, v)) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient {
                step: self.step,
                detail: format!("d/d{name}[{idx}] = {v}"),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - opt.adam_beta1.powi(t);
        let bc2 = 1.0 - opt.adam_beta2.powi(t);
        let (b1, b2, lr, eps) = (opt.adam_beta1, opt.adam_beta2, opt.learning_rate, opt.adam_eps);
        let gs = grads.to_vec();
        let mut offset = 0;
        let ms = self.first_moment.slices_mut();
        let vs = self.second_moment.slices_mut();
        let ps = self.params.slices_mut();
        for ((p, m), v) in ps.into_iter().zip(ms).zip(vs) {
            let g = &gs[offset..offset + p.len()];
            offset += p.len();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: Checkpoint::VERSION,
            state: self.clone(),
        }
    }
}

/// Versioned JSON checkpoint of a critic and its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub state: CriticState,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<CriticState> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if ck.version != Self::VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {})",
                ck.version,
                Self::VERSION
            )));
        }
        ck.state.config.validate()?;
        let (d, h) = (ck.state.config.input_dim, ck.state.config.hidden_dim);
        for p in [&ck.state.params, &ck.state.first_moment, &ck.state.second_moment] {
            if p.w1.dim() != (h, d) || p.w2.dim() != (h, h) || p.b1.len() != h || p.b2.len() != h || p.w3.len() != h {
                return Err(Error::Config("checkpoint tensor shapes do not match config".into()));
            }
        }
        Ok(ck.state)
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn concat_rows(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    ndarray::concatenate(Axis(1), &[x.view(), y.view()]).map_err(|e| Error::Domain(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{sample, GaussianTask};

    fn toy(hidden: usize, seed: u64) -> CriticState {
        let cfg = CriticConfig {
            hidden_dim: hidden,
            ..CriticConfig::new(4)
        };
        CriticState::new(cfg, &mut Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_score() {
        let c = CriticState::zeros(CriticConfig::new(4)).unwrap();
        assert_eq!(c.forward(&[1.0, -2.0], &[3.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn forward_is_deterministic_and_checks_dims() {
        let a = toy(16, 42);
        let b = toy(16, 42);
        let x = [0.3, -0.7];
        let y = [1.1, 0.2];
        assert_eq!(a.forward(&x, &y).unwrap().to_bits(), b.forward(&x, &y).unwrap().to_bits());
        assert!(a.forward(&x, &[1.0]).is_err());
    }

    #[test]
    fn batch_matches_single_calls() {
        let c = toy(16, 1);
        let t = GaussianTask::new(2, 0.5, false).unwrap();
        let b = sample(&t, 9, 1, &mut Rng::seed_from_u64(3)).unwrap();
        let batched = c.score_pairs(b.joint_x.view(), b.joint_y.view()).unwrap();
        for i in 0..9 {
            let single = c
                .forward(b.joint_x.row(i).as_slice().unwrap(), b.joint_y.row(i).as_slice().unwrap())
                .unwrap();
            assert!((single - batched[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn score_matrix_matches_single_calls() {
        let c = toy(16, 4);
        let t = GaussianTask::new(2, 0.5, false).unwrap();
        let b = sample(&t, 5, 1, &mut Rng::seed_from_u64(3)).unwrap();
        let m = c.score_matrix(b.joint_x.view(), b.joint_y.view()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let single = c
                    .forward(b.joint_x.row(i).as_slice().unwrap(), b.joint_y.row(j).as_slice().unwrap())
                    .unwrap();
                assert!((single - m[[i, j]]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn clipping_bounds_scores() {
        let params = RelativeParams::new(1.0, 0.5, 2.0).unwrap();
        let cfg = CriticConfig {
            weight_init_scale: 50.0,
            ..CriticConfig::new(4)
        }
        .with_range_clip(&params);
        let c = CriticState::new(cfg, &mut Rng::seed_from_u64(8)).unwrap();
        let t = GaussianTask::new(2, 0.5, false).unwrap();
        let b = sample(&t, 200, 1, &mut Rng::seed_from_u64(3)).unwrap();
        let s = c.score_pairs(b.joint_x.view(), b.joint_y.view()).unwrap();
        assert!(s.iter().all(|v| (-0.5..=2.0).contains(v)));
    }

    #[test]
    fn zero_learning_rate_and_zero_gradient_leave_params() {
        let mut c = toy(8, 2);
        let before = c.params.clone();
        let mut g = c.params.clone();
        g.scale(0.3);
        let opt = OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        c.step(&g, &opt).unwrap();
        assert_eq!(c.params, before);
        let mut fresh = toy(8, 2);
        fresh.step(&Parameters::zeros(4, 8), &OptimizerConfig::default()).unwrap();
        assert_eq!(fresh.params, before);
        assert_eq!(fresh.step, 1);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut c = CriticState::zeros(CriticConfig {
            hidden_dim: 1,
            ..CriticConfig::new(2)
        })
        .unwrap();
        let mut g = Parameters::zeros(2, 1);
        g.b3 = 1.0;
        let opt = OptimizerConfig {
            learning_rate: 0.001,
            ..Default::default()
        };
        c.step(&g, &opt).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −lr · 1/(1 + eps)
        assert!((c.params.b3 + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(c.params.w1[[0, 0]], 0.0);
    }

    #[test]
    fn identical_steps_are_identical() {
        let t = GaussianTask::new(2, 0.6, false).unwrap();
        let b = sample(&t, 16, 16, &mut Rng::seed_from_u64(4)).unwrap();
        let run = || {
            let mut c = toy(8, 5);
            for _ in 0..3 {
                let mut out = c.backward(&b, ObjectiveKind::Rpc, &RelativeParams::default()).unwrap();
                out.grads.scale(-1.0);
                c.step(&out.grads, &OptimizerConfig::default()).unwrap();
            }
            c.params.to_vec()
        };
        let a: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
        let b2: Vec<u64> = run().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b2);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut c = toy(4, 1);
        let mut g = Parameters::zeros(4, 4);
        g.w2[[1, 2]] = f64::NAN;
        assert!(matches!(c.step(&g, &OptimizerConfig::default()), Err(Error::NonFiniteGradient { .. })));
    }

    #[test]
    fn parameter_vector_round_trip() {
        let c = toy(8, 3);
        let v = c.params.to_vec();
        let mut p = Parameters::zeros(4, 8);
        p.set_from_slice(&v).unwrap();
        assert_eq!(p, c.params);
        assert!(p.set_from_slice(&v[1..]).is_err());
    }

    #[test]
    fn checkpoint_restores_bit_identical_outputs() {
        let mut c = toy(8, 6);
        c.step = 17;
        c.first_moment.b3 = 0.125;
        let json = c.to_checkpoint().to_json().unwrap();
        let back = Checkpoint::from_json(&json).unwrap();
        assert_eq!(back, c);
        let x = [0.1, 0.2];
        let y = [-0.3, 0.4];
        assert_eq!(back.forward(&x, &y).unwrap().to_bits(), c.forward(&x, &y).unwrap().to_bits());
        let bad = json.replace("\"version\":1", "\"version\":9");
        assert!(Checkpoint::from_json(&bad).is_err());
    }

    fn objective_at(c: &CriticState, b: &PairBatch, kind: ObjectiveKind, rp: &RelativeParams) -> f64 {
        c.backward(b, kind, rp).unwrap().value
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let t = GaussianTask::new(2, 0.7, false).unwrap();
        let b = sample(&t, 6, 7, &mut Rng::seed_from_u64(11)).unwrap();
        let rp = RelativeParams::new(0.5, 0.3, 1.5).unwrap();
        let kinds = [
            ObjectiveKind::Rpc,
            ObjectiveKind::Dv,
            ObjectiveKind::Nwj,
            ObjectiveKind::Js,
            ObjectiveKind::Cpc,
            ObjectiveKind::Smile { clip: 0.4 },
        ];
        for kind in kinds {
            let mut c = toy(5, 21);
            let analytic = c.backward(&b, kind, &rp).unwrap().grads.to_vec();
            let theta = c.params.to_vec();
            let h = 1e-5;
            for (i, &g) in analytic.iter().enumerate() {
                let mut plus = theta.clone();
                plus[i] += h;
                c.params.set_from_slice(&plus).unwrap();
                let fp = objective_at(&c, &b, kind, &rp);
                let mut minus = theta.clone();
                minus[i] -= h;
                c.params.set_from_slice(&minus).unwrap();
                let fm = objective_at(&c, &b, kind, &rp);
                c.params.set_from_slice(&theta).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let err = (fd - g).abs() / g.abs().max(fd.abs()).max(1e-3);
                assert!(err < 1e-4, "{kind} param {i}: analytic {g}, fd {fd}");
            }
        }
    }

    #[test]
    fn gradient_step_increases_objective() {
        let t = GaussianTask::new(2, 0.8, false).unwrap();
        let b = sample(&t, 64, 64, &mut Rng::seed_from_u64(12)).unwrap();
        let rp = RelativeParams::default();
        let mut c = toy(16, 22);
        let out = c.backward(&b, ObjectiveKind::Rpc, &rp).unwrap();
        let mut g = out.grads.clone();
        let norm2: f64 = g.to_vec().iter().map(|v| v * v).sum();
        // plain gradient ascent with a tiny step must not decrease the value
        g.scale(1e-3 / norm2.sqrt());
        let theta: Vec<f64> = c.params.to_vec().iter().zip(g.to_vec()).map(|(p, d)| p + d).collect();
        c.params.set_from_slice(&theta).unwrap();
        assert!(c.backward(&b, ObjectiveKind::Rpc, &rp).unwrap().value > out.value);
    }

    #[test]
    fn clipped_scores_have_zero_gradient() {
        let rp = RelativeParams::new(1.0, 1.0, 1.0).unwrap();
        let cfg = CriticConfig {
            hidden_dim: 4,
            ..CriticConfig::new(4)
        }
        .with_range_clip(&rp);
        let mut c = CriticState::zeros(cfg).unwrap();
        // every raw score is 5, above the upper clip of 1
        c.params.b3 = 5.0;
        let t = GaussianTask::new(2, 0.5, false).unwrap();
        let b = sample(&t, 8, 8, &mut Rng::seed_from_u64(1)).unwrap();
        let out = c.backward(&b, ObjectiveKind::Rpc, &rp).unwrap();
        assert!(out.pos_scores.iter().all(|&v| v == 1.0));
        assert!(out.grads.to_vec().iter().all(|&v| v == 0.0));
    }
}
