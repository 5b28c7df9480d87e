//! Correlated-Gaussian mutual-information tasks and their analytic oracles.
//!
//! `X, Y ∈ ℝ^d` with `Y_k = ρ X_k + √(1−ρ²) ε_k` per coordinate, so
//! `I(X;Y) = −(d/2) log(1−ρ²)`. The cubic variant feeds `y ↦ y³` to the
//! critic; the map is a per-coordinate bijection, so the mutual information
//! and the density ratio at corresponding points are unchanged, and the
//! oracles below always work in pre-cubic coordinates.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::normal_pdf;
use crate::quad;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTask {
    pub dim: usize,
    pub rho: f64,
    #[serde(default)]
    pub cubic: bool,
}

impl GaussianTask {
    pub fn new(dim: usize, rho: f64, cubic: bool) -> Result<Self> {
        let t = Self { dim, rho, cubic };
        t.validate()?;
        Ok(t)
    }

    /// Task whose ground-truth mutual information is `mi` nats.
    pub fn with_mi(dim: usize, mi: f64, cubic: bool) -> Result<Self> {
        Self::new(dim, rho_for_mi(mi, dim)?, cubic)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Domain("task dimension must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Domain(format!(
                "correlation must lie in [0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// `n` joint rows and `m` product-of-marginals rows; every matrix is `rows × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub joint_x: Array2<f64>,
    pub joint_y: Array2<f64>,
    pub prod_x: Array2<f64>,
    pub prod_y: Array2<f64>,
}

impl PairBatch {
    pub fn n(&self) -> usize {
        self.joint_x.nrows()
    }

    pub fn m(&self) -> usize {
        self.prod_x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.joint_x.ncols()
    }

    /// Writes the batch as CSV: a `set` column (`joint`/`product`) then `x_i`, `y_i` per dimension.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.dim();
        let mut header = vec!["set".to_string()];
        header.extend((0..d).map(|i| format!("x_{i}")));
        header.extend((0..d).map(|i| format!("y_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (label, xs, ys) in [
            ("joint", &self.joint_x, &self.joint_y),
            ("product", &self.prod_x, &self.prod_y),
        ] {
            for (xr, yr) in xs.rows().into_iter().zip(ys.rows()) {
                let mut line = String::from(label);
                for v in xr.iter().chain(yr.iter()) {
                    line.push(',');
                    line.push_str(&crate::format_sig9(*v));
                }
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}

/// Draws `n` joint and `m` product pairs, applying the cubic map when the task asks for it.
pub fn sample(task: &GaussianTask, n: usize, m: usize, rng: &mut Rng) -> Result<PairBatch> {
    let mut batch = sample_pre_cubic(task, n, m, rng)?;
    if task.cubic {
        for y in [&mut batch.joint_y, &mut batch.prod_y] {
            y.mapv_inplace(|v| v * v * v);
        }
    }
    Ok(batch)
}

/// Like [`sample`] but never applies the cubic map; the oracles consume these coordinates.
pub fn sample_pre_cubic(
    task: &GaussianTask,
    n: usize,
    m: usize,
    rng: &mut Rng,
) -> Result<PairBatch> {
    task.validate()?;
    if n == 0 || m == 0 {
        return Err(Error::Empty("batch rows"));
    }
    let d = task.dim;
    let rho = task.rho;
    let noise = (1.0 - rho * rho).sqrt();
    let mut joint_x = Array2::zeros((n, d));
    let mut joint_y = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            let x = rng.normal();
            let e = rng.normal();
            joint_x[[i, k]] = x;
            joint_y[[i, k]] = rho * x + noise * e;
        }
    }
    let mut prod_x = Array2::zeros((m, d));
    let mut prod_y = Array2::zeros((m, d));
    for j in 0..m {
        for k in 0..d {
            prod_x[[j, k]] = rng.normal();
            prod_y[[j, k]] = rng.normal();
        }
    }
    Ok(PairBatch {
        joint_x,
        joint_y,
        prod_x,
        prod_y,
    })
}

/// `−(d/2) log(1 − ρ²)` nats.
pub fn ground_truth_mi(task: &GaussianTask) -> f64 {
    -0.5 * task.dim as f64 * (-task.rho * task.rho).ln_1p()
}

/// Per-coordinate correlation giving `mi` nats in `dim` dimensions: `√(1 − e^{−2·mi/d})`.
pub fn rho_for_mi(mi: f64, dim: usize) -> Result<f64> {
    if !(mi.is_finite() && mi >= 0.0) {
        return Err(Error::Domain(format!("mutual information must be >= 0, got {mi}")));
    }
    if dim == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    Ok((-(-2.0 * mi / dim as f64).exp_m1()).sqrt())
}

/// Exact `log p(x,y)/(p(x)p(y))` at pre-cubic coordinates.
pub fn analytic_log_ratio(task: &GaussianTask, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != task.dim {
        return Err(Error::DimensionMismatch {
            expected: task.dim,
            got: x.len(),
        });
    }
    if y.len() != task.dim {
        return Err(Error::DimensionMismatch {
            expected: task.dim,
            got: y.len(),
        });
    }
    Ok(log_ratio_unchecked(task.rho, x, y))
}

#[inline]
pub(crate) fn log_ratio_unchecked(rho: f64, x: &[f64], y: &[f64]) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    let r2 = rho * rho;
    let one_minus = 1.0 - r2;
    let log_norm = -0.5 * (-r2).ln_1p();
    x.iter()
        .zip(y)
        .map(|(&a, &b)| -(r2 * a * a - 2.0 * rho * a * b + r2 * b * b) / (2.0 * one_minus) + log_norm)
        .sum()
}

/// Relative density ratio `p / (β p + (1 − β) q)` for `p = N(0,1)`, `q = N(0.5,1)`.
pub fn relative_ratio_curve(beta: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    Ok(grid
        .iter()
        .map(|&x| {
            let p = normal_pdf(x, 0.0, 1.0);
            let q = normal_pdf(x, 0.5, 1.0);
            if p == 0.0 && q == 0.0 {
                // Both densities underflow; fall back to the log-ratio form.
                let log_q_over_p = 0.5 * x - 0.125;
                1.0 / (beta + (1.0 - beta) * log_q_over_p.exp())
            } else {
                p / (beta * p + (1.0 - beta) * q)
            }
        })
        .collect())
}

/// `E_{P_X P_Y}[r²] − 1` for the one-dimensional task, by adaptive 2-d quadrature
/// of `p(x,y)² / (p(x) p(y))`.
pub fn chi2_oracle_1d(rho: f64) -> Result<f64> {
    GaussianTask::new(1, rho, false)?;
    if rho == 0.0 {
        return Ok(0.0);
    }
    // The integrand is a centred Gaussian whose slowest-decaying direction
    // (x = y) has precision (1 − ρ)/(1 + ρ); integrate out to ~11 sd along it.
    let half_width = 11.0 * ((1.0 + rho) / (1.0 - rho)).sqrt() + 5.0;
    let integrand = |x: f64, y: f64| {
        let xs = [x];
        let ys = [y];
        let log_phi = -0.5 * (x * x + y * y) - (2.0 * std::f64::consts::PI).ln();
        (log_phi + 2.0 * log_ratio_unchecked(rho, &xs, &ys)).exp()
    };
    let second_moment = quad::integrate_2d(
        integrand,
        (-half_width, half_width),
        (-half_width, half_width),
        1e-11,
    )?;
    Ok(second_moment - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{mean, std_error, variance};
    use approx::assert_relative_eq;

    #[test]
    fn mi_formula_and_inverse() {
        let t = GaussianTask::new(1, 0.8, false).unwrap();
        assert_relative_eq!(ground_truth_mi(&t), 0.510_825_623_765_990_7, epsilon = 1e-12);
        assert_eq!(ground_truth_mi(&GaussianTask::new(20, 0.0, false).unwrap()), 0.0);

        assert_relative_eq!(rho_for_mi(2.0, 20).unwrap(), 0.425_757_262_911_648, epsilon = 1e-12);
        assert_relative_eq!(rho_for_mi(10.0, 20).unwrap(), 0.795_060_097_620_650_1, epsilon = 1e-12);
        assert_eq!(rho_for_mi(0.0, 20).unwrap(), 0.0);
        for mi in [0.1, 2.0, 6.0, 10.0] {
            let t = GaussianTask::with_mi(20, mi, false).unwrap();
            assert!((ground_truth_mi(&t) - mi).abs() < 1e-12);
        }
        assert!(rho_for_mi(-1.0, 2).is_err());
    }

    #[test]
    fn task_validation() {
        assert!(GaussianTask::new(0, 0.5, false).is_err());
        assert!(GaussianTask::new(2, 1.0, false).is_err());
        assert!(GaussianTask::new(2, -0.1, false).is_err());
    }

    #[test]
    fn log_ratio_at_origin_matches_densities() {
        let t = GaussianTask::new(1, 0.5, false).unwrap();
        let v = analytic_log_ratio(&t, &[0.0], &[0.0]).unwrap();
        assert_relative_eq!(v, -0.5 * 0.75f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(v, 0.143_841, epsilon = 1e-6);
        // cross-check against the explicit bivariate density at a generic point
        let (x, y, r) = (0.7, -0.3, 0.5f64);
        let det = 1.0 - r * r;
        let joint = (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * det)).exp()
            / (2.0 * std::f64::consts::PI * det.sqrt());
        let direct = (joint / (normal_pdf(x, 0.0, 1.0) * normal_pdf(y, 0.0, 1.0))).ln();
        assert_relative_eq!(analytic_log_ratio(&t, &[x], &[y]).unwrap(), direct, epsilon = 1e-13);
        assert!(analytic_log_ratio(&t, &[0.0, 1.0], &[0.0]).is_err());
        let zero = GaussianTask::new(3, 0.0, false).unwrap();
        assert_eq!(analytic_log_ratio(&zero, &[1.0, 2.0, 3.0], &[-4.0, 0.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn sampler_moments() {
        let t = GaussianTask::new(3, 0.9, false).unwrap();
        let n = 100_000;
        let b = sample(&t, n, 10, &mut Rng::seed_from_u64(5)).unwrap();
        let tol = 4.0 / (n as f64).sqrt();
        for k in 0..3 {
            let x: Vec<f64> = b.joint_x.column(k).to_vec();
            let y: Vec<f64> = b.joint_y.column(k).to_vec();
            assert!(mean(&x).abs() < tol && mean(&y).abs() < tol);
            let (mx, my) = (mean(&x), mean(&y));
            let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1) as f64;
            let corr = cov / (variance(&x) * variance(&y)).sqrt();
            assert!((0.89..=0.91).contains(&corr), "corr {corr}");
            assert!((corr - 0.9).abs() < tol);
        }
    }

    #[test]
    fn product_rows_are_uncorrelated() {
        let t = GaussianTask::new(1, 0.9, false).unwrap();
        let n = 50_000;
        let b = sample(&t, 1, n, &mut Rng::seed_from_u64(9)).unwrap();
        let c: Vec<f64> = b.prod_x.iter().zip(b.prod_y.iter()).map(|(a, b)| a * b).collect();
        assert!(mean(&c).abs() < 4.0 * std_error(&c));
    }

    #[test]
    fn cubic_changes_data_not_truth() {
        let plain = GaussianTask::new(2, 0.6, false).unwrap();
        let cubic = GaussianTask { cubic: true, ..plain };
        assert_eq!(ground_truth_mi(&plain), ground_truth_mi(&cubic));
        let a = sample(&plain, 20_000, 1, &mut Rng::seed_from_u64(3)).unwrap();
        let b = sample(&cubic, 20_000, 1, &mut Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.joint_x, b.joint_x);
        assert_eq!(a.joint_y.mapv(|v| v * v * v), b.joint_y);
        // E[y^4] = 3 before the cube, E[y^12] = 10395 after
        let m4: f64 = a.joint_y.iter().map(|v| v.powi(4)).sum::<f64>() / a.joint_y.len() as f64;
        let m4c: f64 = b.joint_y.iter().map(|v| v.powi(4)).sum::<f64>() / b.joint_y.len() as f64;
        assert!(m4c > 10.0 * m4);
    }

    #[test]
    fn same_seed_same_bytes() {
        let t = GaussianTask::new(4, 0.3, true).unwrap();
        let a = sample(&t, 8, 8, &mut Rng::seed_from_u64(11)).unwrap();
        let b = sample(&t, 8, 8, &mut Rng::seed_from_u64(11)).unwrap();
        let bits = |p: &PairBatch| {
            p.joint_x
                .iter()
                .chain(p.joint_y.iter())
                .chain(p.prod_x.iter())
                .chain(p.prod_y.iter())
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rho_zero_batches_match_in_distribution() {
        let t = GaussianTask::new(1, 0.0, false).unwrap();
        let b = sample(&t, 40_000, 40_000, &mut Rng::seed_from_u64(2)).unwrap();
        let jc: Vec<f64> = b.joint_x.iter().zip(b.joint_y.iter()).map(|(a, b)| a * b).collect();
        let pc: Vec<f64> = b.prod_x.iter().zip(b.prod_y.iter()).map(|(a, b)| a * b).collect();
        let se = (std_error(&jc).powi(2) + std_error(&pc).powi(2)).sqrt();
        assert!((mean(&jc) - mean(&pc)).abs() < 4.0 * se);
    }

    #[test]
    fn ratio_oracle_is_normalized_and_recovers_mi() {
        let t = GaussianTask::new(2, 0.7, false).unwrap();
        let n = 200_000;
        let b = sample(&t, n, n, &mut Rng::seed_from_u64(17)).unwrap();
        let joint: Vec<f64> = (0..n)
            .map(|i| analytic_log_ratio(&t, b.joint_x.row(i).as_slice().unwrap(), b.joint_y.row(i).as_slice().unwrap()).unwrap())
            .collect();
        assert!((mean(&joint) - ground_truth_mi(&t)).abs() < 3.0 * std_error(&joint));
        let ratios: Vec<f64> = (0..n)
            .map(|j| analytic_log_ratio(&t, b.prod_x.row(j).as_slice().unwrap(), b.prod_y.row(j).as_slice().unwrap()).unwrap().exp())
            .collect();
        assert!((mean(&ratios) - 1.0).abs() < 4.0 * std_error(&ratios));
    }

    #[test]
    fn relative_ratio_curve_shapes() {
        let grid: Vec<f64> = (0..=1200).map(|i| -10.0 + i as f64 * 0.01).collect();
        let r0 = relative_ratio_curve(0.0, &grid).unwrap();
        assert!(r0[0] > 10.0 && r0[0] > r0[100]);
        for beta in [0.5, 0.95] {
            let r = relative_ratio_curve(beta, &grid).unwrap();
            assert!(r.iter().all(|v| *v <= 1.0 / beta));
        }
        for beta in [0.0, 0.3, 0.9] {
            let at_equal = relative_ratio_curve(beta, &[0.25]).unwrap()[0];
            assert_relative_eq!(at_equal, 1.0, epsilon = 1e-14);
        }
        let far = relative_ratio_curve(0.0, &[-80.0]).unwrap()[0];
        assert!(far.is_finite() && far > 1e17);
        assert!(relative_ratio_curve(1.0, &grid).is_err());
    }

    #[test]
    fn chi2_oracle_values() {
        assert_eq!(chi2_oracle_1d(0.0).unwrap(), 0.0);
        assert_relative_eq!(chi2_oracle_1d(0.5).unwrap(), 1.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(chi2_oracle_1d(0.8).unwrap(), 16.0 / 9.0, epsilon = 1e-9);
        assert!(chi2_oracle_1d(1.0).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let t = GaussianTask::new(2, 0.5, false).unwrap();
        let b = sample(&t, 3, 2, &mut Rng::seed_from_u64(1)).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "set,x_0,x_1,y_0,y_1");
        assert_eq!(lines.len(), 6);
        assert!(lines[4].starts_with("product,"));
    }
}
