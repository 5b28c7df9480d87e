//! Small numerical helpers shared across modules: compensated summation,
//! numerically safe log-sum-exp, softplus, and sample statistics.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<KahanSum>().value()
}

/// Arithmetic mean with compensated accumulation. Returns NaN for an empty input.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator). Zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    sum(xs.iter().map(|x| (x - mu) * (x - mu))) / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// `log(sum(exp(xs)))`, stable for large magnitudes.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + sum(xs.iter().map(|x| (x - max).exp())).ln()
}

/// `log(mean(exp(xs)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = vec![1e16];
        xs.extend(std::iter::repeat(1.0).take(1000));
        xs.push(-1e16);
        assert_eq!(sum(xs), 1000.0);
    }

    #[test]
    fn log_sum_exp_is_overflow_safe() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(log_mean_exp(&[-1000.0, -1000.0]).is_finite());
    }

    #[test]
    fn softplus_matches_direct_formula() {
        for &x in &[-30.0, -1.0, 0.0, 2.5, 40.0] {
            let direct = (1.0 + f64::exp(x)).ln();
            assert!((softplus(x) - direct).abs() < 1e-12, "x={x}");
        }
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        assert_eq!(variance(&[3.0; 10]), 0.0);
        assert_eq!(variance(&[3.0]), 0.0);
    }
}

/// Unevaluated sum `hi + lo` carrying roughly 106 bits of precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    #[inline]
    pub fn from_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Self { hi: s, lo: err }
    }

    #[inline]
    pub fn from_product(a: f64, b: f64) -> Self {
        let p = a * b;
        Self {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    #[inline]
    fn renormalize(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Self {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Self {
        let s = Self::from_sum(self.hi, b);
        Self::renormalize(s.hi, s.lo + self.lo)
    }

    /// Quotient rounded once to the nearest double (up to a tiny fraction of an ulp).
    #[inline]
    pub fn div_to_f64(self, den: Self) -> f64 {
        let q1 = self.hi / den.hi;
        // remainder = self - q1 * den, evaluated in double-double
        let p = Self::from_product(q1, den.hi);
        let rem_hi = self.hi - p.hi;
        let rem = (rem_hi - p.lo) + self.lo - q1 * den.lo;
        q1 + rem / den.hi
    }
}
