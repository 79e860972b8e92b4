//! Interval estimates, proportion tests and log-linear fits.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF, Normal, StudentsT};

/// Successes out of trials, with its exact (Clopper–Pearson) interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        debug_assert!(successes <= trials);
        Self { successes, trials }
    }

    /// `NaN` when there are no trials.
    pub fn p_hat(&self) -> f64 {
        if self.trials == 0 {
            f64::NAN
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn interval(&self, confidence: f64) -> (f64, f64) {
        clopper_pearson(self.successes, self.trials, confidence)
    }

    pub fn ci95(&self) -> (f64, f64) {
        self.interval(0.95)
    }
}

/// Exact binomial interval at the given two-sided confidence level. With no
/// trials the interval is `[0, 1]`.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .expect("positive shape parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .expect("positive shape parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn t_quantile(dof: f64, p: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

/// Two-sided p-value of the pooled two-proportion z-test. Identical
/// degenerate samples (pooled rate 0 or 1) give 1.
pub fn two_proportion_p_value(a: Proportion, b: Proportion) -> f64 {
    if a.trials == 0 || b.trials == 0 {
        return 1.0;
    }
    let pooled = (a.successes + b.successes) as f64 / (a.trials + b.trials) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / a.trials as f64 + 1.0 / b.trials as f64);
    if var <= 0.0 {
        return 1.0;
    }
    let z = (a.p_hat() - b.p_hat()) / var.sqrt();
    2.0 * (1.0 - Normal::standard().cdf(z.abs()))
}

/// Two-sided p-value of a Welch z-test on two samples of real values.
pub fn two_sample_mean_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
    if se == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    2.0 * (1.0 - Normal::standard().cdf(((ma - mb) / se).abs()))
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

/// Standard error of the mean of a correlated series by non-overlapping
/// batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, var) = mean_var(&means);
    (var / batches as f64).sqrt()
}

/// Weighted least-squares line `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Weighted coefficient of determination.
    pub r_squared: f64,
    pub points: usize,
}

impl LineFit {
    /// Two-sided band for the slope at the given confidence (Student t with
    /// `points - 2` degrees of freedom). Needs at least three points.
    pub fn slope_band(&self, confidence: f64) -> (f64, f64) {
        let t = t_quantile((self.points - 2) as f64, 0.5 + confidence / 2.0);
        (self.slope - t * self.slope_se, self.slope + t * self.slope_se)
    }
}

/// Fits a line through `(x, y)` with weights `w` (all positive). Returns
/// `None` with fewer than two points or no spread in `x`.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let sse: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let sst: f64 = (0..n).map(|i| w[i] * (y[i] - ym).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let slope_se = if n > 2 { (sse / (n - 2) as f64 / sxx).sqrt() } else { f64::NAN };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
        r_squared,
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_edges() {
        assert_eq!(clopper_pearson(0, 0, 0.95), (0.0, 1.0));
        let (lo, hi) = clopper_pearson(0, 10, 0.95);
        assert_eq!(lo, 0.0);
        // Upper limit with no successes solves (1-p)^n = α/2.
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(10, 10, 0.95);
        assert!((lo - 0.025f64.powf(0.1)).abs() < 1e-9);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn clopper_pearson_reference_value() {
        // 5 of 20 at 95%: textbook (0.0866, 0.4910).
        let (lo, hi) = clopper_pearson(5, 20, 0.95);
        assert!((lo - 0.08657).abs() < 1e-4, "{lo}");
        assert!((hi - 0.49105).abs() < 1e-4, "{hi}");
    }

    #[test]
    fn proportion_test() {
        let a = Proportion::new(50, 100);
        assert!((two_proportion_p_value(a, a) - 1.0).abs() < 1e-12);
        let b = Proportion::new(80, 100);
        assert!(two_proportion_p_value(a, b) < 1e-4);
        assert_eq!(two_proportion_p_value(Proportion::new(0, 10), Proportion::new(0, 30)), 1.0);
    }

    #[test]
    fn exact_line() {
        let x = [10.0, 20.0, 30.0];
        let y: Vec<f64> = x.iter().map(|k| 0.5f64.ln() - 0.1 * k).collect();
        let f = weighted_line_fit(&x, &y, &[1.0; 3]).unwrap();
        assert!((f.slope + 0.1).abs() < 1e-12);
        assert!((f.intercept.exp() - 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(weighted_line_fit(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
        assert!((t_quantile(1.0, 0.975) - 12.7062).abs() < 1e-3);
    }
}
