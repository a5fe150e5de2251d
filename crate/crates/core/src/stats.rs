//! Small statistics helpers shared across the crate.
//!
//! One percentile convention is used everywhere (trainset range selection,
//! run metrics, weighting-threshold quantiles): linear interpolation between
//! order statistics, the same rule as NumPy's default. Keeping it in a single
//! function means every caller agrees on e.g. `p75 of (1,2,3,4) = 3.25`.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Percentile with linear interpolation between order statistics.
///
/// `p` is in `[0, 100]`; `p = 0` and `p = 100` return the min and max.
/// Errors on an empty slice, non-finite values, or `p` out of range.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySelection("percentile of empty slice".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "percentile p={p} outside [0, 100]"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "percentile input".into(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
    } else {
        Ok(sorted[lo])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "mean of empty slice");
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample standard deviation (n-1 denominator). Zero for n = 1.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Two-sided 95% Student-t quantile, `t_{0.975, df}`.
pub fn t_quantile_975(df: usize) -> f64 {
    assert!(df >= 1, "t quantile requires df >= 1");
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975)
}

/// Mean and 95% confidence half-width `t_{0.975, n-1} * sd / sqrt(n)`.
/// The half-width is `None` for n < 2, where the interval is undefined.
pub fn mean_and_ci95(values: &[f64]) -> (f64, Option<f64>) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, None);
    }
    let half = t_quantile_975(values.len() - 1) * sample_std(values) / (values.len() as f64).sqrt();
    (m, Some(half))
}

/// 1-based ranks with ties assigned the average of their positions
/// (fractional ranks), as required for rank correlations.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average 1-based rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of the fractional ranks.
/// Errors when either input has zero rank variance (constant values), where
/// the coefficient is undefined.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("spearman inputs", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "spearman needs at least 2 observations".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "spearman input".into(),
        });
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let (ma, mb) = (mean(&ra), mean(&rb));
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..ra.len() {
        let xa = ra[i] - ma;
        let xb = rb[i] - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    if da == 0.0 || db == 0.0 {
        return Err(Error::InvalidArgument(
            "spearman is undefined for constant inputs".into(),
        ));
    }
    Ok(num / (da * db).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_pinned_convention() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 75.0).unwrap(), 3.25);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0).unwrap(), 2.0);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 4.0);
    }

    #[test]
    fn percentile_monotone_in_p() {
        let v = [0.3, -1.2, 5.0, 2.2, 2.2, 0.0];
        let mut last = f64::NEG_INFINITY;
        for step in 0..=100 {
            let q = percentile(&v, step as f64).unwrap();
            assert!(q >= last, "percentile decreased at p={step}");
            last = q;
        }
    }

    #[test]
    fn percentile_rejects_bad_input() {
        assert!(percentile(&[], 50.0).is_err());
        assert!(percentile(&[1.0], -1.0).is_err());
        assert!(percentile(&[1.0], 100.5).is_err());
        assert!(percentile(&[f64::NAN], 50.0).is_err());
    }

    #[test]
    fn ci_uses_student_t() {
        // n = 2, values (1, 3): sd = sqrt(2), t_{0.975,1} = 12.706...,
        // half-width = t * sd / sqrt(2) = t.
        let (m, half) = mean_and_ci95(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        let half = half.unwrap();
        assert!((half - 12.706204736).abs() < 1e-6, "half-width {half}");
        // identical values → zero-width interval
        let (_, half) = mean_and_ci95(&[5.0, 5.0, 5.0]);
        assert_eq!(half.unwrap(), 0.0);
        // single value → undefined
        assert!(mean_and_ci95(&[1.0]).1.is_none());
    }

    #[test]
    fn ranks_average_ties() {
        // values 10, 20, 20, 30 → ranks 1, 2.5, 2.5, 4
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 30.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
    }

    #[test]
    fn spearman_sees_monotone_structure_through_nonlinearity() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 5.0).collect();
        let up: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let down: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
        assert!((spearman(&x, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &down).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties_and_rejects_degenerate_input() {
        // Hand case with a tie: a = (1, 2, 2, 3) ranks (1, 2.5, 2.5, 4);
        // b = (10, 20, 30, 40) ranks (1, 2, 3, 4).
        // Centered: a' = (-1.5, 0, 0, 1.5), b' = (-1.5, -0.5, 0.5, 1.5);
        // rho = (2.25 + 2.25) / sqrt(4.5 * 5) = 0.9486832...
        let rho = spearman(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert!((rho - 4.5 / (4.5_f64 * 5.0).sqrt()).abs() < 1e-12, "{rho}");

        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err(), "constant input");
        assert!(spearman(&[1.0], &[1.0]).is_err(), "single observation");
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err(), "length mismatch");
    }
}
