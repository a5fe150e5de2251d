//! Construction of property-imbalanced training subsets.
//!
//! A benchmark trainset is assembled from two property ranges: a low range
//! (LR) contributing `n_low` designs and a high range (HR) contributing
//! `round(rho * n_low)` designs, sampled without replacement from the rows of
//! a source dataset whose property falls in each range. Small `rho` therefore
//! means the interesting high-property region is barely represented.
//!
//! Ranges are half-open `[lo, hi)` so adjacent ranges never overlap; a
//! percentile upper bound of 100 closes the interval so the maximum stays
//! reachable. Percentile bounds resolve against the source dataset's property
//! distribution using the crate-wide linear-interpolation convention.

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats::percentile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeKind {
    /// Bounds are percentiles in `[0, 100]` of the source property values.
    Percentile,
    /// Bounds are property values used as-is.
    Absolute,
}

/// A property range; see module docs for the open/closed convention.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RangeSpec {
    pub kind: RangeKind,
    pub lo: f64,
    pub hi: f64,
}

impl RangeSpec {
    pub fn percentile(lo: f64, hi: f64) -> Self {
        RangeSpec {
            kind: RangeKind::Percentile,
            lo,
            hi,
        }
    }

    pub fn absolute(lo: f64, hi: f64) -> Self {
        RangeSpec {
            kind: RangeKind::Absolute,
            lo,
            hi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::NonFinite {
                context: "range bounds".into(),
            });
        }
        if self.lo >= self.hi {
            return Err(Error::InvalidArgument(format!(
                "range bounds must satisfy lo < hi, got [{}, {})",
                self.lo, self.hi
            )));
        }
        if self.kind == RangeKind::Percentile
            && !((0.0..=100.0).contains(&self.lo) && (0.0..=100.0).contains(&self.hi))
        {
            return Err(Error::InvalidArgument(format!(
                "percentile bounds must lie in [0, 100], got [{}, {})",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Resolves the bounds to property values against `y`. The second return
    /// says whether the upper bound is inclusive (only for percentile 100).
    fn resolve(&self, y: &[f64]) -> Result<(f64, f64, bool)> {
        self.validate()?;
        match self.kind {
            RangeKind::Absolute => Ok((self.lo, self.hi, false)),
            RangeKind::Percentile => {
                let lo = percentile(y, self.lo)?;
                let hi = percentile(y, self.hi)?;
                Ok((lo, hi, self.hi == 100.0))
            }
        }
    }

    /// Indices of rows whose property lies in the range.
    fn member_indices(&self, y: &[f64]) -> Result<Vec<usize>> {
        let (lo, hi, hi_inclusive) = self.resolve(y)?;
        Ok(y.iter()
            .enumerate()
            .filter(|(_, &v)| v >= lo && (v < hi || (hi_inclusive && v == hi)))
            .map(|(i, _)| i)
            .collect())
    }

    fn describe(&self) -> String {
        match self.kind {
            RangeKind::Percentile => format!("percentile range [{}, {})", self.lo, self.hi),
            RangeKind::Absolute => format!("value range [{}, {})", self.lo, self.hi),
        }
    }
}

/// Recipe for an imbalanced trainset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImbalanceSpec {
    /// Low-property range, contributing the bulk of the trainset.
    pub low: RangeSpec,
    /// High-property range, contributing the scarce tail.
    pub high: RangeSpec,
    /// Imbalance ratio: the high range contributes `round(rho * n_low)` rows.
    pub rho: f64,
    /// Number of rows sampled from the low range.
    pub n_low: usize,
}

impl ImbalanceSpec {
    pub fn validate(&self) -> Result<()> {
        self.low.validate()?;
        self.high.validate()?;
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "imbalance ratio must be positive, got {}",
                self.rho
            )));
        }
        if self.n_low == 0 {
            return Err(Error::InvalidArgument("n_low must be at least 1".into()));
        }
        Ok(())
    }

    /// Rows drawn from the high range: `rho * n_low` rounded half-up, at
    /// least 1 so the high region is never entirely absent.
    pub fn n_high(&self) -> usize {
        round_half_up(self.rho * self.n_low as f64).max(1)
    }
}

/// `x` rounded to the nearest integer with halves rounding up.
pub(crate) fn round_half_up(x: f64) -> usize {
    debug_assert!(x >= 0.0);
    (x + 0.5).floor() as usize
}

/// Samples an imbalanced trainset from `source` per `spec`: `spec.n_low` rows
/// whose property lies in the low range and `spec.n_high()` rows from the high
/// range, each without replacement. The result keeps low rows first, then high
/// rows. Errors name the range whose pool is too small.
pub fn build_imbalanced_subset(
    source: &Dataset,
    spec: &ImbalanceSpec,
    rng: &mut Rng,
) -> Result<Dataset> {
    spec.validate()?;
    let y = &source.properties;
    let low_pool = spec.low.member_indices(y)?;
    let high_pool = spec.high.member_indices(y)?;

    let n_high = spec.n_high();
    if low_pool.len() < spec.n_low {
        return Err(Error::EmptySelection(format!(
            "low {} holds {} rows of {}, need {}",
            spec.low.describe(),
            low_pool.len(),
            source.name,
            spec.n_low
        )));
    }
    if high_pool.len() < n_high {
        return Err(Error::EmptySelection(format!(
            "high {} holds {} rows of {}, need {}",
            spec.high.describe(),
            high_pool.len(),
            source.name,
            n_high
        )));
    }

    let low_take = sample_without_replacement(&low_pool, spec.n_low, rng);
    let high_take = sample_without_replacement(&high_pool, n_high, rng);
    let mut indices = low_take;
    indices.extend(high_take);
    let mut out = source.gather(&indices);
    out.name = format!("{}/imbalanced", source.name);
    Ok(out)
}

fn sample_without_replacement(pool: &[usize], k: usize, rng: &mut Rng) -> Vec<usize> {
    debug_assert!(k <= pool.len());
    let mut shuffled = pool.to_vec();
    rng.shuffle(&mut shuffled);
    shuffled.truncate(k);
    shuffled
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    /// Dataset with properties 1..=100 (designs mirror the property).
    fn ramp() -> Dataset {
        let y: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let designs = Matrix::from_vec(100, 1, y.clone()).unwrap();
        Dataset::from_continuous("ramp", designs, y).unwrap()
    }

    #[test]
    fn percentile_pool_matches_hand_computation() {
        // (0, 10)% of 1..=100: bounds [1, 10.9), so rows 1..=10.
        let d = ramp();
        let spec = RangeSpec::percentile(0.0, 10.0);
        let pool = spec.member_indices(&d.properties).unwrap();
        let values: Vec<f64> = pool.iter().map(|&i| d.properties[i]).collect();
        assert_eq!(values, (1..=10).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn adjacent_percentile_ranges_do_not_overlap() {
        let d = ramp();
        let low = RangeSpec::percentile(0.0, 40.0);
        let high = RangeSpec::percentile(40.0, 100.0);
        let lo_pool = low.member_indices(&d.properties).unwrap();
        let hi_pool = high.member_indices(&d.properties).unwrap();
        for i in &lo_pool {
            assert!(!hi_pool.contains(i), "row {i} in both ranges");
        }
        // and together they cover everything for adjacent full-span ranges
        assert_eq!(lo_pool.len() + hi_pool.len(), 100);
    }

    #[test]
    fn percentile_100_keeps_the_maximum() {
        let d = ramp();
        let spec = RangeSpec::percentile(90.0, 100.0);
        let pool = spec.member_indices(&d.properties).unwrap();
        assert!(pool.iter().any(|&i| d.properties[i] == 100.0));
    }

    #[test]
    fn subset_sizes_and_membership() {
        let d = ramp();
        let spec = ImbalanceSpec {
            low: RangeSpec::percentile(0.0, 40.0),
            high: RangeSpec::percentile(80.0, 100.0),
            rho: 0.2,
            n_low: 20,
        };
        let mut rng = Rng::new(9);
        let sub = build_imbalanced_subset(&d, &spec, &mut rng).unwrap();
        assert_eq!(sub.len(), 24, "20 low + round(0.2*20) = 4 high");
        let (lo_val, hi_val) = (
            percentile_of(&d, 0.0, 40.0),
            percentile_of(&d, 80.0, 100.0),
        );
        for &y in &sub.properties[..20] {
            assert!(y >= lo_val.0 && y < lo_val.1, "low row {y}");
        }
        for &y in &sub.properties[20..] {
            assert!(y >= hi_val.0 && y <= hi_val.1, "high row {y}");
        }
        // without replacement → no duplicate designs
        let mut seen = sub.properties.clone();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        assert_eq!(seen.len(), sub.len());
    }

    fn percentile_of(d: &Dataset, lo: f64, hi: f64) -> (f64, f64) {
        (
            crate::stats::percentile(&d.properties, lo).unwrap(),
            crate::stats::percentile(&d.properties, hi).unwrap(),
        )
    }

    #[test]
    fn n_high_rounds_half_up_with_floor_one() {
        let base = ImbalanceSpec {
            low: RangeSpec::percentile(0.0, 50.0),
            high: RangeSpec::percentile(50.0, 100.0),
            rho: 0.05,
            n_low: 10,
        };
        assert_eq!(base.n_high(), 1, "0.5 rounds up");
        assert_eq!(ImbalanceSpec { rho: 0.01, ..base }.n_high(), 1, "floor of 1");
        assert_eq!(ImbalanceSpec { rho: 0.24, ..base }.n_high(), 2);
    }

    #[test]
    fn too_small_pool_errors_name_the_range() {
        let d = ramp();
        let spec = ImbalanceSpec {
            low: RangeSpec::absolute(0.0, 5.0),
            high: RangeSpec::percentile(90.0, 100.0),
            rho: 0.2,
            n_low: 50,
        };
        let err = build_imbalanced_subset(&d, &spec, &mut Rng::new(1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("value range [0, 5)"), "got: {msg}");
        assert!(msg.contains("need 50"), "got: {msg}");
    }

    #[test]
    fn spec_validation() {
        let ok = ImbalanceSpec {
            low: RangeSpec::percentile(0.0, 40.0),
            high: RangeSpec::percentile(80.0, 100.0),
            rho: 0.2,
            n_low: 10,
        };
        assert!(ok.validate().is_ok());
        assert!(ImbalanceSpec { rho: 0.0, ..ok }.validate().is_err());
        assert!(ImbalanceSpec { n_low: 0, ..ok }.validate().is_err());
        assert!(RangeSpec::percentile(40.0, 40.0).validate().is_err());
        assert!(RangeSpec::percentile(-1.0, 40.0).validate().is_err());
        assert!(RangeSpec::absolute(2.0, 1.0).validate().is_err());
    }
}
