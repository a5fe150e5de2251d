//! Ground-truth oracles that score candidate designs.
//!
//! Three oracles cover the benchmark families in this crate:
//!
//! - [`GmmOracle`]: a one-dimensional two-mode Gaussian-mixture landscape
//!   (unnormalized amplitudes, so the landscape maximum approaches the larger
//!   mode weight). Synthetic, imbalance-controllable, with a known optimum.
//! - [`LookupOracle`]: an exact table from design to property; anything not in
//!   the table scores zero. This models assay datasets where only measured
//!   designs have known values.
//! - [`ReferenceFieldOracle`]: scores a real-valued field against a reference
//!   solution by weighted mean squared mismatch on a log scale (higher is
//!   better, i.e. `-log(wMSE + eps)`).

use std::collections::HashMap;

use crate::data::DesignBatch;
use crate::error::{Error, Result};

/// Two-component Gaussian-mixture landscape
/// `y(x) = w1 * exp(-(x-mu1)^2 / (2 sigma1^2)) + w2 * exp(-(x-mu2)^2 / (2 sigma2^2))`.
///
/// The components are unnormalized bumps — amplitudes are the `w`s directly —
/// so with well-separated modes the global maximum value approaches
/// `max(w1, w2)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GmmOracle {
    pub w1: f64,
    pub w2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for GmmOracle {
    /// The reference landscape used throughout the tests: modes at 0 and 15
    /// with amplitudes 1 and 2.5 and widths 0.25 and 1.
    fn default() -> Self {
        GmmOracle {
            w1: 1.0,
            w2: 2.5,
            mu1: 0.0,
            mu2: 15.0,
            sigma1: 0.25,
            sigma2: 1.0,
        }
    }
}

impl GmmOracle {
    pub fn new(w1: f64, w2: f64, mu1: f64, mu2: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        let o = GmmOracle {
            w1,
            w2,
            mu1,
            mu2,
            sigma1,
            sigma2,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.w1,
            self.w2,
            self.mu1,
            self.mu2,
            self.sigma1,
            self.sigma2,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "GmmOracle parameters".into(),
            });
        }
        if self.w1 <= 0.0 || self.w2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mixture amplitudes must be positive, got ({}, {})",
                self.w1, self.w2
            )));
        }
        if self.sigma1 <= 0.0 || self.sigma2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mixture widths must be positive, got ({}, {})",
                self.sigma1, self.sigma2
            )));
        }
        if self.mu1 >= self.mu2 {
            return Err(Error::InvalidArgument(format!(
                "modes must satisfy mu1 < mu2, got ({}, {})",
                self.mu1, self.mu2
            )));
        }
        Ok(())
    }

    /// Landscape value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let d1 = x - self.mu1;
        let d2 = x - self.mu2;
        self.w1 * (-d1 * d1 / (2.0 * self.sigma1 * self.sigma1)).exp()
            + self.w2 * (-d2 * d2 / (2.0 * self.sigma2 * self.sigma2)).exp()
    }

    /// Analytic derivative `dy/dx`, used to polish the optimum.
    fn derivative(&self, x: f64) -> f64 {
        let d1 = x - self.mu1;
        let d2 = x - self.mu2;
        let s1 = self.sigma1 * self.sigma1;
        let s2 = self.sigma2 * self.sigma2;
        -self.w1 * d1 / s1 * (-d1 * d1 / (2.0 * s1)).exp()
            - self.w2 * d2 / s2 * (-d2 * d2 / (2.0 * s2)).exp()
    }

    /// Location and value of the global maximum.
    ///
    /// Dense grid scan over `[mu1 - 4 sigma1, mu2 + 4 sigma2]` with step
    /// `min(sigma1, sigma2) / 100`, then 60 bisection steps on the sign of the
    /// derivative around the best grid point. Ties in the scan resolve to the
    /// leftmost maximum.
    pub fn global_optimum(&self) -> (f64, f64) {
        let step = self.sigma1.min(self.sigma2) / 100.0;
        let lo = self.mu1 - 4.0 * self.sigma1;
        let hi = self.mu2 + 4.0 * self.sigma2;
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let mut best_x = lo;
        let mut best_y = self.eval(lo);
        for i in 1..n {
            let x = lo + i as f64 * step;
            let y = self.eval(x);
            if y > best_y {
                best_y = y;
                best_x = x;
            }
        }
        // Polish: the derivative crosses + -> - at an interior maximum.
        let (mut a, mut b) = (best_x - step, best_x + step);
        if self.derivative(a) > 0.0 && self.derivative(b) < 0.0 {
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if self.derivative(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let x = 0.5 * (a + b);
            (x, self.eval(x))
        } else {
            (best_x, best_y)
        }
    }
}

/// Exact lookup table from canonical design keys to property values;
/// unknown designs score 0.
#[derive(Debug, Clone)]
pub struct LookupOracle {
    map: HashMap<String, f64>,
}

/// Canonical key for a symbol sequence: indices joined by commas.
pub fn sequence_key(seq: &[u8]) -> String {
    let mut s = String::with_capacity(seq.len() * 3);
    for (i, &sym) in seq.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&sym.to_string());
    }
    s
}

/// Canonical key for a continuous design: coordinates quantized to six
/// decimal places. Negative zero is normalized so `-0.0` and `0.0` collide.
pub fn continuous_key(x: &[f64]) -> String {
    let mut s = String::with_capacity(x.len() * 10);
    for (i, &v) in x.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let v = if v == 0.0 { 0.0 } else { v }; // normalize -0.0
        s.push_str(&format!("{v:.6}"));
    }
    s
}

impl LookupOracle {
    /// Builds the table from a dataset. Duplicate designs must agree on their
    /// property value.
    pub fn from_dataset(d: &crate::data::Dataset) -> Result<Self> {
        let mut map = HashMap::with_capacity(d.len());
        for i in 0..d.len() {
            let key = match &d.designs {
                DesignBatch::Sequences { seqs, .. } => sequence_key(&seqs[i]),
                DesignBatch::Continuous(m) => continuous_key(m.row(i)),
            };
            let y = d.properties[i];
            if let Some(&prev) = map.get(&key) {
                if prev != y {
                    return Err(Error::InvalidArgument(format!(
                        "lookup table has conflicting values for design {key}: {prev} vs {y}"
                    )));
                }
            }
            map.insert(key, y);
        }
        Ok(LookupOracle { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Property of a sequence design, 0 if absent.
    pub fn eval_sequence(&self, seq: &[u8]) -> f64 {
        self.map.get(&sequence_key(seq)).copied().unwrap_or(0.0)
    }

    /// Property of a continuous design (6-decimal quantization), 0 if absent.
    pub fn eval_continuous(&self, x: &[f64]) -> f64 {
        self.map.get(&continuous_key(x)).copied().unwrap_or(0.0)
    }
}

/// Scores a flattened real-valued field `u` against a fixed reference `r`:
/// `y = -log( sum_i w_i (u_i - r_i)^2 / sum_i w_i + eps )` with `eps = 1e-12`.
/// A perfect match scores `-log(eps) ≈ 27.6`; larger mismatch scores lower.
#[derive(Debug, Clone)]
pub struct ReferenceFieldOracle {
    reference: Vec<f64>,
    weights: Vec<f64>,
    weight_sum: f64,
}

/// Floor added to the weighted mean squared mismatch before the log.
pub const REFERENCE_FIELD_EPS: f64 = 1e-12;

impl ReferenceFieldOracle {
    pub fn new(reference: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if reference.len() != weights.len() || reference.is_empty() {
            return Err(Error::shape(
                "reference field",
                format!("{} nonzero cells in both grids", reference.len().max(1)),
                format!("{} reference vs {} weights", reference.len(), weights.len()),
            ));
        }
        if reference.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "reference field grids".into(),
            });
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument(
                "reference-field weights must be nonnegative".into(),
            ));
        }
        let weight_sum: f64 = weights.iter().sum();
        if weight_sum <= 0.0 {
            return Err(Error::InvalidArgument(
                "reference-field weights must have positive sum".into(),
            ));
        }
        Ok(ReferenceFieldOracle {
            reference,
            weights,
            weight_sum,
        })
    }

    /// Number of field cells a design must supply.
    pub fn cells(&self) -> usize {
        self.reference.len()
    }

    pub fn eval(&self, field: &[f64]) -> Result<f64> {
        if field.len() != self.reference.len() {
            return Err(Error::shape(
                "reference field design",
                format!("{} cells", self.reference.len()),
                format!("{} cells", field.len()),
            ));
        }
        let mut acc = 0.0;
        for ((&u, &r), &w) in field.iter().zip(&self.reference).zip(&self.weights) {
            acc += w * (u - r) * (u - r);
        }
        Ok(-(acc / self.weight_sum + REFERENCE_FIELD_EPS).ln())
    }

    /// Loads a two-column CSV (`reference,weight`, header required, one line
    /// per grid cell in row-major order).
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(csv_to_error)?;
        {
            let headers = reader.headers().map_err(csv_to_error)?;
            let cols: Vec<&str> = headers.iter().map(str::trim).collect();
            if cols != ["reference", "weight"] {
                return Err(Error::CsvParse {
                    line: 1,
                    message: format!("expected header 'reference,weight', got {cols:?}"),
                });
            }
        }
        let mut reference = Vec::new();
        let mut weights = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_to_error)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 2 {
                return Err(Error::CsvParse {
                    line,
                    message: format!("expected 2 fields, got {}", record.len()),
                });
            }
            reference.push(parse_field(&record[0], line, "reference")?);
            weights.push(parse_field(&record[1], line, "weight")?);
        }
        ReferenceFieldOracle::new(reference, weights)
    }
}

pub(crate) fn csv_to_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            // Preserve io errors (file not found etc.) as such.
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            }
        }
        _ => Error::CsvParse {
            line,
            message: e.to_string(),
        },
    }
}

pub(crate) fn parse_field(raw: &str, line: u64, what: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::CsvParse {
        line,
        message: format!("cannot parse {what} value {raw:?} as a number"),
    })
}

/// A scoring function for whole design batches; the enum keeps run
/// configuration serializable and the optimization loop monomorphic.
#[derive(Debug, Clone)]
pub enum Oracle {
    Gmm(GmmOracle),
    Lookup(LookupOracle),
    ReferenceField(ReferenceFieldOracle),
}

impl Oracle {
    /// Scores every design in the batch. Shape requirements depend on the
    /// oracle: the mixture landscape wants 1-d continuous designs, the
    /// reference field wants `cells()`-dimensional ones, and the lookup table
    /// accepts both kinds.
    pub fn score_batch(&self, designs: &DesignBatch) -> Result<Vec<f64>> {
        match (self, designs) {
            (Oracle::Gmm(o), DesignBatch::Continuous(m)) => {
                if m.cols() != 1 {
                    return Err(Error::shape(
                        "mixture-landscape designs",
                        "batch x 1",
                        format!("{}x{}", m.rows(), m.cols()),
                    ));
                }
                Ok((0..m.rows()).map(|i| o.eval(m.row(i)[0])).collect())
            }
            (Oracle::Gmm(_), DesignBatch::Sequences { .. }) => Err(Error::InvalidArgument(
                "mixture landscape scores continuous designs, got sequences".into(),
            )),
            (Oracle::Lookup(o), DesignBatch::Sequences { seqs, .. }) => {
                Ok(seqs.iter().map(|s| o.eval_sequence(s)).collect())
            }
            (Oracle::Lookup(o), DesignBatch::Continuous(m)) => {
                Ok((0..m.rows()).map(|i| o.eval_continuous(m.row(i))).collect())
            }
            (Oracle::ReferenceField(o), DesignBatch::Continuous(m)) => {
                (0..m.rows()).map(|i| o.eval(m.row(i))).collect()
            }
            (Oracle::ReferenceField(_), DesignBatch::Sequences { .. }) => {
                Err(Error::InvalidArgument(
                    "reference field scores continuous designs, got sequences".into(),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmm_eval_reference_points() {
        let o = GmmOracle::default();
        // At the second mode the first bump has decayed to exp(-1800).
        assert!((o.eval(15.0) - 2.5).abs() < 1e-300);
        // At the first mode the second bump contributes exp(-112.5) * 2.5.
        assert!((o.eval(0.0) - 1.0).abs() < 1e-12);
        // Midpoint: both bumps negligible.
        assert!(o.eval(7.5) < 1e-10);
    }

    #[test]
    fn gmm_optimum_reference_landscape() {
        let (x, y) = GmmOracle::default().global_optimum();
        assert!((x - 15.0).abs() < 1e-6, "x* = {x}");
        assert!((y - 2.5).abs() < 1e-6, "y* = {y}");
    }

    #[test]
    fn gmm_optimum_equal_modes() {
        // Symmetric landscape: two maxima of equal height w = 1; either is a
        // valid answer and its value must match the amplitude almost exactly.
        let o = GmmOracle::new(1.0, 1.0, 0.0, 10.0, 1.0, 1.0).unwrap();
        let (x, y) = o.global_optimum();
        assert!((y - 1.0).abs() <= 1e-9, "y* = {y}");
        assert!((x - 0.0).abs() < 1e-6 || (x - 10.0).abs() < 1e-6, "x* = {x}");
    }

    #[test]
    fn gmm_validation() {
        assert!(GmmOracle::new(1.0, 2.5, 0.0, 15.0, 0.25, 1.0).is_ok());
        assert!(GmmOracle::new(0.0, 2.5, 0.0, 15.0, 0.25, 1.0).is_err());
        assert!(GmmOracle::new(1.0, 2.5, 0.0, 15.0, -1.0, 1.0).is_err());
        assert!(GmmOracle::new(1.0, 2.5, 15.0, 0.0, 0.25, 1.0).is_err());
    }

    #[test]
    fn lookup_hits_and_misses() {
        let d = crate::data::Dataset::from_sequences(
            "t",
            vec![vec![0, 1, 2], vec![3, 4, 5]],
            20,
            vec![0.5, 0.9],
        )
        .unwrap();
        let o = LookupOracle::from_dataset(&d).unwrap();
        assert_eq!(o.eval_sequence(&[0, 1, 2]), 0.5);
        assert_eq!(o.eval_sequence(&[3, 4, 5]), 0.9);
        assert_eq!(o.eval_sequence(&[0, 1, 3]), 0.0, "miss scores zero");
    }

    #[test]
    fn continuous_keys_quantize_and_normalize_zero() {
        assert_eq!(continuous_key(&[0.1234564]), continuous_key(&[0.1234561]));
        assert_ne!(continuous_key(&[0.123457]), continuous_key(&[0.123456]));
        assert_eq!(continuous_key(&[-0.0]), continuous_key(&[0.0]));
    }

    #[test]
    fn reference_field_uniform_weights() {
        // 2x2 grid, uniform weights, squared errors (0, 0, 1, 1):
        // wMSE = 0.5, score = -ln(0.5 + 1e-12).
        let o =
            ReferenceFieldOracle::new(vec![0.0, 0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let y = o.eval(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((y - (-(0.5f64 + 1e-12).ln())).abs() < 1e-12);
        assert!((y - std::f64::consts::LN_2).abs() < 1e-3);
        // perfect match hits the eps floor
        let perfect = o.eval(&[0.0; 4]).unwrap();
        assert!((perfect - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn reference_field_validation() {
        assert!(ReferenceFieldOracle::new(vec![0.0], vec![1.0, 1.0]).is_err());
        assert!(ReferenceFieldOracle::new(vec![0.0], vec![-1.0]).is_err());
        assert!(ReferenceFieldOracle::new(vec![0.0], vec![0.0]).is_err());
        let o = ReferenceFieldOracle::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(o.eval(&[0.0]).is_err(), "cell-count mismatch");
    }
}
