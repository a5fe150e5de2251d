//! Synthetic dataset generators for the benchmark suites.

use std::collections::HashSet;

use super::imbalance::round_half_up;
use super::{Dataset, DesignBatch};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle::GmmOracle;
use crate::rng::Rng;

/// Where the scarce high-property points are sampled relative to the second
/// mode: uniformly on `[mu2 + start * sigma2, mu2 + end * sigma2)`.
///
/// Larger offsets put the entire high-property sample further from the
/// optimum, which is the hard case for offline optimization.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplingInterval {
    pub start: f64,
    pub end: f64,
}

impl Default for SamplingInterval {
    fn default() -> Self {
        SamplingInterval {
            start: 0.5,
            end: 1.0,
        }
    }
}

impl SamplingInterval {
    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite()) {
            return Err(Error::NonFinite {
                context: "sampling interval".into(),
            });
        }
        if self.start >= self.end {
            return Err(Error::InvalidArgument(format!(
                "sampling interval must satisfy start < end, got ({}, {})",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Samples the two-cloud mixture-landscape trainset: `n` points from a
/// Gaussian cloud `N(mu1, 0.6)` around the first mode and `round(rho * n)`
/// points uniform on the interval selected by `interval` beyond the second
/// mode, each scored by the oracle. The result keeps the low cloud first,
/// then the scarce high block.
pub fn sample_gmm_trainset(
    oracle: &GmmOracle,
    n: usize,
    rho: f64,
    interval: SamplingInterval,
    rng: &mut Rng,
) -> Result<Dataset> {
    oracle.validate()?;
    interval.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("trainset size n must be >= 1".into()));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "imbalance ratio must be positive, got {rho}"
        )));
    }
    let n_high = round_half_up(rho * n as f64);
    if n_high == 0 {
        return Err(Error::InvalidArgument(format!(
            "rho * n = {} rounds to zero high-property points",
            rho * n as f64
        )));
    }

    // Standard deviation of the low cloud around the first mode.
    const LOW_CLOUD_STD: f64 = 0.6;
    let mut xs = Vec::with_capacity(n + n_high);
    for _ in 0..n {
        xs.push(rng.normal_scaled(oracle.mu1, LOW_CLOUD_STD));
    }
    let lo = oracle.mu2 + interval.start * oracle.sigma2;
    let hi = oracle.mu2 + interval.end * oracle.sigma2;
    for _ in 0..n_high {
        xs.push(rng.uniform_range(lo, hi));
    }

    let properties: Vec<f64> = xs.iter().map(|&x| oracle.eval(x)).collect();
    let designs = Matrix::from_vec(xs.len(), 1, xs)?;
    Dataset::from_continuous("gmm-trainset", designs, properties)
}

/// The short marker appended to every sequence by
/// [`semi_synthetic_transform`]; high-property rows all receive `h_tag`,
/// low-property rows receive i.i.d. uniform random tags of the same length.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TagSpec {
    pub h_tag: Vec<u8>,
}

impl TagSpec {
    pub fn validate(&self, alphabet: usize) -> Result<()> {
        if self.h_tag.is_empty() {
            return Err(Error::InvalidArgument("tag must be non-empty".into()));
        }
        if let Some(&sym) = self.h_tag.iter().find(|&&s| s as usize >= alphabet) {
            return Err(Error::InvalidArgument(format!(
                "tag symbol {sym} exceeds alphabet size {alphabet}"
            )));
        }
        Ok(())
    }
}

/// How to split a dataset into high/low property sets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitThreshold {
    /// Rows with property strictly above this value are "high".
    Absolute(f64),
    /// Rows strictly above this percentile of the property distribution.
    Percentile(f64),
}

/// Appends a tag block to every sequence: rows with property above the
/// threshold get the fixed `h_tag`, the rest get independent uniform random
/// tags. This plants an exact sequence motif that co-occurs with high
/// property, so a search model can in principle discover it. Properties are
/// unchanged; both sides of the split must be non-empty.
pub fn semi_synthetic_transform(
    d: &Dataset,
    tag: &TagSpec,
    threshold: SplitThreshold,
    rng: &mut Rng,
) -> Result<Dataset> {
    let (seqs, alphabet) = match &d.designs {
        DesignBatch::Sequences { seqs, alphabet } => (seqs, *alphabet),
        DesignBatch::Continuous(_) => {
            return Err(Error::InvalidArgument(
                "semi-synthetic tagging applies to sequence datasets".into(),
            ))
        }
    };
    tag.validate(alphabet)?;
    let cut = match threshold {
        SplitThreshold::Absolute(v) => v,
        SplitThreshold::Percentile(p) => crate::stats::percentile(&d.properties, p)?,
    };
    let n_high = d.properties.iter().filter(|&&y| y > cut).count();
    if n_high == 0 || n_high == d.len() {
        return Err(Error::InvalidArgument(format!(
            "threshold {cut} must split the dataset into two non-empty sets \
             ({} of {} rows above)",
            n_high,
            d.len()
        )));
    }

    let tagged: Vec<Vec<u8>> = seqs
        .iter()
        .zip(&d.properties)
        .map(|(seq, &y)| {
            let mut out = seq.clone();
            if y > cut {
                out.extend_from_slice(&tag.h_tag);
            } else {
                out.extend((0..tag.h_tag.len()).map(|_| rng.below(alphabet) as u8));
            }
            out
        })
        .collect();
    Dataset::from_sequences(
        &format!("{}/tagged", d.name),
        tagged,
        alphabet,
        d.properties.clone(),
    )
}

/// Generates `n` distinct random sequences of length `seq_len` over an
/// `alphabet`-symbol alphabet, with a planted additive property: a hidden
/// per-(position, symbol) score table is drawn once, a sequence's raw score
/// is the mean of its symbols' entries, and the scores are rescaled to span
/// `[0, 1]` over the dataset.
pub fn synthetic_sequence_dataset(
    n: usize,
    seq_len: usize,
    alphabet: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    if seq_len == 0 || alphabet == 0 || alphabet > u8::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "invalid sequence shape: length {seq_len}, alphabet {alphabet}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 sequences for a normalizable property range".into(),
        ));
    }
    // Distinctness must be possible (alphabet^seq_len unique sequences exist).
    let capacity = (alphabet as f64).powi(seq_len as i32);
    if (n as f64) > capacity {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} distinct sequences from a space of {capacity}"
        )));
    }

    let table: Vec<Vec<f64>> = (0..seq_len)
        .map(|_| (0..alphabet).map(|_| rng.uniform()).collect())
        .collect();

    let mut seqs: Vec<Vec<u8>> = Vec::with_capacity(n);
    let mut seen = HashSet::with_capacity(n);
    while seqs.len() < n {
        let s: Vec<u8> = (0..seq_len).map(|_| rng.below(alphabet) as u8).collect();
        if seen.insert(s.clone()) {
            seqs.push(s);
        }
    }

    let raw: Vec<f64> = seqs
        .iter()
        .map(|s| {
            s.iter()
                .enumerate()
                .map(|(p, &sym)| table[p][sym as usize])
                .sum::<f64>()
                / seq_len as f64
        })
        .collect();
    let properties = super::normalize_properties(&raw)?;
    Dataset::from_sequences("synthetic-sequences", seqs, alphabet, properties)
}
