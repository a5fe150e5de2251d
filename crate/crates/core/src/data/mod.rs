//! Datasets of candidate designs and their measured properties.
//!
//! A design is either a continuous vector or a fixed-length symbol sequence;
//! a [`Dataset`] pairs a homogeneous batch of designs with one property value
//! per design. Submodules build the benchmark trainsets: [`imbalance`] carves
//! low/high property subsets out of a dataset, [`synth`] generates synthetic
//! mixture-landscape and sequence data, and [`csvio`] reads datasets from
//! disk.

pub mod csvio;
pub mod imbalance;
pub mod synth;

pub use csvio::load_dataset_csv;
pub use imbalance::{build_imbalanced_subset, ImbalanceSpec, RangeKind, RangeSpec};
pub use synth::{
    sample_gmm_trainset, semi_synthetic_transform, synthetic_sequence_dataset, SamplingInterval,
    SplitThreshold, TagSpec,
};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// The amino-acid alphabet used when sequence datasets are read from CSV.
pub const PROTEIN_ALPHABET: &str = "ACDEFGHIKLMNPQRSTVWY";

/// A homogeneous batch of designs.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignBatch {
    /// `[n, d]` real-valued design matrix.
    Continuous(Matrix),
    /// `n` symbol sequences of equal length over `{0, .., alphabet-1}`.
    Sequences { seqs: Vec<Vec<u8>>, alphabet: usize },
}

impl DesignBatch {
    pub fn len(&self) -> usize {
        match self {
            DesignBatch::Continuous(m) => m.rows(),
            DesignBatch::Sequences { seqs, .. } => seqs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Width of the model-input encoding: `d` for continuous designs,
    /// `seq_len * alphabet` for one-hot encoded sequences.
    pub fn model_dim(&self) -> usize {
        match self {
            DesignBatch::Continuous(m) => m.cols(),
            DesignBatch::Sequences { seqs, alphabet } => {
                seqs.first().map_or(0, |s| s.len()) * alphabet
            }
        }
    }

    /// Encodes the batch as a dense matrix for the generative model:
    /// continuous designs pass through, sequences are one-hot encoded.
    pub fn to_model_input(&self) -> Result<Matrix> {
        match self {
            DesignBatch::Continuous(m) => Ok(m.clone()),
            DesignBatch::Sequences { seqs, alphabet } => one_hot_encode(seqs, *alphabet),
        }
    }

    /// New batch containing the rows at `indices` (in order).
    pub fn gather(&self, indices: &[usize]) -> DesignBatch {
        match self {
            DesignBatch::Continuous(m) => DesignBatch::Continuous(m.gather_rows(indices)),
            DesignBatch::Sequences { seqs, alphabet } => DesignBatch::Sequences {
                seqs: indices.iter().map(|&i| seqs[i].clone()).collect(),
                alphabet: *alphabet,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DesignBatch::Continuous(m) => m.check_finite("continuous designs"),
            DesignBatch::Sequences { seqs, alphabet } => {
                if *alphabet == 0 || *alphabet > u8::MAX as usize {
                    return Err(Error::InvalidArgument(format!(
                        "alphabet size {alphabet} out of range"
                    )));
                }
                let len = seqs.first().map_or(0, |s| s.len());
                for (i, s) in seqs.iter().enumerate() {
                    if s.len() != len {
                        return Err(Error::shape(
                            "sequence batch",
                            format!("length {len}"),
                            format!("length {} at row {i}", s.len()),
                        ));
                    }
                    if let Some(&sym) = s.iter().find(|&&sym| sym as usize >= *alphabet) {
                        return Err(Error::InvalidArgument(format!(
                            "symbol {sym} at row {i} exceeds alphabet size {alphabet}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Designs plus one finite property value per design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub designs: DesignBatch,
    pub properties: Vec<f64>,
}

impl Dataset {
    pub fn new(name: &str, designs: DesignBatch, properties: Vec<f64>) -> Result<Self> {
        designs.validate()?;
        if designs.len() != properties.len() {
            return Err(Error::shape(
                "dataset",
                format!("{} designs = properties", designs.len()),
                format!("{} properties", properties.len()),
            ));
        }
        if properties.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("properties of dataset {name}"),
            });
        }
        Ok(Dataset {
            name: name.to_string(),
            designs,
            properties,
        })
    }

    pub fn from_continuous(name: &str, designs: Matrix, properties: Vec<f64>) -> Result<Self> {
        Dataset::new(name, DesignBatch::Continuous(designs), properties)
    }

    pub fn from_sequences(
        name: &str,
        seqs: Vec<Vec<u8>>,
        alphabet: usize,
        properties: Vec<f64>,
    ) -> Result<Self> {
        Dataset::new(name, DesignBatch::Sequences { seqs, alphabet }, properties)
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    /// Sub-dataset at `indices` (in order, repeats allowed).
    pub fn gather(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            designs: self.designs.gather(indices),
            properties: indices.iter().map(|&i| self.properties[i]).collect(),
        }
    }
}

/// Rescales properties affinely onto the closed interval `[0, 1]`.
/// Errors on an empty or constant vector (the scale would be undefined).
pub fn normalize_properties(y: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::EmptySelection("normalize of empty properties".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "properties to normalize".into(),
        });
    }
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in y {
        min = min.min(v);
        max = max.max(v);
    }
    if min == max {
        return Err(Error::InvalidArgument(format!(
            "cannot normalize constant properties (all equal to {min})"
        )));
    }
    let scale = max - min;
    Ok(y.iter().map(|&v| (v - min) / scale).collect())
}

/// One-hot encodes sequences into a `[n, len * alphabet]` matrix; position `p`
/// symbol `s` sets column `p * alphabet + s` to 1.
pub fn one_hot_encode(seqs: &[Vec<u8>], alphabet: usize) -> Result<Matrix> {
    let len = seqs.first().map_or(0, |s| s.len());
    let mut out = Matrix::zeros(seqs.len(), len * alphabet);
    for (i, seq) in seqs.iter().enumerate() {
        if seq.len() != len {
            return Err(Error::shape(
                "one_hot_encode",
                format!("sequence length {len}"),
                format!("length {} at row {i}", seq.len()),
            ));
        }
        let row = out.row_mut(i);
        for (p, &sym) in seq.iter().enumerate() {
            if sym as usize >= alphabet {
                return Err(Error::InvalidArgument(format!(
                    "symbol {sym} at row {i} position {p} exceeds alphabet size {alphabet}"
                )));
            }
            row[p * alphabet + sym as usize] = 1.0;
        }
    }
    Ok(out)
}

/// Inverse of [`one_hot_encode`]. Strict: every `alphabet`-wide block must
/// contain exactly one `1.0` and zeros elsewhere, so accidental use on soft
/// model outputs fails loudly instead of silently rounding.
pub fn one_hot_decode(m: &Matrix, alphabet: usize) -> Result<Vec<Vec<u8>>> {
    if alphabet == 0 || !m.cols().is_multiple_of(alphabet) {
        return Err(Error::shape(
            "one_hot_decode",
            format!("columns divisible by alphabet {alphabet}"),
            format!("{} columns", m.cols()),
        ));
    }
    let len = m.cols() / alphabet;
    let mut out = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = m.row(i);
        let mut seq = Vec::with_capacity(len);
        for p in 0..len {
            let block = &row[p * alphabet..(p + 1) * alphabet];
            let mut hot = None;
            for (s, &v) in block.iter().enumerate() {
                if v == 1.0 {
                    if hot.is_some() {
                        return Err(Error::InvalidArgument(format!(
                            "row {i} position {p} has multiple hot entries"
                        )));
                    }
                    hot = Some(s as u8);
                } else if v != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "row {i} position {p} has non-binary entry {v}"
                    )));
                }
            }
            match hot {
                Some(s) => seq.push(s),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "row {i} position {p} has no hot entry"
                    )))
                }
            }
        }
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_basic_and_errors() {
        assert_eq!(
            normalize_properties(&[2.0, 3.0, 4.0]).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert!(normalize_properties(&[]).is_err());
        assert!(normalize_properties(&[1.0, 1.0]).is_err());
        assert!(normalize_properties(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn normalize_is_idempotent_on_unit_range() {
        let y = vec![0.0, 0.25, 1.0];
        assert_eq!(normalize_properties(&y).unwrap(), y);
    }

    #[test]
    fn one_hot_round_trip() {
        let seqs = vec![vec![0u8, 3, 1], vec![2, 2, 0]];
        let m = one_hot_encode(&seqs, 4).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 12);
        for i in 0..m.rows() {
            assert_eq!(m.row(i).iter().sum::<f64>(), 3.0, "one hot per position");
        }
        assert_eq!(one_hot_decode(&m, 4).unwrap(), seqs);
    }

    #[test]
    fn one_hot_decode_is_strict() {
        let mut m = one_hot_encode(&[vec![1u8, 0]], 2).unwrap();
        *m.at_mut(0, 0) = 0.4; // soften a cold entry
        assert!(one_hot_decode(&m, 2).is_err());
        let m = Matrix::zeros(1, 4);
        assert!(one_hot_decode(&m, 2).is_err(), "all-cold block");
        let m = Matrix::from_vec(1, 4, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(one_hot_decode(&m, 2).is_err(), "doubly-hot block");
    }

    #[test]
    fn dataset_validation() {
        let m = Matrix::zeros(3, 2);
        assert!(Dataset::from_continuous("d", m.clone(), vec![0.0; 3]).is_ok());
        assert!(Dataset::from_continuous("d", m.clone(), vec![0.0; 2]).is_err());
        assert!(Dataset::from_continuous("d", m, vec![0.0, f64::INFINITY, 0.0]).is_err());
        assert!(
            Dataset::from_sequences("d", vec![vec![0, 1], vec![1]], 4, vec![0.0, 0.0]).is_err(),
            "ragged sequences"
        );
        assert!(
            Dataset::from_sequences("d", vec![vec![0, 9]], 4, vec![0.0]).is_err(),
            "symbol out of alphabet"
        );
    }

    #[test]
    fn gather_picks_rows_in_order() {
        let m = Matrix::from_vec(3, 1, vec![10.0, 20.0, 30.0]).unwrap();
        let d = Dataset::from_continuous("d", m, vec![1.0, 2.0, 3.0]).unwrap();
        let g = d.gather(&[2, 0]);
        assert_eq!(g.properties, vec![3.0, 1.0]);
        match g.designs {
            DesignBatch::Continuous(m) => assert_eq!(m.data(), &[30.0, 10.0]),
            _ => unreachable!(),
        }
    }
}
