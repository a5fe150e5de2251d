//! Dataset CSV loading.
//!
//! Two schemas, distinguished by the (required) header row:
//!
//! - `sequence,property` — one symbol string per row over the amino-acid
//!   alphabet [`super::PROTEIN_ALPHABET`];
//! - `x0,x1,...,x{d-1},property` — continuous designs of dimension `d`.
//!
//! Values are comma-separated UTF-8 with `.` as the decimal point. All errors
//! carry 1-based line numbers (the header is line 1).

use std::path::Path;

use super::{Dataset, DesignBatch, PROTEIN_ALPHABET};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle::{csv_to_error, parse_field};

/// Loads a dataset from `path`; the dataset name is the file stem.
pub fn load_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_to_error)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_to_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    if header == ["sequence", "property"] {
        load_sequences(&mut reader, &name)
    } else if is_continuous_header(&header) {
        load_continuous(&mut reader, &name, header.len() - 1)
    } else {
        Err(Error::CsvParse {
            line: 1,
            message: format!(
                "unrecognized header {header:?}; expected 'sequence,property' or 'x0,..,x{{d-1}},property'"
            ),
        })
    }
}

fn is_continuous_header(header: &[String]) -> bool {
    if header.len() < 2 || header.last().map(String::as_str) != Some("property") {
        return false;
    }
    header[..header.len() - 1]
        .iter()
        .enumerate()
        .all(|(i, h)| *h == format!("x{i}"))
}

fn load_sequences(reader: &mut csv::Reader<std::fs::File>, name: &str) -> Result<Dataset> {
    let mut seqs: Vec<Vec<u8>> = Vec::new();
    let mut properties = Vec::new();
    let mut expected_len = None;
    for record in reader.records() {
        let record = record.map_err(csv_to_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::CsvParse {
                line,
                message: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let raw = record[0].trim();
        if raw.is_empty() {
            return Err(Error::CsvParse {
                line,
                message: "empty sequence".into(),
            });
        }
        let mut seq = Vec::with_capacity(raw.len());
        for c in raw.chars() {
            match PROTEIN_ALPHABET.find(c) {
                Some(idx) => seq.push(idx as u8),
                None => {
                    return Err(Error::CsvParse {
                        line,
                        message: format!(
                            "symbol {c:?} is not in the alphabet {PROTEIN_ALPHABET:?}"
                        ),
                    })
                }
            }
        }
        match expected_len {
            None => expected_len = Some(seq.len()),
            Some(l) if l != seq.len() => {
                return Err(Error::CsvParse {
                    line,
                    message: format!("sequence length {} differs from first row's {l}", seq.len()),
                })
            }
            _ => {}
        }
        properties.push(parse_field(&record[1], line, "property")?);
        seqs.push(seq);
    }
    if seqs.is_empty() {
        return Err(Error::EmptySelection(format!(
            "dataset {name} has no data rows"
        )));
    }
    Dataset::from_sequences(name, seqs, PROTEIN_ALPHABET.len(), properties)
}

fn load_continuous(
    reader: &mut csv::Reader<std::fs::File>,
    name: &str,
    dim: usize,
) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut properties = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_to_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim + 1 {
            return Err(Error::CsvParse {
                line,
                message: format!("expected {} fields, got {}", dim + 1, record.len()),
            });
        }
        for i in 0..dim {
            data.push(parse_field(&record[i], line, &format!("x{i}"))?);
        }
        properties.push(parse_field(&record[dim], line, "property")?);
    }
    if properties.is_empty() {
        return Err(Error::EmptySelection(format!(
            "dataset {name} has no data rows"
        )));
    }
    let designs = Matrix::from_vec(properties.len(), dim, data)?;
    Dataset::new(name, DesignBatch::Continuous(designs), properties)
}
