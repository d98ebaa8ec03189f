use std::path::Path;

use crate::boosting::Dataset;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Reads comma-separated numeric rows whose last column is an integer class
/// label. A first row with any non-numeric cell is taken as a header.
/// `columns` picks feature columns by index; `None` keeps all of them.
pub fn load_csv_labeled(path: &Path, columns: Option<&[usize]>) -> Result<Dataset> {
    let name = path.display().to_string();
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(::csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(&name, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::format(format!("{name} row {}", r + 1), e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
        if r == 0 && parsed.iter().any(Option::is_none) {
            continue;
        }
        if let Some(c) = parsed.iter().position(Option::is_none) {
            return Err(Error::format(
                format!("{name} row {} col {}", r + 1, c + 1),
                format!("non-numeric cell {:?}", &record[c]),
            ));
        }
        let values: Vec<f64> = parsed.into_iter().flatten().collect();
        if values.len() < 2 {
            return Err(Error::format(
                format!("{name} row {}", r + 1),
                "need features and a label",
            ));
        }
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(Error::format(format!("{name} row {}", r + 1), "ragged row"));
        }
        let label = values[values.len() - 1];
        if label < 0.0 || label.fract() != 0.0 {
            return Err(Error::format(
                format!("{name} row {} col {}", r + 1, values.len()),
                format!("label {label} is not a class index"),
            ));
        }
        let features = &values[..values.len() - 1];
        let picked = match columns {
            None => features.to_vec(),
            Some(cols) => cols
                .iter()
                .map(|&c| {
                    features.get(c).copied().ok_or_else(|| {
                        Error::invalid(format!(
                            "feature column {c} out of range ({} columns)",
                            features.len()
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        rows.push(picked);
        labels.push(label as usize);
    }
    if rows.is_empty() {
        return Err(Error::format(name, "no data rows"));
    }
    if rows[0].is_empty() {
        return Err(Error::invalid("no feature columns selected"));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Tensor::from_rows(&rows)?, labels, n_classes)
}
