use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::CliError;

/// Response, covariate names and rows read from a headered CSV file.
pub struct Table {
    pub covariate_names: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

pub fn read_table(path: &Path, response: &str) -> Result<Table, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| CliError::Data(format!("no column named '{response}' in {}", path.display())))?;
    let covariate_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut covariates = Vec::new();
    let mut response_values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(covariate_names.len());
        for (i, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!("{}: row {}: non-numeric cell '{cell}'", path.display(), line + 2))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{}: row {}: non-finite value", path.display(), line + 2)));
            }
            if i == y_col {
                response_values.push(v);
            } else {
                row.push(v);
            }
        }
        covariates.push(row);
    }
    if response_values.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(Table { covariate_names, covariates, response: response_values })
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// Writes a CSV file from a header and rows of already-formatted cells.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(r).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(f, "{text}").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Shortest representation that parses back to the same f64.
pub fn num(v: f64) -> String {
    format!("{v}")
}
