use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::CliError;

pub struct Table {
    pub headers: Vec<String>,
    /// Column-major values.
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn index(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("column '{name}' not found")))
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.columns[j])
    }

    pub fn matrix(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows(), cols.len(), |i, j| self.columns[cols[j]][i])
    }
}

/// Numeric CSV with a header row. Empty or non-finite cells are rejected.
pub fn read_csv(path: &str) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Io(format!("{path}: {e}")),
            _ => CliError::Parse(format!("{path}: {e}")),
        })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Parse(format!("{path}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().any(|h| h.is_empty()) {
        return Err(CliError::Parse(format!("{path}: header row has an empty name")));
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Parse(format!("{path}: {e}")))?;
        for (j, cell) in rec.iter().enumerate() {
            let line = r + 2;
            if cell.is_empty() {
                return Err(CliError::Parse(format!(
                    "{path}: missing value at line {line}, column '{}'",
                    headers[j]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Parse(format!("{path}: non-numeric '{cell}' at line {line}, column '{}'", headers[j]))
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse(format!(
                    "{path}: non-finite value at line {line}, column '{}'",
                    headers[j]
                )));
            }
            columns[j].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(CliError::Parse(format!("{path}: no data rows")));
    }
    Ok(Table { headers, columns })
}

/// One group per non-empty line of comma-separated zero-based indices.
pub fn read_groups(path: &str) -> Result<Vec<Vec<usize>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    parse_groups(&text).map_err(|m| CliError::Parse(format!("{path}: {m}")))
}

pub fn parse_groups(text: &str) -> Result<Vec<Vec<usize>>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            l.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| format!("line {}: invalid index '{}'", ln + 1, t.trim()))
                })
                .collect()
        })
        .collect()
}

pub fn write_output(path: Option<&str>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("{p}: {e}"))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.write_all(b"\n"))
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_parse() {
        assert_eq!(parse_groups("0,1\n\n2\n").unwrap(), vec![vec![0, 1], vec![2]]);
        assert!(parse_groups("0,a").is_err());
    }
}
