//! Delimited text matrices: comma or whitespace separated, optional header.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delimiter {
    Comma,
    Whitespace,
}

impl Delimiter {
    fn split(self, line: &str) -> Vec<&str> {
        match self {
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: DMatrix<f64>,
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Input(format!("{}: not UTF-8 text", path.display())))?;
    parse_table(&text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses a numeric table. Lines are numbered from 1 and columns from 1 in
/// diagnostics; blank lines are skipped. The first line is a header when any
/// of its fields is not a number.
pub fn parse_table(text: &str) -> CliResult<Table> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let Some(&(_, first)) = lines.first() else {
        return Err(CliError::Input("file has no data rows".into()));
    };
    let delim = if first.contains(',') {
        Delimiter::Comma
    } else {
        Delimiter::Whitespace
    };
    let first_fields = delim.split(first);
    let header = first_fields.iter().any(|f| f.parse::<f64>().is_err());
    let width = first_fields.len();
    let body = if header { &lines[1..] } else { &lines[..] };
    if body.is_empty() {
        return Err(CliError::Input("file has no data rows".into()));
    }
    let mut values = Vec::with_capacity(body.len() * width);
    for &(lineno, line) in body {
        let fields = delim.split(line);
        if fields.len() != width {
            return Err(CliError::Input(format!(
                "row {lineno}: expected {width} fields, found {}",
                fields.len()
            )));
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                CliError::Input(format!(
                    "row {lineno}, column {}: not a number: '{f}'",
                    j + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "row {lineno}, column {}: non-finite value '{f}'",
                    j + 1
                )));
            }
            values.push(v);
        }
    }
    Ok(Table {
        header: header.then(|| first_fields.iter().map(|s| s.to_string()).collect()),
        data: DMatrix::from_row_slice(body.len(), width, &values),
    })
}

/// Comma-separated rows, shortest round-trip float formatting.
pub fn matrix_csv(m: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}
