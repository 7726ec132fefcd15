use std::fs;
use std::path::{Path, PathBuf};

use mtree_core::corpus::numeric_token_value;
use num::BigRational;

use crate::error::CliError;

/// Rational from CLI text: integer, decimal, percent, fraction, with an
/// optional leading minus.
pub fn parse_rational(s: &str) -> Result<BigRational, CliError> {
    let t = s.trim();
    let (t, neg) = match t.strip_prefix('-') {
        Some(rest) => (rest, true),
        None => (t, false),
    };
    let v = numeric_token_value(t)
        .ok_or_else(|| CliError::Input(format!("'{s}' is not a number")))?;
    Ok(if neg { -v } else { v })
}

/// Comma-separated rationals; empty input is an empty list.
pub fn parse_rational_list(s: &str) -> Result<Vec<BigRational>, CliError> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',').map(parse_rational).collect()
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Write to `out` when given, stdout otherwise.
pub fn emit(out: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

pub fn percent(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}
