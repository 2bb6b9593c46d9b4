//! Text formats for benchmark inputs: one integer per line for sort inputs;
//! `rows cols` followed by row-major integers for matrices.

use thiserror::Error;

use crate::memory::Word;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("matrix: {0}")]
    Shape(String),
}

pub fn parse_values(text: &str) -> Result<Vec<Word>, DataError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(t.parse().map_err(|e| DataError::Parse {
            line: i + 1,
            message: format!("{t:?}: {e}"),
        })?);
    }
    Ok(out)
}

pub fn format_values(values: &[Word]) -> String {
    let mut s = String::with_capacity(values.len() * 8);
    for v in values {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

/// Returns `(rows, cols, row-major values)`.
pub fn parse_matrix(text: &str) -> Result<(u64, u64, Vec<Word>), DataError> {
    let mut tokens = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)));
    let mut next = |what: &str| -> Result<u64, DataError> {
        let (line, t) = tokens
            .next()
            .ok_or_else(|| DataError::Shape(format!("missing {what}")))?;
        t.parse().map_err(|e| DataError::Parse {
            line,
            message: format!("{what} {t:?}: {e}"),
        })
    };
    let rows = next("row count")?;
    let cols = next("column count")?;
    let cells = rows
        .checked_mul(cols)
        .ok_or_else(|| DataError::Shape("dimensions overflow".into()))?;
    let mut vals = Vec::with_capacity(cells as usize);
    for _ in 0..cells {
        vals.push(next("entry")?);
    }
    if tokens.next().is_some() {
        return Err(DataError::Shape(format!("more than {rows}×{cols} entries")));
    }
    Ok((rows, cols, vals))
}

pub fn format_matrix(rows: u64, cols: u64, vals: &[Word]) -> String {
    let mut s = format!("{rows} {cols}\n");
    for r in 0..rows as usize {
        let row: Vec<String> = vals[r * cols as usize..(r + 1) * cols as usize]
            .iter()
            .map(|v| v.to_string())
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}
