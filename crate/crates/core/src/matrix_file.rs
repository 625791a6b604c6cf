//! Plain-text matrix files.
//!
//! ```text
//! # matrix m n
//! v11,v12,...,v1n
//! ...
//! vm1,vm2,...,vmn
//! ```
//!
//! Values are written in scientific notation with 17 significant digits,
//! which is enough for every binary64 value to parse back bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixFileError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> MatrixFileError {
    MatrixFileError::Parse {
        line,
        message: message.into(),
    }
}

pub fn format_matrix(matrix: &DMatrix<f64>) -> String {
    let (m, n) = matrix.shape();
    let mut out = format!("# matrix {m} {n}\n");
    for row in 0..m {
        for col in 0..n {
            if col > 0 {
                out.push(',');
            }
            write!(out, "{:.16e}", matrix[(row, col)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, MatrixFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (m, n) = match fields.as_slice() {
        ["#", "matrix", m, n] => {
            let m: usize = m.parse().map_err(|_| parse_err(1, "bad row count"))?;
            let n: usize = n.parse().map_err(|_| parse_err(1, "bad column count"))?;
            (m, n)
        }
        _ => return Err(parse_err(1, "expected header `# matrix m n`")),
    };

    let mut values = Vec::with_capacity(m * n);
    let mut rows = 0;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == m {
            return Err(parse_err(line_no, format!("more than {m} rows")));
        }
        let before = values.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad value `{}`", field.trim())))?;
            values.push(v);
        }
        let got = values.len() - before;
        if got != n {
            return Err(parse_err(
                line_no,
                format!("expected {n} columns, found {got}"),
            ));
        }
        rows += 1;
    }
    if rows != m {
        return Err(parse_err(
            text.lines().count() + 1,
            format!("expected {m} rows, found {rows}"),
        ));
    }
    Ok(DMatrix::from_row_slice(m, n, &values))
}

pub fn write_matrix(path: &Path, matrix: &DMatrix<f64>) -> Result<(), MatrixFileError> {
    fs::write(path, format_matrix(matrix)).map_err(|source| MatrixFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, MatrixFileError> {
    let text = fs::read_to_string(path).map_err(|source| MatrixFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_matrix(&text)
}
