//! CSV ingestion.
//!
//! Two layouts are accepted: `y,x` for a scalar outcome and covariate, and
//! `y1,...,yL,l,x1,...,xd` where `l` is the number of used outcome columns of
//! the row (unused trailing outcome cells may be empty).

use crate::local::Sample;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("input has no data rows")]
    Empty,
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("cannot read input: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Scalar,
    Multi { outcomes: usize, dim: usize },
}

fn numbered(name: &str, prefix: char) -> Option<usize> {
    name.strip_prefix(prefix)?.parse().ok()
}

fn layout(header: &csv::StringRecord) -> Result<Layout, ParseError> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols == ["y", "x"] {
        return Ok(Layout::Scalar);
    }
    let l_pos = cols
        .iter()
        .position(|c| *c == "l")
        .ok_or_else(|| ParseError::Header(format!("expected `y,x` or `y1,...,yL,l,x1,...,xd`, got `{}`", cols.join(","))))?;
    let (ys, xs) = (&cols[..l_pos], &cols[l_pos + 1..]);
    let ordered = |names: &[&str], prefix: char| {
        !names.is_empty() && names.iter().enumerate().all(|(j, c)| numbered(c, prefix) == Some(j + 1))
    };
    if !ordered(ys, 'y') || !ordered(xs, 'x') {
        return Err(ParseError::Header(format!(
            "outcome columns must be y1..yL and covariates x1..xd, got `{}`",
            cols.join(",")
        )));
    }
    Ok(Layout::Multi {
        outcomes: ys.len(),
        dim: xs.len(),
    })
}

fn number(cell: &str, line: u64, column: &str) -> Result<f64, ParseError> {
    let v: f64 = cell.trim().parse().map_err(|_| ParseError::Row {
        line,
        message: format!("column `{column}`: `{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(ParseError::Row {
            line,
            message: format!("column `{column}`: value is not finite"),
        });
    }
    Ok(v)
}

/// Parses a sample from CSV text.
pub fn read_sample<R: Read>(reader: R) -> Result<Sample, ParseError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| ParseError::Header(e.to_string()))?
        .clone();
    if header.is_empty() || header.iter().all(|c| c.trim().is_empty()) {
        return Err(ParseError::Empty);
    }
    let layout = layout(&header)?;
    let (width, max_outcomes, dim) = match layout {
        Layout::Scalar => (2, 1, 1),
        Layout::Multi { outcomes, dim } => (outcomes + 1 + dim, outcomes, dim),
    };
    let mut outcomes = Vec::new();
    let mut covariates = Vec::new();
    let mut counts = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ParseError::Row {
            line: e.position().map(|p| p.line()).unwrap_or(row as u64 + 2),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(row as u64 + 2);
        if rec.len() != width {
            return Err(ParseError::Row {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        match layout {
            Layout::Scalar => {
                outcomes.push(number(&rec[0], line, "y")?);
                covariates.push(number(&rec[1], line, "x")?);
                counts.push(1);
            }
            Layout::Multi { outcomes: big_l, dim } => {
                let l: usize = rec[big_l].trim().parse().map_err(|_| ParseError::Row {
                    line,
                    message: format!("column `l`: `{}` is not a positive integer", &rec[big_l]),
                })?;
                if l == 0 || l > big_l {
                    return Err(ParseError::Row {
                        line,
                        message: format!("column `l`: {l} outside 1..={big_l}"),
                    });
                }
                for j in 0..big_l {
                    if j < l {
                        outcomes.push(number(&rec[j], line, &format!("y{}", j + 1))?);
                    } else {
                        // unused slot: any content is ignored
                        outcomes.push(0.0);
                    }
                }
                for m in 0..dim {
                    covariates.push(number(&rec[big_l + 1 + m], line, &format!("x{}", m + 1))?);
                }
                counts.push(l);
            }
        }
    }
    if counts.is_empty() {
        return Err(ParseError::Empty);
    }
    Sample::new(outcomes, max_outcomes, covariates, dim, counts).map_err(|e| ParseError::Row {
        line: 0,
        message: e.to_string(),
    })
}

pub fn read_sample_path(path: &Path) -> Result<Sample, ParseError> {
    read_sample(std::fs::File::open(path)?)
}
