//! Dataset CSV: header `f0,...,f{d-1},noisy_label,true_label`, one sample per row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::dataset::{NoisyDataset, Split};
use crate::error::{Error, Result};

const SIGNIFICANT_DIGITS: i32 = 9;

/// Decimal rendering with 9 significant digits, trailing zeros trimmed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS - 1 - exp).max(0) as usize;
        let mut s = format!("{v:.decimals$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else {
        format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, v)
    }
}

pub fn to_csv_string(ds: &NoisyDataset) -> String {
    let d = ds.dim();
    let mut out = String::new();
    for j in 0..d {
        let _ = write!(out, "f{j},");
    }
    out.push_str("noisy_label,true_label\n");
    let x = ds.features();
    for i in 0..ds.len() {
        for j in 0..d {
            out.push_str(&format_sig9(x[[i, j]]));
            out.push(',');
        }
        let _ = writeln!(out, "{},{}", ds.noisy_labels()[i], ds.true_labels()[i]);
    }
    out
}

pub fn save_csv(ds: &NoisyDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_csv_string(ds))?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, num_classes: usize, split: Split) -> Result<NoisyDataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, num_classes, split)
}

pub fn parse_csv(text: &str, num_classes: usize, split: Split) -> Result<NoisyDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let n_cols = cols.len();
    if n_cols < 3 || cols[n_cols - 2] != "noisy_label" || cols[n_cols - 1] != "true_label" {
        return Err(Error::Parse {
            line: 1,
            msg: "header must end with noisy_label,true_label".into(),
        });
    }
    let d = n_cols - 2;
    for (j, c) in cols[..d].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column f{j}, found {c:?}"),
            });
        }
    }
    let mut feats = Vec::new();
    let mut noisy = Vec::new();
    let mut truth = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {n_cols} columns, found {}", fields.len()),
            });
        }
        for f in &fields[..d] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature value {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite feature {f:?}"),
                });
            }
            feats.push(v);
        }
        let label = |s: &str, what: &str| -> Result<usize> {
            let y: usize = s.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad {what} {s:?}"),
            })?;
            if y >= num_classes {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("{what} {y} out of range for {num_classes} classes"),
                });
            }
            Ok(y)
        };
        noisy.push(label(fields[d], "noisy_label")?);
        truth.push(label(fields[d + 1], "true_label")?);
    }
    let n = noisy.len();
    let x = Array2::from_shape_vec((n, d), feats).expect("row lengths checked");
    NoisyDataset::new(x, noisy, truth, num_classes, split)
}
