//! Grid-shaped fields, field differences, and CSV export (one row per `y`
//! line, one column per `x` position).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field shapes differ: {a_nx}x{a_ny} vs {b_nx}x{b_ny}")]
    ShapeMismatch {
        a_nx: usize,
        a_ny: usize,
        b_nx: usize,
        b_ny: usize,
    },
    #[error("field data length {got} does not match {nx}x{ny}")]
    BadLength { nx: usize, ny: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A scalar field on an `nx * ny` grid, stored row-major by `y` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn new(
        name: impl Into<String>,
        nx: usize,
        ny: usize,
        values: Vec<f64>,
    ) -> Result<Self, FieldError> {
        if values.len() != nx * ny {
            return Err(FieldError::BadLength {
                nx,
                ny,
                got: values.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            nx,
            ny,
            values,
        })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// CSV text: row per `y`, column per `x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.at(i, j));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), FieldError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Max-abs and L2 summary of a difference field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldDiffSummary {
    pub max_abs: f64,
    pub l2: f64,
}

/// Elementwise `fom - rom` with its summary norms.
pub fn field_difference(
    fom: &FieldGrid,
    rom: &FieldGrid,
) -> Result<(FieldGrid, FieldDiffSummary), FieldError> {
    if fom.nx != rom.nx || fom.ny != rom.ny {
        return Err(FieldError::ShapeMismatch {
            a_nx: fom.nx,
            a_ny: fom.ny,
            b_nx: rom.nx,
            b_ny: rom.ny,
        });
    }
    let values: Vec<f64> = fom
        .values
        .iter()
        .zip(rom.values.iter())
        .map(|(a, b)| a - b)
        .collect();
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l2 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = FieldGrid::new(format!("{}-diff", fom.name), fom.nx, fom.ny, values)?;
    Ok((diff, FieldDiffSummary { max_abs, l2 }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(name: &str, nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> FieldGrid {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(i, j));
            }
        }
        FieldGrid::new(name, nx, ny, values).unwrap()
    }

    #[test]
    fn identical_fields_diff_to_zero() {
        let a = grid("t", 4, 3, |i, j| (i + j) as f64);
        let (diff, summary) = field_difference(&a, &a.clone()).unwrap();
        assert!(diff.values.iter().all(|v| *v == 0.0));
        assert_eq!(summary.max_abs, 0.0);
        assert_eq!(summary.l2, 0.0);
    }

    #[test]
    fn constant_offset_has_sqrt_k_l2() {
        let a = grid("t", 5, 4, |_, _| 2.0);
        let b = grid("t", 5, 4, |_, _| 3.0);
        let (_, summary) = field_difference(&a, &b).unwrap();
        assert_eq!(summary.max_abs, 1.0);
        assert!((summary.l2 - (20.0f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = grid("t", 4, 3, |_, _| 0.0);
        let b = grid("t", 3, 4, |_, _| 0.0);
        assert!(matches!(
            field_difference(&a, &b),
            Err(FieldError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn csv_layout_is_row_per_y() {
        let a = grid("t", 3, 2, |i, j| (j * 10 + i) as f64);
        assert_eq!(a.to_csv(), "0,1,2\n10,11,12\n");
    }
}
