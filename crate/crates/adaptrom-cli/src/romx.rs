//! The ROMX binary matrix format: magic bytes `ROMX`, a little-endian `u32`
//! version, `u64` row and column counts, then `rows * cols` IEEE-754 `f64`
//! values in column-major order, little-endian throughout. Round trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

const MAGIC: [u8; 4] = *b"ROMX";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RomxError {
    #[error("bad magic bytes: expected ROMX")]
    BadMagic,
    #[error("unsupported ROMX version {got} (supported: {VERSION})")]
    VersionMismatch { got: u32 },
    #[error("truncated file: expected {expected} more bytes")]
    TruncatedFile { expected: usize },
    #[error("matrix dimensions {rows}x{cols} are invalid (zero-sized matrices are forbidden)")]
    InvalidShape { rows: u64, cols: u64 },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes a matrix in ROMX format. Entries must be finite and the matrix
/// non-empty.
pub fn write_matrix(path: &Path, matrix: &DMatrix<f64>) -> Result<(), RomxError> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(RomxError::InvalidShape {
            rows: matrix.nrows() as u64,
            cols: matrix.ncols() as u64,
        });
    }
    for col in 0..matrix.ncols() {
        for row in 0..matrix.nrows() {
            if !matrix[(row, col)].is_finite() {
                return Err(RomxError::NonFinite { row, col });
            }
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    out.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    // nalgebra stores column-major, so the slice is already in file order
    for v in matrix.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a ROMX matrix, validating magic, version, and payload size.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, RomxError> {
    let mut input = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic)?;
    if magic != MAGIC {
        return Err(RomxError::BadMagic);
    }

    let mut word = [0u8; 4];
    read_exact(&mut input, &mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(RomxError::VersionMismatch { got: version });
    }

    let mut long = [0u8; 8];
    read_exact(&mut input, &mut long)?;
    let rows = u64::from_le_bytes(long);
    read_exact(&mut input, &mut long)?;
    let cols = u64::from_le_bytes(long);
    if rows == 0 || cols == 0 {
        return Err(RomxError::InvalidShape { rows, cols });
    }
    let count = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or(RomxError::InvalidShape { rows, cols })?;

    // grow as bytes actually arrive, so a corrupt header cannot trigger a
    // huge up-front allocation
    let mut data = Vec::new();
    for _ in 0..count {
        read_exact(&mut input, &mut long)?;
        data.push(f64::from_le_bytes(long));
    }
    Ok(DMatrix::from_vec(rows as usize, cols as usize, data))
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), RomxError> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => {
                return Err(RomxError::TruncatedFile {
                    expected: buf.len() - filled,
                })
            }
            n => filled += n,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn single_entry_file_is_32_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.romx");
        write_matrix(&path, &DMatrix::from_element(1, 1, 3.5)).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 32);
        let back = read_matrix(&path).unwrap();
        assert_eq!(back[(0, 0)], 3.5);
    }

    #[test]
    fn empty_matrices_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.romx");
        assert!(matches!(
            write_matrix(&path, &DMatrix::zeros(0, 0)),
            Err(RomxError::InvalidShape { .. })
        ));
        assert!(matches!(
            write_matrix(&path, &DMatrix::zeros(3, 0)),
            Err(RomxError::InvalidShape { .. })
        ));
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.romx");
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 0)] = f64::NAN;
        assert!(matches!(
            write_matrix(&path, &m),
            Err(RomxError::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn bad_magic_and_version_and_truncation() {
        let dir = tempdir().unwrap();

        let bad_magic = dir.path().join("bad.romx");
        std::fs::write(&bad_magic, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_matrix(&bad_magic), Err(RomxError::BadMagic)));

        let path = dir.path().join("v2.romx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ROMX");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_matrix(&path),
            Err(RomxError::VersionMismatch { got: 2 })
        ));

        let short = dir.path().join("short.romx");
        let ok = dir.path().join("ok.romx");
        write_matrix(&ok, &DMatrix::from_element(2, 2, 1.0)).unwrap();
        let full = std::fs::read(&ok).unwrap();
        std::fs::write(&short, &full[..full.len() - 5]).unwrap();
        assert!(matches!(
            read_matrix(&short),
            Err(RomxError::TruncatedFile { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..12,
            cols in 1usize..12,
            seed in any::<u64>(),
        ) {
            // deterministic pseudo-random payload including subnormals and
            // negative zero candidates
            let mut state = seed | 1;
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                f64::from_bits(state & 0x7fef_ffff_ffff_ffff) * if state & 1 == 0 { 1.0 } else { -1.0 }
            };
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                let v = next();
                if v.is_finite() { v } else { 0.0 }
            });
            let dir = tempdir().unwrap();
            let path = dir.path().join("rt.romx");
            write_matrix(&path, &m).unwrap();
            let back = read_matrix(&path).unwrap();
            prop_assert_eq!(back.nrows(), rows);
            prop_assert_eq!(back.ncols(), cols);
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
