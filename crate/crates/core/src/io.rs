//! Binary matrix container, CSV tables and atomic file writes.
//!
//! Container layout, all integers and floats little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `RBSM` |
//! | 4     | version (`u32`, currently 1) |
//! | 4     | dimension `n` (`u32`) |
//! | 4     | element kind (`u32`: 0 real, 1 complex) |
//! | 8     | QMC seed (`u64`) |
//! | 16    | kernel id, ASCII, zero padded |
//! | ...   | `n * n` row-major `f64`, complex entries as interleaved re, im |

use crate::error::{Error, Result};
use faer::{c64, Mat};
use std::io::Write;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"RBSM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    Real = 0,
    Complex = 1,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContainerHeader {
    pub dim: u32,
    pub kind: ElementKind,
    pub seed: u64,
    pub kernel_id: String,
}

#[derive(Clone, Debug)]
pub enum MatrixData {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

fn header_bytes(h: &ContainerHeader) -> Result<Vec<u8>> {
    let id = h.kernel_id.as_bytes();
    if id.len() > 16 {
        return Err(Error::Format(format!("kernel id '{}' longer than 16 bytes", h.kernel_id)));
    }
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&h.dim.to_le_bytes());
    out.extend_from_slice(&(h.kind as u32).to_le_bytes());
    out.extend_from_slice(&h.seed.to_le_bytes());
    let mut padded = [0u8; 16];
    padded[..id.len()].copy_from_slice(id);
    out.extend_from_slice(&padded);
    Ok(out)
}

fn square(rows: usize, cols: usize) -> Result<u32> {
    if rows != cols {
        return Err(Error::Format(format!("container holds square matrices, got {rows} x {cols}")));
    }
    u32::try_from(rows).map_err(|_| Error::Format("dimension does not fit in u32".into()))
}

pub fn encode_real(m: &Mat<f64>, seed: u64, kernel_id: &str) -> Result<Vec<u8>> {
    let dim = square(m.nrows(), m.ncols())?;
    let mut out = header_bytes(&ContainerHeader { dim, kind: ElementKind::Real, seed, kernel_id: kernel_id.into() })?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn encode_complex(m: &Mat<c64>, seed: u64, kernel_id: &str) -> Result<Vec<u8>> {
    let dim = square(m.nrows(), m.ncols())?;
    let mut out = header_bytes(&ContainerHeader { dim, kind: ElementKind::Complex, seed, kernel_id: kernel_id.into() })?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<(ContainerHeader, MatrixData)> {
    if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
        return Err(Error::Format("not an RBSM container".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let dim = u32_at(bytes, 8);
    let kind = match u32_at(bytes, 12) {
        0 => ElementKind::Real,
        1 => ElementKind::Complex,
        k => return Err(Error::Format(format!("unknown element kind {k}"))),
    };
    let seed = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let id_raw = &bytes[24..40];
    let id_len = id_raw.iter().position(|&c| c == 0).unwrap_or(16);
    let kernel_id = std::str::from_utf8(&id_raw[..id_len]).map_err(|_| Error::Format("kernel id is not UTF-8".into()))?.to_string();
    let n = dim as usize;
    let width = if kind == ElementKind::Real { 8 } else { 16 };
    if bytes.len() != HEADER_LEN + n * n * width {
        return Err(Error::Format(format!("container length {} does not match dimension {n}", bytes.len())));
    }
    let body = &bytes[HEADER_LEN..];
    let data = match kind {
        ElementKind::Real => MatrixData::Real(Mat::from_fn(n, n, |i, j| f64_at(body, 8 * (i * n + j)))),
        ElementKind::Complex => MatrixData::Complex(Mat::from_fn(n, n, |i, j| {
            let at = 16 * (i * n + j);
            c64::new(f64_at(body, at), f64_at(body, at + 8))
        })),
    };
    Ok((ContainerHeader { dim, kind, seed, kernel_id }, data))
}

/// Float formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.16e}")
}

/// Comma-separated table with a header row and LF line endings.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
    width: usize,
}

/// One CSV cell.
pub enum Cell<'a> {
    Float(f64),
    Int(i64),
    Text(&'a str),
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self { writer, width: header.len() })
    }

    pub fn row(&mut self, cells: &[Cell]) -> Result<()> {
        if cells.len() != self.width {
            return Err(Error::Format(format!("row has {} cells, header has {}", cells.len(), self.width)));
        }
        let rec: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::Float(x) => fmt_f64(*x),
                Cell::Int(i) => i.to_string(),
                Cell::Text(s) => s.to_string(),
            })
            .collect();
        self.writer.write_record(&rec).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer.into_inner().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn real_round_trip_and_layout() {
        let m = Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64 - 0.25);
        let b = encode_real(&m, 42, "pl1.000/0.000").unwrap();
        assert_eq!(&b[..4], b"RBSM");
        assert_eq!(u32_at(&b, 8), 3);
        assert_eq!(b.len(), HEADER_LEN + 9 * 8);
        // row-major: second stored float is m[(0, 1)]
        assert_eq!(f64_at(&b, HEADER_LEN + 8), m[(0, 1)]);
        let (h, d) = decode(&b).unwrap();
        assert_eq!(h.seed, 42);
        assert_eq!(h.kernel_id, "pl1.000/0.000");
        match d {
            MatrixData::Real(r) => assert_eq!(r, m),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn complex_is_interleaved() {
        let m = Mat::from_fn(2, 2, |i, j| c64::new(i as f64, j as f64 + 0.5));
        let b = encode_complex(&m, 1, "x").unwrap();
        assert_eq!(f64_at(&b, HEADER_LEN + 16), 0.0);
        assert_eq!(f64_at(&b, HEADER_LEN + 24), 1.5);
        let (h, d) = decode(&b).unwrap();
        assert_eq!(h.kind, ElementKind::Complex);
        match d {
            MatrixData::Complex(c) => assert_eq!(c, m),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn rejects_corrupt_input() {
        let m = Mat::from_fn(2, 2, |i, j| (i + j) as f64);
        let mut b = encode_real(&m, 0, "x").unwrap();
        assert!(decode(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(decode(&b).is_err());
        assert!(encode_real(&m, 0, "an id that is far too long").is_err());
    }

    #[test]
    fn csv_dialect() {
        let mut t = CsvTable::new(&["k", "j", "value"]).unwrap();
        t.row(&[Cell::Float(0.1), Cell::Int(-1), Cell::Float(1.0 / 3.0)]).unwrap();
        let s = String::from_utf8(t.into_bytes().unwrap()).unwrap();
        assert_eq!(s, "k,j,value\n1.0000000000000001e-1,-1,3.3333333333333331e-1\n");
        assert!(!s.contains('\r'));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    proptest! {
        #[test]
        fn floats_round_trip_through_text(x in proptest::num::f64::NORMAL) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
