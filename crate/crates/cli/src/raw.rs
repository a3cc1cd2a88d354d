//! Self-describing raw arrays: a one-line JSON header followed by a
//! little-endian row-major payload.
//!
//! ```text
//! {"dtype":"f64","shape":[128,128],"order":"row-major","byteorder":"little"}\n
//! <n1 * n2 * itemsize bytes>
//! ```
//!
//! `c128` stores interleaved real and imaginary `f64` parts. Files ending in
//! `.csv` are accepted wherever a raw array is read: one row of the array per
//! line, values separated by commas or whitespace.

use std::fs;
use std::path::Path;

use gps_core::grid::{Field, Lattice, SupportMask};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
    U8,
}

impl Dtype {
    pub fn itemsize(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::C128 => 16,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dtype: Dtype,
    shape: [usize; 2],
    order: String,
    byteorder: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawData {
    F64(Vec<f64>),
    C128(Vec<Complex64>),
    U8(Vec<u8>),
}

/// A 2D array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawArray {
    pub shape: [usize; 2],
    pub data: RawData,
}

impl RawArray {
    pub fn new(shape: [usize; 2], data: RawData) -> CliResult<Self> {
        let a = Self { shape, data };
        if a.len() != shape[0] * shape[1] {
            return Err(CliError::Data(format!(
                "{} values do not fill shape {}x{}",
                a.len(),
                shape[0],
                shape[1]
            )));
        }
        Ok(a)
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            RawData::F64(_) => Dtype::F64,
            RawData::C128(_) => Dtype::C128,
            RawData::U8(_) => Dtype::U8,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            RawData::F64(v) => v.len(),
            RawData::C128(v) => v.len(),
            RawData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lattice(&self) -> CliResult<Lattice> {
        Ok(Lattice::new(self.shape[0], self.shape[1])?)
    }

    pub fn from_real(field: &Field) -> Self {
        let l = field.lattice();
        Self {
            shape: [l.rows(), l.cols()],
            data: RawData::F64(field.real_parts()),
        }
    }

    pub fn from_complex(field: &Field) -> Self {
        let l = field.lattice();
        Self {
            shape: [l.rows(), l.cols()],
            data: RawData::C128(field.values().to_vec()),
        }
    }

    pub fn from_f64(lattice: Lattice, values: Vec<f64>) -> Self {
        Self {
            shape: [lattice.rows(), lattice.cols()],
            data: RawData::F64(values),
        }
    }

    pub fn from_mask(lattice: Lattice, mask: &[bool]) -> Self {
        Self {
            shape: [lattice.rows(), lattice.cols()],
            data: RawData::U8(mask.iter().map(|&m| m as u8).collect()),
        }
    }

    /// Values widened to `f64`; complex arrays are rejected.
    pub fn to_f64(&self) -> CliResult<Vec<f64>> {
        match &self.data {
            RawData::F64(v) => Ok(v.clone()),
            RawData::U8(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            RawData::C128(_) => Err(CliError::Data("expected a real array, found c128".into())),
        }
    }

    /// Nonzero entries as `true`.
    pub fn to_mask(&self) -> Vec<bool> {
        match &self.data {
            RawData::F64(v) => v.iter().map(|&x| x != 0.0).collect(),
            RawData::U8(v) => v.iter().map(|&x| x != 0).collect(),
            RawData::C128(v) => v.iter().map(|x| x.norm() != 0.0).collect(),
        }
    }

    pub fn to_field(&self) -> CliResult<Field> {
        let l = self.lattice()?;
        match &self.data {
            RawData::C128(v) => Ok(Field::new(l, v.clone())?),
            _ => Ok(Field::from_real(l, &self.to_f64()?)?),
        }
    }

    /// Pointwise modulus.
    pub fn abs(&self) -> Vec<f64> {
        match &self.data {
            RawData::F64(v) => v.iter().map(|x| x.abs()).collect(),
            RawData::C128(v) => v.iter().map(|x| x.norm()).collect(),
            RawData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn to_support(&self) -> CliResult<SupportMask> {
        Ok(SupportMask::new(self.lattice()?, self.to_mask())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            dtype: self.dtype(),
            shape: self.shape,
            order: "row-major".into(),
            byteorder: "little".into(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        match &self.data {
            RawData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            RawData::C128(v) => v.iter().for_each(|x| {
                out.extend_from_slice(&x.re.to_le_bytes());
                out.extend_from_slice(&x.im.to_le_bytes());
            }),
            RawData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let bad = |msg: String| CliError::Data(format!("malformed raw array: {msg}"));
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(e.to_string()))?;
        if header.order != "row-major" || header.byteorder != "little" {
            return Err(bad(format!(
                "unsupported layout {}/{}",
                header.order, header.byteorder
            )));
        }
        let [n1, n2] = header.shape;
        let payload = &bytes[nl + 1..];
        let want = n1
            .checked_mul(n2)
            .and_then(|n| n.checked_mul(header.dtype.itemsize()))
            .ok_or_else(|| bad("shape overflows".into()))?;
        if payload.len() != want {
            return Err(bad(format!(
                "payload has {} bytes, shape {n1}x{n2} of {:?} needs {want}",
                payload.len(),
                header.dtype
            )));
        }
        let f64s = |chunk: &[u8]| f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        let data = match header.dtype {
            Dtype::F64 => RawData::F64(payload.chunks_exact(8).map(f64s).collect()),
            Dtype::C128 => RawData::C128(
                payload
                    .chunks_exact(16)
                    .map(|c| Complex64::new(f64s(&c[..8]), f64s(&c[8..])))
                    .collect(),
            ),
            Dtype::U8 => RawData::U8(payload.to_vec()),
        };
        Ok(Self { shape: header.shape, data })
    }
}

pub fn write_raw(path: &Path, array: &RawArray) -> CliResult<()> {
    fs::write(path, array.to_bytes()).map_err(CliError::io(path))
}

/// Reads a raw array, or imports a CSV file when the extension is `.csv`.
pub fn read_array(path: &Path) -> CliResult<RawArray> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        return import_csv(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())));
    }
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    RawArray::from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Parses a dense real array, one row per non-empty line.
pub fn import_csv(text: &str) -> CliResult<RawArray> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| CliError::Data(format!("line {}: cannot parse '{t}'", lineno + 1)))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::Data(format!(
                    "line {}: {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let n1 = rows.len();
    let n2 = rows.first().map_or(0, Vec::len);
    RawArray::new([n1, n2], RawData::F64(rows.concat()))
}
