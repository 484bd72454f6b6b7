//! Reading and writing the subset of the NumPy `.npy` format used by bundles.
//!
//! Writes are always version 1.0, C-order, little-endian `<f8` or `<i8`. Reads
//! accept versions 1.0 through 3.0 and the `<f8`, `<f4`, `<i8`, `<i4` type
//! descriptors; Fortran-order arrays are rejected.
//!
//! Format reference: <https://numpy.org/doc/stable/reference/generated/numpy.lib.format.html>

use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";

/// Header block alignment used by current NumPy releases.
const ALIGN: usize = 64;

/// Decoded array payload.
#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F64(Vec<f64>),
    I64(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    /// Payload as floats; integer arrays are converted.
    pub fn into_f64(self) -> Vec<f64> {
        match self.data {
            NpyData::F64(v) => v,
            NpyData::I64(v) => v.into_iter().map(|x| x as f64).collect(),
        }
    }

    /// Payload as integers; float arrays must hold integral values.
    pub fn into_i64(self) -> Result<Vec<i64>> {
        match self.data {
            NpyData::I64(v) => Ok(v),
            NpyData::F64(v) => v
                .into_iter()
                .map(|x| {
                    if x.fract() == 0.0 && x.is_finite() {
                        Ok(x as i64)
                    } else {
                        Err(Error::Npy(format!("expected integer data, found {x}")))
                    }
                })
                .collect(),
        }
    }
}

fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_str}, }}");
    // magic(6) + version(2) + header length(2) + dict + '\n'
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(unpadded + pad);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

pub fn encode_f64(shape: &[usize], data: &[f64]) -> Vec<u8> {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    let mut out = header_bytes("<f8", shape);
    out.reserve(data.len() * 8);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_i64(shape: &[usize], data: &[i64]) -> Vec<u8> {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    let mut out = header_bytes("<i8", shape);
    out.reserve(data.len() * 8);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Descr {
    F8,
    F4,
    I8,
    I4,
}

impl Descr {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "<f8" => Ok(Descr::F8),
            "<f4" => Ok(Descr::F4),
            "<i8" => Ok(Descr::I8),
            "<i4" => Ok(Descr::I4),
            other => Err(Error::Npy(format!("unsupported dtype descriptor {other:?}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            Descr::F8 | Descr::I8 => 8,
            Descr::F4 | Descr::I4 => 4,
        }
    }
}

fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}':");
    let start = dict
        .find(&needle)
        .ok_or_else(|| Error::Npy(format!("header lacks key {key:?}")))?
        + needle.len();
    Ok(dict[start..].trim_start())
}

fn parse_header(dict: &str) -> Result<(Descr, bool, Vec<usize>)> {
    let descr_raw = dict_value(dict, "descr")?;
    let quote = descr_raw
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::Npy("descr is not a string".into()))?;
    let end = descr_raw[1..]
        .find(quote)
        .ok_or_else(|| Error::Npy("unterminated descr".into()))?;
    let descr = Descr::parse(&descr_raw[1..1 + end])?;

    let fortran_raw = dict_value(dict, "fortran_order")?;
    let fortran = if fortran_raw.starts_with("True") {
        true
    } else if fortran_raw.starts_with("False") {
        false
    } else {
        return Err(Error::Npy("fortran_order is not a bool".into()));
    };

    let shape_raw = dict_value(dict, "shape")?;
    let close = shape_raw
        .find(')')
        .filter(|_| shape_raw.starts_with('('))
        .ok_or_else(|| Error::Npy("shape is not a tuple".into()))?;
    let shape = shape_raw[1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Npy(format!("bad shape entry {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((descr, fortran, shape))
}

pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || bytes[..6] != MAGIC {
        return Err(Error::Npy("missing \\x93NUMPY magic".into()));
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Npy("truncated header".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(Error::Npy(format!("unsupported format version {v}"))),
    };
    let body_start = header_start + header_len;
    let dict = bytes
        .get(header_start..body_start)
        .ok_or_else(|| Error::Npy("truncated header".into()))?;
    let dict = std::str::from_utf8(dict).map_err(|_| Error::Npy("header is not UTF-8".into()))?;
    let (descr, fortran, shape) = parse_header(dict)?;
    if fortran {
        return Err(Error::Npy("Fortran-order arrays are not supported".into()));
    }

    let count: usize = shape.iter().product();
    let body = &bytes[body_start..];
    if body.len() != count * descr.width() {
        return Err(Error::Npy(format!(
            "shape {shape:?} needs {} payload bytes, found {}",
            count * descr.width(),
            body.len()
        )));
    }
    let data = match descr {
        Descr::F8 => NpyData::F64(
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Descr::F4 => NpyData::F64(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        ),
        Descr::I8 => NpyData::I64(
            body.chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Descr::I4 => NpyData::I64(
            body.chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64)
                .collect(),
        ),
    };
    Ok(NpyArray { shape, data })
}
