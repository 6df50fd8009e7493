//! Reader/writer for the NPY v1.0 array format, restricted to 2-D float
//! arrays.
//!
//! Layout: the 6-byte magic `\x93NUMPY`, version bytes `0x01 0x00`, a
//! little-endian `u16` header length, then an ASCII Python dict literal with
//! keys `descr`, `fortran_order` and `shape`, space padded and terminated by
//! `\n` so the data starts on a 64-byte boundary.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::embedding::EmbeddingSet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Element {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

#[derive(Debug)]
struct Header {
    element: Element,
    endian: Endian,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Reads a rank-2 float array. `source_id` defaults to the file stem and
/// `extractor_id` to `"external"`.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode(&bytes, stem)
}

pub fn save_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let bytes = encode(set);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Serializes as `<f8`, C order, shape `(N, D)`.
pub fn encode(set: &EmbeddingSet) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        set.len(),
        set.dim()
    );
    // magic(6) + version(2) + header length(2) + dict + padding + '\n'
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + padding + 1;

    let mut out = Vec::with_capacity(unpadded + padding + set.data().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', padding));
    out.push(b'\n');
    for v in set.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], source_id: impl Into<String>) -> Result<EmbeddingSet> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing NPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::Format(format!(
            "unsupported NPY version {major}.{minor}, expected 1.0"
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    let header_bytes = bytes
        .get(10..data_start)
        .ok_or_else(|| Error::Format("truncated NPY header".into()))?;
    let header_text = std::str::from_utf8(header_bytes)
        .map_err(|_| Error::Format("NPY header is not ASCII".into()))?;
    let header = parse_header(header_text)?;

    if header.shape.len() != 2 {
        return Err(Error::Shape(format!(
            "expected a rank-2 array, found rank {} with shape {:?}",
            header.shape.len(),
            header.shape
        )));
    }
    let (rows, cols) = (header.shape[0], header.shape[1]);
    if rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("empty array of shape ({rows}, {cols})")));
    }
    let width = match header.element {
        Element::F32 => 4,
        Element::F64 => 8,
    };
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let payload = &bytes[data_start..];
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "expected {} data bytes for shape ({rows}, {cols}), found {}",
            count * width,
            payload.len()
        )));
    }

    let mut values: Vec<f64> = match (header.element, header.endian) {
        (Element::F64, Endian::Little) => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        (Element::F64, Endian::Big) => payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
        (Element::F32, Endian::Little) => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        (Element::F32, Endian::Big) => payload
            .chunks_exact(4)
            .map(|c| f32::from_be_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    if header.fortran_order {
        let mut c_order = vec![0.0; count];
        for r in 0..rows {
            for c in 0..cols {
                c_order[r * cols + c] = values[c * rows + r];
            }
        }
        values = c_order;
    }
    EmbeddingSet::new(values, rows, cols, source_id, "external")
}

fn parse_header(text: &str) -> Result<Header> {
    let text = text.trim_end_matches(['\n', ' ', '\0']);
    let inner = text
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| Error::Format(format!("NPY header is not a dict: {text:?}")))?;

    let descr = dict_value(inner, "descr")?;
    let descr = descr.trim().trim_matches(|c| c == '\'' || c == '"');
    let (endian, element) = match descr {
        "<f8" | "f8" => (Endian::Little, Element::F64),
        "<f4" | "f4" => (Endian::Little, Element::F32),
        ">f8" => (Endian::Big, Element::F64),
        ">f4" => (Endian::Big, Element::F32),
        other => {
            return Err(Error::Format(format!(
                "unsupported dtype {other:?}; expected 32- or 64-bit float"
            )))
        }
    };

    let fortran_order = match dict_value(inner, "fortran_order")?.trim() {
        "False" => false,
        "True" => true,
        other => return Err(Error::Format(format!("bad fortran_order {other:?}"))),
    };

    let shape_text = dict_value(inner, "shape")?.trim();
    let shape_inner = shape_text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::Format(format!("bad shape {shape_text:?}")))?;
    let shape = shape_inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Header {
        element,
        endian,
        fortran_order,
        shape,
    })
}

/// Raw text of the value for `key` in a flat Python dict literal. Values are
/// either quoted strings, bare words, or a parenthesized tuple.
fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::Format(format!("NPY header lacks key {key:?}"));
    let start = [format!("'{key}'"), format!("\"{key}\"")]
        .iter()
        .find_map(|k| dict.find(k.as_str()).map(|i| i + k.len()))
        .ok_or_else(missing)?;
    let rest = dict[start..].trim_start();
    let rest = rest.strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else if let Some(q) = rest.chars().next().filter(|c| *c == '\'' || *c == '"') {
        rest[1..].find(q).map(|i| i + 2)
    } else {
        Some(rest.find(',').unwrap_or(rest.len()))
    }
    .ok_or_else(|| Error::Format(format!("unterminated value for {key:?}")))?;
    Ok(&rest[..end])
}
