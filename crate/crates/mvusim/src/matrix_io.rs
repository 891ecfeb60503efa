//! Weight, input and output matrix files.
//!
//! Binary layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `MVUM`                            |
//! | 4      | 1    | format version (1)                      |
//! | 5      | 1    | flags; bit 0 set for two's complement   |
//! | 6      | 1    | element width in bits, 1..=128          |
//! | 7      | 1    | reserved, 0                             |
//! | 8      | 4    | rows                                    |
//! | 12     | 4    | columns                                 |
//! | 16     | ...  | row-major elements, bit-packed LSB first |
//!
//! The text format is a `rows cols` line followed by `rows` lines of
//! whitespace-separated integers. `#` starts a comment.

use std::fs;
use std::path::Path;

use mvusim_core::stream::{pack_tdata, unpack_tdata};
use mvusim_core::{DatapathKind, ImageMatrix, OutputMatrix, WeightMatrix};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"MVUM";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 16;

/// A dense row-major integer matrix with its storage encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub element_bits: u32,
    pub signed: bool,
    pub data: Vec<i128>,
}

/// Storage encoding of weights for `kind`.
pub fn weight_encoding(kind: DatapathKind) -> (u32, bool) {
    match kind {
        DatapathKind::Standard { weight_bits, .. } => (weight_bits, true),
        _ => (1, false),
    }
}

/// Storage encoding of activations for `kind`.
pub fn activation_encoding(kind: DatapathKind) -> (u32, bool) {
    match kind {
        DatapathKind::Xnor => (1, false),
        _ => (kind.input_bits(), true),
    }
}

impl MatrixFile {
    pub fn new(rows: usize, cols: usize, element_bits: u32, signed: bool, data: Vec<i128>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CliError::Invalid(format!("{rows}x{cols} matrix given {} elements", data.len())));
        }
        if !(1..=128).contains(&element_bits) {
            return Err(CliError::Invalid(format!("element width {element_bits} outside 1..=128")));
        }
        let m = Self { rows, cols, element_bits, signed, data };
        if let Some(v) = m.data.iter().find(|&&v| !m.fits(v)) {
            return Err(CliError::Invalid(format!("value {v} does not fit {element_bits}-bit storage")));
        }
        Ok(m)
    }

    fn fits(&self, v: i128) -> bool {
        let b = self.element_bits;
        match (self.signed, b) {
            (_, 128) => self.signed || v >= 0,
            (true, _) => v >= -(1i128 << (b - 1)) && v < (1i128 << (b - 1)),
            (false, _) => v >= 0 && v < (1i128 << b),
        }
    }

    pub fn from_weights(w: &WeightMatrix, kind: DatapathKind) -> Result<Self> {
        let (bits, signed) = weight_encoding(kind);
        Self::new(w.rows(), w.cols(), bits, signed, w.data().iter().map(|&v| v.into()).collect())
    }

    /// An image matrix stored row-major: `K_d^2 * I_c` rows, one column per input vector.
    pub fn from_image(m: &ImageMatrix, kind: DatapathKind) -> Result<Self> {
        let (bits, signed) = activation_encoding(kind);
        let data = (0..m.rows()).flat_map(|r| (0..m.cols()).map(move |c| i128::from(m.get(r, c)))).collect();
        Self::new(m.rows(), m.cols(), bits, signed, data)
    }

    pub fn from_output(m: &OutputMatrix, bits: u32) -> Result<Self> {
        Self::new(m.rows(), m.cols(), bits.clamp(1, 128), true, m.data().to_vec())
    }

    fn narrow(&self) -> Result<Vec<i64>> {
        self.data
            .iter()
            .map(|&v| i64::try_from(v).map_err(|_| CliError::Invalid(format!("value {v} exceeds 64 bits"))))
            .collect()
    }

    pub fn to_weights(&self) -> Result<WeightMatrix> {
        Ok(WeightMatrix::new(self.rows, self.cols, self.narrow()?)?)
    }

    pub fn to_image(&self) -> Result<ImageMatrix> {
        let flat = self.narrow()?;
        let columns: Vec<Vec<i64>> =
            (0..self.cols).map(|c| (0..self.rows).map(|r| flat[r * self.cols + c]).collect()).collect();
        Ok(ImageMatrix::from_columns(self.rows, &columns)?)
    }
}

pub fn encode_binary(m: &MatrixFile) -> Result<Vec<u8>> {
    let dim = |v: usize, what: &str| u32::try_from(v).map_err(|_| CliError::Invalid(format!("{what} {v} too large")));
    let mut out = Vec::with_capacity(HEADER_LEN + (m.data.len() * m.element_bits as usize).div_ceil(8));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, u8::from(m.signed), m.element_bits as u8, 0]);
    out.extend_from_slice(&dim(m.rows, "rows")?.to_le_bytes());
    out.extend_from_slice(&dim(m.cols, "columns")?.to_le_bytes());
    out.extend(pack_tdata(m.data.iter().copied(), m.element_bits));
    Ok(out)
}

pub fn decode_binary(bytes: &[u8]) -> Result<MatrixFile> {
    let bad = |why: &str| CliError::Invalid(format!("malformed matrix file: {why}"));
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing header"));
    }
    if bytes[4] != VERSION {
        return Err(bad("unsupported version"));
    }
    let signed = bytes[5] & 1 == 1;
    let bits = u32::from(bytes[6]);
    if bits == 0 || bits > 128 {
        return Err(bad("element width"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(8), word(12));
    let count = rows.checked_mul(cols).ok_or_else(|| bad("dimensions overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    let need = count.checked_mul(bits as usize).ok_or_else(|| bad("dimensions overflow"))?.div_ceil(8);
    if payload.len() != need {
        return Err(bad(&format!("payload is {} bytes, header implies {need}", payload.len())));
    }
    MatrixFile::new(rows, cols, bits, signed, unpack_tdata(payload, count, bits, signed))
}

pub fn encode_text(m: &MatrixFile) -> String {
    let mut s = format!("{} {}\n", m.rows, m.cols);
    for r in 0..m.rows {
        let row: Vec<String> = m.data[r * m.cols..(r + 1) * m.cols].iter().map(i128::to_string).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Parses the text format. Values are stored as signed 64-bit until the
/// consumer checks them against its datapath.
pub fn decode_text(src: &str, origin: &str) -> Result<MatrixFile> {
    let mut tokens = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        let mut start = None;
        for (j, ch) in body.char_indices().chain([(body.len(), ' ')]) {
            if !ch.is_whitespace() {
                start.get_or_insert(j);
            } else if let Some(s) = start.take() {
                tokens.push((i + 1, s + 1, &body[s..j]));
            }
        }
    }
    let mut tokens = tokens.into_iter();
    let mut next = |what: &str| -> Result<(usize, usize, i128)> {
        let (line, column, tok) = tokens.next().ok_or_else(|| CliError::Parse {
            path: origin.into(),
            line: src.lines().count().max(1),
            column: 1,
            message: format!("unexpected end of file, expected {what}"),
        })?;
        let v = tok.parse::<i128>().map_err(|_| CliError::Parse {
            path: origin.into(),
            line,
            column,
            message: format!("expected {what}, found `{tok}`"),
        })?;
        Ok((line, column, v))
    };
    let (_, _, rows) = next("row count")?;
    let (_, _, cols) = next("column count")?;
    if rows < 0 || cols < 0 {
        return Err(CliError::Invalid(format!("{origin}: negative dimensions")));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let (line, column, v) = next("matrix element")?;
        if i64::try_from(v).is_err() {
            return Err(CliError::Parse { path: origin.into(), line, column, message: format!("{v} exceeds 64 bits") });
        }
        data.push(v);
    }
    if let Some((line, column, tok)) = tokens.next() {
        return Err(CliError::Parse { path: origin.into(), line, column, message: format!("trailing value `{tok}`") });
    }
    MatrixFile::new(rows, cols, 64, true, data)
}

/// Reads either format; binary files are recognised by their magic.
pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        return decode_binary(&bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Invalid(format!("{}: neither a binary matrix nor text", path.display())))?;
    decode_text(&text, &path.display().to_string())
}

/// Writes text for `.txt` paths and binary otherwise.
pub fn write_matrix(path: &Path, m: &MatrixFile) -> Result<()> {
    let bytes =
        if path.extension().is_some_and(|e| e == "txt") { encode_text(m).into_bytes() } else { encode_binary(m)? };
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_and_layout() {
        let m = MatrixFile::new(2, 3, 4, true, vec![-1, 2, -8, 7, 0, 3]).unwrap();
        let bytes = encode_binary(&m).unwrap();
        assert_eq!(&bytes[..8], b"MVUM\x01\x01\x04\x00");
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[16..], &[0x2f, 0x78, 0x30]);
        assert_eq!(decode_binary(&bytes).unwrap(), m);

        let bits = MatrixFile::new(1, 9, 1, false, vec![1, 0, 1, 1, 0, 0, 0, 0, 1]).unwrap();
        let bytes = encode_binary(&bits).unwrap();
        assert_eq!(&bytes[16..], &[0b1101, 1]);
        assert_eq!(decode_binary(&bytes).unwrap(), bits);
    }

    #[test]
    fn binary_rejects_damage() {
        let m = MatrixFile::new(2, 2, 8, true, vec![1, 2, 3, 4]).unwrap();
        let bytes = encode_binary(&m).unwrap();
        assert!(decode_binary(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_binary(&bytes[1..]).is_err());
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(decode_binary(&v).is_err());
        assert!(MatrixFile::new(1, 1, 2, true, vec![2]).is_err());
        assert!(MatrixFile::new(1, 1, 2, false, vec![-1]).is_err());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let src = "# weights\n2 2\n1 -2  # first row\n3 4\n";
        let m = decode_text(src, "w.txt").unwrap();
        assert_eq!(m.data, [1, -2, 3, 4]);
        assert_eq!(decode_text(&encode_text(&m), "x").unwrap(), m);
        match decode_text("1 2\n5 x\n", "w.txt") {
            Err(CliError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(decode_text("1 2\n5\n", "w").is_err());
        assert!(decode_text("1 1\n5 6\n", "w").is_err());
    }

    #[test]
    fn image_is_stored_row_major() {
        let img = ImageMatrix::from_columns(2, &[vec![1, 2], vec![3, 4], vec![5, 6]]).unwrap();
        let m = MatrixFile::from_image(&img, DatapathKind::Standard { input_bits: 4, weight_bits: 4 }).unwrap();
        assert_eq!(m.data, [1, 3, 5, 2, 4, 6]);
        assert_eq!(m.to_image().unwrap(), img);
    }
}
