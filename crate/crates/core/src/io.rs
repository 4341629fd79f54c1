//! File formats: binary field files, text line and homography files, JSON
//! VP files and binary PGM images.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{FieldPair, ScalarField};
use crate::geometry::{Homography, LineSegment};
use crate::vp::{VanishingPoint, VpAssignment};

pub const FIELD_MAGIC: &[u8; 4] = b"DLSF";
pub const FIELD_VERSION: u32 = 1;
pub const FIELD_HEADER_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("byte {offset}: {message}")]
    Binary { offset: usize, message: String },
    #[error("line {line}: {message}")]
    Text { line: usize, message: String },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] crate::error::Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

fn binary(offset: usize, message: impl Into<String>) -> IoError {
    IoError::Binary { offset, message: message.into() }
}

fn text(line: usize, message: impl Into<String>) -> IoError {
    IoError::Text { line, message: message.into() }
}

fn read_bytes(path: &Path) -> IoResult<Vec<u8>> {
    fs::read(path).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> IoResult<()> {
    fs::write(path, bytes).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

fn read_text(path: &Path) -> IoResult<String> {
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

/// Largest `f32` strictly below pi.
fn below_pi_f32() -> f32 {
    let p = PI as f32;
    if (p as f64) < PI {
        p
    } else {
        f32::from_bits(p.to_bits() - 1)
    }
}

pub fn encode_fields(fp: &FieldPair) -> Vec<u8> {
    let n = fp.width() * fp.height();
    let mut out = Vec::with_capacity(FIELD_HEADER_LEN + 8 * n);
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.extend_from_slice(&(fp.height() as u32).to_le_bytes());
    out.extend_from_slice(&(fp.width() as u32).to_le_bytes());
    out.extend_from_slice(&(fp.r as f32).to_le_bytes());
    for &d in fp.df.data() {
        out.extend_from_slice(&(d as f32).to_le_bytes());
    }
    let cap = below_pi_f32();
    for &a in fp.af.data() {
        out.extend_from_slice(&(a as f32).min(cap).to_le_bytes());
    }
    out
}

fn le_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn le_f32(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

pub fn decode_fields(bytes: &[u8]) -> IoResult<FieldPair> {
    if bytes.len() < FIELD_HEADER_LEN {
        return Err(binary(bytes.len(), format!("truncated header: {} of {FIELD_HEADER_LEN} bytes", bytes.len())));
    }
    if &bytes[..4] != FIELD_MAGIC {
        return Err(binary(0, "bad magic, expected \"DLSF\""));
    }
    let version = le_u32(bytes, 4);
    if version != FIELD_VERSION {
        return Err(binary(4, format!("unsupported version {version}")));
    }
    let height = le_u32(bytes, 8) as usize;
    let width = le_u32(bytes, 12) as usize;
    let r = le_f32(bytes, 16);
    if !(r.is_finite() && r > 0.0) {
        return Err(binary(16, format!("invalid radius {r}")));
    }
    let n = width
        .checked_mul(height)
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| binary(8, "dimensions overflow"))?;
    let expected = FIELD_HEADER_LEN + 8 * n;
    if bytes.len() < expected {
        return Err(binary(bytes.len(), format!("truncated payload: expected {expected} bytes, got {}", bytes.len())));
    }
    if bytes.len() > expected {
        return Err(binary(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let read_block = |start: usize| -> IoResult<Vec<f64>> {
        (0..n)
            .map(|i| {
                let off = start + 4 * i;
                let v = le_f32(bytes, off);
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(binary(off, format!("non-finite value {v}")))
                }
            })
            .collect()
    };
    let df = read_block(FIELD_HEADER_LEN)?;
    let af = read_block(FIELD_HEADER_LEN + 4 * n)?;
    Ok(FieldPair::new(ScalarField::new(width, height, df)?, ScalarField::new(width, height, af)?, r as f64)?)
}

pub fn read_fields(path: &Path) -> IoResult<FieldPair> {
    decode_fields(&read_bytes(path)?)
}

pub fn write_fields(path: &Path, fp: &FieldPair) -> IoResult<()> {
    write_bytes(path, &encode_fields(fp))
}

/// Segments plus the leading `#` lines of the file they came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinesFile {
    pub header: Vec<String>,
    pub lines: Vec<LineSegment>,
}

impl LinesFile {
    pub fn new(lines: Vec<LineSegment>) -> Self {
        Self { header: Vec::new(), lines }
    }

    pub fn parse(src: &str) -> IoResult<Self> {
        let mut out = LinesFile::default();
        for (k, raw) in src.lines().enumerate() {
            let line_no = k + 1;
            let t = raw.trim();
            if t.is_empty() {
                continue;
            }
            if t.starts_with('#') {
                if out.lines.is_empty() {
                    out.header.push(raw.to_string());
                }
                continue;
            }
            let parts: Vec<&str> = t.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(text(line_no, format!("expected 4 comma-separated values, found {}", parts.len())));
            }
            let mut v = [0.0; 4];
            for (slot, p) in v.iter_mut().zip(&parts) {
                *slot = p.parse::<f64>().map_err(|_| text(line_no, format!("invalid number {p:?}")))?;
                if !slot.is_finite() {
                    return Err(text(line_no, format!("non-finite value {p:?}")));
                }
            }
            let seg = LineSegment::from_coords(v[0], v[1], v[2], v[3]).map_err(|e| text(line_no, e.to_string()))?;
            out.lines.push(seg);
        }
        Ok(out)
    }

    pub fn format(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            s.push_str(h);
            s.push('\n');
        }
        for l in &self.lines {
            let _ = writeln!(s, "{},{},{},{}", l.p1.x, l.p1.y, l.p2.x, l.p2.y);
        }
        s
    }

    pub fn read(path: &Path) -> IoResult<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> IoResult<()> {
        write_bytes(path, self.format().as_bytes())
    }
}

pub fn parse_homography(src: &str) -> IoResult<Homography> {
    let mut values = Vec::with_capacity(9);
    for (k, raw) in src.lines().enumerate() {
        for tok in raw.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| text(k + 1, format!("invalid number {tok:?}")))?;
            if !v.is_finite() {
                return Err(text(k + 1, format!("non-finite value {tok:?}")));
            }
            values.push(v);
            if values.len() > 9 {
                return Err(text(k + 1, "more than 9 values"));
            }
        }
    }
    let arr: [f64; 9] = values
        .as_slice()
        .try_into()
        .map_err(|_| text(src.lines().count().max(1), format!("expected 9 values, found {}", values.len())))?;
    Ok(Homography::from_row_major(arr)?)
}

pub fn format_homography(h: &Homography) -> String {
    let m = h.to_row_major();
    let mut s = String::new();
    for row in m.chunks(3) {
        let _ = writeln!(s, "{} {} {}", row[0], row[1], row[2]);
    }
    s
}

pub fn read_homography(path: &Path) -> IoResult<Homography> {
    parse_homography(&read_text(path)?)
}

pub fn write_homography(path: &Path, h: &Homography) -> IoResult<()> {
    write_bytes(path, format_homography(h).as_bytes())
}

/// VPs as homogeneous triples with the per-line VP index (`null` for
/// unassigned lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpFile {
    pub vps: Vec<[f64; 3]>,
    pub assignment: Vec<Option<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
}

impl VpFile {
    pub fn from_model(vps: &[VanishingPoint], assignment: &VpAssignment) -> Self {
        Self {
            vps: vps.iter().map(|v| (*v.as_vector()).into()).collect(),
            assignment: assignment.0.clone(),
            width: None,
            height: None,
        }
    }

    pub fn to_model(&self) -> IoResult<(Vec<VanishingPoint>, VpAssignment)> {
        let vps = self
            .vps
            .iter()
            .map(|v| VanishingPoint::from_homogeneous(nalgebra::Vector3::new(v[0], v[1], v[2])))
            .collect::<crate::error::Result<Vec<_>>>()?;
        if self.assignment.iter().flatten().any(|&i| i >= vps.len()) {
            return Err(crate::error::Error::InvalidParameter("assignment refers to a missing VP").into());
        }
        Ok((vps, VpAssignment(self.assignment.clone())))
    }

    pub fn parse(src: &str) -> IoResult<Self> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn format(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("VP file serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> IoResult<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> IoResult<()> {
        write_bytes(path, self.format().as_bytes())
    }
}

struct PgmHeader {
    pos: usize,
}

impl PgmHeader {
    fn skip_space_and_comments(&mut self, b: &[u8]) {
        while self.pos < b.len() {
            if b[self.pos] == b'#' {
                while self.pos < b.len() && b[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, b: &[u8], what: &str) -> IoResult<usize> {
        self.skip_space_and_comments(b);
        let start = self.pos;
        while self.pos < b.len() && b[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(binary(start, format!("expected {what}")));
        }
        std::str::from_utf8(&b[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| binary(start, format!("invalid {what}")))
    }
}

/// Decode an 8-bit binary PGM (`P5`) into gray levels.
pub fn decode_pgm(bytes: &[u8]) -> IoResult<ScalarField> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(binary(0, "not a binary PGM (expected \"P5\")"));
    }
    let mut hdr = PgmHeader { pos: 2 };
    let width = hdr.number(bytes, "width")?;
    let height = hdr.number(bytes, "height")?;
    let maxval_at = hdr.pos;
    let maxval = hdr.number(bytes, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(binary(maxval_at, format!("unsupported maxval {maxval}, only 8-bit images are read")));
    }
    if hdr.pos >= bytes.len() || !bytes[hdr.pos].is_ascii_whitespace() {
        return Err(binary(hdr.pos, "expected a single whitespace byte after maxval"));
    }
    let start = hdr.pos + 1;
    let n = width.checked_mul(height).ok_or_else(|| binary(2, "dimensions overflow"))?;
    if bytes.len() < start + n {
        return Err(binary(bytes.len(), format!("truncated pixel data: expected {n} bytes")));
    }
    let data = bytes[start..start + n].iter().map(|&v| v as f64).collect();
    Ok(ScalarField::new(width, height, data)?)
}

/// Encode gray levels as an 8-bit PGM, rounding and clamping to [0, 255].
pub fn encode_pgm(image: &ScalarField) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn read_pgm(path: &Path) -> IoResult<ScalarField> {
    decode_pgm(&read_bytes(path)?)
}

pub fn write_pgm(path: &Path, image: &ScalarField) -> IoResult<()> {
    write_bytes(path, &encode_pgm(image))
}
