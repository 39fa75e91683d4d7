//! Netpbm grey (P2/P5) and colour (P3/P6) images.
//!
//! Samples are scaled to `[0, 1]` by the file's maxval on reading and
//! quantized with `round(v * maxval)` on writing. Binary samples wider than a
//! byte are big-endian, as the format prescribes.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::grid::{GridSpec, ScalarField};

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported maxval {0}")]
    UnsupportedMaxval(u64),

    #[error("sample {value} exceeds maxval {maxval}")]
    SampleOutOfRange { value: u64, maxval: u32 },

    #[error("image is {width}x{height}; at least 3x3 is required for a field")]
    TooSmall { width: usize, height: usize },

    #[error("expected a {expected} image")]
    WrongKind { expected: &'static str },
}

impl PnmError {
    /// Stable short identifier, used in machine-readable diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            PnmError::MalformedHeader(_) => "pnm_malformed_header",
            PnmError::Truncated { .. } => "pnm_truncated",
            PnmError::UnsupportedMaxval(_) => "pnm_unsupported_maxval",
            PnmError::SampleOutOfRange { .. } => "pnm_sample_out_of_range",
            PnmError::TooSmall { .. } => "pnm_too_small",
            PnmError::WrongKind { .. } => "pnm_wrong_kind",
        }
    }
}

/// Decoded samples before they become fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// One row-major plane per channel, scaled to `[0, 1]`.
    pub planes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Gray(ScalarField),
    Rgb([ScalarField; 3]),
}

impl Image {
    pub fn channels(&self) -> Vec<ScalarField> {
        match self {
            Image::Gray(f) => vec![f.clone()],
            Image::Rgb(c) => c.to_vec(),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<u64, PnmError> {
        let tok = self.token().ok_or_else(|| PnmError::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| PnmError::MalformedHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

pub fn decode(bytes: &[u8]) -> Result<PnmImage, PnmError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(PnmError::MalformedHeader("missing magic number".into()));
    }
    let (channels, ascii) = match bytes[1] {
        b'2' => (1, true),
        b'5' => (1, false),
        b'3' => (3, true),
        b'6' => (3, false),
        other => return Err(PnmError::MalformedHeader(format!("unsupported magic P{}", other as char))),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(PnmError::MalformedHeader("magic number not followed by whitespace".into()));
    }
    let width = cur.header_number("width")? as usize;
    let height = cur.header_number("height")? as usize;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::MalformedHeader(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PnmError::UnsupportedMaxval(maxval));
    }
    let maxval = maxval as u32;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| PnmError::MalformedHeader("dimensions overflow".into()))?;

    let mut raw = Vec::with_capacity(expected);
    if ascii {
        while raw.len() < expected {
            match cur.token() {
                Some(tok) => {
                    let v = std::str::from_utf8(tok)
                        .ok()
                        .and_then(|s| s.parse::<u64>().ok())
                        .ok_or_else(|| PnmError::MalformedHeader(format!("bad sample {:?}", String::from_utf8_lossy(tok))))?;
                    raw.push(v);
                }
                None => return Err(PnmError::Truncated { expected, found: raw.len() }),
            }
        }
    } else {
        // Exactly one whitespace byte separates the header from the payload.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(PnmError::Truncated { expected, found: 0 });
        }
        let data = &bytes[cur.pos + 1..];
        let width_bytes = if maxval > 255 { 2 } else { 1 };
        let available = data.len() / width_bytes;
        if available < expected {
            return Err(PnmError::Truncated { expected, found: available });
        }
        for k in 0..expected {
            raw.push(if width_bytes == 2 {
                u64::from(u16::from_be_bytes([data[2 * k], data[2 * k + 1]]))
            } else {
                u64::from(data[k])
            });
        }
    }
    if let Some(v) = raw.iter().find(|v| **v > u64::from(maxval)) {
        return Err(PnmError::SampleOutOfRange { value: *v, maxval });
    }
    let scale = f64::from(maxval);
    let planes = (0..channels)
        .map(|c| (0..width * height).map(|p| raw[p * channels + c] as f64 / scale).collect())
        .collect();
    Ok(PnmImage { width, height, maxval, planes })
}

impl PnmImage {
    pub fn into_image(self) -> Result<Image, PnmError> {
        let spec = GridSpec::new(self.width, self.height)
            .map_err(|_| PnmError::TooSmall { width: self.width, height: self.height })?;
        let mut fields = self.planes.into_iter().map(|p| ScalarField::from_raw(spec, p));
        Ok(if fields.len() == 1 {
            Image::Gray(fields.next().unwrap())
        } else {
            let (r, g, b) = (fields.next().unwrap(), fields.next().unwrap(), fields.next().unwrap());
            Image::Rgb([r, g, b])
        })
    }
}

pub fn read_image(path: impl AsRef<Path>) -> crate::Result<Image> {
    let bytes = fs::read(path)?;
    Ok(decode(&bytes)?.into_image()?)
}

/// Reads a single-channel image.
pub fn read_gray(path: impl AsRef<Path>) -> crate::Result<ScalarField> {
    match read_image(path)? {
        Image::Gray(f) => Ok(f),
        Image::Rgb(_) => Err(PnmError::WrongKind { expected: "greyscale" }.into()),
    }
}

fn check_maxval(maxval: u32) -> Result<(), PnmError> {
    if maxval == 0 || maxval > 65535 {
        Err(PnmError::UnsupportedMaxval(u64::from(maxval)))
    } else {
        Ok(())
    }
}

fn quantize(v: f64, maxval: u32) -> u32 {
    (v.clamp(0.0, 1.0) * f64::from(maxval)).round() as u32
}

fn push_sample(out: &mut Vec<u8>, q: u32, maxval: u32) {
    if maxval > 255 {
        out.extend_from_slice(&(q as u16).to_be_bytes());
    } else {
        out.push(q as u8);
    }
}

/// Binary encoding of interleaved channels (`P5` for one, `P6` for three).
pub fn encode(channels: &[&ScalarField], maxval: u32) -> crate::Result<Vec<u8>> {
    check_maxval(maxval)?;
    let magic = match channels.len() {
        1 => "P5",
        3 => "P6",
        _ => return Err(crate::Error::InvalidParameter("images have one or three channels".into())),
    };
    let spec = *channels[0].spec();
    if channels.iter().any(|c| *c.spec() != spec) {
        return Err(crate::Error::SpecMismatch);
    }
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", spec.nx, spec.ny).into_bytes();
    for p in 0..spec.len() {
        for c in channels {
            push_sample(&mut out, quantize(c.values()[p], maxval), maxval);
        }
    }
    Ok(out)
}

/// Writes a binary greyscale image.
pub fn write_image(field: &ScalarField, path: impl AsRef<Path>, maxval: u32) -> crate::Result<()> {
    fs::write(path, encode(&[field], maxval)?)?;
    Ok(())
}

/// Writes a binary colour image from three channels.
pub fn write_rgb(channels: &[ScalarField; 3], path: impl AsRef<Path>, maxval: u32) -> crate::Result<()> {
    fs::write(path, encode(&[&channels[0], &channels[1], &channels[2]], maxval)?)?;
    Ok(())
}
