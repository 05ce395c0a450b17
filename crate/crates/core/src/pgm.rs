//! Binary PGM (P5, maxval 255) reading and writing.

use crate::image::{Image, ImageError};
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM: expected magic P5")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0} (must be 1..=255)")]
    BadMaxval(u32),
    #[error("truncated pixel data: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.data().len() + 32);
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width(), img.height()).as_bytes());
    out.extend_from_slice(img.data());
    out
}

pub fn write(img: &Image, path: &Path) -> Result<(), PgmError> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    file.write_all(&encode(img))?;
    file.flush()?;
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<Image, PgmError> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0u32; 3]; // width, height, maxval
    for field in fields.iter_mut() {
        *field = next_header_int(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::BadMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = width as usize * height as usize;
    let got = bytes.len().saturating_sub(pos);
    if got < expected {
        return Err(PgmError::Truncated { expected, got });
    }
    Ok(Image::new(
        width,
        height,
        bytes[pos..pos + expected].to_vec(),
    )?)
}

pub fn read(path: &Path) -> Result<Image, PgmError> {
    decode(&fs::read(path)?)
}

/// Reads the next ASCII integer, skipping whitespace and `#` comments.
/// Leaves `pos` just past the last digit so the caller controls the separator.
fn next_header_int(bytes: &[u8], pos: &mut usize) -> Result<u32, PgmError> {
    let mut i = *pos;
    loop {
        match bytes.get(i) {
            Some(b) if b.is_ascii_whitespace() => i += 1,
            Some(b'#') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            Some(b) if b.is_ascii_digit() => break,
            Some(b) => {
                return Err(PgmError::BadHeader(format!(
                    "unexpected byte 0x{b:02x} at offset {i}"
                )))
            }
            None => return Err(PgmError::BadHeader("unexpected end of header".into())),
        }
    }
    let mut value: u64 = 0;
    let mut digits = 0;
    while let Some(b) = bytes.get(i) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value * 10 + u64::from(b - b'0');
        if value > u64::from(u32::MAX) {
            return Err(PgmError::BadHeader("header value overflows u32".into()));
        }
        digits += 1;
        i += 1;
    }
    if digits == 0 {
        return Err(PgmError::BadHeader("missing integer field".into()));
    }
    *pos = i;
    Ok(value as u32)
}
