//! Minimal binary PGM (P5) reader for the `flashscan` pipeline.
//!
//! Only maxval 255 is supported; that is what phone capture stacks hand
//! over and what the luma plane of [`super::Frame`] stores.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PgmError {
    #[error("not a binary PGM: expected 'P5' magic")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(&'static str),
    #[error("unsupported maxval {0} (only 255)")]
    UnsupportedMaxval(u64),
    #[error("pixel data truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
}

/// Parse P5 bytes into `(width, height, luma)`.
///
/// Handles whitespace and `#` comments between header tokens per the PNM
/// convention. Exactly one whitespace byte separates the maxval from the
/// pixel data.
pub fn read_pgm(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), PgmError> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut pos = 2usize;
    let width = read_header_int(bytes, &mut pos)?;
    let height = read_header_int(bytes, &mut pos)?;
    let maxval = read_header_int(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    // Single whitespace byte, then raw pixels.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PgmError::BadHeader("missing whitespace before pixel data")),
    }
    if width == 0 || height == 0 || width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(PgmError::BadHeader("bad dimensions"));
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .ok_or(PgmError::BadHeader("bad dimensions"))?;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(PgmError::Truncated { expected, got: data.len() });
    }
    Ok((width as u32, height as u32, data[..expected].to_vec()))
}

fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<u64, PgmError> {
    // Skip whitespace and comment lines.
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while matches!(bytes.get(*pos), Some(b) if b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return Err(PgmError::BadHeader("expected integer"));
    }
    let text = std::str::from_utf8(&bytes[start..*pos]).expect("digits are ascii");
    text.parse::<u64>().map_err(|_| PgmError::BadHeader("integer too large"))
}

/// Serialize a luma plane as binary PGM (used by tests and the simulator
/// tooling to produce sample frames).
pub fn write_pgm(width: u32, height: u32, luma: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(luma);
    out
}
