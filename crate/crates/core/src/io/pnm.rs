//! Binary PNM codec: 8/16-bit grayscale PGM (`P5`) and RGB PPM (`P6`).

use std::path::Path;

use crate::error::{Error, Result};

/// Decoded PNM raster. Samples are row-major, interleaved for RGB.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub channels: usize,
    pub samples: Vec<u16>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader {
                path: self.path.to_path_buf(),
                detail: format!("expected {what}"),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::MalformedHeader {
                path: self.path.to_path_buf(),
                detail: format!("{what} out of range"),
            })
    }
}

/// Parses a binary PGM or PPM file.
pub fn decode(bytes: &[u8], path: &Path) -> Result<PnmImage> {
    let magic = bytes.get(..2).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        what: "magic number",
        expected: 2,
        found: bytes.len(),
    })?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!(
                    "magic {:?}; only binary PGM (P5) and PPM (P6) are supported",
                    String::from_utf8_lossy(other)
                ),
            })
        }
    };
    let mut h = Header {
        bytes,
        pos: 2,
        path,
    };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            detail: "zero image dimension".into(),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            detail: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => {
            return Err(Error::MalformedHeader {
                path: path.to_path_buf(),
                detail: "missing whitespace after maxval".into(),
            })
        }
    }
    let wide = maxval > 255;
    let count = width * height * channels;
    let need = count * if wide { 2 } else { 1 };
    let payload = &bytes[h.pos..];
    if payload.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            what: "pixel data",
            expected: need,
            found: payload.len(),
        });
    }
    let samples: Vec<u16> = if wide {
        payload[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        payload[..need].iter().map(|&b| u16::from(b)).collect()
    };
    if let Some(&s) = samples.iter().find(|&&s| usize::from(s) > maxval) {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            detail: format!("sample {s} exceeds maxval {maxval}"),
        });
    }
    Ok(PnmImage {
        width,
        height,
        maxval: maxval as u16,
        channels,
        samples,
    })
}

/// Encodes an 8-bit binary PGM.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(
        pixels.len(),
        width * height,
        "pixel count must match dimensions"
    );
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}
