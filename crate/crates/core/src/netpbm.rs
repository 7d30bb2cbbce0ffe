//! Binary netpbm (P5 grayscale / P6 color) reading and writing.
//!
//! Samples above 255 use the 16-bit big-endian raster encoding; headers may
//! contain `#` comments. All parse failures report the byte offset at which
//! the input stopped making sense.

use std::path::Path;

use crate::error::{Error, Result};

/// A decoded raster: row-major, channel-interleaved samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// 1 for P5, 3 for P6.
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, maxval: u16) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::param(
                "channels",
                format!("netpbm supports 1 or 3 channels, got {channels}"),
            ));
        }
        if maxval == 0 {
            return Err(Error::param("maxval", "must be positive"));
        }
        Ok(Self {
            width,
            height,
            channels,
            maxval,
            samples: vec![0; width * height * channels],
        })
    }

    #[inline]
    pub fn sample(&self, row: usize, col: usize, ch: usize) -> u16 {
        self.samples[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: u16) {
        self.samples[(row * self.width + col) * self.channels + ch] = value;
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!(
            "{magic}\n{} {}\n{}\n",
            self.width, self.height, self.maxval
        )
        .into_bytes();
        if self.maxval < 256 {
            out.extend(self.samples.iter().map(|&s| s as u8));
        } else {
            out.reserve(self.samples.len() * 2);
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut p = Parser { bytes, offset: 0 };
        let channels = match (p.byte()?, p.byte()?) {
            (b'P', b'5') => 1,
            (b'P', b'6') => 3,
            _ => return Err(Error::format(0, "expected P5 or P6 magic")),
        };
        let width = p.integer("width")?;
        let height = p.integer("height")?;
        let maxval64 = p.integer("maxval")?;
        if maxval64 == 0 || maxval64 > u64::from(u16::MAX) {
            return Err(Error::format(
                p.offset,
                format!("maxval {maxval64} outside 1..=65535"),
            ));
        }
        let maxval = maxval64 as u16;
        // Exactly one whitespace byte separates the header from the raster.
        match p.byte()? {
            b' ' | b'\t' | b'\n' | b'\r' => {}
            other => {
                return Err(Error::format(
                    p.offset - 1,
                    format!("expected whitespace before raster, found 0x{other:02x}"),
                ))
            }
        }
        let count = width as usize * height as usize * channels;
        let wide = maxval >= 256;
        let need = count * if wide { 2 } else { 1 };
        let rest = &p.bytes[p.offset..];
        if rest.len() < need {
            return Err(Error::format(
                bytes.len(),
                format!("raster truncated: need {need} bytes, have {}", rest.len()),
            ));
        }
        if rest.len() > need {
            return Err(Error::format(
                p.offset + need,
                "trailing data after raster",
            ));
        }
        let mut samples = Vec::with_capacity(count);
        if wide {
            for pair in rest.chunks_exact(2) {
                samples.push(u16::from_be_bytes([pair[0], pair[1]]));
            }
        } else {
            samples.extend(rest.iter().map(|&b| u16::from(b)));
        }
        let decoded = Self {
            width: width as usize,
            height: height as usize,
            channels,
            maxval,
            samples,
        };
        let stride = if wide { 2 } else { 1 };
        for (i, &s) in decoded.samples.iter().enumerate() {
            if s > maxval {
                return Err(Error::format(
                    p.offset + i * stride,
                    format!("sample {s} exceeds maxval {maxval}"),
                ));
            }
        }
        Ok(decoded)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl Parser<'_> {
    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.offset)
            .ok_or_else(|| Error::format(self.bytes.len(), "unexpected end of header"))?;
        self.offset += 1;
        Ok(b)
    }

    /// Skips whitespace and `#` comments, then reads a decimal integer.
    fn integer(&mut self, what: &str) -> Result<u64> {
        loop {
            match self.byte()? {
                b' ' | b'\t' | b'\n' | b'\r' => {}
                b'#' => {
                    while self.byte()? != b'\n' {}
                }
                b'0'..=b'9' => {
                    self.offset -= 1;
                    break;
                }
                other => {
                    return Err(Error::format(
                        self.offset - 1,
                        format!("expected {what}, found 0x{other:02x}"),
                    ))
                }
            }
        }
        let start = self.offset;
        let mut value: u64 = 0;
        while let Some(&b) = self.bytes.get(self.offset) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(b - b'0')))
                .ok_or_else(|| Error::format(start, format!("{what} overflows")))?;
            self.offset += 1;
        }
        Ok(value)
    }
}
