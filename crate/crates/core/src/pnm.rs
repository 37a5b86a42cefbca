//! Binary netpbm codecs for plane dumps and dataset images.
//!
//! Layouts written by this module:
//!
//! * PGM: `P5\n<width> <height>\n255\n` followed by `width·height` bytes,
//!   row-major, top row first.
//! * PBM: `P4\n<width> <height>\n` followed by `height` rows of
//!   `ceil(width/8)` bytes. Bits are packed most-significant first; padding
//!   bits at the end of each row are 0. A set bit (1) is a digital 1.
//!
//! Analog planes are dumped as PGM with every value offset by +128 and
//! clamped to `0..=255`, so a saturating plane in `[-128, 127]` round-trips
//! exactly.
//!
//! The decoders accept any whitespace and `#` comments in the header, and PGM
//! maxvals below 255 (rescaled to 0..=255).

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;
use crate::io::write_atomic;
use crate::prep::{prepare, DEFAULT_THRESHOLD};
use crate::plane::{AnalogPlane, BitImage, DigitalPlane, GrayImage, Saturation};

/// Offset added to analog values when dumping them as PGM.
pub const ANALOG_OFFSET: i32 = 128;

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn encode_pbm(image: &BitImage) -> Vec<u8> {
    let (h, w) = (image.height(), image.width());
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let row_bytes = w.div_ceil(8);
    for r in 0..h {
        let mut row = vec![0u8; row_bytes];
        for c in 0..w {
            if image.get(r, c) != 0 {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

struct Header<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {what} in header"))
    }

    /// Consumes the single whitespace byte that ends the header.
    fn end(&mut self) -> std::result::Result<&'a [u8], String> {
        match self.data.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(&self.data[self.pos + 1..]),
            _ => Err("header not terminated by whitespace".into()),
        }
    }
}

fn magic<'a>(data: &'a [u8], expect: &str) -> std::result::Result<Header<'a>, String> {
    if data.len() < 2 || &data[..2] != expect.as_bytes() {
        return Err(format!("not a binary netpbm file (expected magic {expect})"));
    }
    Ok(Header { data, pos: 2 })
}

pub fn decode_pgm(data: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut h = magic(data, "P5")?;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let body = h.end()?;
    let n = width * height;
    if body.len() < n {
        return Err(format!("truncated pixel data: {} of {n} bytes", body.len()));
    }
    let pixels = body[..n]
        .iter()
        .map(|&v| {
            let v = v.min(maxval as u8) as u32;
            ((v * 255 + maxval as u32 / 2) / maxval as u32) as u8
        })
        .collect();
    Ok(GrayImage {
        height,
        width,
        pixels,
    })
}

pub fn decode_pbm(data: &[u8]) -> std::result::Result<BitImage, String> {
    let mut h = magic(data, "P4")?;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let body = h.end()?;
    let row_bytes = width.div_ceil(8);
    if body.len() < row_bytes * height {
        return Err(format!(
            "truncated bit data: {} of {} bytes",
            body.len(),
            row_bytes * height
        ));
    }
    Ok(BitImage::from_fn(height, width, |r, c| {
        body[r * row_bytes + c / 8] & (0x80 >> (c % 8)) != 0
    }))
}

pub fn analog_to_gray(plane: &AnalogPlane) -> GrayImage {
    let g = plane.geometry();
    GrayImage {
        height: g.height(),
        width: g.width(),
        pixels: plane
            .values()
            .iter()
            .map(|&v| (v.saturating_add(ANALOG_OFFSET)).clamp(0, 255) as u8)
            .collect(),
    }
}

pub fn gray_to_analog(
    geometry: PlaneGeometry,
    saturation: Saturation,
    image: &GrayImage,
) -> Result<AnalogPlane> {
    geometry.check_image(image.height, image.width)?;
    AnalogPlane::from_values(
        geometry,
        saturation,
        image
            .pixels
            .iter()
            .map(|&p| p as i32 - ANALOG_OFFSET)
            .collect(),
    )
}

fn pnm_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Pnm {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&data).map_err(|m| pnm_err(path, m))
}

pub fn read_pbm(path: &Path) -> Result<BitImage> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pbm(&data).map_err(|m| pnm_err(path, m))
}

/// Reads a network input from a P4 bitmap (used as is) or a P5 graymap
/// (thresholded and majority-downsampled to `size`).
pub fn read_input(path: &Path, size: usize) -> Result<BitImage> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bits = match data.get(..2) {
        Some(b"P4") => decode_pbm(&data).map_err(|m| pnm_err(path, m))?,
        Some(b"P5") => {
            let gray = decode_pgm(&data).map_err(|m| pnm_err(path, m))?;
            prepare(&gray, DEFAULT_THRESHOLD, size).map_err(|e| pnm_err(path, e.to_string()))?
        }
        _ => return Err(pnm_err(path, "expected a binary PBM (P4) or PGM (P5) file")),
    };
    if bits.height() != size || bits.width() != size {
        return Err(pnm_err(
            path,
            format!("bitmap is {}x{}, expected {size}x{size}", bits.width(), bits.height()),
        ));
    }
    Ok(bits)
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    write_atomic(path, &encode_pgm(image))
}

pub fn write_pbm(path: &Path, image: &BitImage) -> Result<()> {
    write_atomic(path, &encode_pbm(image))
}

pub fn dump_analog(path: &Path, plane: &AnalogPlane) -> Result<()> {
    write_pgm(path, &analog_to_gray(plane))
}

pub fn dump_digital(path: &Path, plane: &DigitalPlane) -> Result<()> {
    write_pbm(path, &plane.to_image())
}
