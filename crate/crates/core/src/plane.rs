//! Register planes and the plain images that feed them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;

/// Default saturation bounds of an analog register.
pub const SAT_MIN: i32 = -128;
pub const SAT_MAX: i32 = 127;

/// Value range policy for analog planes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Saturation {
    /// Exact integer arithmetic. Values are held in `i32`; results beyond
    /// that range pin at its bounds.
    #[default]
    Ideal,
    /// Every stored value is clamped into `[min, max]`.
    Saturating { min: i32, max: i32 },
}

impl Saturation {
    pub fn saturating() -> Self {
        Saturation::Saturating {
            min: SAT_MIN,
            max: SAT_MAX,
        }
    }

    #[inline]
    pub fn clamp(self, v: i64) -> i32 {
        match self {
            Saturation::Ideal => v.clamp(i32::MIN as i64, i32::MAX as i64) as i32,
            Saturation::Saturating { min, max } => v.clamp(min as i64, max as i64) as i32,
        }
    }

    pub fn is_saturating(self) -> bool {
        matches!(self, Saturation::Saturating { .. })
    }
}

/// 8-bit grayscale image of any size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Input(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// Binary image of any size; every element is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitImage {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BitImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![0; height * width],
        }
    }

    /// Rejects any element other than 0 or 1.
    pub fn from_bits(height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Input(format!(
                "{} bits for a {height}x{width} image",
                bits.len()
            )));
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Input(format!(
                "non-binary value {} at ({}, {})",
                bits[pos],
                pos / width,
                pos % width
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c) as u8);
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Grayscale rendering with 1 → 255.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            pixels: self.bits.iter().map(|&b| b * 255).collect(),
        }
    }
}

/// One analog register plane (AREG/PIX).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalogPlane {
    geometry: PlaneGeometry,
    values: Vec<i32>,
    saturation: Saturation,
}

impl AnalogPlane {
    pub fn zeros(geometry: PlaneGeometry, saturation: Saturation) -> Self {
        Self {
            geometry,
            values: vec![0; geometry.pixels()],
            saturation,
        }
    }

    /// Builds a plane from raw values, clamping them under `saturation`.
    pub fn from_values(
        geometry: PlaneGeometry,
        saturation: Saturation,
        values: Vec<i32>,
    ) -> Result<Self> {
        if values.len() != geometry.pixels() {
            return Err(Error::Geometry(format!(
                "{} values for a {} plane",
                values.len(),
                geometry
            )));
        }
        let values = values
            .into_iter()
            .map(|v| saturation.clamp(v as i64))
            .collect();
        Ok(Self {
            geometry,
            values,
            saturation,
        })
    }

    pub fn geometry(&self) -> &PlaneGeometry {
        &self.geometry
    }

    pub fn saturation(&self) -> Saturation {
        self.saturation
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [i32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.values[self.geometry.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: i64) {
        let i = self.geometry.index(row, col);
        self.values[i] = self.saturation.clamp(value);
    }

    /// Bit plane with 1 wherever the value is strictly greater than `t`.
    pub fn threshold(&self, t: i32) -> DigitalPlane {
        DigitalPlane {
            geometry: self.geometry,
            bits: self.values.iter().map(|&v| (v > t) as u8).collect(),
        }
    }
}

/// One digital register plane (DREG) of single bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DigitalPlane {
    geometry: PlaneGeometry,
    bits: Vec<u8>,
}

impl DigitalPlane {
    pub fn zeros(geometry: PlaneGeometry) -> Self {
        Self {
            geometry,
            bits: vec![0; geometry.pixels()],
        }
    }

    pub fn ones(geometry: PlaneGeometry) -> Self {
        Self {
            geometry,
            bits: vec![1; geometry.pixels()],
        }
    }

    pub fn from_fn(geometry: PlaneGeometry, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let img = BitImage::from_fn(geometry.height(), geometry.width(), &mut f);
        Self {
            geometry,
            bits: img.bits,
        }
    }

    pub fn from_image(geometry: PlaneGeometry, image: &BitImage) -> Result<Self> {
        geometry.check_image(image.height(), image.width())?;
        Ok(Self {
            geometry,
            bits: image.bits.clone(),
        })
    }

    pub fn to_image(&self) -> BitImage {
        BitImage {
            height: self.geometry.height(),
            width: self.geometry.width(),
            bits: self.bits.clone(),
        }
    }

    pub fn geometry(&self) -> &PlaneGeometry {
        &self.geometry
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[self.geometry.index(row, col)] != 0
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturating_clamps_on_construction() {
        let g = PlaneGeometry::with_block_size(2).unwrap();
        let mut vals = vec![0; g.pixels()];
        vals[0] = 500;
        vals[1] = -500;
        let p = AnalogPlane::from_values(g, Saturation::saturating(), vals).unwrap();
        assert_eq!(p.values()[0], 127);
        assert_eq!(p.values()[1], -128);
    }

    #[test]
    fn threshold_is_strict() {
        let g = PlaneGeometry::with_block_size(2).unwrap();
        let zero = AnalogPlane::zeros(g, Saturation::Ideal);
        assert_eq!(zero.threshold(0).count_ones(), 0);
        let one = AnalogPlane::from_values(g, Saturation::Ideal, vec![1; g.pixels()]).unwrap();
        assert_eq!(one.threshold(0).count_ones(), g.pixels());
    }

    #[test]
    fn bit_image_rejects_non_binary() {
        let err = BitImage::from_bits(2, 2, vec![0, 1, 2, 0]).unwrap_err();
        assert!(err.to_string().contains("(1, 0)"));
    }
}
