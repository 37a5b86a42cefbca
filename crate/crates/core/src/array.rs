//! Pixel-processor-array state and its plane-parallel primitives.
//!
//! Every operation acts on whole planes at once. Operations that write an
//! analog register take an optional digital mask: where the mask bit is 0 the
//! destination keeps its previous value.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;
use crate::noise::{self, NoiseModel, NoiseSource};
use crate::plane::{AnalogPlane, DigitalPlane, GrayImage, Saturation};

/// Name of the conditional-execution flag register in the digital bank.
pub const FLAG: &str = "FLAG";
/// Name of the light-acquisition register.
pub const PIX: &str = "PIX";

/// Neighbour-transfer direction. Content moves toward the named side:
/// shifting `N` by one moves the value at row `r` to row `r - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    S,
    E,
    W,
}

impl Direction {
    /// Source offset `(Δr, Δc)` such that `dst(r,c) = src(r+Δr, c+Δc)` for one step.
    pub fn source_offset(self) -> (isize, isize) {
        match self {
            Direction::N => (1, 0),
            Direction::S => (-1, 0),
            Direction::E => (0, -1),
            Direction::W => (0, 1),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Direction::N => "N",
            Direction::S => "S",
            Direction::E => "E",
            Direction::W => "W",
        };
        f.write_str(s)
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "N" => Ok(Direction::N),
            "S" => Ok(Direction::S),
            "E" => Ok(Direction::E),
            "W" => Ok(Direction::W),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicOp {
    And,
    Or,
    Xor,
    Not,
}

/// Affine map applied to 8-bit pixels when an image is loaded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMap {
    pub scale: f64,
    pub offset: f64,
}

impl Default for PixelMap {
    fn default() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
        }
    }
}

/// Register-file layout and arithmetic policy of an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub geometry: PlaneGeometry,
    pub analog: Vec<String>,
    pub digital: Vec<String>,
    pub saturation: Saturation,
    pub noise: NoiseModel,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self::new(PlaneGeometry::default())
    }
}

impl ArrayConfig {
    /// Seven analog registers `A`–`F`, `PIX` and twelve digital `R1`–`R12`.
    pub fn new(geometry: PlaneGeometry) -> Self {
        Self {
            geometry,
            analog: ["A", "B", "C", "D", "E", "F", PIX]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            digital: (1..=12).map(|i| format!("R{i}")).collect(),
            saturation: Saturation::Ideal,
            noise: NoiseModel::none(),
        }
    }

    pub fn with_saturation(mut self, saturation: Saturation) -> Self {
        self.saturation = saturation;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    fn validate(&self) -> Result<()> {
        check_unique("analog", &self.analog)?;
        check_unique("digital", &self.digital)?;
        if self.digital.iter().any(|n| n == FLAG) {
            return Err(Error::RegisterConfig(format!(
                "`{FLAG}` is reserved for the flag register"
            )));
        }
        if let Saturation::Saturating { min, max } = self.saturation {
            if min > max {
                return Err(Error::RegisterConfig(format!(
                    "saturation range [{min}, {max}] is empty"
                )));
            }
        }
        Ok(())
    }
}

fn check_unique(bank: &str, names: &[String]) -> Result<()> {
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() || n.chars().any(char::is_whitespace) || n.contains('=') {
            return Err(Error::RegisterConfig(format!(
                "{bank} register name `{n}` is not a bare word"
            )));
        }
        if names[..i].contains(n) {
            return Err(Error::RegisterConfig(format!(
                "duplicate {bank} register `{n}`"
            )));
        }
    }
    Ok(())
}

/// Resolved analog register handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalogId(usize);

/// Resolved digital register handle (the flag register included).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DigitalId(usize);

/// The whole array: analog bank, digital bank, flag plane and the readout
/// noise stream.
#[derive(Debug, Clone)]
pub struct ArrayState {
    config: ArrayConfig,
    analog: Vec<AnalogPlane>,
    // Configured digital registers followed by FLAG.
    digital: Vec<DigitalPlane>,
    noise: NoiseSource,
    scratch: Vec<i32>,
}

impl ArrayState {
    pub fn new(config: ArrayConfig) -> Result<Self> {
        config.validate()?;
        let g = config.geometry;
        Ok(Self {
            analog: vec![AnalogPlane::zeros(g, config.saturation); config.analog.len()],
            digital: vec![DigitalPlane::zeros(g); config.digital.len() + 1],
            noise: NoiseSource::new(config.noise),
            scratch: vec![0; g.pixels()],
            config,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    pub fn geometry(&self) -> &PlaneGeometry {
        &self.config.geometry
    }

    /// Equality of every register plane, ignoring RNG position.
    pub fn planes_eq(&self, other: &ArrayState) -> bool {
        self.analog == other.analog && self.digital == other.digital
    }

    pub fn analog_id(&self, name: &str) -> Result<AnalogId> {
        self.config
            .analog
            .iter()
            .position(|n| n == name)
            .map(AnalogId)
            .ok_or_else(|| Error::UnknownRegister {
                bank: "analog",
                name: name.to_string(),
            })
    }

    pub fn digital_id(&self, name: &str) -> Result<DigitalId> {
        if name == FLAG {
            return Ok(DigitalId(self.config.digital.len()));
        }
        self.config
            .digital
            .iter()
            .position(|n| n == name)
            .map(DigitalId)
            .ok_or_else(|| Error::UnknownRegister {
                bank: "digital",
                name: name.to_string(),
            })
    }

    pub fn analog(&self, name: &str) -> Result<&AnalogPlane> {
        Ok(self.analog_plane(self.analog_id(name)?))
    }

    pub fn digital(&self, name: &str) -> Result<&DigitalPlane> {
        Ok(self.digital_plane(self.digital_id(name)?))
    }

    pub fn flag(&self) -> &DigitalPlane {
        self.digital.last().expect("flag register")
    }

    pub fn analog_plane(&self, id: AnalogId) -> &AnalogPlane {
        &self.analog[id.0]
    }

    pub fn digital_plane(&self, id: DigitalId) -> &DigitalPlane {
        &self.digital[id.0]
    }

    /// Replaces an analog register wholesale (values are re-clamped).
    pub fn set_analog(&mut self, name: &str, plane: &AnalogPlane) -> Result<()> {
        let id = self.analog_id(name)?;
        self.config.geometry.check_same(plane.geometry())?;
        let sat = self.config.saturation;
        for (d, &s) in self.analog[id.0].values_mut().iter_mut().zip(plane.values()) {
            *d = sat.clamp(s as i64);
        }
        Ok(())
    }

    // --- name-based primitives ---------------------------------------------

    /// Loads an 8-bit image through `v ↦ round(v·scale + offset)`.
    pub fn load_image(&mut self, image: &GrayImage, dest: &str, map: PixelMap) -> Result<()> {
        self.config.geometry.check_image(image.height, image.width)?;
        let id = self.analog_id(dest)?;
        let sat = self.config.saturation;
        for (d, &p) in self.analog[id.0].values_mut().iter_mut().zip(&image.pixels) {
            *d = sat.clamp((p as f64 * map.scale + map.offset).round() as i64);
        }
        Ok(())
    }

    pub fn threshold(&mut self, dst: &str, src: &str, t: i32) -> Result<()> {
        let (d, s) = (self.digital_id(dst)?, self.analog_id(src)?);
        self.threshold_ids(d, s, t);
        Ok(())
    }

    pub fn add(&mut self, dst: &str, a: &str, b: &str, mask: Option<&str>) -> Result<()> {
        let (d, a, b, m) = self.resolve3(dst, a, b, mask)?;
        self.add_ids(d, a, b, m);
        Ok(())
    }

    pub fn sub(&mut self, dst: &str, a: &str, b: &str, mask: Option<&str>) -> Result<()> {
        let (d, a, b, m) = self.resolve3(dst, a, b, mask)?;
        self.sub_ids(d, a, b, m);
        Ok(())
    }

    pub fn max_combine(&mut self, dst: &str, a: &str, b: &str, mask: Option<&str>) -> Result<()> {
        let (d, a, b, m) = self.resolve3(dst, a, b, mask)?;
        self.max_ids(d, a, b, m);
        Ok(())
    }

    pub fn neg(&mut self, dst: &str, src: &str, mask: Option<&str>) -> Result<()> {
        let (d, s, m) = self.resolve2(dst, src, mask)?;
        self.neg_ids(d, s, m);
        Ok(())
    }

    pub fn copy(&mut self, dst: &str, src: &str, mask: Option<&str>) -> Result<()> {
        let (d, s, m) = self.resolve2(dst, src, mask)?;
        self.copy_ids(d, s, m);
        Ok(())
    }

    pub fn shift(&mut self, dst: &str, src: &str, dir: Direction, steps: usize) -> Result<()> {
        let (d, s) = (self.analog_id(dst)?, self.analog_id(src)?);
        self.shift_ids(d, s, dir, steps);
        Ok(())
    }

    /// Global sum of an analog register through this array's noise stream.
    pub fn global_sum(&mut self, src: &str) -> Result<i64> {
        let id = self.analog_id(src)?;
        Ok(self.global_sum_id(id))
    }

    /// Boolean plane logic; `b` is ignored (and may be `None`) for `not`.
    pub fn dreg_logic(&mut self, dst: &str, a: &str, b: Option<&str>, op: LogicOp) -> Result<()> {
        let d = self.digital_id(dst)?;
        let a = self.digital_id(a)?;
        let b = match (op, b) {
            (LogicOp::Not, _) => a,
            (_, Some(b)) => self.digital_id(b)?,
            (_, None) => {
                return Err(Error::Input(format!("{op:?} needs two operands")));
            }
        };
        self.logic_ids(d, a, b, op);
        Ok(())
    }

    pub fn write_pattern(&mut self, dst: &str, pattern: &DigitalPlane) -> Result<()> {
        let d = self.digital_id(dst)?;
        self.config.geometry.check_same(pattern.geometry())?;
        self.write_pattern_id(d, pattern);
        Ok(())
    }

    fn resolve2(
        &self,
        dst: &str,
        src: &str,
        mask: Option<&str>,
    ) -> Result<(AnalogId, AnalogId, Option<DigitalId>)> {
        Ok((
            self.analog_id(dst)?,
            self.analog_id(src)?,
            mask.map(|m| self.digital_id(m)).transpose()?,
        ))
    }

    fn resolve3(
        &self,
        dst: &str,
        a: &str,
        b: &str,
        mask: Option<&str>,
    ) -> Result<(AnalogId, AnalogId, AnalogId, Option<DigitalId>)> {
        Ok((
            self.analog_id(dst)?,
            self.analog_id(a)?,
            self.analog_id(b)?,
            mask.map(|m| self.digital_id(m)).transpose()?,
        ))
    }

    // --- id-based primitives (used by the program executor) ----------------

    pub fn threshold_ids(&mut self, dst: DigitalId, src: AnalogId, t: i32) {
        let (analog, digital) = (&self.analog, &mut self.digital);
        for (d, &v) in digital[dst.0].bits_mut().iter_mut().zip(analog[src.0].values()) {
            *d = (v > t) as u8;
        }
    }

    pub fn add_ids(&mut self, dst: AnalogId, a: AnalogId, b: AnalogId, mask: Option<DigitalId>) {
        self.binary(dst, a, b, mask, |x, y| x + y);
    }

    pub fn sub_ids(&mut self, dst: AnalogId, a: AnalogId, b: AnalogId, mask: Option<DigitalId>) {
        self.binary(dst, a, b, mask, |x, y| x - y);
    }

    pub fn max_ids(&mut self, dst: AnalogId, a: AnalogId, b: AnalogId, mask: Option<DigitalId>) {
        self.binary(dst, a, b, mask, |x, y| x.max(y));
    }

    pub fn neg_ids(&mut self, dst: AnalogId, src: AnalogId, mask: Option<DigitalId>) {
        self.binary(dst, src, src, mask, |x, _| -x);
    }

    pub fn copy_ids(&mut self, dst: AnalogId, src: AnalogId, mask: Option<DigitalId>) {
        self.binary(dst, src, src, mask, |x, _| x);
    }

    pub fn shift_ids(&mut self, dst: AnalogId, src: AnalogId, dir: Direction, steps: usize) {
        let g = self.config.geometry;
        let (h, w) = (g.height(), g.width());
        let (dr, dc) = dir.source_offset();
        let mut out = std::mem::take(&mut self.scratch);
        out.fill(0);
        let src_vals = self.analog[src.0].values();
        if dr != 0 && steps < h {
            // Vertical: whole rows move.
            let rows = h - steps;
            let (from, to) = if dr > 0 { (steps, 0) } else { (0, steps) };
            out[to * w..(to + rows) * w].copy_from_slice(&src_vals[from * w..(from + rows) * w]);
        } else if dc != 0 && steps < w {
            let cols = w - steps;
            let (from, to) = if dc > 0 { (steps, 0) } else { (0, steps) };
            for r in 0..h {
                let row = r * w;
                out[row + to..row + to + cols]
                    .copy_from_slice(&src_vals[row + from..row + from + cols]);
            }
        } else if steps == 0 {
            out.copy_from_slice(src_vals);
        }
        self.analog[dst.0].values_mut().copy_from_slice(&out);
        self.scratch = out;
    }

    pub fn global_sum_id(&mut self, src: AnalogId) -> i64 {
        noise::global_sum(&self.analog[src.0], &mut self.noise)
    }

    pub fn logic_ids(&mut self, dst: DigitalId, a: DigitalId, b: DigitalId, op: LogicOp) {
        let f: fn(u8, u8) -> u8 = match op {
            LogicOp::And => |x, y| x & y,
            LogicOp::Or => |x, y| x | y,
            LogicOp::Xor => |x, y| x ^ y,
            LogicOp::Not => |x, _| x ^ 1,
        };
        let n = self.config.geometry.pixels();
        let mut out = vec![0u8; n];
        {
            let (pa, pb) = (self.digital[a.0].bits(), self.digital[b.0].bits());
            for i in 0..n {
                out[i] = f(pa[i], pb[i]);
            }
        }
        self.digital[dst.0].bits_mut().copy_from_slice(&out);
    }

    pub fn write_pattern_id(&mut self, dst: DigitalId, pattern: &DigitalPlane) {
        self.digital[dst.0]
            .bits_mut()
            .copy_from_slice(pattern.bits());
    }

    fn binary(
        &mut self,
        dst: AnalogId,
        a: AnalogId,
        b: AnalogId,
        mask: Option<DigitalId>,
        f: impl Fn(i64, i64) -> i64,
    ) {
        let sat = self.config.saturation;
        let mut out = std::mem::take(&mut self.scratch);
        {
            let (va, vb) = (self.analog[a.0].values(), self.analog[b.0].values());
            for ((o, &x), &y) in out.iter_mut().zip(va).zip(vb) {
                *o = sat.clamp(f(x as i64, y as i64));
            }
        }
        let dst_vals = self.analog[dst.0].values_mut();
        match mask {
            None => dst_vals.copy_from_slice(&out),
            Some(m) => {
                let bits = self.digital[m.0].bits();
                for ((d, &o), &bit) in dst_vals.iter_mut().zip(&out).zip(bits) {
                    if bit != 0 {
                        *d = o;
                    }
                }
            }
        }
        self.scratch = out;
    }
}
