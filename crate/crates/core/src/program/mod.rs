//! Plane-instruction programs: representation, text listings, execution and
//! cost estimation.

mod cost;
mod exec;
mod listing;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::array::{Direction, LogicOp};
use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;
use crate::plane::{BitImage, DigitalPlane};

pub use cost::{estimate, CostModel, TimingReport, DEFAULT_COST_TABLE};
pub use exec::BoundProgram;
pub use listing::parse_listing;

/// Instruction kinds, as keyed in cost tables.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Opcode {
    Copy,
    Neg,
    Add,
    Sub,
    Max,
    Shift,
    Threshold,
    And,
    Or,
    Xor,
    Not,
    WritePattern,
    GlobalSum,
}

impl Opcode {
    pub const ALL: [Opcode; 13] = [
        Opcode::Copy,
        Opcode::Neg,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Max,
        Opcode::Shift,
        Opcode::Threshold,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Not,
        Opcode::WritePattern,
        Opcode::GlobalSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Copy => "copy",
            Opcode::Neg => "neg",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Max => "max",
            Opcode::Shift => "shift",
            Opcode::Threshold => "threshold",
            Opcode::And => "and",
            Opcode::Or => "or",
            Opcode::Xor => "xor",
            Opcode::Not => "not",
            Opcode::WritePattern => "write_pattern",
            Opcode::GlobalSum => "global_sum",
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Opcode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Opcode::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown opcode `{s}`"))
    }
}

/// A digital-plane immediate, expanded against the plane geometry when the
/// program is bound to an array.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pattern {
    Zeros,
    Ones,
    /// Bit `b` set selects every pixel of block `b`.
    Blocks(u16),
    /// Pixels whose block-local row or column exceeds `block_size - k`:
    /// the outputs of a top-left-anchored `k×k` window that reads past its
    /// block.
    Border { k: usize },
    /// Columns of the given parity.
    Cols { odd: bool },
    /// Rows of the given parity.
    Rows { odd: bool },
    /// One bit per aligned 2×2 cell of the whole plane, row-major over the
    /// `(height/2)×(width/2)` cell grid, packed msb-first.
    Cells(Vec<u8>),
}

impl Pattern {
    /// Packs a cell-grid bit image into a [`Pattern::Cells`] immediate.
    pub fn cells(grid: &BitImage) -> Self {
        let n = grid.height() * grid.width();
        let mut packed = vec![0u8; n.div_ceil(8)];
        for (i, &b) in grid.bits().iter().enumerate() {
            if b != 0 {
                packed[i / 8] |= 0x80 >> (i % 8);
            }
        }
        Pattern::Cells(packed)
    }

    pub fn materialize(&self, g: &PlaneGeometry) -> Result<DigitalPlane> {
        let bs = g.block_size();
        Ok(match self {
            Pattern::Zeros => DigitalPlane::zeros(*g),
            Pattern::Ones => DigitalPlane::ones(*g),
            Pattern::Blocks(set) => {
                if g.num_blocks() < 16 && (*set as u32) >> g.num_blocks() != 0 {
                    return Err(Error::Geometry(format!(
                        "block set {set:#06x} names blocks outside {g}"
                    )));
                }
                DigitalPlane::from_fn(*g, |r, c| set >> g.block_of(r, c) & 1 == 1)
            }
            Pattern::Border { k } => {
                if *k == 0 || *k > bs {
                    return Err(Error::Geometry(format!(
                        "border width for kernel {k} does not fit block {bs}"
                    )));
                }
                let limit = bs - k;
                DigitalPlane::from_fn(*g, |r, c| r % bs > limit || c % bs > limit)
            }
            Pattern::Cols { odd } => DigitalPlane::from_fn(*g, |_, c| (c % 2 == 1) == *odd),
            Pattern::Rows { odd } => DigitalPlane::from_fn(*g, |r, _| (r % 2 == 1) == *odd),
            Pattern::Cells(packed) => {
                let cw = g.width() / 2;
                let cells = (g.height() / 2) * cw;
                if packed.len() != cells.div_ceil(8) {
                    return Err(Error::Geometry(format!(
                        "cell pattern has {} bytes, {g} needs {}",
                        packed.len(),
                        cells.div_ceil(8)
                    )));
                }
                DigitalPlane::from_fn(*g, |r, c| {
                    let i = (r / 2) * cw + c / 2;
                    packed[i / 8] & (0x80 >> (i % 8)) != 0
                })
            }
        })
    }
}

/// One plane-parallel instruction. Register operands are names resolved
/// against an [`ArrayState`](crate::array::ArrayState) when the program is
/// bound.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    Copy { dst: String, src: String, mask: Option<String> },
    Neg { dst: String, src: String, mask: Option<String> },
    Add { dst: String, a: String, b: String, mask: Option<String> },
    Sub { dst: String, a: String, b: String, mask: Option<String> },
    Max { dst: String, a: String, b: String, mask: Option<String> },
    Shift { dst: String, src: String, dir: Direction, steps: usize },
    /// Digital `dst` gets 1 where analog `src > t`.
    Threshold { dst: String, src: String, t: i32 },
    /// Boolean logic on digital planes; `b` is `None` exactly for `not`.
    Logic { op: LogicOp, dst: String, a: String, b: Option<String> },
    WritePattern { dst: String, pattern: Pattern },
    /// Reads out the sum of analog `src` as the named program output.
    GlobalSum { src: String, label: String },
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Copy { .. } => Opcode::Copy,
            Instruction::Neg { .. } => Opcode::Neg,
            Instruction::Add { .. } => Opcode::Add,
            Instruction::Sub { .. } => Opcode::Sub,
            Instruction::Max { .. } => Opcode::Max,
            Instruction::Shift { .. } => Opcode::Shift,
            Instruction::Threshold { .. } => Opcode::Threshold,
            Instruction::Logic { op, .. } => match op {
                LogicOp::And => Opcode::And,
                LogicOp::Or => Opcode::Or,
                LogicOp::Xor => Opcode::Xor,
                LogicOp::Not => Opcode::Not,
            },
            Instruction::WritePattern { .. } => Opcode::WritePattern,
            Instruction::GlobalSum { .. } => Opcode::GlobalSum,
        }
    }
}

/// An ordered instruction list. Programs are immutable once built and may
/// be shared freely between threads.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PpaProgram {
    geometry: Option<PlaneGeometry>,
    instructions: Vec<Instruction>,
}

impl PpaProgram {
    pub fn new(geometry: Option<PlaneGeometry>, instructions: Vec<Instruction>) -> Self {
        Self {
            geometry,
            instructions,
        }
    }

    pub fn geometry(&self) -> Option<&PlaneGeometry> {
        self.geometry.as_ref()
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Labels of the global-sum outputs, in execution order.
    pub fn labels(&self) -> Vec<&str> {
        self.instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::GlobalSum { label, .. } => Some(label.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Returns a new program with `instruction` appended.
    pub fn with(mut self, instruction: Instruction) -> Self {
        self.instructions.push(instruction);
        self
    }

    pub fn disassemble(&self) -> String {
        listing::disassemble(self)
    }

    /// Checks every operand against `state` and expands pattern immediates.
    pub fn bind(&self, state: &crate::array::ArrayState) -> Result<BoundProgram> {
        BoundProgram::bind(self, state)
    }

    /// Validates the whole program, then runs it on `state` and returns the
    /// global-sum outputs in order. A rejected program leaves `state`
    /// untouched.
    pub fn execute(&self, state: &mut crate::array::ArrayState) -> Result<Vec<i64>> {
        Ok(self.bind(state)?.run(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn border_pattern_marks_bottom_right_frame() {
        let g = PlaneGeometry::with_block_size(8).unwrap();
        let p = Pattern::Border { k: 3 }.materialize(&g).unwrap();
        // block-local rows/cols 6 and 7 are contaminated.
        assert!(!p.get(5, 5));
        assert!(p.get(6, 0));
        assert!(p.get(0, 7));
        assert!(p.get(8 + 7, 8 + 1));
        assert!(!p.get(8, 8));
        assert_eq!(Pattern::Border { k: 1 }.materialize(&g).unwrap().count_ones(), 0);
        assert!(Pattern::Border { k: 9 }.materialize(&g).is_err());
    }

    #[test]
    fn cell_pattern_replicates_into_2x2() {
        let g = PlaneGeometry::default();
        let grid = BitImage::from_fn(128, 128, |r, c| (r * 31 + c * 17) % 7 == 0);
        let plane = Pattern::cells(&grid).materialize(&g).unwrap();
        for r in 0..256 {
            for c in 0..256 {
                assert_eq!(plane.get(r, c), grid.get(r / 2, c / 2) == 1, "({r},{c})");
            }
        }
    }

    #[test]
    fn blocks_pattern_selects_blocks() {
        let g = PlaneGeometry::default();
        let p = Pattern::Blocks(0x0001).materialize(&g).unwrap();
        assert_eq!(p.count_ones(), 64 * 64);
        assert!(p.get(63, 63) && !p.get(64, 0));
        let p = Pattern::Blocks(0x8000).materialize(&g).unwrap();
        assert!(p.get(255, 255) && !p.get(191, 255));
    }
}
