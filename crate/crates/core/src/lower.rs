//! Lowering a [`BnnModel`] to a plane program.
//!
//! The emitted program expects the network input in block 0 of the input
//! register (see [`prep::input_frame`](crate::prep::input_frame)) and runs
//! five stages:
//!
//! 1. replicate: copy block 0 into all sixteen blocks by shift-and-add
//!    doubling, first across then down;
//! 2. conv: for each kernel tap, one whole-plane shift of the replica then a
//!    masked add over the blocks whose kernel weight is +1 and a masked
//!    subtract over those where it is −1; finally the outputs whose window
//!    read across a block edge are zeroed;
//! 3. relu: flag the non-negative pixels and zero the rest;
//! 4. maxpool: pairwise max with the horizontal neighbour under column-parity
//!    masks, then the vertical neighbour under row-parity masks, leaving every
//!    aligned 2×2 cell holding four copies of its maximum;
//! 5. fc: per class, negate the pooled plane where the class weight is −1 and
//!    read out its global sum.
//!
//! Because pooled values are replicated over each 2×2 cell, every class sum
//! is exactly four times the reference score.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::array::{ArrayConfig, Direction, LogicOp, FLAG, PIX};
use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;
use crate::model::BnnModel;
use crate::plane::BitImage;
use crate::prep::DEFAULT_THRESHOLD;
use crate::program::{Instruction, Opcode, Pattern, PpaProgram};

/// Factor between lowered class sums and reference scores.
pub const REPLICATION_FACTOR: i64 = 4;

/// Register roles chosen for one lowering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegisterMap {
    pub input: String,
    pub replica: String,
    pub tap: String,
    pub acc: String,
    pub pool: String,
    pub fc: String,
    pub mask_a: String,
    pub mask_b: String,
    pub border: String,
    pub col_even: String,
    pub col_odd: String,
    pub row_even: String,
    pub row_odd: String,
    pub fc_mask: String,
    pub flag: String,
}

impl RegisterMap {
    /// Assigns roles from `config`'s banks in stage order, failing at the
    /// first stage whose cumulative need exceeds a bank.
    pub fn assign(config: &ArrayConfig) -> Result<Self> {
        if !config.analog.iter().any(|n| n == PIX) {
            return Err(Error::Lowering {
                stage: "replicate",
                message: format!("analog bank has no `{PIX}` input register"),
            });
        }
        let analog: Vec<&String> = config.analog.iter().filter(|n| *n != PIX).collect();
        let digital: Vec<&String> = config.digital.iter().collect();
        // (stage, cumulative analog scratch, cumulative digital)
        const NEEDS: [(&str, usize, usize); 5] = [
            ("replicate", 2, 1),
            ("conv", 3, 3),
            ("relu", 3, 3),
            ("maxpool", 4, 7),
            ("fc", 5, 8),
        ];
        for (stage, na, nd) in NEEDS {
            if analog.len() < na {
                return Err(Error::RegisterBudget {
                    stage,
                    bank: "analog",
                    needed: na + 1,
                    available: config.analog.len(),
                });
            }
            if digital.len() < nd {
                return Err(Error::RegisterBudget {
                    stage,
                    bank: "digital",
                    needed: nd,
                    available: digital.len(),
                });
            }
        }
        let a = |i: usize| analog[i].clone();
        let d = |i: usize| digital[i].clone();
        Ok(Self {
            input: PIX.to_string(),
            replica: a(0),
            tap: a(1),
            acc: a(2),
            pool: a(3),
            fc: a(4),
            mask_a: d(0),
            mask_b: d(1),
            border: d(2),
            col_even: d(3),
            col_odd: d(4),
            row_even: d(5),
            row_odd: d(6),
            fc_mask: d(7),
            flag: FLAG.to_string(),
        })
    }
}

/// Instruction accounting for the conv stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConvBudget {
    pub taps: usize,
    pub shifts: usize,
    /// Taps where at least one block has weight +1.
    pub positive_taps: usize,
    /// Taps where at least one block has weight −1.
    pub negative_taps: usize,
    pub accumulates: usize,
    pub border_zeroing: usize,
    pub mask_loads: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageSpan {
    pub name: &'static str,
    pub start: usize,
    pub end: usize,
    pub counts: BTreeMap<Opcode, usize>,
}

/// Where each stage's masks were loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaskLoad {
    pub instruction: usize,
    pub register: String,
    pub pattern: String,
}

/// The steps that happen on the host before the program runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HostPrep {
    pub threshold: u8,
    pub downsample_to: usize,
    pub placement: &'static str,
}

/// Everything the lowering decided, besides the instructions themselves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoweringPlan {
    pub geometry: PlaneGeometry,
    pub registers: RegisterMap,
    pub host_prep: HostPrep,
    pub stages: Vec<StageSpan>,
    pub conv: ConvBudget,
    pub masks: Vec<MaskLoad>,
    pub instruction_count: usize,
}

impl LoweringPlan {
    pub fn stage(&self, name: &str) -> Option<&StageSpan> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Emits each stage against a fixed register assignment.
#[derive(Debug, Clone)]
pub struct Lowering<'m> {
    model: &'m BnnModel,
    regs: RegisterMap,
}

impl<'m> Lowering<'m> {
    pub fn new(model: &'m BnnModel, config: &ArrayConfig) -> Result<Self> {
        model.geometry().check_same(&config.geometry)?;
        Ok(Self {
            model,
            regs: RegisterMap::assign(config)?,
        })
    }

    pub fn registers(&self) -> &RegisterMap {
        &self.regs
    }

    fn geometry(&self) -> &PlaneGeometry {
        self.model.geometry()
    }

    pub fn replicate(&self) -> Vec<Instruction> {
        lower_replicate(self.geometry(), &self.regs)
    }

    pub fn conv(&self) -> (Vec<Instruction>, ConvBudget) {
        lower_conv(self.model, &self.regs)
    }

    pub fn relu(&self) -> Vec<Instruction> {
        lower_relu(&self.regs)
    }

    pub fn maxpool(&self) -> Vec<Instruction> {
        lower_maxpool(&self.regs)
    }

    pub fn fc(&self) -> Vec<Instruction> {
        lower_fc(self.model, &self.regs)
    }
}

fn s(x: &str) -> String {
    x.to_string()
}

/// Doubling replication of block 0 across the grid.
pub fn lower_replicate(geometry: &PlaneGeometry, regs: &RegisterMap) -> Vec<Instruction> {
    let (rep, tap) = (&regs.replica, &regs.tap);
    let mut out = vec![
        Instruction::Sub {
            dst: s(rep),
            a: s(rep),
            b: s(rep),
            mask: None,
        },
        Instruction::WritePattern {
            dst: s(&regs.mask_a),
            pattern: Pattern::Blocks(1),
        },
        Instruction::Copy {
            dst: s(rep),
            src: s(&regs.input),
            mask: Some(s(&regs.mask_a)),
        },
    ];
    for dir in [Direction::E, Direction::S] {
        let mut span = 1;
        while span < geometry.block_grid() {
            out.push(Instruction::Shift {
                dst: s(tap),
                src: s(rep),
                dir,
                steps: span * geometry.block_size(),
            });
            out.push(Instruction::Add {
                dst: s(rep),
                a: s(rep),
                b: s(tap),
                mask: None,
            });
            span *= 2;
        }
    }
    out
}

/// Per-tap block sets `(plus, minus)`; bit `b` is block `b`.
pub fn tap_masks(model: &BnnModel, dy: usize, dx: usize) -> (u16, u16) {
    let mut plus = 0u16;
    let mut minus = 0u16;
    for b in 0..model.geometry().num_blocks() {
        if model.kernel_weight(b, dy, dx) > 0 {
            plus |= 1 << b;
        } else {
            minus |= 1 << b;
        }
    }
    (plus, minus)
}

pub fn lower_conv(model: &BnnModel, regs: &RegisterMap) -> (Vec<Instruction>, ConvBudget) {
    let k = model.kernel_size();
    let (rep, tap, acc) = (&regs.replica, &regs.tap, &regs.acc);
    let mut out = Vec::new();
    let mut budget = ConvBudget {
        taps: k * k,
        shifts: 0,
        positive_taps: 0,
        negative_taps: 0,
        accumulates: 0,
        border_zeroing: 0,
        mask_loads: 0,
    };
    for dy in 0..k {
        for dx in 0..k {
            // tap(r,c) = replica(r+dy, c+dx)
            out.push(if dx == 0 {
                Instruction::Shift {
                    dst: s(tap),
                    src: s(rep),
                    dir: Direction::N,
                    steps: dy,
                }
            } else {
                Instruction::Shift {
                    dst: s(tap),
                    src: s(tap),
                    dir: Direction::W,
                    steps: 1,
                }
            });
            budget.shifts += 1;
            let first = dy == 0 && dx == 0;
            let (plus, minus) = tap_masks(model, dy, dx);
            if plus != 0 {
                out.push(Instruction::WritePattern {
                    dst: s(&regs.mask_a),
                    pattern: Pattern::Blocks(plus),
                });
                let mask = Some(s(&regs.mask_a));
                // The first tap initializes the accumulator; plus and minus
                // together cover every block.
                out.push(if first {
                    Instruction::Copy {
                        dst: s(acc),
                        src: s(tap),
                        mask,
                    }
                } else {
                    Instruction::Add {
                        dst: s(acc),
                        a: s(acc),
                        b: s(tap),
                        mask,
                    }
                });
                budget.positive_taps += 1;
                budget.mask_loads += 1;
            }
            if minus != 0 {
                out.push(Instruction::WritePattern {
                    dst: s(&regs.mask_b),
                    pattern: Pattern::Blocks(minus),
                });
                let mask = Some(s(&regs.mask_b));
                out.push(if first {
                    Instruction::Neg {
                        dst: s(acc),
                        src: s(tap),
                        mask,
                    }
                } else {
                    Instruction::Sub {
                        dst: s(acc),
                        a: s(acc),
                        b: s(tap),
                        mask,
                    }
                });
                budget.negative_taps += 1;
                budget.mask_loads += 1;
            }
        }
    }
    budget.accumulates = budget.positive_taps + budget.negative_taps;
    out.push(Instruction::WritePattern {
        dst: s(&regs.border),
        pattern: Pattern::Border { k },
    });
    out.push(Instruction::Sub {
        dst: s(acc),
        a: s(acc),
        b: s(acc),
        mask: Some(s(&regs.border)),
    });
    budget.mask_loads += 1;
    budget.border_zeroing = 1;
    (out, budget)
}

pub fn lower_relu(regs: &RegisterMap) -> Vec<Instruction> {
    let (acc, flag) = (&regs.acc, &regs.flag);
    vec![
        Instruction::Threshold {
            dst: s(flag),
            src: s(acc),
            t: -1,
        },
        Instruction::Logic {
            op: LogicOp::Not,
            dst: s(flag),
            a: s(flag),
            b: None,
        },
        Instruction::Sub {
            dst: s(acc),
            a: s(acc),
            b: s(acc),
            mask: Some(s(flag)),
        },
    ]
}

pub fn lower_maxpool(regs: &RegisterMap) -> Vec<Instruction> {
    let (acc, tmp) = (&regs.acc, &regs.pool);
    let mut out = vec![
        Instruction::WritePattern {
            dst: s(&regs.col_even),
            pattern: Pattern::Cols { odd: false },
        },
        Instruction::WritePattern {
            dst: s(&regs.col_odd),
            pattern: Pattern::Cols { odd: true },
        },
        Instruction::WritePattern {
            dst: s(&regs.row_even),
            pattern: Pattern::Rows { odd: false },
        },
        Instruction::WritePattern {
            dst: s(&regs.row_odd),
            pattern: Pattern::Rows { odd: true },
        },
    ];
    // Even columns take their east neighbour, odd columns their west one,
    // then the same for rows.
    for (dir, mask) in [
        (Direction::W, &regs.col_even),
        (Direction::E, &regs.col_odd),
        (Direction::N, &regs.row_even),
        (Direction::S, &regs.row_odd),
    ] {
        out.push(Instruction::Shift {
            dst: s(tmp),
            src: s(acc),
            dir,
            steps: 1,
        });
        out.push(Instruction::Max {
            dst: s(acc),
            a: s(acc),
            b: s(tmp),
            mask: Some(s(mask)),
        });
    }
    out
}

/// Cell-grid pattern with 1 where class `class`'s FC weight is −1.
pub fn fc_negative_cells(model: &BnnModel, class: usize) -> BitImage {
    let g = model.geometry();
    let p = g.pooled_size();
    let grid = g.block_grid();
    BitImage::from_fn(grid * p, grid * p, |r, c| {
        let b = grid * (r / p) + c / p;
        model.fc_weight(class, b, r % p, c % p) < 0
    })
}

pub fn lower_fc(model: &BnnModel, regs: &RegisterMap) -> Vec<Instruction> {
    let (acc, fc) = (&regs.acc, &regs.fc);
    let mut out = Vec::new();
    for (c, name) in model.class_names().iter().enumerate() {
        out.push(Instruction::Copy {
            dst: s(fc),
            src: s(acc),
            mask: None,
        });
        out.push(Instruction::WritePattern {
            dst: s(&regs.fc_mask),
            pattern: Pattern::cells(&fc_negative_cells(model, c)),
        });
        out.push(Instruction::Neg {
            dst: s(fc),
            src: s(acc),
            mask: Some(s(&regs.fc_mask)),
        });
        out.push(Instruction::GlobalSum {
            src: s(fc),
            label: name.clone(),
        });
    }
    out
}

fn counts(instrs: &[Instruction]) -> BTreeMap<Opcode, usize> {
    let mut m = BTreeMap::new();
    for i in instrs {
        *m.entry(i.opcode()).or_insert(0) += 1;
    }
    m
}

fn describe(p: &Pattern) -> String {
    match p {
        Pattern::Cells(_) => "cells".into(),
        other => {
            let listing = PpaProgram::new(
                None,
                vec![Instruction::WritePattern {
                    dst: "_".into(),
                    pattern: other.clone(),
                }],
            )
            .disassemble();
            listing.trim().rsplit(' ').next().unwrap_or_default().to_string()
        }
    }
}

/// Lowers `model` for an array laid out as `config`.
pub fn lower_model_with(
    model: &BnnModel,
    config: &ArrayConfig,
) -> Result<(PpaProgram, LoweringPlan)> {
    let lowering = Lowering::new(model, config)?;
    let (conv, conv_budget) = lowering.conv();
    let stages: [(&'static str, Vec<Instruction>); 5] = [
        ("replicate", lowering.replicate()),
        ("conv", conv),
        ("relu", lowering.relu()),
        ("maxpool", lowering.maxpool()),
        ("fc", lowering.fc()),
    ];
    let mut instructions = Vec::new();
    let mut spans = Vec::new();
    let mut masks = Vec::new();
    for (name, instrs) in stages {
        let start = instructions.len();
        for (i, instr) in instrs.iter().enumerate() {
            if let Instruction::WritePattern { dst, pattern } = instr {
                masks.push(MaskLoad {
                    instruction: start + i,
                    register: dst.clone(),
                    pattern: describe(pattern),
                });
            }
        }
        spans.push(StageSpan {
            name,
            start,
            end: start + instrs.len(),
            counts: counts(&instrs),
        });
        instructions.extend(instrs);
    }
    let geometry = *model.geometry();
    let plan = LoweringPlan {
        geometry,
        registers: lowering.registers().clone(),
        host_prep: HostPrep {
            threshold: DEFAULT_THRESHOLD,
            downsample_to: geometry.block_size(),
            placement: "block 0 of the input register, values 0/1, rest 0",
        },
        stages: spans,
        conv: conv_budget,
        masks,
        instruction_count: instructions.len(),
    };
    Ok((PpaProgram::new(Some(geometry), instructions), plan))
}

/// Lowers `model` for the default register file at the model's geometry.
pub fn lower_model(model: &BnnModel) -> Result<(PpaProgram, LoweringPlan)> {
    lower_model_with(model, &ArrayConfig::new(*model.geometry()))
}
