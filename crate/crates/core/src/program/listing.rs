//! Text listing of a program, one instruction per line.
//!
//! ```text
//! .geometry 4 64
//! shift C A N 1
//! add B B C mask=R1
//! write_pattern R1 blocks=0x00ff
//! global_sum E rock
//! ```
//!
//! `#` starts a comment that runs to the end of the line; blank lines are
//! ignored. The optional `.geometry <grid> <block>` directive must precede
//! every instruction.

use std::fmt::Write;

use super::{Instruction, Pattern, PpaProgram};
use crate::array::{Direction, LogicOp};
use crate::error::{Error, Result};
use crate::geometry::PlaneGeometry;

pub(super) fn disassemble(program: &PpaProgram) -> String {
    let mut out = String::new();
    if let Some(g) = program.geometry() {
        let _ = writeln!(out, ".geometry {} {}", g.block_grid(), g.block_size());
    }
    for instr in program.instructions() {
        let _ = writeln!(out, "{}", line(instr));
    }
    out
}

fn mask_suffix(mask: &Option<String>) -> String {
    mask.as_ref().map(|m| format!(" mask={m}")).unwrap_or_default()
}

fn line(instr: &Instruction) -> String {
    let op = instr.opcode();
    match instr {
        Instruction::Copy { dst, src, mask } | Instruction::Neg { dst, src, mask } => {
            format!("{op} {dst} {src}{}", mask_suffix(mask))
        }
        Instruction::Add { dst, a, b, mask }
        | Instruction::Sub { dst, a, b, mask }
        | Instruction::Max { dst, a, b, mask } => {
            format!("{op} {dst} {a} {b}{}", mask_suffix(mask))
        }
        Instruction::Shift {
            dst,
            src,
            dir,
            steps,
        } => format!("{op} {dst} {src} {dir} {steps}"),
        Instruction::Threshold { dst, src, t } => format!("{op} {dst} {src} {t}"),
        Instruction::Logic { dst, a, b, .. } => match b {
            Some(b) => format!("{op} {dst} {a} {b}"),
            None => format!("{op} {dst} {a}"),
        },
        Instruction::WritePattern { dst, pattern } => {
            format!("{op} {dst} {}", pattern_text(pattern))
        }
        Instruction::GlobalSum { src, label } => format!("{op} {src} {label}"),
    }
}

fn pattern_text(p: &Pattern) -> String {
    let parity = |odd: bool| if odd { "odd" } else { "even" };
    match p {
        Pattern::Zeros => "zeros".into(),
        Pattern::Ones => "ones".into(),
        Pattern::Blocks(set) => format!("blocks={set:#06x}"),
        Pattern::Border { k } => format!("border={k}"),
        Pattern::Cols { odd } => format!("cols={}", parity(*odd)),
        Pattern::Rows { odd } => format!("rows={}", parity(*odd)),
        Pattern::Cells(bytes) => format!("cells={}", hex::encode(bytes)),
    }
}

fn parse_pattern(s: &str) -> std::result::Result<Pattern, String> {
    let parity = |v: &str| match v {
        "odd" => Ok(true),
        "even" => Ok(false),
        other => Err(format!("parity must be even or odd, got `{other}`")),
    };
    match s.split_once('=') {
        None if s == "zeros" => Ok(Pattern::Zeros),
        None if s == "ones" => Ok(Pattern::Ones),
        Some(("blocks", v)) => {
            let digits = v.strip_prefix("0x").ok_or("block set must be hex (0x...)")?;
            u16::from_str_radix(digits, 16)
                .map(Pattern::Blocks)
                .map_err(|e| format!("block set `{v}`: {e}"))
        }
        Some(("border", v)) => v
            .parse()
            .map(|k| Pattern::Border { k })
            .map_err(|e| format!("border `{v}`: {e}")),
        Some(("cols", v)) => parity(v).map(|odd| Pattern::Cols { odd }),
        Some(("rows", v)) => parity(v).map(|odd| Pattern::Rows { odd }),
        Some(("cells", v)) => hex::decode(v)
            .map(Pattern::Cells)
            .map_err(|e| format!("cells: {e}")),
        _ => Err(format!("unknown pattern `{s}`")),
    }
}

/// Parses a listing produced by [`PpaProgram::disassemble`] (or written by
/// hand in the same format).
pub fn parse_listing(text: &str) -> Result<PpaProgram> {
    let mut geometry = None;
    let mut instructions = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let err = |message: String| Error::Listing {
            line: lineno,
            message,
        };
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks[0] == ".geometry" {
            if !instructions.is_empty() || geometry.is_some() {
                return Err(err("`.geometry` must appear once, before instructions".into()));
            }
            if toks.len() != 3 {
                return Err(err("expected `.geometry <grid> <block>`".into()));
            }
            let grid = toks[1].parse().map_err(|e| err(format!("grid: {e}")))?;
            let block = toks[2].parse().map_err(|e| err(format!("block: {e}")))?;
            geometry = Some(PlaneGeometry::new(grid, block).map_err(|e| err(e.to_string()))?);
            continue;
        }
        instructions.push(parse_instruction(&toks).map_err(err)?);
    }
    Ok(PpaProgram::new(geometry, instructions))
}

fn parse_instruction(toks: &[&str]) -> std::result::Result<Instruction, String> {
    let (op, args) = (toks[0], &toks[1..]);
    // Trailing `mask=R` operand, if any.
    let (args, mask) = match args.last().and_then(|t| t.strip_prefix("mask=")) {
        Some(m) => (&args[..args.len() - 1], Some(m.to_string())),
        None => (args, None),
    };
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("`{op}` takes {n} operands, got {}", args.len()))
        }
    };
    let no_mask = || {
        if mask.is_some() {
            Err(format!("`{op}` does not take a mask"))
        } else {
            Ok(())
        }
    };
    let s = |i: usize| args[i].to_string();
    Ok(match op {
        "copy" | "neg" => {
            want(2)?;
            let (dst, src) = (s(0), s(1));
            if op == "copy" {
                Instruction::Copy { dst, src, mask }
            } else {
                Instruction::Neg { dst, src, mask }
            }
        }
        "add" | "sub" | "max" => {
            want(3)?;
            let (dst, a, b) = (s(0), s(1), s(2));
            match op {
                "add" => Instruction::Add { dst, a, b, mask },
                "sub" => Instruction::Sub { dst, a, b, mask },
                _ => Instruction::Max { dst, a, b, mask },
            }
        }
        "shift" => {
            want(4)?;
            no_mask()?;
            Instruction::Shift {
                dst: s(0),
                src: s(1),
                dir: args[2].parse::<Direction>()?,
                steps: args[3].parse().map_err(|e| format!("steps: {e}"))?,
            }
        }
        "threshold" => {
            want(3)?;
            no_mask()?;
            Instruction::Threshold {
                dst: s(0),
                src: s(1),
                t: args[2].parse().map_err(|e| format!("threshold: {e}"))?,
            }
        }
        "and" | "or" | "xor" => {
            want(3)?;
            no_mask()?;
            let op = match op {
                "and" => LogicOp::And,
                "or" => LogicOp::Or,
                _ => LogicOp::Xor,
            };
            Instruction::Logic {
                op,
                dst: s(0),
                a: s(1),
                b: Some(s(2)),
            }
        }
        "not" => {
            want(2)?;
            no_mask()?;
            Instruction::Logic {
                op: LogicOp::Not,
                dst: s(0),
                a: s(1),
                b: None,
            }
        }
        "write_pattern" => {
            want(2)?;
            no_mask()?;
            Instruction::WritePattern {
                dst: s(0),
                pattern: parse_pattern(args[1])?,
            }
        }
        "global_sum" => {
            want(2)?;
            no_mask()?;
            Instruction::GlobalSum {
                src: s(0),
                label: s(1),
            }
        }
        other => return Err(format!("unknown opcode `{other}`")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_program_has_empty_listing() {
        assert_eq!(PpaProgram::default().disassemble(), "");
        assert_eq!(parse_listing("").unwrap(), PpaProgram::default());
    }

    #[test]
    fn single_shift_line() {
        let p = PpaProgram::default().with(Instruction::Shift {
            dst: "A".into(),
            src: "B".into(),
            dir: Direction::N,
            steps: 1,
        });
        assert_eq!(p.disassemble(), "shift A B N 1\n");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header\n\n.geometry 4 8\nadd A A B mask=R1 # acc\nnot R2 R1\nwrite_pattern R3 blocks=0x00ff\nglobal_sum A rock\n";
        let p = parse_listing(text).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.labels(), vec!["rock"]);
        assert_eq!(p.geometry().unwrap().block_size(), 8);
        assert_eq!(parse_listing(&p.disassemble()).unwrap(), p);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let err = parse_listing("copy A B\nshift A B Q 1\n").unwrap_err();
        assert!(matches!(err, Error::Listing { line: 2, .. }), "{err}");
        assert!(parse_listing("frobnicate A").is_err());
        assert!(parse_listing("shift A B N 1 mask=R1").is_err());
        assert!(parse_listing("add A B").is_err());
        assert!(parse_listing("write_pattern R1 cols=both").is_err());
        assert!(parse_listing("copy A B\n.geometry 4 64").is_err());
    }
}
