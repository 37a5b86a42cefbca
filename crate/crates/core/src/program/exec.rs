use super::{Instruction, PpaProgram};
use crate::array::{AnalogId, ArrayState, Direction, DigitalId, LogicOp};
use crate::error::{Error, Result};
use crate::plane::DigitalPlane;

#[derive(Debug, Clone)]
enum Op {
    Copy(AnalogId, AnalogId, Option<DigitalId>),
    Neg(AnalogId, AnalogId, Option<DigitalId>),
    Add(AnalogId, AnalogId, AnalogId, Option<DigitalId>),
    Sub(AnalogId, AnalogId, AnalogId, Option<DigitalId>),
    Max(AnalogId, AnalogId, AnalogId, Option<DigitalId>),
    Shift(AnalogId, AnalogId, Direction, usize),
    Threshold(DigitalId, AnalogId, i32),
    Logic(LogicOp, DigitalId, DigitalId, DigitalId),
    // Index into the bound pattern table.
    Write(DigitalId, usize),
    Sum(AnalogId),
}

/// A program checked against one array layout, with register names
/// resolved and pattern immediates expanded. Reusable across any state that
/// shares that layout.
#[derive(Debug, Clone)]
pub struct BoundProgram {
    ops: Vec<Op>,
    patterns: Vec<DigitalPlane>,
    labels: Vec<String>,
}

impl BoundProgram {
    pub(super) fn bind(program: &PpaProgram, state: &ArrayState) -> Result<Self> {
        if let Some(g) = program.geometry() {
            g.check_same(state.geometry())?;
        }
        let mut ops = Vec::with_capacity(program.len());
        let mut patterns = Vec::new();
        for (index, instr) in program.instructions().iter().enumerate() {
            let op = bind_one(instr, state, &mut patterns).map_err(|e| Error::Program {
                index,
                source: Box::new(e),
            })?;
            ops.push(op);
        }
        Ok(Self {
            ops,
            patterns,
            labels: program.labels().into_iter().map(String::from).collect(),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Runs every instruction on `state`, returning global-sum outputs.
    ///
    /// `state` must have the register layout the program was bound against.
    pub fn run(&self, state: &mut ArrayState) -> Vec<i64> {
        self.run_observed(state, |_, _| {})
    }

    /// Like [`run`](Self::run), calling `observe(i, state)` after instruction
    /// `i` completes.
    pub fn run_observed(
        &self,
        state: &mut ArrayState,
        mut observe: impl FnMut(usize, &ArrayState),
    ) -> Vec<i64> {
        let mut sums = Vec::with_capacity(self.labels.len());
        for (i, op) in self.ops.iter().enumerate() {
            match *op {
                Op::Copy(d, s, m) => state.copy_ids(d, s, m),
                Op::Neg(d, s, m) => state.neg_ids(d, s, m),
                Op::Add(d, a, b, m) => state.add_ids(d, a, b, m),
                Op::Sub(d, a, b, m) => state.sub_ids(d, a, b, m),
                Op::Max(d, a, b, m) => state.max_ids(d, a, b, m),
                Op::Shift(d, s, dir, n) => state.shift_ids(d, s, dir, n),
                Op::Threshold(d, s, t) => state.threshold_ids(d, s, t),
                Op::Logic(op, d, a, b) => state.logic_ids(d, a, b, op),
                Op::Write(d, p) => state.write_pattern_id(d, &self.patterns[p]),
                Op::Sum(s) => sums.push(state.global_sum_id(s)),
            }
            observe(i, state);
        }
        sums
    }
}

fn bind_one(
    instr: &Instruction,
    state: &ArrayState,
    patterns: &mut Vec<DigitalPlane>,
) -> Result<Op> {
    let a = |n: &str| state.analog_id(n);
    let d = |n: &str| state.digital_id(n);
    let m = |n: &Option<String>| n.as_deref().map(|n| state.digital_id(n)).transpose();
    Ok(match instr {
        Instruction::Copy { dst, src, mask } => Op::Copy(a(dst)?, a(src)?, m(mask)?),
        Instruction::Neg { dst, src, mask } => Op::Neg(a(dst)?, a(src)?, m(mask)?),
        Instruction::Add { dst, a: x, b, mask } => Op::Add(a(dst)?, a(x)?, a(b)?, m(mask)?),
        Instruction::Sub { dst, a: x, b, mask } => Op::Sub(a(dst)?, a(x)?, a(b)?, m(mask)?),
        Instruction::Max { dst, a: x, b, mask } => Op::Max(a(dst)?, a(x)?, a(b)?, m(mask)?),
        Instruction::Shift {
            dst,
            src,
            dir,
            steps,
        } => Op::Shift(a(dst)?, a(src)?, *dir, *steps),
        Instruction::Threshold { dst, src, t } => Op::Threshold(d(dst)?, a(src)?, *t),
        Instruction::Logic { op, dst, a: x, b } => {
            let x = d(x)?;
            let y = match (op, b) {
                (LogicOp::Not, None) => x,
                (LogicOp::Not, Some(_)) => {
                    return Err(Error::Input("`not` takes one source".into()));
                }
                (_, Some(b)) => d(b)?,
                (_, None) => return Err(Error::Input(format!("{op:?} needs two sources"))),
            };
            Op::Logic(*op, d(dst)?, x, y)
        }
        Instruction::WritePattern { dst, pattern } => {
            let id = d(dst)?;
            patterns.push(pattern.materialize(state.geometry())?);
            Op::Write(id, patterns.len() - 1)
        }
        Instruction::GlobalSum { src, label } => {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("output label `{label}` is not a bare word")));
            }
            Op::Sum(a(src)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::ArrayConfig;
    use crate::geometry::PlaneGeometry;
    use crate::plane::{AnalogPlane, Saturation};
    use crate::program::{parse_listing, Pattern};

    fn state() -> ArrayState {
        ArrayState::new(ArrayConfig::new(PlaneGeometry::with_block_size(4).unwrap())).unwrap()
    }

    #[test]
    fn empty_program_changes_nothing() {
        let mut s = state();
        let before = s.clone();
        assert!(PpaProgram::default().execute(&mut s).unwrap().is_empty());
        assert!(s.planes_eq(&before));
    }

    #[test]
    fn single_global_sum_of_zero_plane() {
        let mut s = state();
        let p = parse_listing("global_sum A out").unwrap();
        assert_eq!(p.execute(&mut s).unwrap(), vec![0]);
    }

    #[test]
    fn rejected_program_leaves_state_untouched() {
        let mut s = state();
        let g = *s.geometry();
        let vals = (0..g.pixels() as i32).collect();
        s.set_analog("A", &AnalogPlane::from_values(g, Saturation::Ideal, vals).unwrap())
            .unwrap();
        let before = s.clone();
        let p = parse_listing("neg A A\ncopy B A\nadd C A NOPE\n").unwrap();
        let err = p.execute(&mut s).unwrap_err();
        assert!(matches!(err, Error::Program { index: 2, .. }), "{err}");
        assert!(s.planes_eq(&before));
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let mut s = state();
        let p = parse_listing(".geometry 4 64\ncopy A B").unwrap();
        assert!(matches!(p.execute(&mut s), Err(Error::Geometry(_))));
        let p = PpaProgram::default().with(Instruction::WritePattern {
            dst: "R1".into(),
            pattern: Pattern::Cells(vec![0; 3]),
        });
        assert!(p.execute(&mut s).is_err());
    }

    #[test]
    fn masked_program_matches_direct_calls() {
        let text = "write_pattern R1 cols=odd\nshift B A W 1\nadd C A B mask=R1\nmax D A B\nthreshold FLAG C 3\nnot R2 FLAG\nglobal_sum C c\nglobal_sum D d\n";
        let p = parse_listing(text).unwrap();
        let mut s = state();
        let g = *s.geometry();
        let vals = (0..g.pixels() as i32).map(|i| (i * 13) % 11 - 5).collect();
        s.set_analog("A", &AnalogPlane::from_values(g, Saturation::Ideal, vals).unwrap())
            .unwrap();
        let mut manual = s.clone();
        let sums = p.execute(&mut s).unwrap();

        manual
            .write_pattern("R1", &Pattern::Cols { odd: true }.materialize(&g).unwrap())
            .unwrap();
        manual.shift("B", "A", Direction::W, 1).unwrap();
        manual.add("C", "A", "B", Some("R1")).unwrap();
        manual.max_combine("D", "A", "B", None).unwrap();
        manual.threshold("FLAG", "C", 3).unwrap();
        manual.dreg_logic("R2", "FLAG", None, LogicOp::Not).unwrap();
        let expect = vec![manual.global_sum("C").unwrap(), manual.global_sum("D").unwrap()];
        assert_eq!(sums, expect);
        assert!(s.planes_eq(&manual));
    }
}
