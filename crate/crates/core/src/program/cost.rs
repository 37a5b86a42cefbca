//! Instruction cost model and timing reports.
//!
//! A cost table is a flat JSON object mapping opcode names to microseconds
//! per instruction, plus `"overhead_us"` for the fixed per-frame cost
//! (exposure and readout). Keys starting with `_` are notes and are ignored.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{Map, Value};

use super::{Opcode, PpaProgram};
use crate::error::{Error, Result};

/// The shipped cost table.
pub const DEFAULT_COST_TABLE: &str = include_str!("../../data/cost_table.json");

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    costs: BTreeMap<Opcode, f64>,
    overhead_us: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self::from_json(DEFAULT_COST_TABLE).expect("shipped cost table is valid")
    }
}

impl CostModel {
    pub fn new(costs: BTreeMap<Opcode, f64>, overhead_us: f64) -> Result<Self> {
        for (op, &c) in &costs {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::CostTable(format!("cost of `{op}` must be finite and >= 0, got {c}")));
            }
        }
        if !(overhead_us.is_finite() && overhead_us >= 0.0) {
            return Err(Error::CostTable(format!(
                "overhead_us must be finite and >= 0, got {overhead_us}"
            )));
        }
        Ok(Self { costs, overhead_us })
    }

    /// Every opcode at `per_instruction` µs.
    pub fn uniform(per_instruction: f64, overhead_us: f64) -> Result<Self> {
        Self::new(
            Opcode::ALL.iter().map(|&op| (op, per_instruction)).collect(),
            overhead_us,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: Map<String, Value> = serde_json::from_str(text)?;
        let mut costs = BTreeMap::new();
        let mut overhead = None;
        for (key, value) in &map {
            if key.starts_with('_') {
                continue;
            }
            let v = value
                .as_f64()
                .ok_or_else(|| Error::CostTable(format!("`{key}` is not a number")))?;
            if key == "overhead_us" {
                overhead = Some(v);
            } else {
                let op = key.parse::<Opcode>().map_err(Error::CostTable)?;
                costs.insert(op, v);
            }
        }
        let overhead = overhead.ok_or_else(|| Error::CostTable("missing `overhead_us`".into()))?;
        Self::new(costs, overhead)
    }

    pub fn to_json(&self) -> String {
        let mut map = Map::new();
        for (op, c) in &self.costs {
            map.insert(op.name().to_string(), Value::from(*c));
        }
        map.insert("overhead_us".into(), Value::from(self.overhead_us));
        serde_json::to_string_pretty(&Value::Object(map)).expect("plain map serializes")
    }

    pub fn cost(&self, op: Opcode) -> Option<f64> {
        self.costs.get(&op).copied()
    }

    pub fn overhead_us(&self) -> f64 {
        self.overhead_us
    }
}

/// Latency and throughput of one program under one cost table.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub counts: BTreeMap<Opcode, usize>,
    pub latency_us: f64,
    /// `10⁶ / latency_us`; infinite for a zero-latency program.
    pub throughput_fps: f64,
}

impl TimingReport {
    /// Whole frames per second, or `None` when throughput is unbounded.
    pub fn fps_floor(&self) -> Option<u64> {
        self.throughput_fps
            .is_finite()
            .then(|| self.throughput_fps.floor() as u64)
    }

    pub fn instruction_count(&self) -> usize {
        self.counts.values().sum()
    }
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.fps_floor() {
            Some(fps) => write!(f, "latency_us={:.1} fps={fps}", self.latency_us),
            None => write!(f, "latency_us={:.1} fps=inf", self.latency_us),
        }
    }
}

/// Latency is the fixed overhead plus the summed per-instruction costs.
pub fn estimate(program: &PpaProgram, cost: &CostModel) -> Result<TimingReport> {
    let mut counts = BTreeMap::new();
    for instr in program.instructions() {
        *counts.entry(instr.opcode()).or_insert(0usize) += 1;
    }
    let mut latency_us = cost.overhead_us;
    // Accumulate in instruction order so the result does not depend on how
    // the counts are grouped.
    for instr in program.instructions() {
        let op = instr.opcode();
        latency_us += cost.cost(op).ok_or(Error::MissingCost(op))?;
    }
    Ok(TimingReport {
        counts,
        latency_us,
        throughput_fps: 1e6 / latency_us,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Direction;
    use crate::program::Instruction;
    use proptest::prelude::*;

    fn shift() -> Instruction {
        Instruction::Shift {
            dst: "A".into(),
            src: "A".into(),
            dir: Direction::N,
            steps: 1,
        }
    }

    #[test]
    fn empty_program_is_unbounded() {
        let r = estimate(&PpaProgram::default(), &CostModel::uniform(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(r.latency_us, 0.0);
        assert!(r.throughput_fps.is_infinite());
        assert_eq!(r.fps_floor(), None);
        assert_eq!(r.to_string(), "latency_us=0.0 fps=inf");
    }

    #[test]
    fn ten_unit_instructions_plus_overhead() {
        let p = PpaProgram::new(None, vec![shift(); 10]);
        let r = estimate(&p, &CostModel::uniform(1.0, 2.0).unwrap()).unwrap();
        assert_eq!(r.latency_us, 12.0);
        assert_eq!(r.fps_floor(), Some(83333));
        assert_eq!(r.counts[&Opcode::Shift], 10);
    }

    #[test]
    fn latency_121_gives_8264_fps() {
        let r = estimate(&PpaProgram::default(), &CostModel::uniform(0.0, 121.0).unwrap()).unwrap();
        assert_eq!(r.fps_floor(), Some(8264));
        assert_eq!(r.to_string(), "latency_us=121.0 fps=8264");
    }

    #[test]
    fn missing_opcode_is_named() {
        let cost = CostModel::from_json(r#"{"overhead_us": 1, "add": 0.5}"#).unwrap();
        let err = estimate(&PpaProgram::new(None, vec![shift()]), &cost).unwrap_err();
        assert!(matches!(err, Error::MissingCost(Opcode::Shift)));
        assert!(err.to_string().contains("`shift`"));
    }

    #[test]
    fn table_parsing_rejects_bad_entries() {
        assert!(CostModel::from_json(r#"{"add": 1}"#).is_err());
        assert!(CostModel::from_json(r#"{"overhead_us": 1, "frob": 1}"#).is_err());
        assert!(CostModel::from_json(r#"{"overhead_us": 1, "add": -1}"#).is_err());
        assert!(CostModel::from_json(r#"{"overhead_us": 1, "add": "x"}"#).is_err());
        let c = CostModel::from_json(r#"{"_note": "ignored", "overhead_us": 3, "add": 0.25}"#)
            .unwrap();
        assert_eq!(CostModel::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn default_table_covers_every_opcode() {
        let c = CostModel::default();
        for op in Opcode::ALL {
            assert!(c.cost(op).is_some(), "{op}");
        }
    }

    proptest! {
        #[test]
        fn throughput_times_latency_is_one_million(
            costs in proptest::collection::vec(0.0f64..50.0, 13),
            overhead in 0.001f64..500.0,
            n in 0usize..40,
        ) {
            let table = Opcode::ALL.iter().copied().zip(costs).collect();
            let cost = CostModel::new(table, overhead).unwrap();
            let prog = PpaProgram::new(None, vec![shift(); n]);
            let r = estimate(&prog, &cost).unwrap();
            let product = r.throughput_fps * r.latency_us;
            prop_assert!((product - 1e6).abs() <= 1e6 * f64::EPSILON * 2.0);
        }

        #[test]
        fn appending_never_decreases_latency(
            per in 0.0f64..10.0,
            overhead in 0.0f64..100.0,
            n in 0usize..30,
        ) {
            let cost = CostModel::uniform(per, overhead).unwrap();
            let prog = PpaProgram::new(None, vec![shift(); n]);
            let longer = prog.clone().with(shift());
            prop_assert!(
                estimate(&longer, &cost).unwrap().latency_us
                    >= estimate(&prog, &cost).unwrap().latency_us
            );
        }
    }
}
