//! Bit-faithful simulation of binary CNN inference on a pixel processor
//! array: register planes and their SIMD primitives, a lowering from a
//! one-layer binary CNN to plane instructions, an instruction cost model,
//! a synthetic gesture dataset with a straight-through-estimator trainer, and
//! a discrete-event PWM servo loop driven by the classification results.

pub mod array;
pub mod error;
pub mod gesture;
pub mod geometry;
pub mod io;
pub mod lower;
pub mod model;
pub mod noise;
pub mod pipeline;
pub mod plane;
pub mod pnm;
pub mod prep;
pub mod program;
pub mod servo;
pub mod train;

pub use array::{ArrayConfig, ArrayState, Direction, LogicOp};
pub use error::{Error, Result};
pub use geometry::PlaneGeometry;
pub use lower::{lower_model, lower_model_with, LoweringPlan, REPLICATION_FACTOR};
pub use model::{argmax, reference_infer, reference_trace, BnnModel, ClassScores};
pub use noise::{NoiseKind, NoiseModel};
pub use pipeline::{LoweredRunner, LoweredScores};
pub use plane::{AnalogPlane, BitImage, DigitalPlane, GrayImage, Saturation};
pub use program::{estimate, CostModel, Instruction, Opcode, PpaProgram, TimingReport};
