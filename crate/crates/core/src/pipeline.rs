//! End-to-end execution of a lowered model on binary inputs.

use crate::array::{ArrayConfig, ArrayState, PixelMap, PIX};
use crate::error::Result;
use crate::lower::{lower_model_with, LoweringPlan};
use crate::model::{argmax, BnnModel};
use crate::noise::NoiseModel;
use crate::plane::BitImage;
use crate::prep::input_frame;
use crate::program::{BoundProgram, PpaProgram};

/// Class sums read out of the array and the winning index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoweredScores {
    pub sums: Vec<i64>,
    pub predicted: usize,
}

/// A model lowered and bound once, ready to run on many inputs.
#[derive(Debug, Clone)]
pub struct LoweredRunner {
    program: PpaProgram,
    plan: LoweringPlan,
    bound: BoundProgram,
    config: ArrayConfig,
}

impl LoweredRunner {
    pub fn new(model: &BnnModel, config: ArrayConfig) -> Result<Self> {
        let (program, plan) = lower_model_with(model, &config)?;
        let template = ArrayState::new(config.clone())?;
        let bound = program.bind(&template)?;
        Ok(Self {
            program,
            plan,
            bound,
            config,
        })
    }

    /// Default register file, ideal arithmetic, no noise.
    pub fn ideal(model: &BnnModel) -> Result<Self> {
        Self::new(model, ArrayConfig::new(*model.geometry()))
    }

    pub fn program(&self) -> &PpaProgram {
        &self.program
    }

    pub fn plan(&self) -> &LoweringPlan {
        &self.plan
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    /// A fresh array with this runner's layout and the given noise stream.
    pub fn new_state(&self, noise: NoiseModel) -> Result<ArrayState> {
        ArrayState::new(self.config.clone().with_noise(noise))
    }

    /// Loads `input` into `state` and runs the program. `state` keeps its
    /// noise stream position across calls.
    pub fn run_on(&self, state: &mut ArrayState, input: &BitImage) -> Result<LoweredScores> {
        self.run_observed(state, input, |_, _| {})
    }

    pub fn run_observed(
        &self,
        state: &mut ArrayState,
        input: &BitImage,
        observe: impl FnMut(usize, &ArrayState),
    ) -> Result<LoweredScores> {
        let frame = input_frame(input, &self.config.geometry)?;
        state.load_image(&frame, PIX, PixelMap::default())?;
        let sums = self.bound.run_observed(state, observe);
        let predicted = argmax(&sums)?;
        Ok(LoweredScores { sums, predicted })
    }

    pub fn infer(&self, input: &BitImage, noise: NoiseModel) -> Result<LoweredScores> {
        let mut state = self.new_state(noise)?;
        self.run_on(&mut state, input)
    }
}
