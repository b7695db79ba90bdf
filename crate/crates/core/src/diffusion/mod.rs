//! Noise schedules, the `x̂₀` predictor and the guided DDPM reverse sampler.

mod sampler;
mod schedule;

pub use sampler::{chain_rng, reverse_step, sample_guided, ChainState, SampleBatch, StepGuidance, TrajectoryRecord};
pub use schedule::{build_schedule, eps_from_score, predict_x0, NoiseSchedule};
