//! Training and sampling: the regression loop for refiner and generator,
//! the Euler sampler, and step-budget bookkeeping.

mod sample;
mod train;

pub use sample::{
    format_trajectory_dump, generate_ensembles, generate_from_noise, integrate, refine,
    refine_ensemble, FnField, SampleConfig, SampleOutput, StepBudget, Trajectory, VelocityField,
    ZeroField,
};
pub use train::{
    draw_sample, train, train_generator, train_refiner, LossHistory, TrainConfig, TrainingSample,
};
