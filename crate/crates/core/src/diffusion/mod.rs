//! Noise schedules, forward noising and x0-parameterized reverse sampling.

pub mod sampler;
pub mod schedule;

pub use sampler::{
    ancestral_sample, ddim_sample, ddim_step, forward_noise, forward_noise_with, implied_noise, reverse_mean,
    standard_normal, Denoiser, NoisyState,
};
pub use schedule::{make_schedule, DiffusionSchedule, ScheduleDescriptor, ScheduleKind};
