//! Diffusion transformer shared by all three stages: a stream of per-part
//! token slots, alternating intra-slot and inter-slot attention, cross
//! attention to the image condition, rectified-flow training and Euler
//! sampling with classifier-free guidance.

mod checkpoint;
mod config;
mod model;
pub mod ops;
mod optim;
mod params;
mod sampler;
mod stream;
mod train;

pub use checkpoint::Checkpoint;
pub use config::{BlockKind, DitConfig};
pub use model::{cross_attention, self_attention, Dit, ForwardCache};
pub use optim::{AdamW, AdamWConfig};
pub use params::{ParamId, ParamStore};
pub use sampler::{
    guided_velocity, sample, time_grid, BoundDit, Clamp, SampleOptions, VelocityField, CFG_SCALE,
    SAMPLE_STEPS,
};
pub use stream::{CondInput, Slot, StreamLayout, TokenStream};
pub use train::{
    cfm_loss, cfm_loss_and_grad, drop_condition, interpolate, slot_weights, train_loop, train_step, TrainSchedule,
    TrainExample, COND_DROP_PROB,
};
