//! Part-aware 3D generation at desk scale.
//!
//! Objects are generated in three stages that share one diffusion-transformer
//! core ([`dit`]): a box layout ([`layout`]), per-part occupancy grids at full
//! resolution in each part's own canonical frame, and per-voxel features
//! ([`stages`]). Parts are positioned with center-corner embeddings
//! ([`encoding`]) so every token knows its true extent in object space.
//! [`pipeline`] ties the stages together and implements box-level editing;
//! [`synthdata`] provides a procedural training corpus and [`eval`] the
//! metrics.

pub mod cli;
pub mod config;
pub mod dit;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod files;
pub mod geometry;
pub mod layout;
pub mod pipeline;
pub mod rng;
pub mod server;
pub mod stages;
pub mod synthdata;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
