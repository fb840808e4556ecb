//! Core algorithms for coarse-to-fine music-conditioned dance generation.
//!
//! The pipeline generates arbitrarily long motion sequences in parallel:
//!
//! 1. A *global* diffusion model reads a long music window and emits a small
//!    set of expressive 8-frame key motions ("dance primitives").
//! 2. The primitives are augmented (mirroring, beat alignment) and turned
//!    into per-segment guidance values and masks.
//! 3. A *local* diffusion model denoises every segment independently under
//!    hard guidance (segment heads/tails pinned bit-exactly) and soft
//!    guidance (beat-aligned windows blended during early denoising steps),
//!    so the segments concatenate into one seamless long sequence.
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation over
//! in-memory buffers. File formats, the CLI, and the parallel sampling
//! driver live in the companion `lodgekit` crate.
//!
//! Modules map to the pipeline stages:
//!
//! - [`rotation`], [`skeleton`], [`motion`]: 6D rotations, forward
//!   kinematics, and the fixed 139-channel motion representation.
//! - [`music`]: 35-channel conditioning features, beats, synthetic music.
//! - [`dataset`]: synthetic paired data and key-motion extraction.
//! - [`tensor`], [`graph`], [`nn`], [`optim`]: a small reverse-mode
//!   autodiff engine and the transformer building blocks trained with it.
//! - [`schedule`], [`diffusion`], [`denoiser`]: noise schedules, DDPM/DDIM
//!   samplers, and the x0-prediction training losses.
//! - [`global_stage`], [`guidance`], [`local_stage`]: the two diffusion
//!   stages and the hard/soft guidance loop between them.
//! - [`metrics`]: kinetic/geometric features, FID, diversity, beat
//!   alignment, foot skating.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod global_stage;
pub mod graph;
pub mod guidance;
pub mod local_stage;
pub mod math;
pub mod metrics;
pub mod motion;
pub mod music;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod rotation;
pub mod schedule;
pub mod skeleton;
pub mod tensor;

pub use error::{CoreError, Result};
