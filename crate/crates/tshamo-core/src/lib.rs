//! Core algorithms for teacher-student diffusion over 3-D hand motion.
//!
//! The crate is free of IO: it holds the reverse-mode autodiff engine
//! ([`diffcore`]), noise schedules and the forward/reverse processes
//! ([`diffusion`]), the hand-motion representation and MANO-lite kinematics
//! ([`motion`]), the student/teacher denoisers ([`denoisers`]), the
//! co-training procedure ([`cotrain`]), and sampling plus evaluation metrics
//! ([`evalkit`]). File formats, dataset synthesis, and the CLI live in the
//! companion `tshamo` crate.
//!
//! All floating-point math goes through `libm`, so results are bit-identical
//! across platforms. The crate is `no_std`-compatible with `alloc`.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cotrain;
pub mod denoisers;
pub mod diffcore;
pub mod diffusion;
mod error;
pub mod evalkit;
pub mod motion;
pub mod rng;

pub use error::{Error, Result};
