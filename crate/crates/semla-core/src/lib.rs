//! Joint 3D molecular generation at desk scale.
//!
//! This crate implements an E(3)-equivariant message-passing network whose
//! pairwise attention runs in a compressed latent space, together with the
//! conditional flow-matching machinery needed to train it and sample from it:
//! equivariant optimal-transport pairing of noise and data, joint
//! interpolation of coordinates and categorical variables, an Euler/discrete
//! sampler over a log-spaced time schedule, and an evaluation suite
//! (stability, validity, uniqueness, novelty, surrogate energy/strain).
//!
//! Everything runs on a small self-contained f64 tensor engine with
//! tape-based reverse-mode differentiation, so results are deterministic and
//! checkable against finite differences.

pub mod arch;
pub mod batching;
pub mod checkpoint;
pub mod exec;
pub mod flow;
pub mod metrics;
pub mod molecule;
pub mod ot;
pub mod sampler;
pub mod sdf;
pub mod synthetic;
pub mod trainer;
pub mod tensor;
