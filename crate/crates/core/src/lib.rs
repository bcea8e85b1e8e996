//! Parallel-in-time particle smoothing.
//!
//! The smoother draws independent particle clouds for every time step and
//! stitches adjacent blocks of partial smoothing trajectories together over a
//! balanced binary tree, so the sequential depth of the computation grows
//! with `log2(T)` instead of `T`. The crate also provides a conditional
//! variant that preserves a reference trajectory (used inside particle
//! Gibbs), lazy pair resampling, Kalman/iterated extended Kalman machinery
//! to build Gaussian proposals, and a sequential FFBS baseline.
//!
//! The crate is `no_std` (with `alloc`). The `std` feature switches the
//! math backend to the platform libm; `parallel` runs leaves and the combine
//! calls of a tree level on the rayon pool. Output is identical with or
//! without `parallel`, for any number of worker threads.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod baselines;
pub mod conditional;
pub mod density;
pub mod error;
pub mod gaussian;
pub mod math;
pub mod model;
pub mod resampling;
pub mod rng;
pub mod smoother;

pub use conditional::{GibbsState, GibbsTarget, StarTrajectory};
pub use error::{Error, Result};
pub use model::FeynmanKac;
pub use resampling::{PairSample, PairWeights, Resampler};
pub use rng::{Role, Stream, StreamKey};
pub use smoother::{BlockEstimate, CombineSchedule, LeafEstimate, RunInfo, SmootherConfig};
