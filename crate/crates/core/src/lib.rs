//! Robust state estimation for discrete-time systems with monotone
//! nonlinearities under sensor attacks.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`model`] — plant descriptions `x⁺ = A x + G f(H x) + ρ(u)`, sensor
//!    configurations `y = C x + m + a`, seeded noise/attack signals, and
//!    simulation traces.
//! 2. [`sdp`] — a small dense semidefinite-program solver (linear objective,
//!    affine positive-semidefinite constraints) built on alternating
//!    projections with a level-set search on the objective.
//! 3. [`synthesis`] — assembly of the observer-design matrix inequalities,
//!    the decay-rate grid search, gain recovery, and certificate checks.
//! 4. [`observer`] — running a single synthesized observer against measured
//!    outputs and tracking its estimation error.
//! 5. [`estimator`] — a bank of observers over sensor subsets whose
//!    cross-consistency scores select an estimate that stays bounded under
//!    false-data injection on a minority of sensors.
//! 6. [`isolation`] — windowed voting over the per-step most-consistent
//!    subset to accuse the attacked sensors.
//! 7. [`harness`] — scenario configs, end-to-end runs, and CSV/JSON artifact
//!    emission shared by the CLI.
//!
//! All randomness flows through [`rng::SplitMix64`], so every run is bitwise
//! reproducible from its seeds.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod isolation;
pub(crate) mod matio;
pub mod model;
pub mod observer;
pub mod rng;
pub mod sdp;
pub mod synthesis;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
