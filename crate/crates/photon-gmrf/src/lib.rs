//! Bayesian reconstruction of intensity fields from photon-starved images.
//!
//! Detectors are either counting (Poisson observations) or binary
//! (single-photon detectors that saturate after one arrival).  The scene is
//! modeled by a hidden gamma Markov random field whose auxiliary variables
//! make every full conditional a gamma or inverse gamma, and the posterior
//! is explored by a Metropolis-within-Gibbs sampler whose draws are
//! reproducible bit for bit across thread counts.
//!
//! Module map:
//!
//! * [`field`]: frame stacks, efficiency maps, validity masks;
//! * [`geometry`]: neighborhood structure of the intensity graph;
//! * [`rng`]: counter-based random streams;
//! * [`dist`]: gamma / inverse gamma / truncated gamma primitives;
//! * [`observation`]: detector models, likelihoods, simulation;
//! * [`gmrf`]: the prior's composite statistics and auxiliary sweeps;
//! * [`sampler`]: the Gibbs chain, acceptance bookkeeping, adaptation;
//! * [`eval`]: test scenes, error metrics, frame integration;
//! * [`io`]: text frame-stack format and run manifests;
//! * [`cli`]: the command-line interface.

pub mod cli;
pub mod dist;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod gmrf;
pub mod io;
pub mod observation;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
