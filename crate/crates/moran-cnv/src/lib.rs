//! Exact stochastic simulation of a two-parent Moran model for copy-number
//! variation, together with a numerical verification engine for its
//! slow-fast limit structure: closed-form generator actions checked against
//! an exact-generator oracle, moment flows, Poisson / negative-binomial
//! fixed-point certificates, limiting diffusions, and empirical adjudication
//! of two internally inconsistent diffusion-coefficient candidates.
//!
//! The library is organized around the model's ingredients:
//!
//! * [`inheritance`]: families `(p_k^N)_k` of inheritance distributions with
//!   samplers, generating functions and factorial moments.
//! * [`population`]: the `N`-individual jump process, an exact
//!   generator-application oracle, and the all-or-nothing zero-count chain.
//! * [`observables`]: moments, empirical generating functions, occupation
//!   measures, distribution distances, quadratic-variation estimates.
//! * [`generator`]: closed-form `G1`/`G0` actions, 6x6 moment matrices and
//!   their spectra, fixed-point laws with residual certificates.
//! * [`diffusion`]: Euler-Maruyama integration of the limiting diffusions
//!   and the planar toy system.
//! * [`harness`]: scenario configuration, deterministic seeding, experiment
//!   orchestration and report serialization behind the CLI.

pub mod diffusion;
pub mod error;
pub mod generator;
pub mod harness;
pub mod inheritance;
pub mod observables;
pub mod population;

pub use error::{Error, Result};
