//! Measurement bounds, optimal weights and recovery experiments for
//! weighted ℓ1-analysis, weighted block-ℓ1,2 and weighted total-variation
//! minimization under non-uniform prior support information.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`] Gaussian tail integrals used by every bound.
//! * [`models`] partitions, dictionaries, block structures and TV support profiles.
//! * [`bounds`] normalized statistical-dimension bounds and sandwich widths.
//! * [`weights`] unique optimal per-partition weights.
//! * [`mc`] Monte Carlo estimates of the same quantities.
//! * [`recovery`] ADMM solvers for the three weighted programs.
//! * [`synth`] seeded instance generators.
//! * [`harness`] config-driven experiment grids and CSV output.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod mc;
pub mod models;
mod quadrature;
pub mod recovery;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
