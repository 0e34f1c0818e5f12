//! Desk-scale laboratory for direct preference optimization.
//!
//! Small discrete prompt/response worlds where every preference objective
//! (DPO, IPO, f-DPO, the quasi-convex family, TYPO, and KL-regularized
//! reward maximization) can be evaluated exactly, differentiated exactly,
//! and trained to its population optimum in milliseconds. The crate ships
//! the synthetic studies (interpolation, preservation, constraint sensitivity
//! and degenerate-data behavior), a machine-precision identity-verification
//! suite, and a CLI that emits deterministic CSV/JSON/SVG reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod optim;
pub mod policy;
pub mod presets;
pub mod report;
pub mod verify;
pub mod world;

pub use error::{Error, Result};
