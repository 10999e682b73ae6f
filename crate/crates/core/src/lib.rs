//! Two-type Wright-Fisher models with selection in a random environment.
//!
//! * [`model`]: selection kernels, measures on `[0,1]`, limit parameters.
//! * [`wf_graph`]: exact finite-population forward and backward chains.
//! * [`fvwrs`]: the jump-diffusion limit `X` of the weak-allele frequency.
//! * [`bcre`]: the branching-coalescing dual `Z`.
//! * [`duality`]: Monte Carlo checks of the duality identities.
//! * [`thresholds`]: `beta*`, `alpha*` and long-term classification.
//! * [`bridge`]: fixation probabilities through the stationary law of `Z`.

pub mod bcre;
pub mod bridge;
pub mod duality;
pub mod error;
pub mod fvwrs;
pub mod model;
pub mod rng;
pub mod stats;
pub mod thresholds;
pub mod wf_graph;

pub use error::{Error, Result};
pub use model::{check_master_condition, FiniteMeasure, LimitParams, SelectionKernel};
pub use rng::Streams;
pub use stats::Estimate;
