//! Locally linear embedding and two generative variants that sample the
//! reconstruction weights instead of fixing them.
//!
//! * [`lle`]: deterministic weights and the shared spectral embedding.
//! * [`glle_em`]: weight covariances fitted by EM, weights drawn from the
//!   posterior.
//! * [`glle_direct`]: weights drawn around the LLE weights with a covariance
//!   built from both the input and embedded neighborhoods.
//!
//! Per-point work runs on rayon when the `parallel` feature is on (the
//! default). Results do not depend on the thread count.

pub mod error;
pub mod gaussian;
pub mod glle_direct;
pub mod glle_em;
pub mod linalg;
pub mod lle;
pub mod manifold_data;
pub mod metrics;
pub mod neighborhood;
pub mod par;
pub mod sparse;

pub use error::{GlleError, Result};
pub use lle::{Embedding, WeightMatrix};
pub use manifold_data::Dataset;
pub use neighborhood::NeighborhoodGraph;
