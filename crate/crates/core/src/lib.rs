//! Fréchet distances between image datasets over pluggable feature spaces.
//!
//! The measurement pipeline: images (or precomputed embeddings) →
//! [`extract`] → [`frechet::fit_gaussian`] → [`frechet::frechet_distance`] →
//! [`calibration::rescale`] → reports ([`pipeline`]). Around it sit the
//! benchmark's image perturbations ([`perturb`]), nearest-neighbor and
//! survey arithmetic ([`analysis`]) and MLP probes over frozen features
//! ([`probe`]).

pub mod analysis;
pub mod calibration;
pub mod corpus;
pub mod error;
pub mod extract;
pub mod frechet;
pub mod perturb;
pub mod pipeline;
pub mod probe;
pub mod rng;

pub use error::{Error, Result};
pub use faer;
