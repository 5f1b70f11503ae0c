//! Response-aware probabilistic matrix factorization.
//!
//! The crate implements plain PMF and two response-aware extensions that
//! model *which* cells of a rating matrix get rated alongside the ratings
//! themselves:
//!
//! * a rating-dominant response model with one Bernoulli parameter per
//!   rating level, and
//! * a context-aware response model where the response probability also
//!   depends on the user and item latent features.
//!
//! Around the models sit a synthetic not-missing-at-random data generator
//! ([`synth`]), a three-protocol evaluation harness ([`eval`]) and the file
//! formats used by the command line tool ([`bundle`], [`modelfile`]).

pub mod bundle;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod modelfile;
pub mod params;
pub mod pmf;
pub mod rapmf;
pub mod response;
pub mod rng;
pub mod synth;

pub use codec::{logistic, map_rating, unmap_rating, Logistic};
pub use dataset::{Dataset, ResponseMask, Triplet};
pub use error::{Error, Result};
pub use params::{Execution, Factors, Hyperparams, ResponseParams, Variant};
pub use pmf::{PmfModel, Predict};
pub use rapmf::RapmfModel;
pub use synth::{ProtocolSplit, SyntheticConfig, TruthBundle};

/// Version string embedded in every output file.
pub const CODE_VERSION: &str = concat!("rapmf ", env!("CARGO_PKG_VERSION"));
