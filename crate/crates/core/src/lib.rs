//! Sparse finite Gaussian mixtures.
//!
//! A deliberately overfitting mixture is fitted by Gibbs sampling under a
//! sparse Dirichlet prior on the weights, so superfluous components empty
//! out during sampling and the number of clusters is read off as the most
//! frequent number of non-empty components. An optional normal-gamma
//! shrinkage prior on the component means flags cluster-irrelevant
//! variables. Label switching is resolved afterwards by clustering the
//! component-mean draws with Mahalanobis K-centroids.
//!
//! The pipeline is [`simdata`] or CSV → [`sampler::run_chain`] →
//! [`postid::identify`] → [`eval`].

pub mod cluster;
pub mod error;
pub mod eval;
pub mod model;
pub mod postid;
pub mod randkit;
pub mod sampler;
pub mod simdata;

pub use cluster::{CentroidSet, Distance};
pub use error::{Error, Result};
pub use eval::{EvalReport, ReferenceParams};
pub use model::{Dataset, E0Policy, MeanPrior, MixtureState, PriorSpec};
pub use postid::{Identification, IdentifiedDraws, KPosterior, PointProcess};
pub use randkit::{RngStream, SpdMatrix};
pub use sampler::{ChainArchive, ChainConfig};
pub use simdata::SimDesign;
