//! Seedable random-variate generators and the small dense kernels the
//! sampler is built on.

mod bessel;
mod dist;
mod gig;
mod linalg;
mod rng;
mod shrinkage;

pub use bessel::{bessel_k, ln_bessel_k};
pub use dist::{
    categorical_from_logweights, dirichlet_log_sample, dirichlet_sample, gamma_logpdf, gamma_sample, ln_gamma_variate,
    log_sum_exp, mvn_logpdf, mvn_logpdf_precision, mvn_sample, mvn_sample_precision, normalized_exp,
    random_permutation, standard_normal, wishart_sample,
};
pub use gig::gig_sample;
pub use linalg::{cholesky, mahalanobis, SpdMatrix};
pub use rng::{derive_seed, RngStream};
pub use shrinkage::ng_marginal_logdensity;
