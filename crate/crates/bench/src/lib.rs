//! Shared fixtures for the benchmarks.

use sparsemix::model::{derive_hyper, init_state, DataHyper, Dataset, MixtureState, PriorSpec};
use sparsemix::randkit::RngStream;
use sparsemix::simdata::{design_equal_weights, generate};

/// The equal-weights simulation dataset with a k-means start.
pub fn equal_weights_start(spec: &PriorSpec, seed: u64) -> (Dataset, DataHyper, MixtureState, RngStream) {
    let data = generate(&design_equal_weights(), seed).expect("design is valid");
    let hyper = derive_hyper(&data).expect("data has spread");
    let mut rng = RngStream::new(seed, 0);
    let state = init_state(&data, &hyper, spec, &mut rng).expect("k-means start");
    (data, hyper, state, rng)
}
