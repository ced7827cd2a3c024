//! Gibbs sampler for the sparse finite mixture.
//!
//! One sweep runs, in order: weights, precisions, means (given the
//! classification), classification, the Wishart rate `C₀`, a Metropolis
//! step for `e₀` when it is random, the shrinkage scales `λ` and the prior
//! mean `b₀` under the normal-gamma prior, and finally a uniformly random
//! relabelling of the components.

pub(crate) mod archive;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

pub use archive::{ChainArchive, ARCHIVE_VERSION};

use crate::error::{Error, Result};
use crate::model::{
    derive_hyper, init_state, prior_b0_diagonal, DataHyper, Dataset, E0Policy, MeanPrior, MixtureState, PriorSpec,
};
use crate::randkit::{
    cholesky, dirichlet_log_sample, gig_sample, mvn_sample_precision, random_permutation, standard_normal,
    wishart_sample, RngStream,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Lower bound on `Σ_k (μ_kj − b₀j)² / R_j²` in the `λ_j` update.
pub const LAMBDA_B_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub iterations: usize,
    pub store_sigma: bool,
    pub store_allocations: bool,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { burn_in: 2000, iterations: 10_000, store_sigma: false, store_allocations: false, seed: 0 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("at least one stored iteration is required".into()));
        }
        Ok(())
    }
}

/// Per-component sufficient statistics of the current classification.
pub(crate) struct ComponentStats {
    pub sum: Vec<Vec<f64>>,
    /// `Σ_i y_i y_iᵀ` over the members of each component.
    pub outer: Vec<DMatrix<f64>>,
}

pub(crate) fn component_stats(state: &MixtureState, data: &Dataset) -> ComponentStats {
    let k = state.k();
    let r = data.dim();
    let mut sum = vec![vec![0.0; r]; k];
    let mut outer = vec![DMatrix::zeros(r, r); k];
    for (i, &a) in state.alloc.iter().enumerate() {
        let y = data.row(i);
        for (s, v) in sum[a].iter_mut().zip(y) {
            *s += v;
        }
        let o = &mut outer[a];
        for p in 0..r {
            for q in 0..=p {
                o[(p, q)] += y[p] * y[q];
            }
        }
    }
    for o in &mut outer {
        for p in 0..r {
            for q in 0..p {
                o[(q, p)] = o[(p, q)];
            }
        }
    }
    ComponentStats { sum, outer }
}

/// Weights: `η ~ Dir(e₀ + N_1, …, e₀ + N_K)`.
pub fn step_weights(state: &mut MixtureState, rng: &mut RngStream) -> Result<()> {
    let alpha: Vec<f64> = state.counts.iter().map(|&n| state.e0 + n as f64).collect();
    let log_eta = dirichlet_log_sample(&alpha, rng)?;
    state.set_log_eta(log_eta);
    Ok(())
}

/// Precisions: `Σ_k⁻¹ ~ W(c₀ + N_k/2, C₀ + ½ Σ_{i:S_i=k} (y_i − μ_k)(y_i − μ_k)ᵀ)`.
pub fn step_covariances(
    state: &mut MixtureState,
    data: &Dataset,
    hyper: &DataHyper,
    rng: &mut RngStream,
) -> Result<()> {
    let stats = component_stats(state, data);
    let c0m = state.c0.matrix();
    for k in 0..state.k() {
        let n = state.counts[k] as f64;
        let mut rate = c0m.clone();
        if n > 0.0 {
            let mu = &state.mu[k];
            let s = &stats.sum[k];
            let o = &stats.outer[k];
            // Σ (y−μ)(y−μ)ᵀ = Σ y yᵀ − s μᵀ − μ sᵀ + n μ μᵀ
            for p in 0..mu.len() {
                for q in 0..mu.len() {
                    let scatter = o[(p, q)] - s[p] * mu[q] - mu[p] * s[q] + n * mu[p] * mu[q];
                    rate[(p, q)] += 0.5 * scatter;
                }
            }
        }
        let rate = cholesky(&rate)?;
        state.precision[k] = wishart_sample(hyper.c0 + 0.5 * n, &rate, rng)?;
    }
    Ok(())
}

/// Means: `μ_k ~ N(b_k, B_k)`, `B_k = (B₀⁻¹ + N_k Σ_k⁻¹)⁻¹`,
/// `b_k = B_k (B₀⁻¹ b₀ + Σ_k⁻¹ N_k ȳ_k)`.
pub fn step_means(
    state: &mut MixtureState,
    data: &Dataset,
    hyper: &DataHyper,
    spec: &PriorSpec,
    rng: &mut RngStream,
) -> Result<()> {
    let stats = component_stats(state, data);
    let r = data.dim();
    let b0_diag = prior_b0_diagonal(hyper, &state.lambda, spec);
    for k in 0..state.k() {
        let n = state.counts[k] as f64;
        let omega = state.precision[k].matrix();
        let mut post = omega * n;
        let mut rhs = vec![0.0; r];
        for j in 0..r {
            post[(j, j)] += 1.0 / b0_diag[j];
            rhs[j] = state.b0[j] / b0_diag[j];
        }
        // Σ_k⁻¹ N_k ȳ_k = Σ_k⁻¹ (sum of members)
        let s = &stats.sum[k];
        let omega_s = state.precision[k].matrix() * nalgebra::DVector::from_column_slice(s);
        for j in 0..r {
            rhs[j] += omega_s[j];
        }
        let post = cholesky(&post)?;
        let mean = post.solve(&rhs);
        state.mu[k] = mvn_sample_precision(&mean, &post, rng)?;
    }
    Ok(())
}

/// Scratch buffers for the classification step.
#[derive(Default)]
struct ClassifyWork {
    lt: Vec<f64>,
    cst: Vec<f64>,
    logw: Vec<f64>,
    diff: Vec<f64>,
}

fn classify_with(state: &mut MixtureState, data: &Dataset, rng: &mut RngStream, w: &mut ClassifyWork) -> Result<()> {
    let k = state.k();
    let r = data.dim();
    w.lt.resize(k * r * r, 0.0);
    w.cst.resize(k, 0.0);
    w.logw.resize(k, 0.0);
    w.diff.resize(r, 0.0);
    for c in 0..k {
        let l = state.precision[c].lower();
        for i in 0..r {
            for j in 0..r {
                w.lt[c * r * r + i * r + j] = if i >= j { l[(i, j)] } else { 0.0 };
            }
        }
        let half_logdet: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
        w.cst[c] = state.log_eta[c] + half_logdet - 0.5 * r as f64 * LN_2PI;
    }
    state.counts.iter_mut().for_each(|n| *n = 0);
    for i in 0..data.n() {
        let y = data.row(i);
        let mut max = f64::NEG_INFINITY;
        for c in 0..k {
            if state.log_eta[c] == f64::NEG_INFINITY {
                w.logw[c] = f64::NEG_INFINITY;
                continue;
            }
            let mu = &state.mu[c];
            for j in 0..r {
                w.diff[j] = y[j] - mu[j];
            }
            let lt = &w.lt[c * r * r..(c + 1) * r * r];
            // dᵀ Ω d = |Lᵀ d|² with Ω = L Lᵀ
            let mut q = 0.0;
            for j in 0..r {
                let mut s = 0.0;
                for p in j..r {
                    s += lt[p * r + j] * w.diff[p];
                }
                q += s * s;
            }
            let v = w.cst[c] - 0.5 * q;
            w.logw[c] = v;
            if v > max {
                max = v;
            }
        }
        if !max.is_finite() {
            return Err(Error::AllWeightsDegenerate);
        }
        let mut total = 0.0;
        for v in w.logw.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        let mut u = rng.uniform() * total;
        let mut pick = k - 1;
        for (c, &p) in w.logw.iter().enumerate() {
            if u < p {
                pick = c;
                break;
            }
            u -= p;
        }
        // guard against landing on a zero-probability tail through rounding
        if w.logw[pick] == 0.0 {
            pick = w.logw.iter().rposition(|&p| p > 0.0).expect("the maximum has weight one");
        }
        state.alloc[i] = pick;
        state.counts[pick] += 1;
    }
    Ok(())
}

/// Classification: `P(S_i = k) ∝ η_k f_N(y_i | μ_k, Σ_k)`, independently
/// for every observation.
pub fn step_classify(state: &mut MixtureState, data: &Dataset, rng: &mut RngStream) -> Result<()> {
    classify_with(state, data, rng, &mut ClassifyWork::default())
}

/// Wishart rate of the precision prior: `C₀ ~ W(g₀ + K c₀, G₀ + Σ_k Σ_k⁻¹)`.
pub fn step_c0(state: &mut MixtureState, hyper: &DataHyper, rng: &mut RngStream) -> Result<()> {
    let mut rate = hyper.big_g0.matrix();
    for p in &state.precision {
        rate += p.matrix();
    }
    let shape = hyper.g0 + state.k() as f64 * hyper.c0;
    state.c0 = wishart_sample(shape, &cholesky(&rate)?, rng)?;
    Ok(())
}

/// Log of the unnormalized conditional of `e₀` given the weights:
/// `G(e₀ | a, aK) · Γ(K e₀) / Γ(e₀)^K · (Π η_k)^{e₀ − 1}`.
pub fn e0_log_target(e0: f64, log_eta: &[f64], a: f64) -> f64 {
    let k = log_eta.len() as f64;
    let sum_log_eta: f64 = log_eta.iter().sum();
    (a - 1.0) * e0.ln() - a * k * e0 + ln_gamma(k * e0) - k * ln_gamma(e0) + (e0 - 1.0) * sum_log_eta
}

/// Log acceptance ratio of the log-scale random walk from `current` to
/// `proposal`, Jacobian included.
pub fn e0_log_acceptance(current: f64, proposal: f64, log_eta: &[f64], a: f64) -> f64 {
    if proposal == current {
        return 0.0;
    }
    e0_log_target(proposal, log_eta, a) + proposal.ln() - e0_log_target(current, log_eta, a) - current.ln()
}

/// Random-walk Metropolis update of `e₀` on the log scale. Returns whether
/// the proposal was accepted, or `None` when `e₀` is fixed.
pub fn step_e0_mh(state: &mut MixtureState, spec: &PriorSpec, rng: &mut RngStream) -> Result<Option<bool>> {
    let E0Policy::GammaHyper { a } = spec.e0_policy else {
        return Ok(None);
    };
    let proposal = (state.e0.ln() + spec.mh_step * standard_normal(rng)).exp();
    if !(proposal > 0.0 && proposal.is_finite()) {
        return Ok(Some(false));
    }
    let log_alpha = e0_log_acceptance(state.e0, proposal, &state.log_eta, a);
    if rng.uniform_pos().ln() <= log_alpha {
        state.e0 = proposal;
        Ok(Some(true))
    } else {
        Ok(Some(false))
    }
}

/// Shrinkage scales: `λ_j ~ GIG(ν₁ − K/2, 2ν₂, Σ_k (μ_kj − b₀j)² / R_j²)`.
/// No-op under the standard prior.
pub fn step_lambda(state: &mut MixtureState, hyper: &DataHyper, spec: &PriorSpec, rng: &mut RngStream) -> Result<()> {
    let MeanPrior::NormalGamma { nu1, nu2 } = spec.mean_prior else {
        return Ok(());
    };
    let p = nu1 - 0.5 * state.k() as f64;
    for j in 0..state.dim() {
        let rj2 = hyper.range[j] * hyper.range[j];
        let b = state.mu.iter().map(|m| (m[j] - state.b0[j]).powi(2)).sum::<f64>() / rj2;
        let draw = gig_sample(p, 2.0 * nu2, b.max(LAMBDA_B_FLOOR), rng)?;
        state.lambda[j] = draw.max(f64::MIN_POSITIVE);
    }
    Ok(())
}

/// Prior mean: `b₀ ~ N(mean of all K μ_k, B₀ / K)`. No-op under the
/// standard prior.
pub fn step_b0(state: &mut MixtureState, hyper: &DataHyper, spec: &PriorSpec, rng: &mut RngStream) -> Result<()> {
    if !spec.mean_prior.is_normal_gamma() {
        return Ok(());
    }
    let k = state.k() as f64;
    let var = prior_b0_diagonal(hyper, &state.lambda, spec);
    for j in 0..state.dim() {
        let mean = state.mu.iter().map(|m| m[j]).sum::<f64>() / k;
        state.b0[j] = mean + (var[j] / k).sqrt() * standard_normal(rng);
    }
    Ok(())
}

/// Relabels the components by `ρ`: component `k` takes the parameters of
/// old component `ρ(k)`, and each allocation `S_i` becomes `ρ⁻¹(S_i)`, so
/// every observation stays with the same parameters.
pub fn apply_permutation(state: &mut MixtureState, rho: &[usize]) {
    let inv = invert_permutation(rho);
    let take = |v: &Vec<f64>| rho.iter().map(|&j| v[j]).collect::<Vec<_>>();
    state.log_eta = take(&state.log_eta);
    state.eta = take(&state.eta);
    state.mu = rho.iter().map(|&j| state.mu[j].clone()).collect();
    state.precision = rho.iter().map(|&j| state.precision[j].clone()).collect();
    state.counts = rho.iter().map(|&j| state.counts[j]).collect();
    for s in &mut state.alloc {
        *s = inv[*s];
    }
}

pub fn invert_permutation(rho: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; rho.len()];
    for (k, &j) in rho.iter().enumerate() {
        inv[j] = k;
    }
    inv
}

/// Draws a uniform permutation, applies it and returns it.
pub fn step_permute(state: &mut MixtureState, rng: &mut RngStream) -> Vec<usize> {
    let rho = random_permutation(state.k(), rng);
    apply_permutation(state, &rho);
    rho
}

/// What one sweep did besides updating the state.
#[derive(Clone, Debug)]
pub struct SweepInfo {
    /// Counts and allocations the parameter blocks were drawn from,
    /// expressed in the labels in force at the end of the sweep.
    pub counts: Vec<usize>,
    pub alloc: Option<Vec<usize>>,
    pub rho: Vec<usize>,
    pub e0_accepted: Option<bool>,
}

/// Reusable sweep driver holding scratch space.
pub struct Sweeper<'a> {
    data: &'a Dataset,
    hyper: &'a DataHyper,
    spec: &'a PriorSpec,
    work: ClassifyWork,
}

impl<'a> Sweeper<'a> {
    pub fn new(data: &'a Dataset, hyper: &'a DataHyper, spec: &'a PriorSpec) -> Self {
        Self { data, hyper, spec, work: ClassifyWork::default() }
    }

    /// One full sweep. When `keep_alloc` is set the pre-classification
    /// allocations are returned in [`SweepInfo::alloc`].
    pub fn sweep(&mut self, state: &mut MixtureState, rng: &mut RngStream, keep_alloc: bool) -> Result<SweepInfo> {
        step_weights(state, rng)?;
        step_covariances(state, self.data, self.hyper, rng)?;
        step_means(state, self.data, self.hyper, self.spec, rng)?;
        let counts = state.counts.clone();
        let alloc = keep_alloc.then(|| state.alloc.clone());
        classify_with(state, self.data, rng, &mut self.work)?;
        step_c0(state, self.hyper, rng)?;
        let e0_accepted = step_e0_mh(state, self.spec, rng)?;
        step_lambda(state, self.hyper, self.spec, rng)?;
        step_b0(state, self.hyper, self.spec, rng)?;
        let rho = step_permute(state, rng);
        let counts = rho.iter().map(|&j| counts[j]).collect();
        let alloc = alloc.map(|a| {
            let inv = invert_permutation(&rho);
            a.into_iter().map(|s| inv[s]).collect()
        });
        Ok(SweepInfo { counts, alloc, rho, e0_accepted })
    }
}

/// Runs a full chain from the k-means start and archives the draws after
/// burn-in.
///
/// Iteration `m` of the archive holds the weights, means and (optionally)
/// covariances drawn in that sweep together with the classification they
/// were drawn from, and the `λ`, `e₀` values at the end of the sweep.
pub fn run_chain(dataset: &Dataset, spec: &PriorSpec, config: &ChainConfig) -> Result<ChainArchive> {
    spec.validate()?;
    config.validate()?;
    let hyper = derive_hyper(dataset)?;
    let mut rng = RngStream::new(config.seed, 0);
    let mut state = init_state(dataset, &hyper, spec, &mut rng)?;
    let mut archive = ChainArchive::new(dataset.name(), dataset.n(), spec.clone(), hyper.clone(), config.clone())?;
    let mut sweeper = Sweeper::new(dataset, &hyper, spec);
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    for it in 0..config.burn_in + config.iterations {
        let keep = it >= config.burn_in;
        let info = sweeper
            .sweep(&mut state, &mut rng, keep && config.store_allocations)
            .map_err(|e| Error::AtIteration { iteration: it, source: Box::new(e) })?;
        if let Some(acc) = info.e0_accepted {
            proposed += 1;
            accepted += acc as usize;
        }
        if keep {
            archive.push(&state, &info);
        }
    }
    archive.e0_acceptance = (proposed > 0).then(|| accepted as f64 / proposed as f64);
    Ok(archive)
}
