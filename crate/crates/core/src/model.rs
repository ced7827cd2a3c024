//! Datasets, priors, data-dependent hyperparameters and the sampler state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, Rows};
use crate::error::{Error, Result};
use crate::randkit::{gamma_sample, wishart_sample, RngStream, SpdMatrix};
use crate::sampler;

/// Row-major `N × r` observations with optional ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    n: usize,
    dim: usize,
    values: Vec<f64>,
    labels: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, dim: usize, values: Vec<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("dataset needs at least one column".into()));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::InvalidDataset(format!(
                "{} values do not form a non-empty table with {dim} columns",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {}, column {}",
                pos / dim + 1,
                pos % dim + 1
            )));
        }
        let n = values.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: l.len() });
            }
        }
        Ok(Self { name: name.into(), n, dim, values, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Rows<'_> {
        Rows::new(&self.values, self.dim).expect("validated at construction")
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.values[i * self.dim + j]).collect()
    }

    /// Number of distinct true labels, if labels are present.
    pub fn n_groups(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut v = l.clone();
            v.sort_unstable();
            v.dedup();
            v.len()
        })
    }

    pub fn with_labels(mut self, labels: Option<Vec<i64>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, got: l.len() });
            }
        }
        self.labels = labels;
        Ok(self)
    }
}

/// Data-dependent hyperparameters shared by both mean priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataHyper {
    pub median: Vec<f64>,
    pub range: Vec<f64>,
    /// `Diag(R₁², …, R_r²)`.
    pub r0: SpdMatrix,
    pub c0: f64,
    pub g0: f64,
    /// `(100 g₀ / c₀) · Diag(1/R₁², …, 1/R_r²)`.
    pub big_g0: SpdMatrix,
}

impl DataHyper {
    pub fn dim(&self) -> usize {
        self.median.len()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn derive_hyper(dataset: &Dataset) -> Result<DataHyper> {
    let r = dataset.dim();
    let mut med = Vec::with_capacity(r);
    let mut range = Vec::with_capacity(r);
    for j in 0..r {
        let col = dataset.column(j);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi - lo > 0.0) {
            return Err(Error::ZeroRangeColumn(j));
        }
        range.push(hi - lo);
        med.push(median(col));
    }
    let c0 = 2.5 + (r as f64 - 1.0) / 2.0;
    let g0 = 0.5 + (r as f64 - 1.0) / 2.0;
    let r0 = SpdMatrix::from_diagonal(&range.iter().map(|x| x * x).collect::<Vec<_>>())?;
    let scale = 100.0 * g0 / c0;
    let big_g0 = SpdMatrix::from_diagonal(&range.iter().map(|x| scale / (x * x)).collect::<Vec<_>>())?;
    Ok(DataHyper { median: med, range, r0, c0, g0, big_g0 })
}

/// Prior on the component means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanPrior {
    /// `μ_k ~ N(b₀, R₀)` with `b₀` fixed at the data median.
    Standard,
    /// Hierarchical normal-gamma shrinkage: `λ_j ~ G(ν₁, ν₂)`,
    /// `B₀ = Diag(R_j² λ_j)`, improper flat prior on `b₀`.
    NormalGamma { nu1: f64, nu2: f64 },
}

impl MeanPrior {
    pub fn normal_gamma() -> Self {
        MeanPrior::NormalGamma { nu1: 0.5, nu2: 0.5 }
    }

    pub fn is_normal_gamma(&self) -> bool {
        matches!(self, MeanPrior::NormalGamma { .. })
    }
}

/// Treatment of the Dirichlet concentration `e₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum E0Policy {
    Fixed {
        value: f64,
    },
    /// `e₀ ~ G(a, a·K)`, updated by a random-walk Metropolis step.
    GammaHyper {
        a: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub k: usize,
    pub mean_prior: MeanPrior,
    pub e0_policy: E0Policy,
    /// Standard deviation of the log-scale random-walk proposal for `e₀`.
    pub mh_step: f64,
}

impl PriorSpec {
    pub fn new(k: usize, mean_prior: MeanPrior, e0_policy: E0Policy) -> Self {
        Self { k, mean_prior, e0_policy, mh_step: 0.5 }
    }

    /// Standard prior with `e₀ ~ G(10, 10K)`.
    pub fn standard(k: usize) -> Self {
        Self::new(k, MeanPrior::Standard, E0Policy::GammaHyper { a: 10.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if !(self.mh_step > 0.0 && self.mh_step.is_finite()) {
            return Err(Error::InvalidConfig(format!("mh_step must be positive, got {}", self.mh_step)));
        }
        match self.e0_policy {
            E0Policy::Fixed { value } if !(value > 0.0 && value.is_finite()) => {
                return Err(Error::InvalidConfig(format!("fixed e0 must be positive, got {value}")));
            }
            E0Policy::GammaHyper { a } if !(a > 0.0 && a.is_finite()) => {
                return Err(Error::InvalidConfig(format!("e0 hyperparameter a must be positive, got {a}")));
            }
            _ => {}
        }
        if let MeanPrior::NormalGamma { nu1, nu2 } = self.mean_prior {
            if !(nu1 > 0.0 && nu2 > 0.0 && nu1.is_finite() && nu2.is_finite()) {
                return Err(Error::InvalidConfig(format!("nu1 and nu2 must be positive, got {nu1}, {nu2}")));
            }
        }
        Ok(())
    }
}

/// Current values of all quantities updated by the Gibbs sweep.
///
/// Component covariances are held as precision matrices `Σ_k⁻¹`, which is
/// what the Wishart update draws and what the classification step needs.
/// Weights are kept on the log scale as well, since components that have
/// been empty for a while carry weights far below the smallest double.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    pub log_eta: Vec<f64>,
    pub eta: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub precision: Vec<SpdMatrix>,
    /// Zero-based component index per observation.
    pub alloc: Vec<usize>,
    pub counts: Vec<usize>,
    pub b0: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Rate matrix `C₀` of the Wishart prior on the precisions.
    pub c0: SpdMatrix,
    pub e0: f64,
}

impl MixtureState {
    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn dim(&self) -> usize {
        self.b0.len()
    }

    /// Covariance matrix `Σ_k`.
    pub fn sigma(&self, k: usize) -> DMatrix<f64> {
        self.precision[k].inverse()
    }

    pub fn n_nonempty(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn set_log_eta(&mut self, log_eta: Vec<f64>) {
        self.eta = log_eta.iter().map(|l| l.exp()).collect();
        self.log_eta = log_eta;
    }

    pub fn recount(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        for &a in &self.alloc {
            self.counts[a] += 1;
        }
    }

    /// Checks the support constraints of every block.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let r = self.dim();
        let fail = |m: String| Err(Error::InvalidParameters(m));
        if self.eta.len() != k || self.log_eta.len() != k || self.precision.len() != k || self.counts.len() != k {
            return fail("component blocks have inconsistent lengths".into());
        }
        let s: f64 = self.eta.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.eta.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return fail(format!("weights are not on the simplex (sum {s})"));
        }
        if self.mu.iter().any(|m| m.len() != r || m.iter().any(|v| !v.is_finite())) {
            return fail("component means are malformed".into());
        }
        for p in &self.precision {
            if p.dim() != r || p.lower().diagonal().iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return fail("precision matrix is not positive definite".into());
            }
        }
        if self.lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return fail("shrinkage scales must be positive".into());
        }
        if !(self.e0 > 0.0 && self.e0.is_finite()) {
            return fail(format!("e0 must be positive, got {}", self.e0));
        }
        let mut counts = vec![0usize; k];
        for &a in &self.alloc {
            if a >= k {
                return fail(format!("allocation {a} out of range"));
            }
            counts[a] += 1;
        }
        if counts != self.counts {
            return fail("counts disagree with allocations".into());
        }
        Ok(())
    }
}

/// Prior variance `B₀` of the component means: `R₀` under the standard
/// prior, `Diag(R_j² λ_j)` under the normal-gamma prior.
pub fn prior_b0_variance(hyper: &DataHyper, state: &MixtureState, spec: &PriorSpec) -> SpdMatrix {
    SpdMatrix::from_diagonal(&prior_b0_diagonal(hyper, &state.lambda, spec)).expect("positive scales")
}

pub(crate) fn prior_b0_diagonal(hyper: &DataHyper, lambda: &[f64], spec: &PriorSpec) -> Vec<f64> {
    match spec.mean_prior {
        MeanPrior::Standard => hyper.range.iter().map(|r| r * r).collect(),
        MeanPrior::NormalGamma { .. } => hyper.range.iter().zip(lambda).map(|(r, l)| r * r * l).collect(),
    }
}

/// Number of k-means restarts used for the starting classification.
pub const INIT_RESTARTS: usize = 10;

/// Starting state: k-means allocations, prior draws for `e₀` and `C₀`,
/// then one parameter sweep (weights, covariances, means) given the
/// k-means classification.
pub fn init_state(dataset: &Dataset, hyper: &DataHyper, spec: &PriorSpec, rng: &mut RngStream) -> Result<MixtureState> {
    spec.validate()?;
    let k = spec.k;
    let r = dataset.dim();
    if hyper.dim() != r {
        return Err(Error::DimensionMismatch { expected: r, got: hyper.dim() });
    }
    if k > dataset.n() {
        return Err(Error::InvalidConfig(format!("K = {k} exceeds the number of observations {}", dataset.n())));
    }
    let km = cluster::kmeans(dataset.rows(), k, INIT_RESTARTS, rng)?;
    let e0 = match spec.e0_policy {
        E0Policy::Fixed { value } => value,
        E0Policy::GammaHyper { a } => gamma_sample(a, a * k as f64, rng)?,
    };
    let c0 = wishart_sample(hyper.g0, &hyper.big_g0, rng)?;
    let mut state = MixtureState {
        log_eta: vec![-(k as f64).ln(); k],
        eta: vec![1.0 / k as f64; k],
        mu: km.centroids,
        precision: vec![SpdMatrix::identity(r); k],
        alloc: km.assignments,
        counts: vec![0; k],
        b0: hyper.median.clone(),
        lambda: vec![1.0; r],
        c0,
        e0,
    };
    state.recount();
    sampler::step_weights(&mut state, rng)?;
    sampler::step_covariances(&mut state, dataset, hyper, rng)?;
    sampler::step_means(&mut state, dataset, hyper, spec, rng)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyper_for_four_dimensions() {
        let vals: Vec<f64> = (0..40).map(|i| (i * 7 % 13) as f64).collect();
        let d = Dataset::new("t", 4, vals, None).unwrap();
        let h = derive_hyper(&d).unwrap();
        assert_eq!(h.c0, 4.0);
        assert_eq!(h.g0, 2.0);
    }

    #[test]
    fn hyper_for_one_dimension() {
        let d = Dataset::new("t", 1, vec![3.0, 0.0, 2.0, 1.0], None).unwrap();
        let h = derive_hyper(&d).unwrap();
        assert_eq!(h.median, vec![1.5]);
        assert_eq!(h.range, vec![3.0]);
        assert!((h.big_g0.matrix()[(0, 0)] - 20.0 / 9.0).abs() < 1e-12);
        assert!((h.r0.matrix()[(0, 0)] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_rejected() {
        let d = Dataset::new("t", 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0], None).unwrap();
        assert!(matches!(derive_hyper(&d), Err(Error::ZeroRangeColumn(1))));
    }

    #[test]
    fn dataset_rejects_bad_shapes() {
        assert!(Dataset::new("t", 2, vec![1.0, 2.0, 3.0], None).is_err());
        assert!(Dataset::new("t", 1, vec![1.0, f64::NAN], None).is_err());
        assert!(Dataset::new("t", 1, vec![1.0, 2.0], Some(vec![1])).is_err());
    }

    #[test]
    fn b0_variance_under_both_priors() {
        let d = Dataset::new("t", 2, vec![0.0, 0.0, 2.0, 3.0], None).unwrap();
        let h = derive_hyper(&d).unwrap();
        let mut rng = RngStream::new(3, 0);
        let ng = PriorSpec::new(1, MeanPrior::normal_gamma(), E0Policy::Fixed { value: 1.0 });
        let mut s = init_state(&d, &h, &ng, &mut rng).unwrap();
        let unit = prior_b0_variance(&h, &s, &ng).matrix();
        assert!((unit - h.r0.matrix()).amax() < 1e-12);
        s.lambda = vec![0.25, 1.0];
        let b = prior_b0_variance(&h, &s, &ng).matrix();
        assert!((b[(0, 0)] - 1.0).abs() < 1e-12 && (b[(1, 1)] - 9.0).abs() < 1e-12);
        let sta = PriorSpec::new(1, MeanPrior::Standard, E0Policy::Fixed { value: 1.0 });
        assert!((prior_b0_variance(&h, &s, &sta).matrix() - h.r0.matrix()).amax() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(PriorSpec::standard(0).validate().is_err());
        assert!(PriorSpec::new(2, MeanPrior::Standard, E0Policy::Fixed { value: 0.0 }).validate().is_err());
        assert!(PriorSpec::new(2, MeanPrior::NormalGamma { nu1: -1.0, nu2: 0.5 }, E0Policy::Fixed { value: 1.0 })
            .validate()
            .is_err());
        assert!(PriorSpec::standard(3).validate().is_ok());
    }
}
