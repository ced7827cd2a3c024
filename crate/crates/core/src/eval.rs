//! Scoring of identified draws: misclassification rate, mean squared error
//! of the component means, reference parameters, and λ summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_hyper, init_state, Dataset, E0Policy, PriorSpec};
use crate::postid::{quantile_sorted, IdentifiedDraws};
use crate::randkit::{cholesky, RngStream, SpdMatrix};
use crate::sampler::{self, ChainArchive, ChainConfig};
use crate::simdata::SimDesign;

/// Largest label count for which matchings are enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Compacts arbitrary labels to `0..k`, in order of sorted label value.
fn compact<T: Copy + Ord>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut values = labels.to_vec();
    values.sort_unstable();
    values.dedup();
    let idx = labels.iter().map(|l| values.binary_search(l).expect("present")).collect();
    (idx, values.len())
}

fn confusion(est: &[usize], ke: usize, truth: &[usize], kt: usize) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0usize; kt]; ke];
    for (&e, &t) in est.iter().zip(truth) {
        c[e][t] += 1;
    }
    c
}

/// Maximum total weight of an injective matching of rows into columns
/// (`rows ≤ cols`), by enumeration.
fn best_matching_exhaustive(w: &[Vec<f64>], maximize: bool) -> (f64, Vec<usize>) {
    fn go(
        w: &[Vec<f64>],
        row: usize,
        used: &mut [bool],
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
        sign: f64,
    ) {
        if row == w.len() {
            if sign * acc > sign * best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for col in 0..used.len() {
            if !used[col] {
                used[col] = true;
                cur.push(col);
                go(w, row + 1, used, cur, acc + w[row][col], best, sign);
                cur.pop();
                used[col] = false;
            }
        }
    }
    let cols = w.first().map_or(0, |r| r.len());
    let sign = if maximize { 1.0 } else { -1.0 };
    let mut best = (if maximize { f64::NEG_INFINITY } else { f64::INFINITY }, Vec::new());
    go(w, 0, &mut vec![false; cols], &mut Vec::new(), 0.0, &mut best, sign);
    best
}

/// Transposes so that the smaller label set indexes rows.
fn oriented(c: &[Vec<usize>]) -> (Vec<Vec<usize>>, bool) {
    let rows = c.len();
    let cols = c.first().map_or(0, |r| r.len());
    if rows <= cols {
        (c.to_vec(), false)
    } else {
        ((0..cols).map(|j| (0..rows).map(|i| c[i][j]).collect()).collect(), true)
    }
}

/// Misclassification rate with the label matching found by enumeration.
pub fn mcr_exhaustive<A: Copy + Ord, B: Copy + Ord>(est: &[A], truth: &[B]) -> f64 {
    let (e, ke) = compact(est);
    let (t, kt) = compact(truth);
    let (c, _) = oriented(&confusion(&e, ke, &t, kt));
    let w: Vec<Vec<f64>> = c.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let (agree, _) = best_matching_exhaustive(&w, true);
    1.0 - agree / est.len() as f64
}

/// Misclassification rate with the label matching found by the
/// Kuhn–Munkres assignment algorithm.
pub fn mcr_assignment<A: Copy + Ord, B: Copy + Ord>(est: &[A], truth: &[B]) -> f64 {
    let (e, ke) = compact(est);
    let (t, kt) = compact(truth);
    let (c, _) = oriented(&confusion(&e, ke, &t, kt));
    let weights = Matrix::from_rows(c.iter().map(|r| r.iter().map(|&v| v as i64).collect::<Vec<_>>()))
        .expect("rectangular confusion matrix");
    let (agree, _) = kuhn_munkres(&weights);
    1.0 - agree as f64 / est.len() as f64
}

/// Fraction of observations misclassified under the best one-to-one
/// matching of estimated to true labels. When the label counts differ the
/// matching is injective from the smaller set, and members of unmatched
/// clusters count as errors.
pub fn mcr<A: Copy + Ord, B: Copy + Ord>(est: &[A], truth: &[B]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: est.len() });
    }
    if est.is_empty() {
        return Ok(0.0);
    }
    let ke = compact(est).1;
    let kt = compact(truth).1;
    Ok(if ke <= EXHAUSTIVE_LIMIT && kt <= EXHAUSTIVE_LIMIT {
        mcr_exhaustive(est, truth)
    } else {
        mcr_assignment(est, truth)
    })
}

/// Component parameters to score identified draws against.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceParams {
    /// True label value of each reference component.
    pub labels: Vec<i64>,
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<SpdMatrix>,
}

impl ReferenceParams {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// The generating parameters of a simulation design; labels `1..=K`.
    pub fn from_design(design: &SimDesign) -> Self {
        Self { labels: (1..=design.means.len() as i64).collect(), mu: design.means.clone(), sigma: design.covs.clone() }
    }
}

/// Posterior means of the component means and covariances with the
/// allocations frozen at `truth`.
///
/// The sweep runs every block except classification and relabelling, under
/// the priors of `spec` but with one component per distinct true label.
pub fn bayes_reference(
    dataset: &Dataset,
    truth: &[i64],
    spec: &PriorSpec,
    config: &ChainConfig,
) -> Result<ReferenceParams> {
    if truth.len() != dataset.n() {
        return Err(Error::DimensionMismatch { expected: dataset.n(), got: truth.len() });
    }
    config.validate()?;
    let (alloc, k) = compact(truth);
    let mut labels: Vec<i64> = truth.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let spec = PriorSpec { k, ..spec.clone() };
    spec.validate()?;
    let hyper = derive_hyper(dataset)?;
    let mut rng = RngStream::new(config.seed, 3);
    let mut state = init_state(dataset, &hyper, &spec, &mut rng)?;
    state.alloc = alloc;
    state.recount();
    let r = dataset.dim();
    let mut mu_sum = vec![vec![0.0; r]; k];
    let mut sigma_sum = vec![DMatrix::<f64>::zeros(r, r); k];
    for it in 0..config.burn_in + config.iterations {
        sampler::step_weights(&mut state, &mut rng)?;
        sampler::step_covariances(&mut state, dataset, &hyper, &mut rng)?;
        sampler::step_means(&mut state, dataset, &hyper, &spec, &mut rng)?;
        sampler::step_c0(&mut state, &hyper, &mut rng)?;
        sampler::step_e0_mh(&mut state, &spec, &mut rng)?;
        sampler::step_lambda(&mut state, &hyper, &spec, &mut rng)?;
        sampler::step_b0(&mut state, &hyper, &spec, &mut rng)?;
        if it >= config.burn_in {
            for c in 0..k {
                for (s, v) in mu_sum[c].iter_mut().zip(&state.mu[c]) {
                    *s += v;
                }
                sigma_sum[c] += state.sigma(c);
            }
        }
    }
    let m = config.iterations as f64;
    let mu = mu_sum.into_iter().map(|v| v.into_iter().map(|x| x / m).collect()).collect();
    let sigma = sigma_sum.into_iter().map(|s| cholesky(&(s / m))).collect::<Result<Vec<_>>>()?;
    Ok(ReferenceParams { labels, mu, sigma })
}

/// Per observation, the identified label it was assigned to most often
/// (ties to the smallest label). Labels run `1..=K̂₀`.
pub fn modal_classification(id: &IdentifiedDraws) -> Result<Vec<usize>> {
    if id.is_empty() {
        return Err(Error::NoIdentifiedDraws);
    }
    if id.alloc.is_none() {
        return Err(Error::AllocationsNotStored);
    }
    let k = id.k0_hat;
    let mut freq = vec![0u32; id.n * k];
    for m in 0..id.len() {
        for (i, &l) in id.alloc_row(m).expect("checked").iter().enumerate() {
            freq[i * k + l as usize] += 1;
        }
    }
    Ok(freq
        .chunks_exact(k)
        .map(|f| f.iter().enumerate().fold((0, 0), |b, (l, &c)| if c > b.1 { (l, c) } else { b }).0 + 1)
        .collect())
}

/// Matrix of average squared Mahalanobis distances between identified
/// component `k` and reference component `l`.
fn mse_costs(id: &IdentifiedDraws, reference: &ReferenceParams) -> Vec<Vec<f64>> {
    let m = id.len() as f64;
    (0..id.k0_hat)
        .map(|k| {
            reference
                .mu
                .iter()
                .zip(&reference.sigma)
                .map(|(mu_ref, s_ref)| {
                    let mut d = vec![0.0; id.dim];
                    (0..id.len())
                        .map(|it| {
                            for (dj, (a, b)) in d.iter_mut().zip(id.mu_of(it, k).iter().zip(mu_ref)) {
                                *dj = a - b;
                            }
                            s_ref.quad_inv(&d)
                        })
                        .sum::<f64>()
                        / m
                })
                .collect()
        })
        .collect()
}

/// Mean squared error of identified component means against reference
/// parameters, in the Mahalanobis metric of each reference covariance.
///
/// With `matching = None` the matching minimizing the total is used.
/// Returns the error and the matching (`matching[k]` is the reference
/// index of identified component `k`).
pub fn mse_mu(
    id: &IdentifiedDraws,
    reference: &ReferenceParams,
    matching: Option<&[usize]>,
) -> Result<(f64, Vec<usize>)> {
    if id.is_empty() {
        return Err(Error::NoIdentifiedDraws);
    }
    if id.k0_hat != reference.len() {
        return Err(Error::MatchingCardinalityMismatch { left: id.k0_hat, right: reference.len() });
    }
    let cost = mse_costs(id, reference);
    if let Some(mt) = matching {
        let mut seen = vec![false; reference.len()];
        if mt.len() != id.k0_hat || mt.iter().any(|&l| l >= seen.len() || std::mem::replace(&mut seen[l], true)) {
            return Err(Error::MatchingCardinalityMismatch { left: mt.len(), right: reference.len() });
        }
        return Ok((mt.iter().enumerate().map(|(k, &l)| cost[k][l]).sum(), mt.to_vec()));
    }
    if id.k0_hat <= EXHAUSTIVE_LIMIT {
        let (total, best) = best_matching_exhaustive(&cost, false);
        return Ok((total, best));
    }
    // the assignment solver maximizes integer weights
    let scale = 1e9 / cost.iter().flatten().cloned().fold(1e-300, f64::max);
    let weights =
        Matrix::from_rows(cost.iter().map(|r| r.iter().map(|&c| -(c * scale).round() as i64).collect::<Vec<_>>()))
            .expect("square cost matrix");
    let (_, best) = kuhn_munkres(&weights);
    Ok((best.iter().enumerate().map(|(k, &l)| cost[k][l]).sum(), best))
}

/// Quantile levels of the λ table.
pub const LAMBDA_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Per-dimension quantiles of the λ draws (`lambda` is `[M, r]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaTable {
    pub quantiles: Vec<[f64; 5]>,
}

impl LambdaTable {
    pub fn median(&self, j: usize) -> f64 {
        self.quantiles[j][2]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dimension,q2.5,q25,q50,q75,q97.5\n");
        for (j, q) in self.quantiles.iter().enumerate() {
            let _ = writeln!(out, "{},{:?},{:?},{:?},{:?},{:?}", j + 1, q[0], q[1], q[2], q[3], q[4]);
        }
        out
    }
}

fn lambda_table(lambda: &[f64], dim: usize, spec: &PriorSpec) -> Result<LambdaTable> {
    if !spec.mean_prior.is_normal_gamma() {
        return Err(Error::NotNormalGammaRun);
    }
    if lambda.is_empty() {
        return Err(Error::NoIdentifiedDraws);
    }
    let m = lambda.len() / dim;
    let quantiles = (0..dim)
        .map(|j| {
            let mut col: Vec<f64> = (0..m).map(|i| lambda[i * dim + j]).collect();
            col.sort_by(f64::total_cmp);
            LAMBDA_LEVELS.map(|q| quantile_sorted(&col, q))
        })
        .collect();
    Ok(LambdaTable { quantiles })
}

/// λ quantiles over all stored iterations of a chain.
pub fn lambda_summary_archive(archive: &ChainArchive) -> Result<LambdaTable> {
    lambda_table(&archive.lambda, archive.dim, &archive.spec)
}

/// λ quantiles over the identified iterations.
pub fn lambda_summary(id: &IdentifiedDraws) -> Result<LambdaTable> {
    lambda_table(&id.lambda, id.dim, &id.spec)
}

/// `e₀` as reported: the fixed value, or the median of the draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum E0Summary {
    Fixed(f64),
    Median(f64),
}

/// Table columns for one fitted dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub k0_hat: usize,
    pub m0: usize,
    pub m0_rho: f64,
    pub identified: usize,
    pub mcr: Option<f64>,
    pub mse_mu: Option<f64>,
    pub e0: E0Summary,
    pub e0_acceptance: Option<f64>,
    pub lambda: Option<LambdaTable>,
}

impl EvalReport {
    /// Flat `key=value` lines; absent values are written as `NA`.
    pub fn to_kv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:?}"));
        let (e0_kind, e0) = match self.e0 {
            E0Summary::Fixed(v) => ("fixed", v),
            E0Summary::Median(v) => ("median", v),
        };
        let mut out = String::new();
        let _ = writeln!(out, "dataset={}", self.dataset);
        let _ = writeln!(out, "k0_hat={}", self.k0_hat);
        let _ = writeln!(out, "m0={}", self.m0);
        let _ = writeln!(out, "m0_rho={:?}", self.m0_rho);
        let _ = writeln!(out, "identified={}", self.identified);
        let _ = writeln!(out, "mcr={}", opt(self.mcr));
        let _ = writeln!(out, "mse_mu={}", opt(self.mse_mu));
        let _ = writeln!(out, "e0.{e0_kind}={e0:?}");
        let _ = writeln!(out, "e0.acceptance={}", opt(self.e0_acceptance));
        out
    }

    /// Writes `report.txt` and, for normal-gamma runs, `lambda_quantiles.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), self.to_kv())?;
        if let Some(l) = &self.lambda {
            fs::write(dir.join("lambda_quantiles.csv"), l.to_csv())?;
        }
        Ok(())
    }
}

/// Assembles the report. MCR needs `truth` and stored allocations; MSE_μ
/// needs `reference` and is reported only when `K̂₀` equals the number of
/// reference components.
pub fn evaluate(
    id: &IdentifiedDraws,
    truth: Option<&[i64]>,
    reference: Option<&ReferenceParams>,
) -> Result<EvalReport> {
    let mcr_value = match truth {
        Some(t) if !id.is_empty() => Some(mcr(&modal_classification(id)?, t)?),
        _ => None,
    };
    let mse = match reference {
        Some(r) if !id.is_empty() && r.len() == id.k0_hat => Some(mse_mu(id, r, None)?.0),
        _ => None,
    };
    let e0 = match id.spec.e0_policy {
        E0Policy::Fixed { value } => E0Summary::Fixed(value),
        E0Policy::GammaHyper { .. } => {
            let mut v = id.e0.clone();
            v.sort_by(f64::total_cmp);
            E0Summary::Median(if v.is_empty() { f64::NAN } else { quantile_sorted(&v, 0.5) })
        }
    };
    let lambda = if id.spec.mean_prior.is_normal_gamma() && !id.is_empty() { Some(lambda_summary(id)?) } else { None };
    Ok(EvalReport {
        dataset: id.dataset.clone(),
        k0_hat: id.k0_hat,
        m0: id.m0,
        m0_rho: id.m0_rho,
        identified: id.len(),
        mcr: mcr_value,
        mse_mu: mse,
        e0,
        e0_acceptance: id.e0_acceptance,
        lambda,
    })
}
