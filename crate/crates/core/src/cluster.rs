//! K-centroids clustering of row-major point sets.
//!
//! Two flavours share one alternating engine: squared-Euclidean Lloyd
//! k-means (dispersions fixed to the identity) and K-centroids under a
//! cluster-specific Mahalanobis distance, where each cluster carries the
//! within-cluster covariance of its members.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randkit::{cholesky, RngStream, SpdMatrix};

pub const MAX_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    /// Squared Euclidean assignment, identity dispersions.
    Euclidean,
    /// Mahalanobis distance with per-cluster covariance dispersions.
    Mahalanobis,
}

/// Result of a K-centroids run.
///
/// `objective` is the sum of squared Euclidean distances for
/// [`Distance::Euclidean`] (the Lloyd objective, non-increasing along
/// `trace`), and the sum of unsquared Mahalanobis distances to the assigned
/// centroid for [`Distance::Mahalanobis`]. The latter is evaluated after
/// every assignment step but is not guaranteed to decrease: the
/// mean/covariance update does not minimize it.
#[derive(Clone, Debug)]
pub struct CentroidSet {
    pub centroids: Vec<Vec<f64>>,
    pub dispersions: Vec<SpdMatrix>,
    pub assignments: Vec<usize>,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub distance: Distance,
}

impl CentroidSet {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

/// A borrowed row-major `n × dim` matrix.
#[derive(Clone, Copy, Debug)]
pub struct Rows<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidParameters(format!("{} values do not form rows of width {dim}", data.len())));
        }
        Ok(Self { data, dim })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[inline]
fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: returns `k` row indices.
pub fn kmeanspp_seeds(rows: Rows<'_>, k: usize, rng: &mut RngStream) -> Vec<usize> {
    let n = rows.len();
    let mut seeds = Vec::with_capacity(k);
    seeds.push((rng.uniform() * n as f64) as usize % n);
    let mut d2: Vec<f64> = (0..n).map(|i| sq_euclid(rows.row(i), rows.row(seeds[0]))).collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // all remaining mass is on already chosen points
            (rng.uniform() * n as f64) as usize % n
        };
        seeds.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_euclid(rows.row(i), rows.row(next)));
        }
    }
    seeds
}

fn nearest_euclid(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_euclid(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn means(rows: Rows<'_>, assign: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = rows.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(rows.row(i)) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

/// One Lloyd run from the given seeds.
fn lloyd_from(rows: Rows<'_>, mut centroids: Vec<Vec<f64>>) -> CentroidSet {
    let n = rows.len();
    let k = centroids.len();
    let mut assign = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut obj = 0.0;
        for (i, a) in assign.iter_mut().enumerate() {
            let (best, d) = nearest_euclid(rows.row(i), &centroids);
            obj += d;
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        trace.push(obj);
        if !changed {
            break;
        }
        let (m, counts) = means(rows, &assign, k);
        for (j, c) in counts.iter().enumerate() {
            // an emptied cluster keeps its previous centroid
            if *c > 0 {
                centroids[j] = m[j].clone();
            }
        }
    }
    let objective = *trace.last().unwrap_or(&0.0);
    CentroidSet {
        dispersions: vec![SpdMatrix::identity(rows.dim()); k],
        centroids,
        assignments: assign,
        objective,
        trace,
        distance: Distance::Euclidean,
    }
}

/// Squared-Euclidean Lloyd k-means with k-means++ seeding; the best of
/// `restarts` runs by objective is returned.
pub fn kmeans(rows: Rows<'_>, k: usize, restarts: usize, rng: &mut RngStream) -> Result<CentroidSet> {
    check_k(rows, k)?;
    let mut best: Option<CentroidSet> = None;
    for _ in 0..restarts.max(1) {
        let seeds = kmeanspp_seeds(rows, k, rng);
        let init = seeds.iter().map(|&i| rows.row(i).to_vec()).collect();
        let run = lloyd_from(rows, init);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn check_k(rows: Rows<'_>, k: usize) -> Result<()> {
    if k == 0 || k > rows.len() {
        return Err(Error::InvalidParameters(format!("cannot form {k} clusters from {} rows", rows.len())));
    }
    Ok(())
}

/// Covariance (denominator n−1) of the rows assigned to each cluster, with a
/// ridge of `1e-8·trace/dim` added before factorization.
fn dispersions(rows: Rows<'_>, assign: &[usize], centroids: &[Vec<f64>]) -> Result<Vec<SpdMatrix>> {
    let dim = rows.dim();
    let k = centroids.len();
    let mut scatter = vec![DMatrix::<f64>::zeros(dim, dim); k];
    let mut counts = vec![0usize; k];
    let mut d = vec![0.0; dim];
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        for (dj, (x, c)) in d.iter_mut().zip(rows.row(i).iter().zip(&centroids[a])) {
            *dj = x - c;
        }
        let s = &mut scatter[a];
        for p in 0..dim {
            for q in 0..=p {
                s[(p, q)] += d[p] * d[q];
            }
        }
    }
    scatter
        .into_iter()
        .zip(counts)
        .map(|(mut s, c)| {
            for p in 0..dim {
                for q in 0..p {
                    s[(q, p)] = s[(p, q)];
                }
            }
            let mut cov = s / (c.max(2) - 1) as f64;
            let ridge = 1e-8 * cov.trace() / dim as f64;
            let ridge = if ridge > 0.0 { ridge } else { 1e-12 };
            for p in 0..dim {
                cov[(p, p)] += ridge;
            }
            cholesky(&cov)
        })
        .collect()
}

fn assign_mahalanobis(
    rows: Rows<'_>,
    centroids: &[Vec<f64>],
    disp: &[SpdMatrix],
    assign: &mut [usize],
    dist: &mut [f64],
) -> f64 {
    let dim = rows.dim();
    let mut diff = vec![0.0; dim];
    let mut total = 0.0;
    for i in 0..rows.len() {
        let x = rows.row(i);
        let mut best = (0, f64::INFINITY);
        for (k, (c, s)) in centroids.iter().zip(disp).enumerate() {
            for (dj, (a, b)) in diff.iter_mut().zip(x.iter().zip(c)) {
                *dj = a - b;
            }
            let d = s.quad_inv(&diff).sqrt();
            if d < best.1 {
                best = (k, d);
            }
        }
        assign[i] = best.0;
        dist[i] = best.1;
        total += best.1;
    }
    total
}

/// Moves the points farthest from their centroids into clusters that have
/// fewer than `needed` members. Returns false if no repair was required.
fn repair_small_clusters(assign: &mut [usize], dist: &[f64], k: usize, needed: usize) -> bool {
    let mut sizes = vec![0usize; k];
    for &a in assign.iter() {
        sizes[a] += 1;
    }
    if sizes.iter().all(|&s| s >= needed) {
        return false;
    }
    let mut order: Vec<usize> = (0..assign.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
    let mut cursor = order.into_iter();
    for target in 0..k {
        while sizes[target] < needed {
            let Some(i) = cursor.next() else { return true };
            let from = assign[i];
            if from == target || sizes[from] <= needed {
                continue;
            }
            sizes[from] -= 1;
            sizes[target] += 1;
            assign[i] = target;
        }
    }
    true
}

fn mahalanobis_from(rows: Rows<'_>, init_assign: Vec<usize>, k: usize) -> Result<CentroidSet> {
    let n = rows.len();
    let needed = rows.dim() + 1;
    let mut assign = init_assign;
    let mut dist = vec![0.0; n];

    let check = |assign: &[usize]| -> Result<()> {
        let mut sizes = vec![0usize; k];
        for &a in assign {
            sizes[a] += 1;
        }
        match sizes.iter().enumerate().find(|(_, &s)| s < needed) {
            Some((cluster, &size)) => Err(Error::DegenerateCluster { cluster, size, needed }),
            None => Ok(()),
        }
    };

    if check(&assign).is_err() {
        repair_small_clusters(&mut assign, &vec![0.0; n], k, needed);
        check(&assign)?;
    }
    let (mut centroids, _) = means(rows, &assign, k);
    let mut disp = dispersions(rows, &assign, &centroids)?;
    let mut objective = assign_mahalanobis(rows, &centroids, &disp, &mut assign, &mut dist);
    let mut trace = vec![objective];

    for _ in 0..MAX_ITERATIONS {
        let mut next = assign.clone();
        if check(&next).is_err() {
            repair_small_clusters(&mut next, &dist, k, needed);
            check(&next)?;
        }
        let (c2, _) = means(rows, &next, k);
        let d2 = dispersions(rows, &next, &c2)?;
        let mut a2 = vec![0; n];
        let mut dist2 = vec![0.0; n];
        let obj2 = assign_mahalanobis(rows, &c2, &d2, &mut a2, &mut dist2);
        let changed = a2 != assign;
        centroids = c2;
        disp = d2;
        assign = a2;
        dist = dist2;
        objective = obj2;
        trace.push(objective);
        if !changed {
            break;
        }
    }
    check(&assign)?;
    Ok(CentroidSet {
        centroids,
        dispersions: disp,
        assignments: assign,
        objective,
        trace,
        distance: Distance::Mahalanobis,
    })
}

/// K-centroids under the chosen distance, best of `restarts` runs.
///
/// Each Mahalanobis restart starts from a squared-Euclidean Lloyd solution
/// seeded by k-means++, whose within-cluster covariances give the initial
/// dispersions, then alternates nearest-centroid assignment with
/// mean/covariance updates until the assignment no longer changes or
/// [`MAX_ITERATIONS`] is reached.
pub fn kcentroids(
    rows: Rows<'_>,
    k: usize,
    distance: Distance,
    restarts: usize,
    rng: &mut RngStream,
) -> Result<CentroidSet> {
    check_k(rows, k)?;
    match distance {
        Distance::Euclidean => kmeans(rows, k, restarts, rng),
        Distance::Mahalanobis => {
            if rows.len() < k * (rows.dim() + 1) {
                return Err(Error::InvalidParameters(format!(
                    "{} rows cannot support {k} clusters with covariance in dimension {}",
                    rows.len(),
                    rows.dim()
                )));
            }
            let mut best: Option<CentroidSet> = None;
            let mut last_err = None;
            for _ in 0..restarts.max(1) {
                let seeds = kmeanspp_seeds(rows, k, rng);
                let init = seeds.iter().map(|&i| rows.row(i).to_vec()).collect();
                let start = lloyd_from(rows, init);
                match mahalanobis_from(rows, start.assignments, k) {
                    Ok(run) => {
                        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
                            best = Some(run);
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            best.ok_or_else(|| last_err.expect("a failed restart recorded its error"))
        }
    }
}

/// Sum of squared Euclidean distances of rows to their assigned centroids.
pub fn lloyd_objective(rows: Rows<'_>, assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    (0..rows.len()).map(|i| sq_euclid(rows.row(i), &centroids[assign[i]])).sum()
}

/// Sum of Mahalanobis distances of rows to their assigned centroids.
pub fn mahalanobis_objective(rows: Rows<'_>, assign: &[usize], centroids: &[Vec<f64>], disp: &[SpdMatrix]) -> f64 {
    let mut diff = vec![0.0; rows.dim()];
    (0..rows.len())
        .map(|i| {
            let a = assign[i];
            for (d, (x, c)) in diff.iter_mut().zip(rows.row(i).iter().zip(&centroids[a])) {
                *d = x - c;
            }
            disp[a].quad_inv(&diff).sqrt()
        })
        .sum()
}
