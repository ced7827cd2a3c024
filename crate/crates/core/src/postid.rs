//! Post-processing of a chain: estimate the number of clusters, cluster the
//! component-mean draws, and relabel every iteration whose clustering
//! yields a permutation.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{self, CentroidSet, Distance, Rows};
use crate::error::{Error, Result};
use crate::model::{DataHyper, PriorSpec};
use crate::randkit::RngStream;
use crate::sampler::archive::{read_f64, read_u16, table, write_f64, write_u16, TableMeta};
use crate::sampler::ChainArchive;

/// Number of K-centroids restarts.
pub const RESTARTS: usize = 5;

/// Posterior of the number of non-empty components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPosterior {
    /// `counts[h]` is the number of iterations with exactly `h` non-empty
    /// components, `h = 0..=K`.
    pub counts: Vec<usize>,
    pub k0_hat: usize,
    /// Iterations with exactly `k0_hat` non-empty components.
    pub m0: usize,
}

impl KPosterior {
    pub fn from_sequence(k0: &[u32], k: usize) -> Result<Self> {
        if k0.is_empty() {
            return Err(Error::NoRetainedIterations);
        }
        let mut counts = vec![0usize; k + 1];
        for &h in k0 {
            counts[h as usize] += 1;
        }
        // first maximum wins, i.e. the smallest h on ties
        let (k0_hat, m0) =
            counts.iter().enumerate().fold((0, 0), |best, (h, &c)| if c > best.1 { (h, c) } else { best });
        Ok(Self { counts, k0_hat, m0 })
    }

    /// Posterior probability of `h` non-empty components.
    pub fn probability(&self, h: usize) -> f64 {
        let total: usize = self.counts.iter().sum();
        self.counts.get(h).copied().unwrap_or(0) as f64 / total as f64
    }
}

pub fn count_nonempty<T: Copy + Into<u64>>(counts: &[T]) -> usize {
    counts.iter().filter(|&&c| c.into() > 0).count()
}

pub fn estimate_k0(archive: &ChainArchive) -> Result<KPosterior> {
    KPosterior::from_sequence(&archive.k0, archive.k)
}

/// Means of non-empty components from the iterations with exactly `K̂₀`
/// non-empty components, one row per component.
#[derive(Clone, Debug, PartialEq)]
pub struct PointProcess {
    pub dim: usize,
    pub k0_hat: usize,
    pub values: Vec<f64>,
    /// `(iteration, original component)` of each row.
    pub provenance: Vec<(usize, usize)>,
}

impl PointProcess {
    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn rows(&self) -> Rows<'_> {
        Rows::new(&self.values, self.dim).expect("consistent by construction")
    }

    /// Number of retained iterations.
    pub fn iterations(&self) -> usize {
        self.len() / self.k0_hat.max(1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,component");
        for j in 1..=self.dim {
            out.push_str(&format!(",mu{j}"));
        }
        out.push('\n');
        for (i, &(m, k)) in self.provenance.iter().enumerate() {
            out.push_str(&format!("{m},{}", k + 1));
            for v in self.rows().row(i) {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn assemble_point_process(archive: &ChainArchive, kpost: &KPosterior) -> Result<PointProcess> {
    if kpost.m0 == 0 || kpost.k0_hat == 0 {
        return Err(Error::NoRetainedIterations);
    }
    let mut values = Vec::with_capacity(kpost.m0 * kpost.k0_hat * archive.dim);
    let mut provenance = Vec::with_capacity(kpost.m0 * kpost.k0_hat);
    for m in 0..archive.len() {
        if archive.k0[m] as usize != kpost.k0_hat {
            continue;
        }
        for (k, &c) in archive.counts_row(m).iter().enumerate() {
            if c > 0 {
                values.extend_from_slice(archive.mu_of(m, k));
                provenance.push((m, k));
            }
        }
    }
    Ok(PointProcess { dim: archive.dim, k0_hat: kpost.k0_hat, values, provenance })
}

pub fn kcentroids_mahalanobis(points: &PointProcess, k: usize, rng: &mut RngStream) -> Result<CentroidSet> {
    cluster::kcentroids(points.rows(), k, Distance::Mahalanobis, RESTARTS, rng)
}

pub fn kcentroids_euclidean(points: &PointProcess, k: usize, rng: &mut RngStream) -> Result<CentroidSet> {
    cluster::kcentroids(points.rows(), k, Distance::Euclidean, RESTARTS, rng)
}

/// Relabelled draws of the identified iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiedDraws {
    pub dataset: String,
    pub n: usize,
    pub dim: usize,
    pub k0_hat: usize,
    pub m0: usize,
    /// Fraction of the `m0` iterations that were dropped.
    pub m0_rho: f64,
    pub spec: PriorSpec,
    pub hyper: DataHyper,
    pub e0_acceptance: Option<f64>,
    /// Archive index of each identified iteration.
    pub iterations: Vec<usize>,
    /// Per candidate iteration `(archive index, ρ)`, where `ρ[j]` is the
    /// label given to the `j`-th non-empty component, or `None` when the
    /// labels were not a permutation.
    pub permutations: Vec<(usize, Option<Vec<usize>>)>,
    /// `[M̃, K̂₀]`
    pub eta: Vec<f64>,
    /// `[M̃, K̂₀, r]`
    pub mu: Vec<f64>,
    /// `[M̃, K̂₀, r, r]`
    pub sigma: Option<Vec<f64>>,
    /// `[M̃, N]` zero-based identified labels.
    pub alloc: Option<Vec<u16>>,
    /// `[M̃, r]`
    pub lambda: Vec<f64>,
    /// `[M̃]`
    pub e0: Vec<f64>,
}

impl IdentifiedDraws {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn mu_of(&self, m: usize, k: usize) -> &[f64] {
        let start = (m * self.k0_hat + k) * self.dim;
        &self.mu[start..start + self.dim]
    }

    pub fn eta_row(&self, m: usize) -> &[f64] {
        &self.eta[m * self.k0_hat..(m + 1) * self.k0_hat]
    }

    pub fn sigma_of(&self, m: usize, k: usize) -> Option<&[f64]> {
        let r2 = self.dim * self.dim;
        let start = (m * self.k0_hat + k) * r2;
        self.sigma.as_ref().map(|s| &s[start..start + r2])
    }

    pub fn alloc_row(&self, m: usize) -> Option<&[u16]> {
        self.alloc.as_ref().map(|a| &a[m * self.n..(m + 1) * self.n])
    }
}

/// Builds `ρ^(m)` for every retained iteration and keeps those that are
/// permutations of the cluster labels.
pub fn relabel(archive: &ChainArchive, points: &PointProcess, centroids: &CentroidSet) -> IdentifiedDraws {
    let k0 = points.k0_hat;
    let (r, n) = (archive.dim, archive.n);
    let mut out = IdentifiedDraws {
        dataset: archive.dataset.clone(),
        n,
        dim: r,
        k0_hat: k0,
        m0: points.iterations(),
        m0_rho: 0.0,
        spec: archive.spec.clone(),
        hyper: archive.hyper.clone(),
        e0_acceptance: archive.e0_acceptance,
        iterations: Vec::new(),
        permutations: Vec::new(),
        eta: Vec::new(),
        mu: Vec::new(),
        sigma: archive.sigma.as_ref().map(|_| Vec::new()),
        alloc: archive.alloc.as_ref().map(|_| Vec::new()),
        lambda: Vec::new(),
        e0: Vec::new(),
    };
    let mut dropped = 0usize;
    for block in 0..points.iterations() {
        let rows = block * k0..(block + 1) * k0;
        let m = points.provenance[rows.start].0;
        let rho: Vec<usize> = rows.clone().map(|i| centroids.assignments[i]).collect();
        let mut seen = vec![false; k0];
        let is_perm = rho.iter().all(|&l| !std::mem::replace(&mut seen[l], true));
        if !is_perm {
            dropped += 1;
            out.permutations.push((m, None));
            continue;
        }
        let comps: Vec<usize> = rows.map(|i| points.provenance[i].1).collect();
        // label of each original component; non-empty ones only
        let mut label_of = vec![usize::MAX; archive.k];
        let mut order = vec![0usize; k0];
        for (j, (&k, &l)) in comps.iter().zip(&rho).enumerate() {
            label_of[k] = l;
            order[l] = j;
        }
        for &j in &order {
            let k = comps[j];
            out.eta.push(archive.eta_row(m)[k]);
            out.mu.extend_from_slice(archive.mu_of(m, k));
            if let (Some(dst), Some(src)) = (out.sigma.as_mut(), archive.sigma_of(m, k)) {
                dst.extend_from_slice(src);
            }
        }
        if let (Some(dst), Some(src)) = (out.alloc.as_mut(), archive.alloc_row(m)) {
            dst.extend(src.iter().map(|&s| label_of[s as usize] as u16));
        }
        out.lambda.extend_from_slice(archive.lambda_row(m));
        out.e0.push(archive.e0[m]);
        out.iterations.push(m);
        out.permutations.push((m, Some(rho)));
    }
    out.m0_rho = if out.m0 > 0 { dropped as f64 / out.m0 as f64 } else { 0.0 };
    out
}

/// Everything produced by the identification pipeline.
#[derive(Clone, Debug)]
pub struct Identification {
    pub kpost: KPosterior,
    pub points: PointProcess,
    pub centroids: CentroidSet,
    pub draws: IdentifiedDraws,
}

/// Runs the whole post-processing: `K̂₀`, point process, clustering into
/// `K̂₀` groups under `distance`, relabelling.
pub fn identify(archive: &ChainArchive, distance: Distance, seed: u64) -> Result<Identification> {
    let kpost = estimate_k0(archive)?;
    let points = assemble_point_process(archive, &kpost)?;
    let mut rng = RngStream::new(seed, 2);
    let centroids = match distance {
        Distance::Mahalanobis => kcentroids_mahalanobis(&points, kpost.k0_hat, &mut rng)?,
        Distance::Euclidean => kcentroids_euclidean(&points, kpost.k0_hat, &mut rng)?,
    };
    let draws = relabel(archive, &points, &centroids);
    Ok(Identification { kpost, points, centroids, draws })
}

/// Posterior mean and 2.5 / 50 / 97.5 % quantiles of one scalar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Summary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        q025: quantile_sorted(&v, 0.025),
        q50: quantile_sorted(&v, 0.5),
        q975: quantile_sorted(&v, 0.975),
    }
}

/// Component-wise posterior summaries of identified draws.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSummaries {
    /// `eta[k]`
    pub eta: Vec<Summary>,
    /// `mu[k][j]`
    pub mu: Vec<Vec<Summary>>,
    /// `sigma[k][p * r + q]`, when covariances were stored.
    pub sigma: Option<Vec<Vec<Summary>>>,
}

impl ComponentSummaries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,parameter,mean,q2.5,q50,q97.5\n");
        let mut line = |k: usize, name: String, s: &Summary| {
            out.push_str(&format!("{},{name},{:?},{:?},{:?},{:?}\n", k + 1, s.mean, s.q025, s.q50, s.q975));
        };
        for (k, s) in self.eta.iter().enumerate() {
            line(k, "eta".into(), s);
        }
        for (k, row) in self.mu.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                line(k, format!("mu{}", j + 1), s);
            }
        }
        if let Some(sig) = &self.sigma {
            let r = self.mu.first().map_or(0, |m| m.len());
            for (k, row) in sig.iter().enumerate() {
                for (e, s) in row.iter().enumerate() {
                    line(k, format!("sigma{}{}", e / r + 1, e % r + 1), s);
                }
            }
        }
        out
    }
}

pub fn identified_summaries(id: &IdentifiedDraws) -> Result<ComponentSummaries> {
    if id.is_empty() {
        return Err(Error::NoIdentifiedDraws);
    }
    let m = id.len();
    let (k0, r) = (id.k0_hat, id.dim);
    let eta = (0..k0).map(|k| summarize(&(0..m).map(|i| id.eta_row(i)[k]).collect::<Vec<_>>())).collect();
    let mu = (0..k0)
        .map(|k| (0..r).map(|j| summarize(&(0..m).map(|i| id.mu_of(i, k)[j]).collect::<Vec<_>>())).collect())
        .collect();
    let sigma = id.sigma.as_ref().map(|_| {
        (0..k0)
            .map(|k| {
                (0..r * r)
                    .map(|e| summarize(&(0..m).map(|i| id.sigma_of(i, k).expect("stored")[e]).collect::<Vec<_>>()))
                    .collect()
            })
            .collect()
    });
    Ok(ComponentSummaries { eta, mu, sigma })
}

const FORMAT: &str = "sparsemix-identified";
pub const IDENTIFIED_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    version: u32,
    dataset: String,
    n: usize,
    dim: usize,
    k0_hat: usize,
    m0: usize,
    m0_rho: f64,
    identified: usize,
    spec: PriorSpec,
    hyper: DataHyper,
    e0_acceptance: Option<f64>,
    tables: Vec<TableMeta>,
}

impl IdentifiedDraws {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (m, k, r, n) = (self.len(), self.k0_hat, self.dim, self.n);
        let mut tables = vec![
            table("eta", "f64", vec![m, k]),
            table("mu", "f64", vec![m, k, r]),
            table("lambda", "f64", vec![m, r]),
            table("e0", "f64", vec![m]),
        ];
        write_f64(&dir.join("eta.f64"), &self.eta)?;
        write_f64(&dir.join("mu.f64"), &self.mu)?;
        write_f64(&dir.join("lambda.f64"), &self.lambda)?;
        write_f64(&dir.join("e0.f64"), &self.e0)?;
        if let Some(s) = &self.sigma {
            tables.push(table("sigma", "f64", vec![m, k, r, r]));
            write_f64(&dir.join("sigma.f64"), s)?;
        }
        if let Some(a) = &self.alloc {
            tables.push(table("alloc", "u16", vec![m, n]));
            write_u16(&dir.join("alloc.u16"), a)?;
        }
        let mut log = fs::File::create(dir.join("permutations.csv"))?;
        writeln!(log, "iteration,rho")?;
        for (it, rho) in &self.permutations {
            match rho {
                Some(p) => {
                    let s: Vec<String> = p.iter().map(|l| (l + 1).to_string()).collect();
                    writeln!(log, "{it},{}", s.join(" "))?
                }
                None => writeln!(log, "{it},dropped")?,
            }
        }
        let meta = Meta {
            format: FORMAT.into(),
            version: IDENTIFIED_VERSION,
            dataset: self.dataset.clone(),
            n,
            dim: r,
            k0_hat: k,
            m0: self.m0,
            m0_rho: self.m0_rho,
            identified: m,
            spec: self.spec.clone(),
            hyper: self.hyper.clone(),
            e0_acceptance: self.e0_acceptance,
            tables,
        };
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta: Meta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
        if meta.format != FORMAT || meta.version != IDENTIFIED_VERSION {
            return Err(Error::Format {
                path: meta_path,
                message: format!(
                    "expected {FORMAT} version {IDENTIFIED_VERSION}, found {} version {}",
                    meta.format, meta.version
                ),
            });
        }
        let (m, k, r, n) = (meta.identified, meta.k0_hat, meta.dim, meta.n);
        let has = |name: &str| meta.tables.iter().any(|t| t.name == name);
        let log_path = dir.join("permutations.csv");
        let mut permutations = Vec::new();
        let mut iterations = Vec::new();
        for (i, line) in fs::read_to_string(&log_path)?.lines().enumerate().skip(1) {
            let bad = |message: String| Error::Format {
                path: log_path.clone(),
                message: format!("line {}: {message}", i + 1),
            };
            let (it, rho) = line.split_once(',').ok_or_else(|| bad("missing field".into()))?;
            let it: usize = it.parse().map_err(|_| bad(format!("bad iteration {it:?}")))?;
            if rho == "dropped" {
                permutations.push((it, None));
            } else {
                let p = rho
                    .split(' ')
                    .map(|s| s.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| bad(format!("bad permutation {rho:?}")))?;
                iterations.push(it);
                permutations.push((it, Some(p)));
            }
        }
        if iterations.len() != m {
            return Err(Error::Format {
                path: log_path,
                message: format!("{} identified iterations listed, metadata says {m}", iterations.len()),
            });
        }
        Ok(Self {
            dataset: meta.dataset,
            n,
            dim: r,
            k0_hat: k,
            m0: meta.m0,
            m0_rho: meta.m0_rho,
            spec: meta.spec,
            hyper: meta.hyper,
            e0_acceptance: meta.e0_acceptance,
            iterations,
            permutations,
            eta: read_f64(&dir.join("eta.f64"), m * k)?,
            mu: read_f64(&dir.join("mu.f64"), m * k * r)?,
            lambda: read_f64(&dir.join("lambda.f64"), m * r)?,
            e0: read_f64(&dir.join("e0.f64"), m)?,
            sigma: if has("sigma") { Some(read_f64(&dir.join("sigma.f64"), m * k * r * r)?) } else { None },
            alloc: if has("alloc") { Some(read_u16(&dir.join("alloc.u16"), m * n)?) } else { None },
        })
    }
}
