//! Stored post-burn-in draws and their on-disk form.
//!
//! An archive directory holds `meta.json` plus one raw little-endian table
//! per stored quantity. Every table is indexed by iteration first, with the
//! last listed axis varying fastest; shapes and element types are recorded
//! in the metadata.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChainConfig, SweepInfo};
use crate::error::{Error, Result};
use crate::model::{DataHyper, MixtureState, PriorSpec};

pub const ARCHIVE_VERSION: u32 = 1;
const FORMAT: &str = "sparsemix-chain";

#[derive(Clone, Debug, PartialEq)]
pub struct ChainArchive {
    pub dataset: String,
    pub n: usize,
    pub k: usize,
    pub dim: usize,
    pub spec: PriorSpec,
    pub hyper: DataHyper,
    pub config: ChainConfig,
    /// Acceptance rate of the `e₀` Metropolis step, if `e₀` was random.
    pub e0_acceptance: Option<f64>,
    /// `[M, K]`
    pub eta: Vec<f64>,
    /// `[M, K, r]`
    pub mu: Vec<f64>,
    /// `[M, r]`
    pub lambda: Vec<f64>,
    /// `[M, r]`
    pub b0: Vec<f64>,
    /// `[M]`
    pub e0: Vec<f64>,
    /// `[M, K]`
    pub counts: Vec<u32>,
    /// `[M]`
    pub k0: Vec<u32>,
    /// `[M, K, r, r]` covariance matrices, when requested.
    pub sigma: Option<Vec<f64>>,
    /// `[M, N]` zero-based allocations, when requested.
    pub alloc: Option<Vec<u16>>,
}

impl ChainArchive {
    pub fn new(dataset: &str, n: usize, spec: PriorSpec, hyper: DataHyper, config: ChainConfig) -> Result<Self> {
        if config.store_allocations && spec.k > u16::MAX as usize + 1 {
            return Err(Error::InvalidConfig(format!("cannot store allocations for K = {}", spec.k)));
        }
        Ok(Self {
            dataset: dataset.to_string(),
            n,
            k: spec.k,
            dim: hyper.dim(),
            sigma: config.store_sigma.then(Vec::new),
            alloc: config.store_allocations.then(Vec::new),
            spec,
            hyper,
            config,
            e0_acceptance: None,
            eta: Vec::new(),
            mu: Vec::new(),
            lambda: Vec::new(),
            b0: Vec::new(),
            e0: Vec::new(),
            counts: Vec::new(),
            k0: Vec::new(),
        })
    }

    /// Number of stored iterations.
    pub fn len(&self) -> usize {
        self.e0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e0.is_empty()
    }

    pub(crate) fn push(&mut self, state: &MixtureState, info: &SweepInfo) {
        let sigma: Option<Vec<f64>> = self
            .sigma
            .as_ref()
            .map(|_| (0..state.k()).flat_map(|k| state.sigma(k).transpose().as_slice().to_vec()).collect());
        let alloc = info.alloc.as_deref();
        self.push_draw(
            &state.eta,
            &state.mu.concat(),
            &info.counts,
            &state.lambda,
            &state.b0,
            state.e0,
            sigma.as_deref(),
            alloc,
        );
    }

    /// Appends one iteration. `mu` is `K × r` and `sigma` `K × r × r`, both
    /// flattened with the last axis fastest.
    #[allow(clippy::too_many_arguments)]
    pub fn push_draw(
        &mut self,
        eta: &[f64],
        mu: &[f64],
        counts: &[usize],
        lambda: &[f64],
        b0: &[f64],
        e0: f64,
        sigma: Option<&[f64]>,
        alloc: Option<&[usize]>,
    ) {
        assert_eq!(eta.len(), self.k);
        assert_eq!(mu.len(), self.k * self.dim);
        assert_eq!(counts.len(), self.k);
        self.eta.extend_from_slice(eta);
        self.mu.extend_from_slice(mu);
        self.counts.extend(counts.iter().map(|&c| c as u32));
        self.k0.push(counts.iter().filter(|&&c| c > 0).count() as u32);
        self.lambda.extend_from_slice(lambda);
        self.b0.extend_from_slice(b0);
        self.e0.push(e0);
        if let (Some(store), Some(s)) = (self.sigma.as_mut(), sigma) {
            store.extend_from_slice(s);
        }
        if let (Some(store), Some(a)) = (self.alloc.as_mut(), alloc) {
            store.extend(a.iter().map(|&s| s as u16));
        }
    }

    pub fn eta_row(&self, m: usize) -> &[f64] {
        &self.eta[m * self.k..(m + 1) * self.k]
    }

    pub fn mu_of(&self, m: usize, k: usize) -> &[f64] {
        let start = (m * self.k + k) * self.dim;
        &self.mu[start..start + self.dim]
    }

    pub fn counts_row(&self, m: usize) -> &[u32] {
        &self.counts[m * self.k..(m + 1) * self.k]
    }

    pub fn lambda_row(&self, m: usize) -> &[f64] {
        &self.lambda[m * self.dim..(m + 1) * self.dim]
    }

    /// Covariance of component `k` at iteration `m`, row-major.
    pub fn sigma_of(&self, m: usize, k: usize) -> Option<&[f64]> {
        let r2 = self.dim * self.dim;
        self.sigma.as_ref().map(|s| &s[(m * self.k + k) * r2..(m * self.k + k + 1) * r2])
    }

    pub fn alloc_row(&self, m: usize) -> Option<&[u16]> {
        self.alloc.as_ref().map(|a| &a[m * self.n..(m + 1) * self.n])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let m = self.len();
        let (k, r, n) = (self.k, self.dim, self.n);
        let mut tables = vec![
            table("eta", "f64", vec![m, k]),
            table("mu", "f64", vec![m, k, r]),
            table("lambda", "f64", vec![m, r]),
            table("b0", "f64", vec![m, r]),
            table("e0", "f64", vec![m]),
            table("counts", "u32", vec![m, k]),
            table("k0", "u32", vec![m]),
        ];
        write_f64(&dir.join("eta.f64"), &self.eta)?;
        write_f64(&dir.join("mu.f64"), &self.mu)?;
        write_f64(&dir.join("lambda.f64"), &self.lambda)?;
        write_f64(&dir.join("b0.f64"), &self.b0)?;
        write_f64(&dir.join("e0.f64"), &self.e0)?;
        write_u32(&dir.join("counts.u32"), &self.counts)?;
        write_u32(&dir.join("k0.u32"), &self.k0)?;
        if let Some(s) = &self.sigma {
            tables.push(table("sigma", "f64", vec![m, k, r, r]));
            write_f64(&dir.join("sigma.f64"), s)?;
        }
        if let Some(a) = &self.alloc {
            tables.push(table("alloc", "u16", vec![m, n]));
            write_u16(&dir.join("alloc.u16"), a)?;
        }
        let meta = Meta {
            format: FORMAT.into(),
            version: ARCHIVE_VERSION,
            dataset: self.dataset.clone(),
            n,
            k,
            dim: r,
            iterations: m,
            spec: self.spec.clone(),
            hyper: self.hyper.clone(),
            config: self.config.clone(),
            e0_acceptance: self.e0_acceptance,
            tables,
        };
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta: Meta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
        if meta.format != FORMAT || meta.version != ARCHIVE_VERSION {
            return Err(Error::Format {
                path: meta_path.clone(),
                message: format!(
                    "expected {FORMAT} version {ARCHIVE_VERSION}, found {} version {}",
                    meta.format, meta.version
                ),
            });
        }
        let (m, k, r, n) = (meta.iterations, meta.k, meta.dim, meta.n);
        let has = |name: &str| meta.tables.iter().any(|t| t.name == name);
        Ok(Self {
            dataset: meta.dataset,
            n,
            k,
            dim: r,
            e0_acceptance: meta.e0_acceptance,
            eta: read_f64(&dir.join("eta.f64"), m * k)?,
            mu: read_f64(&dir.join("mu.f64"), m * k * r)?,
            lambda: read_f64(&dir.join("lambda.f64"), m * r)?,
            b0: read_f64(&dir.join("b0.f64"), m * r)?,
            e0: read_f64(&dir.join("e0.f64"), m)?,
            counts: read_u32(&dir.join("counts.u32"), m * k)?,
            k0: read_u32(&dir.join("k0.u32"), m)?,
            sigma: if has("sigma") { Some(read_f64(&dir.join("sigma.f64"), m * k * r * r)?) } else { None },
            alloc: if has("alloc") { Some(read_u16(&dir.join("alloc.u16"), m * n)?) } else { None },
            spec: meta.spec,
            hyper: meta.hyper,
            config: meta.config,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    version: u32,
    dataset: String,
    n: usize,
    k: usize,
    dim: usize,
    iterations: usize,
    spec: PriorSpec,
    hyper: DataHyper,
    config: ChainConfig,
    e0_acceptance: Option<f64>,
    tables: Vec<TableMeta>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct TableMeta {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

pub(crate) fn table(name: &str, dtype: &str, shape: Vec<usize>) -> TableMeta {
    TableMeta { name: name.into(), dtype: dtype.into(), shape }
}

macro_rules! raw_io {
    ($write:ident, $read:ident, $t:ty) => {
        pub(crate) fn $write(path: &Path, values: &[$t]) -> Result<()> {
            let mut w = BufWriter::new(fs::File::create(path)?);
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()?;
            Ok(())
        }

        pub(crate) fn $read(path: &Path, expected: usize) -> Result<Vec<$t>> {
            const W: usize = std::mem::size_of::<$t>();
            let bytes = fs::read(path)?;
            if bytes.len() != expected * W {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("expected {} bytes, found {}", expected * W, bytes.len()),
                });
            }
            Ok(bytes.chunks_exact(W).map(|c| <$t>::from_le_bytes(c.try_into().expect("chunk width"))).collect())
        }
    };
}

raw_io!(write_f64, read_f64, f64);
raw_io!(write_u32, read_u32, u32);
raw_io!(write_u16, read_u16, u16);
