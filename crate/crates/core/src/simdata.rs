//! Simulation designs, CSV loading and the bundled benchmark datasets.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::randkit::{mvn_sample, RngStream, SpdMatrix};

/// A Gaussian mixture to simulate from.
#[derive(Clone, Debug, PartialEq)]
pub struct SimDesign {
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<SpdMatrix>,
    pub weights: Vec<f64>,
    pub n: usize,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        if k == 0 || self.covs.len() != k || self.weights.len() != k {
            return Err(Error::InvalidParameters("design lists must have equal, non-zero length".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameters("design needs N ≥ 1".into()));
        }
        let r = self.means[0].len();
        if self.means.iter().any(|m| m.len() != r) || self.covs.iter().any(|c| c.dim() != r) {
            return Err(Error::InvalidParameters("design components differ in dimension".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 || self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidParameters(format!("design weights must lie on the simplex (sum {s})")));
        }
        Ok(())
    }
}

fn four_cluster(weights: Vec<f64>) -> SimDesign {
    let m1 = vec![2.0, -2.0, 0.0, 0.0];
    let m3 = vec![2.0, 2.0, 0.0, 0.0];
    let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect::<Vec<_>>();
    SimDesign {
        means: vec![m1.clone(), neg(&m1), m3.clone(), neg(&m3)],
        covs: vec![SpdMatrix::identity(4); 4],
        weights,
        n: 1000,
    }
}

/// Four isotropic clusters in four dimensions, of which only the first two
/// separate the clusters; equal weights, N = 1000.
pub fn design_equal_weights() -> SimDesign {
    four_cluster(vec![0.25; 4])
}

/// As [`design_equal_weights`] but the first component carries 2% of the
/// weight.
pub fn design_unequal_weights() -> SimDesign {
    four_cluster(vec![0.02, 0.33, 0.33, 0.32])
}

pub fn design_by_name(name: &str) -> Result<SimDesign> {
    match name {
        "equal" | "equal-weights" => Ok(design_equal_weights()),
        "unequal" | "unequal-weights" => Ok(design_unequal_weights()),
        other => Err(Error::InvalidConfig(format!("unknown design {other:?}; expected equal or unequal"))),
    }
}

/// Draws a labelled dataset; labels are 1-based component indices.
pub fn generate(design: &SimDesign, seed: u64) -> Result<Dataset> {
    design.validate()?;
    let mut rng = RngStream::new(seed, 1);
    let r = design.means[0].len();
    let mut values = Vec::with_capacity(design.n * r);
    let mut labels = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let mut u = rng.uniform();
        let mut k = design.weights.len() - 1;
        for (j, &w) in design.weights.iter().enumerate() {
            if u < w {
                k = j;
                break;
            }
            u -= w;
        }
        values.extend(mvn_sample(&design.means[k], &design.covs[k], &mut rng)?);
        labels.push(k as i64 + 1);
    }
    Dataset::new(format!("sim-{seed}"), r, values, Some(labels))
}

/// Parses comma-separated numeric text. The label column, if given, is
/// matched against the header or else read as a 1-based column index;
/// integer labels are kept, anything else is coded 1, 2, … in order of
/// first appearance.
pub fn parse_csv(text: &str, name: &str, has_header: bool, label_column: Option<&str>) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Option<Vec<String>> =
        if has_header { lines.next().map(|(_, l)| l.split(',').map(|s| s.trim().to_string()).collect()) } else { None };
    let label_idx = match label_column {
        None => None,
        Some(col) => Some(match header.as_ref().and_then(|h| h.iter().position(|c| c == col)) {
            Some(i) => i,
            None => col
                .parse::<usize>()
                .ok()
                .filter(|&i| i >= 1)
                .map(|i| i - 1)
                .ok_or_else(|| Error::InvalidDataset(format!("no label column {col:?}")))?,
        }),
    };
    let mut width = header.as_ref().map(|h| h.len());
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (lineno, line) in lines {
        let row = lineno + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Parse {
                    row,
                    column: cells.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", cells.len()),
                })
            }
            _ => {}
        }
        for (c, cell) in cells.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, column: c + 1, message: "non-finite value".into() });
            }
            values.push(v);
        }
    }
    let width = width.ok_or_else(|| Error::InvalidDataset("no data rows".into()))?;
    if let Some(li) = label_idx {
        if li >= width {
            return Err(Error::InvalidDataset(format!("label column {} out of range", li + 1)));
        }
    }
    let dim = width - label_idx.is_some() as usize;
    let labels = label_idx.map(|_| code_labels(&raw_labels));
    Dataset::new(name, dim, values, labels)
}

fn code_labels(raw: &[String]) -> Vec<i64> {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<i64>()).collect::<std::result::Result<Vec<_>, _>>() {
        return ints;
    }
    let mut codes: HashMap<&str, i64> = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = codes.len() as i64 + 1;
            *codes.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

pub fn load_csv(path: &Path, has_header: bool, label_column: Option<&str>) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_csv(&text, &name, has_header, label_column)
}

/// CSV text with header `x1,…,xr` and a trailing `label` column when the
/// dataset has labels. Values use the shortest round-trip representation.
pub fn to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=dataset.dim()).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    if dataset.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..dataset.n() {
        let row: Vec<String> = dataset.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        if let Some(l) = dataset.labels() {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_csv(dataset))?;
    Ok(())
}

const IRIS: &str = include_str!("../data/iris.csv");
const IRIS_SHA256: &str = "84cd8752772bb54448f153184708b9ef657803f7e0ed2d21be8d35081ee57710";
const CRABS: &str = include_str!("../data/crabs.csv");
const CRABS_SHA256: &str = "8a2d5d940671aa2f3b65d45b820ded410e4886eeb4ad947a735c4030d977cadd";

pub const BUILTIN_NAMES: [&str; 2] = ["iris", "crabs"];

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Bundled datasets: `iris` (150 × 4, three species) and `crabs`
/// (200 × 5 morphological measurements, four sex × species groups).
pub fn builtin(name: &str) -> Result<Dataset> {
    let (text, sum, label) = match name {
        "iris" => (IRIS, IRIS_SHA256, "species"),
        "crabs" => (CRABS, CRABS_SHA256, "group"),
        other => return Err(Error::UnknownDataset(other.to_string())),
    };
    if sha256_hex(text.as_bytes()) != sum {
        return Err(Error::ChecksumMismatch { name: name.to_string() });
    }
    parse_csv(text, name, true, Some(label))
}
