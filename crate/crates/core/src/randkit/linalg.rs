use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// A symmetric positive definite matrix held by its lower Cholesky factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix {
    lower: DMatrix<f64>,
}

impl SpdMatrix {
    /// Wraps an existing lower-triangular factor with a strictly positive
    /// diagonal. The upper triangle is ignored.
    pub fn from_lower(lower: DMatrix<f64>) -> Result<Self> {
        if !lower.is_square() {
            return Err(Error::DimensionMismatch { expected: lower.nrows(), got: lower.ncols() });
        }
        let lower = lower.lower_triangle();
        if lower.diagonal().iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::NotSpd);
        }
        Ok(Self { lower })
    }

    pub fn identity(dim: usize) -> Self {
        Self { lower: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::NotSpd);
        }
        let l = DVector::from_iterator(diag.len(), diag.iter().map(|d| d.sqrt()));
        Ok(Self { lower: DMatrix::from_diagonal(&l) })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Reconstructs the matrix `L Lᵀ`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L z = v` by forward substitution.
    pub fn solve_lower(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut z = v.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for j in 0..i {
                s -= self.lower[(i, j)] * z[j];
            }
            z[i] = s / self.lower[(i, i)];
        }
        z
    }

    /// Solves `Lᵀ x = v` by back substitution.
    pub fn solve_upper(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = v.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lower[(j, i)] * x[j];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// `A⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(v))
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..=i).map(|j| self.lower[(i, j)] * z[j]).sum()).collect()
    }

    /// `dᵀ A⁻¹ d`.
    pub fn quad_inv(&self, d: &[f64]) -> f64 {
        self.solve_lower(d).iter().map(|z| z * z).sum()
    }

    /// `dᵀ A d`.
    pub fn quad(&self, d: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for j in 0..n {
            let mut s = 0.0;
            for i in j..n {
                s += self.lower[(i, j)] * d[i];
            }
            acc += s * s;
        }
        acc
    }

    /// Dense inverse `L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut linv = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let z = self.solve_lower(&e);
            for (row, v) in z.into_iter().enumerate() {
                linv[(row, col)] = v;
            }
        }
        linv.transpose() * linv
    }

    /// The inverse as another factored SPD matrix.
    pub fn inverse_spd(&self) -> Result<SpdMatrix> {
        cholesky(&self.inverse())
    }

    /// Scales the matrix by a positive constant.
    pub fn scaled(&self, factor: f64) -> Result<SpdMatrix> {
        if !(factor > 0.0) {
            return Err(Error::NonPositiveParameter(factor));
        }
        Ok(SpdMatrix { lower: &self.lower * factor.sqrt() })
    }
}

fn try_factor(a: &DMatrix<f64>, floor: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) || !pivot.is_finite() {
            return None;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Cholesky factorization with escalating diagonal jitter.
///
/// The input must be symmetric to within `1e-10·max|A|`. A failed pivot is
/// retried with jitter `1e-10·mean(diag A)`, growing tenfold up to `1e-4·mean(diag A)`.
pub fn cholesky(a: &DMatrix<f64>) -> Result<SpdMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    let n = a.nrows();
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (a + a.transpose()) * 0.5;
    let mean_diag = sym.trace() / n as f64;
    let floor = f64::EPSILON * mean_diag.abs() * 1e-3;
    if let Some(l) = try_factor(&sym, floor) {
        return Ok(SpdMatrix { lower: l });
    }
    if !(mean_diag > 0.0) {
        return Err(Error::NotSpd);
    }
    let mut jitter = JITTER_START * mean_diag;
    while jitter <= JITTER_MAX * mean_diag * (1.0 + 1e-9) {
        let mut jittered = sym.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(l) = try_factor(&jittered, jitter) {
            return Ok(SpdMatrix { lower: l });
        }
        jitter *= 10.0;
    }
    Err(Error::NotSpd)
}

/// Mahalanobis distance `√((x−c)ᵀ S⁻¹ (x−c))`.
pub fn mahalanobis(x: &[f64], c: &[f64], s: &SpdMatrix) -> Result<f64> {
    check_dim(s.dim(), x.len())?;
    check_dim(s.dim(), c.len())?;
    let d: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
    Ok(s.quad_inv(&d).sqrt())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}
