use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::linalg::{check_dim, SpdMatrix};
use super::rng::RngStream;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn standard_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma draw in the shape–rate convention (mean `shape / rate`).
pub fn gamma_sample(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::NonPositiveParameter(shape));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::NonPositiveParameter(rate));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameters(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Logarithm of a unit-rate Gamma draw.
///
/// Small shapes use `ln G(shape+1) + ln(U)/shape`, which stays finite where
/// the draw itself would underflow to zero.
pub fn ln_gamma_variate(shape: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::NonPositiveParameter(shape));
    }
    if shape >= 1.0 {
        Ok(gamma_sample(shape, 1.0, rng)?.ln())
    } else {
        let g = gamma_sample(shape + 1.0, 1.0, rng)?;
        Ok(g.ln() + rng.uniform_pos().ln() / shape)
    }
}

/// `mean + L z` with `z` standard normal.
pub fn mvn_sample(mean: &[f64], cov: &SpdMatrix, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_dim(cov.dim(), mean.len())?;
    let z: Vec<f64> = (0..mean.len()).map(|_| standard_normal(rng)).collect();
    let lz = cov.mul_lower(&z);
    Ok(mean.iter().zip(lz).map(|(m, v)| m + v).collect())
}

/// Multivariate normal draw parameterized by its precision matrix `Ω`,
/// i.e. `mean + L⁻ᵀ z` where `Ω = L Lᵀ`.
pub fn mvn_sample_precision(mean: &[f64], precision: &SpdMatrix, rng: &mut RngStream) -> Result<Vec<f64>> {
    let n = precision.dim();
    check_dim(n, mean.len())?;
    let l = precision.lower();
    let mut x: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
    // back substitution with Lᵀ
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= l[(j, i)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(mean.iter().zip(x).map(|(m, v)| m + v).collect())
}

pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &SpdMatrix) -> Result<f64> {
    check_dim(cov.dim(), x.len())?;
    check_dim(cov.dim(), mean.len())?;
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let r = x.len() as f64;
    Ok(-0.5 * (r * LN_2PI + cov.log_det() + cov.quad_inv(&d)))
}

/// Normal log density evaluated with a precision factor `Ω = L Lᵀ`.
pub fn mvn_logpdf_precision(x: &[f64], mean: &[f64], precision: &SpdMatrix) -> Result<f64> {
    check_dim(precision.dim(), x.len())?;
    check_dim(precision.dim(), mean.len())?;
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let r = x.len() as f64;
    Ok(-0.5 * (r * LN_2PI - precision.log_det() + precision.quad(&d)))
}

/// Wishart draw in the shape–rate convention: density
/// `∝ |Ω|^{c-(r+1)/2} exp(-tr(C Ω))`, so `E[Ω] = c C⁻¹`.
///
/// Sampled as the standard Wishart with `2c` degrees of freedom and scale
/// `(2C)⁻¹` via the Bartlett decomposition. The returned factor is
/// `L_S A`, which is already lower triangular with positive diagonal.
pub fn wishart_sample(shape: f64, rate: &SpdMatrix, rng: &mut RngStream) -> Result<SpdMatrix> {
    let r = rate.dim();
    let dof = 2.0 * shape;
    if !(dof >= r as f64) {
        return Err(Error::DegreesOfFreedomTooSmall { shape, dim: r });
    }
    let scale = rate.inverse_spd()?.scaled(0.5)?;
    let mut a = DMatrix::<f64>::zeros(r, r);
    for i in 0..r {
        let chi2 = 2.0 * gamma_sample(0.5 * (dof - i as f64), 1.0, rng)?;
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(rng);
        }
    }
    SpdMatrix::from_lower(scale.lower() * a)
}

/// Dirichlet draw returned as normalized log-weights.
pub fn dirichlet_log_sample(alpha: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::InvalidParameters("empty Dirichlet parameter".into()));
    }
    let mut logs = Vec::with_capacity(alpha.len());
    for &a in alpha {
        if !(a > 0.0) {
            return Err(Error::NonPositiveParameter(a));
        }
        logs.push(ln_gamma_variate(a, rng)?);
    }
    let lse = log_sum_exp(&logs);
    logs.iter_mut().for_each(|l| *l -= lse);
    Ok(logs)
}

pub fn dirichlet_sample(alpha: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    let logs = dirichlet_log_sample(alpha, rng)?;
    Ok(normalized_exp(&logs))
}

/// `exp` of normalized log-weights, renormalized so the sum is 1 to rounding.
pub fn normalized_exp(logs: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draws a 0-based index with probability `exp(logw_k - logsumexp(logw))`.
pub fn categorical_from_logweights(logw: &[f64], rng: &mut RngStream) -> Result<usize> {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return Err(Error::AllWeightsDegenerate);
    }
    let total: f64 = logw.iter().map(|l| (l - m).exp()).sum();
    let mut u = rng.uniform() * total;
    let mut last = 0;
    for (k, l) in logw.iter().enumerate() {
        let w = (l - m).exp();
        if w > 0.0 {
            last = k;
            if u < w {
                return Ok(k);
            }
            u -= w;
        }
    }
    Ok(last)
}

/// Uniform random permutation of `0..k` (Fisher–Yates).
pub fn random_permutation(k: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    p.shuffle(rng);
    p
}

/// Log density of the shape–rate Gamma distribution.
pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn degenerate_covariance_returns_mean() {
        let mut rng = RngStream::new(1, 0);
        let cov = SpdMatrix::from_diagonal(&[1e-30, 1e-30]).unwrap();
        let x = mvn_sample(&[3.0, -4.0], &cov, &mut rng).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-10 && (x[1] + 4.0).abs() < 1e-10);
    }

    #[test]
    fn mvn_logpdf_closed_forms() {
        let i1 = SpdMatrix::identity(1);
        assert_relative_eq!(mvn_logpdf(&[0.0], &[0.0], &i1).unwrap(), -0.5 * LN_2PI, epsilon = 1e-14);
        let i2 = SpdMatrix::identity(2);
        assert_relative_eq!(mvn_logpdf(&[1.0, 0.0], &[0.0, 0.0], &i2).unwrap(), -LN_2PI - 0.5, epsilon = 1e-14);
    }

    #[test]
    fn precision_logpdf_matches_covariance_logpdf() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 0.5]);
        let cov = super::super::linalg::cholesky(&a).unwrap();
        let prec = cov.inverse_spd().unwrap();
        let x = [0.3, 1.2];
        let m = [-0.2, 0.1];
        assert_relative_eq!(
            mvn_logpdf(&x, &m, &cov).unwrap(),
            mvn_logpdf_precision(&x, &m, &prec).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn wishart_rejects_small_shape() {
        let mut rng = RngStream::new(1, 0);
        let c = SpdMatrix::identity(3);
        assert!(matches!(wishart_sample(1.0, &c, &mut rng), Err(Error::DegreesOfFreedomTooSmall { .. })));
    }

    #[test]
    fn dirichlet_on_simplex() {
        let mut rng = RngStream::new(3, 0);
        for a in [1e-5, 0.01, 0.5, 3.0] {
            let w = dirichlet_sample(&[a; 6], &mut rng).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(dirichlet_sample(&[1.0, 0.0], &mut rng), Err(Error::NonPositiveParameter(_))));
    }

    #[test]
    fn tiny_dirichlet_logs_stay_finite() {
        let mut rng = RngStream::new(3, 0);
        let l = dirichlet_log_sample(&[1e-5, 1e-5, 500.0], &mut rng).unwrap();
        assert!(l.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn categorical_single_and_degenerate() {
        let mut rng = RngStream::new(3, 0);
        assert_eq!(categorical_from_logweights(&[-3.0], &mut rng).unwrap(), 0);
        assert!(matches!(
            categorical_from_logweights(&[f64::NEG_INFINITY; 3], &mut rng),
            Err(Error::AllWeightsDegenerate)
        ));
        for _ in 0..100 {
            let k = categorical_from_logweights(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY], &mut rng).unwrap();
            assert_eq!(k, 1);
        }
    }

    #[test]
    fn categorical_frequency() {
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let lw = [0.2f64.ln(), 0.8f64.ln()];
        let hits = (0..n).filter(|_| categorical_from_logweights(&lw, &mut rng).unwrap() == 1).count() as f64;
        let p = hits / n as f64;
        let se = (0.8 * 0.2 / n as f64).sqrt();
        assert!((p - 0.8).abs() < 3.0 * se, "p = {p}");
    }

    #[test]
    fn categorical_shift_invariance() {
        let lw = [0.1, -1.0, 0.7, -0.2];
        let shifted: Vec<f64> = lw.iter().map(|x| x + 7.0).collect();
        // identical streams give identical draws because the normalized
        // weights agree
        let mut a = RngStream::new(9, 0);
        let mut b = RngStream::new(9, 0);
        let n = 100_000;
        let mut ca = [0usize; 4];
        let mut cb = [0usize; 4];
        for _ in 0..n {
            ca[categorical_from_logweights(&lw, &mut a).unwrap()] += 1;
            cb[categorical_from_logweights(&shifted, &mut b).unwrap()] += 1;
        }
        for k in 0..4 {
            let p = ca[k] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(((ca[k] as f64 - cb[k] as f64) / n as f64).abs() <= 3.0 * se + 1e-12);
        }
    }

    #[test]
    fn permutation_is_bijection() {
        let mut rng = RngStream::new(5, 0);
        assert_eq!(random_permutation(1, &mut rng), vec![0]);
        for k in 1..20 {
            let mut p = random_permutation(k, &mut rng);
            p.sort_unstable();
            assert_eq!(p, (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn gamma_mean_and_variance() {
        let mut rng = RngStream::new(11, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| gamma_sample(10.0, 300.0, &mut rng).unwrap()).collect();
        let (m, v) = mean_var(&xs);
        let sd = (10.0f64).sqrt() / 300.0;
        assert!((m - 1.0 / 30.0).abs() < 3.0 * sd / (n as f64).sqrt());
        // variance of the sample variance: (mu4 - sigma^4)/n, with gamma
        // excess kurtosis 6/shape
        let var = 10.0 / 300.0f64.powi(2);
        let se_v = var * ((2.0 + 6.0 / 10.0) / n as f64).sqrt();
        assert!((v - var).abs() < 3.0 * se_v, "v = {v}, var = {var}");
    }

    #[test]
    fn gamma_logpdf_normalizes() {
        let h = 1e-3;
        let s: f64 = (1..40_000).map(|i| gamma_logpdf(i as f64 * h, 2.5, 1.5).exp() * h).sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-5);
    }
}
