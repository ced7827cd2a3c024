use statrs::function::gamma::ln_gamma;

use super::bessel::ln_bessel_k;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log marginal prior of one column `(μ_1j, …, μ_Kj)` of component means
/// under the normal-gamma prior, with the scale `λ_j ~ G(ν₁, ν₂)` integrated
/// out:
///
/// ```text
/// π = ν₂^ν₁ / ((2π)^{K/2} R^K Γ(ν₁)) · 2 K_p(√(a b)) · (b/a)^{p/2}
/// a = 2ν₂,  p = ν₁ − K/2,  b = Σ_k (μ_kj − b_0j)² / R²
/// ```
///
/// This follows from `∫ x^{p-1} e^{-(a x + b/x)/2} dx = 2 (b/a)^{p/2} K_p(√(ab))`.
/// The `R^{-K}` factor is the Jacobian of measuring `μ` on the data scale.
/// Returns `+∞` when `b = 0` and `p ≤ 0` (the density has a pole there).
pub fn ng_marginal_logdensity(mu_col: &[f64], b0j: f64, range_j: f64, nu1: f64, nu2: f64) -> f64 {
    let k = mu_col.len() as f64;
    let a = 2.0 * nu2;
    let p = nu1 - 0.5 * k;
    let b: f64 = mu_col.iter().map(|m| (m - b0j).powi(2)).sum::<f64>() / (range_j * range_j);
    let constant = nu1 * nu2.ln() - 0.5 * k * LN_2PI - k * range_j.ln() - ln_gamma(nu1);
    if b == 0.0 {
        if p <= 0.0 {
            return f64::INFINITY;
        }
        // K_p(z) ~ Γ(p)/2 (2/z)^p as z → 0
        return constant + ln_gamma(p) + p * (2.0 / a).ln();
    }
    let z = (a * b).sqrt();
    let ln_k = ln_bessel_k(p, z).expect("z > 0");
    constant + std::f64::consts::LN_2 + ln_k + 0.5 * p * (b / a).ln()
}
