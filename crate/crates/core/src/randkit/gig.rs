//! Generalized inverse Gaussian variates.
//!
//! Density convention: `f(x) ∝ x^{p-1} exp(-(a x + b/x)/2)`, `x > 0`.
//!
//! Sampling follows Hörmann & Leydold (2014): after reducing to the
//! two-parameter form `GIG(λ, ω, ω)` with `λ = |p|`, `ω = √(ab)`, one of
//! three generators is chosen: ratio-of-uniforms with mode shift for large
//! `λ` or `ω`, ratio-of-uniforms without shift for moderate values, and a
//! rejection sampler with a piecewise dominating density for the region
//! where the density is not T₋½-concave (small `ω`, `λ < 1`).

use std::f64::consts::PI;

use super::dist::gamma_sample;
use super::rng::RngStream;
use crate::error::{Error, Result};

pub fn gig_sample(p: f64, a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    if !(p.is_finite() && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameters(format!("GIG({p}, {a}, {b})")));
    }
    if b == 0.0 {
        // gamma limit: x^{p-1} e^{-a x / 2}
        if p > 0.0 && a > 0.0 {
            return gamma_sample(p, 0.5 * a, rng);
        }
        return Err(Error::InvalidParameters(format!("GIG with b = 0 needs p > 0 and a > 0, got p = {p}, a = {a}")));
    }
    if a == 0.0 {
        // inverse-gamma limit: x^{p-1} e^{-b / (2x)}
        if p < 0.0 && b > 0.0 {
            return Ok(1.0 / gamma_sample(-p, 0.5 * b, rng)?);
        }
        return Err(Error::InvalidParameters(format!("GIG with a = 0 needs p < 0 and b > 0, got p = {p}, b = {b}")));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameters(format!("GIG needs a, b > 0, got a = {a}, b = {b}")));
    }

    let lambda = p.abs();
    let omega = (a * b).sqrt();
    let alpha = (b / a).sqrt();

    let y = if lambda > 2.0 || omega > 3.0 {
        rou_shift(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(lambda, omega, rng)
    } else {
        dominating_rejection(lambda, omega, rng)
    };
    // GIG(-λ, ω, ω) is the law of 1/Y for Y ~ GIG(λ, ω, ω)
    Ok(if p < 0.0 { alpha / y } else { alpha * y })
}

/// Mode of `y^{λ-1} exp(-ω (y + 1/y) / 2)`.
fn mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        ((lambda - 1.0).hypot(omega) + (lambda - 1.0)) / omega
    } else {
        omega / ((1.0 - lambda).hypot(omega) + (1.0 - lambda))
    }
}

fn rou_noshift(lambda: f64, omega: f64, rng: &mut RngStream) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + (lambda + 1.0).hypot(omega)) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.uniform();
        let v = rng.uniform_pos();
        let x = u / v;
        if x <= 0.0 {
            continue;
        }
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn rou_shift(lambda: f64, omega: f64, rng: &mut RngStream) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // the bounding rectangle comes from the roots of a depressed cubic
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.uniform() * (uplus - uminus);
        let v = rng.uniform_pos();
        let x = u / v + xm;
        if x <= 0.0 {
            continue;
        }
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn dominating_rejection(lambda: f64, omega: f64, rng: &mut RngStream) -> f64 {
    let xm = mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.uniform();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (v * omega.exp()).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let lo = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * lo).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x > 0.0) || !x.is_finite() {
            continue;
        }
        let u = rng.uniform_pos() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}
