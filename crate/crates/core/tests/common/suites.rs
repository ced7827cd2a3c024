//! Property suites shared by the per-module tests and the acceptance run.
//! Each returns a one-line detail on success and a reason on failure.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Gamma};

use sparsemix::cluster::{self, Distance, Rows};
use sparsemix::eval::{mcr_assignment, mcr_exhaustive};
use sparsemix::model::{derive_hyper, init_state, DataHyper, Dataset, E0Policy, MeanPrior, MixtureState, PriorSpec};
use sparsemix::postid::identify;
use sparsemix::randkit::{
    dirichlet_log_sample, gamma_sample, mvn_logpdf_precision, mvn_sample, random_permutation, standard_normal,
    wishart_sample, RngStream, SpdMatrix,
};
use sparsemix::sampler::{self, apply_permutation, e0_log_target, ChainArchive, ChainConfig, Sweeper};

use super::{ks_test, mean, simpson, variance};

pub type Outcome = Result<String, String>;

fn within(name: &str, got: f64, want: f64, se: f64, z: f64) -> Result<(), String> {
    if (got - want).abs() <= z * se + 1e-12 {
        Ok(())
    } else {
        Err(format!("{name}: {got} vs {want} (se {se:.3e})"))
    }
}

/// Draws `(S, y)` from the likelihood given the parameters in `state`.
fn regenerate(state: &mut MixtureState, n: usize, rng: &mut RngStream) -> Dataset {
    let r = state.dim();
    let mut values = Vec::with_capacity(n * r);
    for i in 0..n {
        let mut u = rng.uniform();
        let mut k = state.k() - 1;
        for (j, &w) in state.eta.iter().enumerate() {
            if u < w {
                k = j;
                break;
            }
            u -= w;
        }
        state.alloc[i] = k;
        let cov = state.precision[k].inverse_spd().unwrap();
        values.extend(mvn_sample(&state.mu[k], &cov, rng).unwrap());
    }
    state.recount();
    Dataset::new("geweke", r, values, None).unwrap()
}

/// Successive-conditional ("getting it right") test: alternating full
/// sweeps with fresh data from the likelihood must leave the prior of
/// `λ` and `e₀` invariant. Univariate, K = 2, N = 5, normal-gamma prior
/// with random `e₀`; the data-derived hyperparameters stay fixed.
pub fn getting_it_right(sweeps: usize, thin: usize, seed: u64) -> Outcome {
    let (k, n, a) = (2usize, 5usize, 10.0);
    let base = Dataset::new("base", 1, vec![0.0, 1.0, 2.0, 3.0, 4.0], None).unwrap();
    let hyper = derive_hyper(&base).unwrap();
    let spec = PriorSpec::new(k, MeanPrior::normal_gamma(), E0Policy::GammaHyper { a });
    let mut rng = RngStream::new(seed, 0);

    let e0 = gamma_sample(a, a * k as f64, &mut rng).unwrap();
    let lambda = gamma_sample(0.5, 0.5, &mut rng).unwrap();
    let c0 = wishart_sample(hyper.g0, &hyper.big_g0, &mut rng).unwrap();
    let precision: Vec<SpdMatrix> = (0..k).map(|_| wishart_sample(hyper.c0, &c0, &mut rng).unwrap()).collect();
    let sd = hyper.range[0] * lambda.sqrt();
    let mu = (0..k).map(|_| vec![hyper.median[0] + sd * standard_normal(&mut rng)]).collect();
    let mut state = MixtureState {
        log_eta: vec![0.0; k],
        eta: vec![0.0; k],
        mu,
        precision,
        alloc: vec![0; n],
        counts: vec![0; k],
        b0: hyper.median.clone(),
        lambda: vec![lambda],
        c0,
        e0,
    };
    state.set_log_eta(dirichlet_log_sample(&vec![e0; k], &mut rng).unwrap());

    let mut lambdas = Vec::new();
    let mut e0s = Vec::new();
    for it in 0..sweeps {
        let data = regenerate(&mut state, n, &mut rng);
        Sweeper::new(&data, &hyper, &spec).sweep(&mut state, &mut rng, false).map_err(|e| e.to_string())?;
        if it % thin == thin - 1 {
            lambdas.push(state.lambda[0]);
            e0s.push(state.e0);
        }
    }
    let g_lambda = Gamma::new(0.5, 0.5).unwrap();
    let g_e0 = Gamma::new(a, a * k as f64).unwrap();
    let (d1, p1) = ks_test(&lambdas, |x| g_lambda.cdf(x));
    let (d2, p2) = ks_test(&e0s, |x| g_e0.cdf(x));
    let detail = format!("λ KS D={d1:.4} p={p1:.3}; e0 KS D={d2:.4} p={p2:.3}; {} draws", lambdas.len());
    if p1 > 0.01 && p2 > 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_dataset(n: usize, r: usize, groups: usize, rng: &mut RngStream) -> Dataset {
    let centers: Vec<Vec<f64>> = (0..groups).map(|_| (0..r).map(|_| 4.0 * standard_normal(rng)).collect()).collect();
    let values =
        (0..n).flat_map(|i| centers[i % groups].iter().map(|c| c + standard_normal(rng)).collect::<Vec<_>>()).collect();
    Dataset::new("rand", r, values, None).unwrap()
}

fn burned_state(data: &Dataset, hyper: &DataHyper, spec: &PriorSpec, rng: &mut RngStream) -> MixtureState {
    let mut s = init_state(data, hyper, spec, rng).unwrap();
    let mut sw = Sweeper::new(data, hyper, spec);
    for _ in 0..20 {
        sw.sweep(&mut s, rng, false).unwrap();
    }
    s
}

fn precision_dense(p: &SpdMatrix) -> DMatrix<f64> {
    p.matrix()
}

/// Each conditional draw, repeated from a fixed state, against the
/// moments of its closed-form full conditional (3 Monte Carlo s.e.).
pub fn conjugacy_checks(reps: usize, seed: u64) -> Outcome {
    let mut rng = RngStream::new(seed, 0);
    let data = random_dataset(60, 2, 3, &mut rng);
    let hyper = derive_hyper(&data).unwrap();
    let spec = PriorSpec::new(4, MeanPrior::normal_gamma(), E0Policy::GammaHyper { a: 10.0 });
    let state = burned_state(&data, &hyper, &spec, &mut rng);
    let (k, r) = (state.k(), state.dim());
    let z = 3.0;
    let mut checked = 0;

    // weights
    let tot = k as f64 * state.e0 + data.n() as f64;
    let mut draws = vec![Vec::with_capacity(reps); k];
    for _ in 0..reps {
        let mut s = state.clone();
        sampler::step_weights(&mut s, &mut rng).unwrap();
        for c in 0..k {
            draws[c].push(s.eta[c]);
        }
    }
    for c in 0..k {
        let want = (state.e0 + state.counts[c] as f64) / tot;
        within("eta", mean(&draws[c]), want, (variance(&draws[c]) / reps as f64).sqrt(), z)?;
        checked += 1;
    }

    // precisions: W(c0 + N_k/2, C0 + ½ scatter) has mean shape · rate⁻¹
    let mut draws = vec![Vec::with_capacity(reps); k * r * r];
    for _ in 0..reps {
        let mut s = state.clone();
        sampler::step_covariances(&mut s, &data, &hyper, &mut rng).unwrap();
        for c in 0..k {
            let m = precision_dense(&s.precision[c]);
            for (e, v) in m.iter().enumerate() {
                draws[c * r * r + e].push(*v);
            }
        }
    }
    for c in 0..k {
        let mut rate = state.c0.matrix();
        for i in 0..data.n() {
            if state.alloc[i] == c {
                let d = DVector::from_iterator(r, data.row(i).iter().zip(&state.mu[c]).map(|(y, m)| y - m));
                rate += &d * d.transpose() * 0.5;
            }
        }
        let want = rate.try_inverse().unwrap() * (hyper.c0 + 0.5 * state.counts[c] as f64);
        for (e, w) in want.iter().enumerate() {
            let d = &draws[c * r * r + e];
            within("precision", mean(d), *w, (variance(d) / reps as f64).sqrt(), z)?;
            checked += 1;
        }
    }

    // means: precision form of the Gaussian update
    let mut draws = vec![Vec::with_capacity(reps); k * r];
    for _ in 0..reps {
        let mut s = state.clone();
        sampler::step_means(&mut s, &data, &hyper, &spec, &mut rng).unwrap();
        for c in 0..k {
            for j in 0..r {
                draws[c * r + j].push(s.mu[c][j]);
            }
        }
    }
    for c in 0..k {
        let b0_var =
            DMatrix::from_fn(r, r, |p, q| if p == q { hyper.range[p] * hyper.range[p] * state.lambda[p] } else { 0.0 });
        let b0_prec = b0_var.try_inverse().unwrap();
        let omega = precision_dense(&state.precision[c]);
        let nk = state.counts[c] as f64;
        let mut sum = DVector::zeros(r);
        for i in 0..data.n() {
            if state.alloc[i] == c {
                sum += DVector::from_column_slice(data.row(i));
            }
        }
        let post_var = (&b0_prec + &omega * nk).try_inverse().unwrap();
        let post_mean = &post_var * (&b0_prec * DVector::from_column_slice(&state.b0) + &omega * sum);
        for j in 0..r {
            let d = &draws[c * r + j];
            within("mu", mean(d), post_mean[j], post_var[(j, j)].sqrt() / (reps as f64).sqrt(), z)?;
            within("mu var", variance(d), post_var[(j, j)], post_var[(j, j)] * (2.0 / reps as f64).sqrt(), z)?;
            checked += 2;
        }
    }

    // C0: W(g0 + K c0, G0 + Σ Σ_k⁻¹)
    let mut draws = vec![Vec::with_capacity(reps); r * r];
    for _ in 0..reps {
        let mut s = state.clone();
        sampler::step_c0(&mut s, &hyper, &mut rng).unwrap();
        for (e, v) in s.c0.matrix().iter().enumerate() {
            draws[e].push(*v);
        }
    }
    let mut rate = hyper.big_g0.matrix();
    for p in &state.precision {
        rate += precision_dense(p);
    }
    let want = rate.try_inverse().unwrap() * (hyper.g0 + k as f64 * hyper.c0);
    for (e, w) in want.iter().enumerate() {
        within("C0", mean(&draws[e]), *w, (variance(&draws[e]) / reps as f64).sqrt(), z)?;
        checked += 1;
    }

    // λ_j: density ∝ λ^(ν1 − K/2 − 1) exp(−ν2 λ − b/(2λ)), by quadrature on log λ
    let mut draws = vec![Vec::with_capacity(reps); r];
    for _ in 0..reps {
        let mut s = state.clone();
        sampler::step_lambda(&mut s, &hyper, &spec, &mut rng).unwrap();
        for j in 0..r {
            draws[j].push(s.lambda[j]);
        }
    }
    for j in 0..r {
        let b: f64 = state.mu.iter().map(|m| (m[j] - state.b0[j]).powi(2)).sum::<f64>() / hyper.range[j].powi(2);
        let p = 0.5 - 0.5 * k as f64;
        let logf = |t: f64| p * t - 0.5 * t.exp() - 0.5 * b * (-t).exp();
        let peak = (-60.0..60.0).step_by_f(0.01).map(logf).fold(f64::NEG_INFINITY, f64::max);
        let z0 = simpson(|t| (logf(t) - peak).exp(), -60.0, 60.0, 40_000);
        let z1 = simpson(|t| (logf(t) - peak + t).exp(), -60.0, 60.0, 40_000);
        within("lambda", mean(&draws[j]), z1 / z0, (variance(&draws[j]) / reps as f64).sqrt(), z)?;
        checked += 1;
    }

    // b0: N(mean of the K means, R_j² λ_j / K)
    let mut draws = vec![Vec::with_capacity(reps); r];
    for _ in 0..reps {
        let mut s = state.clone();
        sampler::step_b0(&mut s, &hyper, &spec, &mut rng).unwrap();
        for j in 0..r {
            draws[j].push(s.b0[j]);
        }
    }
    for j in 0..r {
        let want = state.mu.iter().map(|m| m[j]).sum::<f64>() / k as f64;
        let sd = (hyper.range[j].powi(2) * state.lambda[j] / k as f64).sqrt();
        within("b0", mean(&draws[j]), want, sd / (reps as f64).sqrt(), z)?;
        within("b0 var", variance(&draws[j]), sd * sd, sd * sd * (2.0 / reps as f64).sqrt(), z)?;
        checked += 2;
    }

    // e0: stationary mean of the Metropolis chain against quadrature, with
    // batch-means standard error
    let mut s = state.clone();
    let mut chain = Vec::with_capacity(reps * 10);
    for _ in 0..reps * 10 {
        sampler::step_e0_mh(&mut s, &spec, &mut rng).unwrap();
        chain.push(s.e0);
    }
    let logf = |t: f64| e0_log_target(t.exp(), &state.log_eta, 10.0) + t;
    let peak = (-30.0..5.0).step_by_f(0.001).map(logf).fold(f64::NEG_INFINITY, f64::max);
    let z0 = simpson(|t| (logf(t) - peak).exp(), -30.0, 5.0, 40_000);
    let z1 = simpson(|t| (logf(t) - peak + t).exp(), -30.0, 5.0, 40_000);
    let batches: Vec<f64> = chain.chunks(chain.len() / 50).map(mean).collect();
    within("e0", mean(&chain), z1 / z0, (variance(&batches) / batches.len() as f64).sqrt(), z)?;
    checked += 1;

    Ok(format!("{checked} moments within {z} s.e. ({reps} draws each)"))
}

trait StepBy {
    fn step_by_f(self, h: f64) -> Box<dyn Iterator<Item = f64>>;
}

impl StepBy for std::ops::Range<f64> {
    fn step_by_f(self, h: f64) -> Box<dyn Iterator<Item = f64>> {
        let n = ((self.end - self.start) / h) as usize;
        Box::new((0..=n).map(move |i| self.start + i as f64 * h))
    }
}

fn complete_loglik(state: &MixtureState, data: &Dataset) -> f64 {
    (0..data.n())
        .map(|i| {
            let k = state.alloc[i];
            state.log_eta[k] + mvn_logpdf_precision(data.row(i), &state.mu[k], &state.precision[k]).unwrap()
        })
        .sum()
}

fn mixture_loglik(state: &MixtureState, data: &Dataset) -> f64 {
    (0..data.n())
        .map(|i| {
            let terms: Vec<f64> = (0..state.k())
                .map(|k| {
                    state.log_eta[k] + mvn_logpdf_precision(data.row(i), &state.mu[k], &state.precision[k]).unwrap()
                })
                .collect();
            sparsemix::randkit::log_sum_exp(&terms)
        })
        .sum()
}

/// Relabelling random states leaves the complete-data likelihood bit-for-bit
/// unchanged and the mixture likelihood unchanged to rounding.
pub fn permutation_invariance(states: usize, seed: u64) -> Outcome {
    let mut rng = RngStream::new(seed, 0);
    let mut worst: f64 = 0.0;
    for t in 0..states {
        let r = 1 + t % 3;
        let k = 2 + t % 5;
        let data = random_dataset(30, r, 3, &mut rng);
        let hyper = derive_hyper(&data).unwrap();
        let spec = PriorSpec::standard(k);
        let s = burned_state(&data, &hyper, &spec, &mut rng);
        let before = complete_loglik(&s, &data);
        let mix_before = mixture_loglik(&s, &data);
        let rho = random_permutation(k, &mut rng);
        let mut p = s.clone();
        apply_permutation(&mut p, &rho);
        p.validate().map_err(|e| e.to_string())?;
        for i in 0..data.n() {
            if p.mu[p.alloc[i]] != s.mu[s.alloc[i]] || p.precision[p.alloc[i]] != s.precision[s.alloc[i]] {
                return Err(format!("state {t}: observation {i} changed parameters"));
            }
        }
        let after = complete_loglik(&p, &data);
        if before != after {
            return Err(format!("state {t}: complete-data log-likelihood {before} → {after}"));
        }
        let rel = ((mixture_loglik(&p, &data) - mix_before) / mix_before).abs();
        worst = worst.max(rel);
        if rel > 1e-12 {
            return Err(format!("state {t}: mixture log-likelihood moved by {rel:.2e}"));
        }
    }
    Ok(format!("{states} states; largest relative mixture change {worst:.1e}"))
}

/// Anisotropic Gaussian clouds in the plane with random orientation.
fn random_cloud(k: usize, per: usize, rng: &mut RngStream) -> (Vec<f64>, Vec<usize>) {
    let mut values = Vec::with_capacity(k * per * 2);
    let mut labels = Vec::with_capacity(k * per);
    for c in 0..k {
        let angle = std::f64::consts::PI * rng.uniform();
        let (sa, ca) = angle.sin_cos();
        let long = 1.0 + 4.0 * rng.uniform();
        let cx = 8.0 * standard_normal(rng);
        let cy = 8.0 * standard_normal(rng);
        for _ in 0..per {
            let u = long * standard_normal(rng);
            let v = standard_normal(rng);
            values.push(cx + ca * u - sa * v);
            values.push(cy + sa * u + ca * v);
            labels.push(c);
        }
    }
    (values, labels)
}

/// Records, for random point clouds, whether the Mahalanobis K-centroids
/// objective trace is non-increasing and whether the run converged within
/// the iteration cap. Lloyd traces are checked as a control.
pub fn kcentroids_monotone(clouds: usize, seed: u64) -> Outcome {
    let mut rng = RngStream::new(seed, 0);
    let mut monotone = 0;
    let mut converged = 0;
    let mut lloyd_ok = 0;
    for t in 0..clouds {
        let k = 2 + t % 3;
        let (values, _) = random_cloud(k, 40, &mut rng);
        let rows = Rows::new(&values, 2).unwrap();
        let maha = cluster::kcentroids(rows, k, Distance::Mahalanobis, 5, &mut rng).map_err(|e| e.to_string())?;
        let tol = |a: f64| 1e-9 * a.abs().max(1.0);
        if maha.trace.windows(2).all(|w| w[1] <= w[0] + tol(w[0])) {
            monotone += 1;
        }
        if maha.trace.len() <= cluster::MAX_ITERATIONS + 1 {
            converged += 1;
        }
        let eu = cluster::kcentroids(rows, k, Distance::Euclidean, 5, &mut rng).map_err(|e| e.to_string())?;
        if eu.trace.windows(2).all(|w| w[1] <= w[0] + tol(w[0])) {
            lloyd_ok += 1;
        }
    }
    let detail = format!(
        "Mahalanobis objective non-increasing on {monotone}/{clouds}, terminated within cap on {converged}/{clouds}; Lloyd non-increasing on {lloyd_ok}/{clouds}"
    );
    if monotone == clouds && converged == clouds && lloyd_ok == clouds {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Builds an archive whose non-empty components sit at well-separated
/// locations under random labels, identifies it, and maps every retained
/// iteration back through its `ρ` to the original draw.
pub fn relabel_round_trip(iterations: usize, seed: u64) -> Outcome {
    let (k, r, n, k0) = (6usize, 2usize, 12usize, 3usize);
    let mut rng = RngStream::new(seed, 0);
    let hyper = derive_hyper(&random_dataset(n, r, 2, &mut rng)).unwrap();
    let spec = PriorSpec::standard(k);
    let config = ChainConfig { burn_in: 0, iterations, store_sigma: true, store_allocations: true, seed };
    let mut archive = ChainArchive::new("synthetic", n, spec, hyper.clone(), config).unwrap();
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    for _ in 0..iterations {
        let slots = random_permutation(k, &mut rng);
        let mut eta = vec![1e-6; k];
        let mut mu = vec![0.0; k * r];
        let mut counts = vec![0usize; k];
        let mut sigma = vec![0.0; k * r * r];
        for c in 0..k {
            let base = if c < k0 { centers[c] } else { [50.0, 50.0] };
            for j in 0..r {
                mu[slots[c] * r + j] = base[j] + 0.3 * standard_normal(&mut rng);
            }
            for j in 0..r {
                sigma[slots[c] * r * r + j * r + j] = 1.0 + rng.uniform();
            }
        }
        let mut alloc = vec![0usize; n];
        for (i, a) in alloc.iter_mut().enumerate() {
            *a = slots[i % k0];
            counts[*a] += 1;
        }
        for c in 0..k0 {
            eta[slots[c]] = 0.3 + 0.01 * rng.uniform();
        }
        let lam = vec![1.0; r];
        archive.push_draw(&eta, &mu, &counts, &lam, &hyper.median, 0.1, Some(&sigma), Some(&alloc));
    }
    let id = identify(&archive, Distance::Mahalanobis, seed).map_err(|e| e.to_string())?.draws;
    if id.k0_hat != k0 {
        return Err(format!("K̂0 = {} instead of {k0}", id.k0_hat));
    }
    for (pos, &m) in id.iterations.iter().enumerate() {
        let nonempty: Vec<usize> = (0..k).filter(|&c| archive.counts_row(m)[c] > 0).collect();
        let rho = id
            .permutations
            .iter()
            .find(|(it, _)| *it == m)
            .and_then(|(_, p)| p.clone())
            .ok_or_else(|| format!("iteration {m} retained without ρ"))?;
        for (j, &orig) in nonempty.iter().enumerate() {
            let label = rho[j];
            let back = &id.mu[(pos * k0 + label) * r..(pos * k0 + label + 1) * r];
            if back != archive.mu_of(m, orig) || id.eta[pos * k0 + label] != archive.eta_row(m)[orig] {
                return Err(format!("iteration {m}: component {orig} not reproduced"));
            }
            let rr = r * r;
            let s_back = &id.sigma.as_ref().unwrap()[(pos * k0 + label) * rr..(pos * k0 + label + 1) * rr];
            if s_back != archive.sigma_of(m, orig).unwrap() {
                return Err(format!("iteration {m}: covariance {orig} not reproduced"));
            }
        }
        let a_back = &id.alloc.as_ref().unwrap()[pos * n..(pos + 1) * n];
        for (i, &s) in archive.alloc_row(m).unwrap().iter().enumerate() {
            let j = nonempty.iter().position(|&c| c == s as usize).unwrap();
            if a_back[i] as usize != rho[j] {
                return Err(format!("iteration {m}: allocation {i} not reproduced"));
            }
        }
    }
    Ok(format!("{} of {iterations} iterations retained and reproduced exactly (M0ρ = {})", id.len(), id.m0_rho))
}

/// Exhaustive matching and the assignment solver agree on random label
/// pairs with up to six labels on each side.
pub fn mcr_oracle(instances: usize, seed: u64) -> Outcome {
    let mut rng = RngStream::new(seed, 0);
    for t in 0..instances {
        let n = 10 + (rng.uniform() * 60.0) as usize;
        let ke = 1 + (rng.uniform() * 6.0) as usize;
        let kt = 1 + (rng.uniform() * 6.0) as usize;
        let est: Vec<usize> = (0..n).map(|_| (rng.uniform() * ke as f64) as usize).collect();
        let truth: Vec<i64> = (0..n).map(|_| (rng.uniform() * kt as f64) as i64 + 1).collect();
        let a = mcr_exhaustive(&est, &truth);
        let b = mcr_assignment(&est, &truth);
        if (a - b).abs() > 1e-12 {
            return Err(format!("instance {t}: exhaustive {a} vs assignment {b}"));
        }
        let naive = est.iter().zip(&truth).filter(|(e, t)| **e as i64 + 1 != **t).count() as f64 / n as f64;
        if a > naive + 1e-12 {
            return Err(format!("instance {t}: optimal {a} above identity matching {naive}"));
        }
    }
    Ok(format!("{instances} instances agree"))
}

/// Compact versions of the randkit moment oracles: GIG mean by quadrature,
/// Wishart mean and variance in closed form, Dirichlet means.
pub fn moment_oracles(draws: usize, seed: u64) -> Outcome {
    let mut rng = RngStream::new(seed, 0);
    let z = 3.0;
    let mut checked = 0;
    for &(p, a, b) in &[(-5.0, 1.0, 10.0), (-0.5, 0.1, 0.1), (0.5, 10.0, 1.0), (5.0, 1.0, 1.0)] {
        let xs: Vec<f64> = (0..draws).map(|_| sparsemix::randkit::gig_sample(p, a, b, &mut rng).unwrap()).collect();
        let logf = |t: f64| p * t - 0.5 * (a * t.exp() + b * (-t).exp());
        let peak = (-40.0..40.0).step_by_f(0.01).map(logf).fold(f64::NEG_INFINITY, f64::max);
        let z0 = simpson(|t| (logf(t) - peak).exp(), -40.0, 40.0, 40_000);
        let z1 = simpson(|t| (logf(t) - peak + t).exp(), -40.0, 40.0, 40_000);
        within(&format!("GIG({p},{a},{b})"), mean(&xs), z1 / z0, (variance(&xs) / draws as f64).sqrt(), z)?;
        checked += 1;
    }
    // W(α, C) in shape–rate form: E = α C⁻¹, Var(W_ij) = α (Ψ_ij² + Ψ_ii Ψ_jj) / 2 with Ψ = C⁻¹
    let shape = 4.0;
    let rate = SpdMatrix::identity(2);
    let ws: Vec<DMatrix<f64>> = (0..draws).map(|_| wishart_sample(shape, &rate, &mut rng).unwrap().matrix()).collect();
    for (p, q) in [(0, 0), (0, 1), (1, 1)] {
        let xs: Vec<f64> = ws.iter().map(|w| w[(p, q)]).collect();
        let want = if p == q { shape } else { 0.0 };
        let var = shape * (if p == q { 1.0 } else { 0.5 });
        within("Wishart mean", mean(&xs), want, (var / draws as f64).sqrt(), z)?;
        within("Wishart var", variance(&xs), var, var * (10.0 / draws as f64).sqrt(), z)?;
        checked += 2;
    }
    let alpha = [0.5, 1.0, 3.5];
    let tot: f64 = alpha.iter().sum();
    let ds: Vec<Vec<f64>> =
        (0..draws).map(|_| sparsemix::randkit::dirichlet_sample(&alpha, &mut rng).unwrap()).collect();
    for (j, &aj) in alpha.iter().enumerate() {
        let xs: Vec<f64> = ds.iter().map(|d| d[j]).collect();
        let m = aj / tot;
        within("Dirichlet", mean(&xs), m, (m * (1.0 - m) / (tot + 1.0) / draws as f64).sqrt(), z)?;
        checked += 1;
    }
    Ok(format!("{checked} moments within {z} s.e. ({draws} draws each)"))
}
