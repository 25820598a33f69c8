//! Oracles that recompute library quantities by independent routes:
//! numerical quadrature for the model evidence, exhaustive grid search for
//! the source-weighting program, and Monte-Carlo simulation for posterior
//! expectations. Deliberately brute-force; correctness over speed.

use bers_core::neural_linear::NigHead;
use bers_core::numerics::{cholesky, ln_gamma, Matrix};
use bers_core::rng::Stream;
use bers_core::source_weighting::QpInstance;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub const LN_2PI: f64 = 1.837877066409345483560659472811;

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn simpson_coeff(j: usize, n: usize) -> f64 {
    if j == 0 || j == n - 1 {
        1.0
    } else if j % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Log evidence of a one-feature Bayesian regression with unknown noise,
/// computed by direct two-dimensional Simpson quadrature over the weight and
/// the noise variance (integrated in log space). The only analytic inputs
/// are the prior densities themselves:
///
/// ```text
/// p(y) = integral N(y | phi w, s2 I) N(w | mu0, s2/lambda0)
///        InvGamma(s2 | alpha0, beta0) dw ds2
/// ```
///
/// The data/prior exponent collapses to the quadratic
/// `A - 2 B w + C w^2` with `A = y'y + lambda0 mu0^2`,
/// `B = phi'y + lambda0 mu0`, `C = phi'phi + lambda0`, so each inner grid
/// point is O(1). The inner grid tracks the conditional scale
/// `sqrt(s2 / C)` around the s2-independent mode `B / C`.
pub fn quadrature_log_evidence(
    mu0: f64,
    lambda0: f64,
    alpha0: f64,
    beta0: f64,
    phi: &[f64],
    y: &[f64],
) -> f64 {
    assert_eq!(phi.len(), y.len());
    let n = y.len() as f64;
    let a: f64 = y.iter().map(|v| v * v).sum::<f64>() + lambda0 * mu0 * mu0;
    let b: f64 = phi.iter().zip(y).map(|(p, v)| p * v).sum::<f64>() + lambda0 * mu0;
    let c: f64 = phi.iter().map(|p| p * p).sum::<f64>() + lambda0;
    let w_star = b / c;

    const NU: usize = 1001;
    const NW: usize = 1201;
    let (u_lo, u_hi) = (-12.0f64, 8.0f64);
    let hu = (u_hi - u_lo) / (NU - 1) as f64;

    let mut outer = Vec::with_capacity(NU);
    let mut inner = Vec::with_capacity(NW);
    for i in 0..NU {
        let u = u_lo + hu * i as f64;
        let s2 = u.exp();
        // Everything in the log integrand that does not involve w.
        let base =
            -(n / 2.0) * (LN_2PI + u) + 0.5 * (lambda0.ln() - LN_2PI - u) + alpha0 * beta0.ln()
                - ln_gamma(alpha0)
                - (alpha0 + 1.0) * u
                - beta0 / s2;
        let sw = (s2 / c).sqrt();
        let w_lo = w_star - 12.0 * sw;
        let hw = 24.0 * sw / (NW - 1) as f64;
        inner.clear();
        for j in 0..NW {
            let w = w_lo + hw * j as f64;
            let quad = (a - 2.0 * b * w + c * w * w) / (2.0 * s2);
            inner.push(base - quad + (simpson_coeff(j, NW) * hw / 3.0).ln());
        }
        // The extra `+ u` is the Jacobian of integrating over ln s2.
        outer.push(log_sum_exp(&inner) + u + (simpson_coeff(i, NU) * hu / 3.0).ln());
    }
    log_sum_exp(&outer)
}

/// Minimum of the quadratic-program objective over an exhaustive simplex
/// grid with the given step, three sources.
pub fn grid_search_simplex3(qp: &QpInstance, step: f64) -> f64 {
    assert_eq!(qp.n_sources(), 3);
    let k = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=k {
        for j in 0..=(k - i) {
            let a1 = i as f64 * step;
            let a2 = j as f64 * step;
            let a3 = (1.0 - a1 - a2).max(0.0);
            let v = qp.objective(&[a1, a2, a3]).unwrap();
            if v < best {
                best = v;
            }
        }
    }
    best
}

/// One draw from a head's posterior: `s2 ~ InvGamma(alpha, beta)` via the
/// reciprocal of a Gamma draw, then `w = mu + sqrt(s2) L^{-T} z` with
/// `Lambda = L L^T` and standard-normal `z`.
pub fn sample_head_weights(
    head: &NigHead,
    factor: &bers_core::numerics::CholeskyFactor,
    rng: &mut Stream,
) -> Vec<f64> {
    let g: f64 = Gamma::new(head.alpha(), 1.0).unwrap().sample(rng);
    let s2 = head.beta() / g;
    let z: Vec<f64> = (0..head.dim())
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v
        })
        .collect();
    let x = factor.solve_lower_transpose(&z);
    head.mu()
        .iter()
        .zip(&x)
        .map(|(m, v)| m + s2.sqrt() * v)
        .collect()
}

/// Monte-Carlo estimate (mean, standard error) of the expected squared
/// distance between the target's weight draw and the fixed convex mixture of
/// independent source weight draws.
pub fn mc_expected_distance(
    target: &NigHead,
    sources: &[&NigHead],
    weights: &[f64],
    n_samples: usize,
    rng: &mut Stream,
) -> (f64, f64) {
    let target_factor = cholesky(target.lambda()).unwrap();
    let source_factors: Vec<_> = sources
        .iter()
        .map(|s| cholesky(s.lambda()).unwrap())
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let wt = sample_head_weights(target, &target_factor, rng);
        let mut mix = vec![0.0; wt.len()];
        for ((src, factor), &ai) in sources.iter().zip(&source_factors).zip(weights) {
            let ws = sample_head_weights(src, factor, rng);
            for (m, v) in mix.iter_mut().zip(&ws) {
                *m += ai * v;
            }
        }
        let d2: f64 = wt.iter().zip(&mix).map(|(p, q)| (p - q) * (p - q)).sum();
        sum += d2;
        sum_sq += d2 * d2;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Symmetric positive-definite matrix with unit diagonal dominance bump.
pub fn random_spd(dim: usize, rng: &mut Stream) -> Matrix {
    use rand::Rng;
    let b = Matrix::from_rows(
        &(0..dim)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect::<Vec<Vec<f64>>>(),
    )
    .unwrap();
    let mut a = b.transpose().matmul(&b).unwrap();
    for i in 0..dim {
        a.set(i, i, a.get(i, i) + 0.5);
    }
    a
}
