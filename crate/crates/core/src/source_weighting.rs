//! Simplex-constrained source weighting.
//!
//! Given posterior weight distributions for a target task and N source tasks,
//! find the convex combination of source weight vectors closest in expected
//! squared distance to the target's. Dropping the additive constant from the
//! target's own covariance, the problem is the quadratic program
//!
//! ```text
//! minimize  -mu_t' M a + 1/2 a' (M'M + diag(S)) a
//! subject to  a >= 0,  sum a = 1
//! ```
//!
//! where column i of `M` is source i's posterior mean and
//! `S_ii = E[sigma_i^2] tr(Lambda_i^{-1})` is the trace of source i's
//! posterior weight covariance. It is solved exactly with a primal active-set
//! method; `S > 0` makes the objective strictly convex, so the minimizer is
//! unique.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural_linear::NigHead;
use crate::numerics::{cholesky, dot, Matrix};

/// Tolerance for simplex membership checks on incoming weight vectors.
const SIMPLEX_TOL: f64 = 1e-9;
/// Multipliers more negative than this pull their index into the free set.
const MULTIPLIER_TOL: f64 = 1e-10;

/// A point on the probability simplex: entries `>= 0` summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceWeights {
    a: Vec<f64>,
}

impl SourceWeights {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::EmptySourceData);
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("source weights"));
        }
        if a.iter().any(|&v| v < -SIMPLEX_TOL) {
            return Err(Error::InvalidConfig(format!(
                "weight below zero: {:e}",
                a.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidConfig(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        let a = a.into_iter().map(|v| v.max(0.0)).collect();
        Ok(SourceWeights { a })
    }

    pub fn uniform(n: usize) -> Self {
        SourceWeights {
            a: vec![1.0 / n as f64; n.max(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    pub fn get(&self, i: usize) -> f64 {
        self.a[i]
    }
}

/// One weighting problem with its quadratic form cached.
#[derive(Debug, Clone)]
pub struct QpInstance {
    /// Feature-dim x N matrix whose columns are source posterior means.
    m: Matrix,
    /// Per-source posterior weight covariance traces (strictly positive).
    s: Vec<f64>,
    mu_target: Vec<f64>,
    /// `M'M + diag(S)`.
    q: Matrix,
    /// `M' mu_target`.
    c: Vec<f64>,
}

impl QpInstance {
    pub fn new(m: Matrix, s: Vec<f64>, mu_target: Vec<f64>) -> Result<Self> {
        let n = m.cols();
        if n == 0 {
            return Err(Error::EmptySourceData);
        }
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.len(),
            });
        }
        if mu_target.len() != m.rows() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                got: mu_target.len(),
            });
        }
        if s.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidConfig(
                "source covariance traces must be positive".into(),
            ));
        }
        let mut q = m.transpose().matmul(&m)?;
        for (i, &si) in s.iter().enumerate() {
            q.set(i, i, q.get(i, i) + si);
        }
        let mut c = vec![0.0; n];
        for (j, cj) in c.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..m.rows() {
                acc += m.get(r, j) * mu_target[r];
            }
            *cj = acc;
        }
        Ok(QpInstance {
            m,
            s,
            mu_target,
            q,
            c,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.c.len()
    }

    pub fn source_means(&self) -> &Matrix {
        &self.m
    }

    pub fn covariance_traces(&self) -> &[f64] {
        &self.s
    }

    pub fn target_mean(&self) -> &[f64] {
        &self.mu_target
    }

    /// `1/2 a'Qa - c'a`; differs from the expected squared distance only by a
    /// constant, so it orders candidate weightings identically.
    pub fn objective(&self, a: &[f64]) -> Result<f64> {
        let qa = self.q.matvec(a)?;
        Ok(0.5 * dot(a, &qa) - dot(&self.c, a))
    }

    fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let qa = self.q.matvec(a).expect("weight length fixed at build");
        qa.iter().zip(&self.c).map(|(x, y)| x - y).collect()
    }

    /// Max violation of the simplex KKT system at `a`: feasibility of the sum
    /// and sign constraints plus complementary slackness against the tightest
    /// multiplier estimate `nu = min_i (Qa - c)_i`.
    pub fn kkt_residual(&self, w: &SourceWeights) -> f64 {
        let a = w.as_slice();
        let g = self.gradient(a);
        let nu = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let sum_err = (a.iter().sum::<f64>() - 1.0).abs();
        let neg_err = a.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        let comp_err = a
            .iter()
            .zip(&g)
            .map(|(&ai, &gi)| ai * (gi - nu))
            .fold(0.0, f64::max);
        sum_err.max(neg_err).max(comp_err)
    }

    /// Solve from the uniform starting point.
    pub fn solve(&self) -> Result<SourceWeights> {
        self.solve_warm(&SourceWeights::uniform(self.n_sources()))
    }

    /// Solve starting from a previous solution's support. The result is the
    /// unique global minimizer either way; warm starting only saves pivots.
    pub fn solve_warm(&self, start: &SourceWeights) -> Result<SourceWeights> {
        let n = self.n_sources();
        if start.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: start.len(),
            });
        }
        let mut x = start.as_slice().to_vec();
        let mut free: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
        if !free.iter().any(|&b| b) {
            x = vec![1.0 / n as f64; n];
            free = vec![true; n];
        }

        let cap = 50 * n;
        for _ in 0..cap {
            let f: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
            let (af, nu) = self.equality_solve(&f)?;
            if af.iter().all(|&v| v >= -1e-12) {
                for v in x.iter_mut() {
                    *v = 0.0;
                }
                for (k, &i) in f.iter().enumerate() {
                    x[i] = af[k].max(0.0);
                }
                let g = self.gradient(&x);
                let mut worst = None;
                let mut worst_val = -MULTIPLIER_TOL;
                for (i, &gi) in g.iter().enumerate() {
                    if !free[i] && gi - nu < worst_val {
                        worst_val = gi - nu;
                        worst = Some(i);
                    }
                }
                match worst {
                    None => return SourceWeights::new(x),
                    Some(i) => free[i] = true,
                }
            } else {
                // Walk from the feasible x toward the candidate until the
                // first coordinate hits zero, then pin that coordinate.
                let mut t = 1.0;
                let mut blocker = None;
                for (k, &i) in f.iter().enumerate() {
                    if af[k] < 0.0 {
                        let ti = x[i] / (x[i] - af[k]);
                        if ti < t {
                            t = ti;
                            blocker = Some(i);
                        }
                    }
                }
                for (k, &i) in f.iter().enumerate() {
                    x[i] += t * (af[k] - x[i]);
                }
                let b = blocker.expect("negative candidate entry implies a blocker");
                x[b] = 0.0;
                free[b] = false;
            }
        }
        Err(Error::QpNoConvergence { iterations: cap })
    }

    /// Minimize over the free coordinates subject only to the sum constraint:
    /// `a_F = p + nu q` with `p = Q_FF^{-1} c_F`, `q = Q_FF^{-1} 1`, and the
    /// multiplier `nu = (1 - 1'p) / (1'q)`.
    fn equality_solve(&self, f: &[usize]) -> Result<(Vec<f64>, f64)> {
        let k = f.len();
        let mut qff = Matrix::zeros(k, k);
        for (a, &fa) in f.iter().enumerate() {
            for (b, &fb) in f.iter().enumerate() {
                qff.set(a, b, self.q.get(fa, fb));
            }
        }
        let ch = cholesky(&qff)?;
        let cf: Vec<f64> = f.iter().map(|&i| self.c[i]).collect();
        let p = ch.solve(&cf);
        let qv = ch.solve(&vec![1.0; k]);
        let nu = (1.0 - p.iter().sum::<f64>()) / qv.iter().sum::<f64>();
        let af = p.iter().zip(&qv).map(|(pi, qi)| pi + nu * qi).collect();
        Ok((af, nu))
    }
}

/// Build the weighting problem from fitted heads. Every source must be past
/// its prior (`alpha > 1`) so its noise mean exists.
pub fn build_qp(target: &NigHead, sources: &[&NigHead]) -> Result<QpInstance> {
    if sources.is_empty() {
        return Err(Error::EmptySourceData);
    }
    let d = target.dim();
    let mut m = Matrix::zeros(d, sources.len());
    let mut s = Vec::with_capacity(sources.len());
    for (j, src) in sources.iter().enumerate() {
        if src.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: src.dim(),
            });
        }
        for (r, &v) in src.mu().iter().enumerate() {
            m.set(r, j, v);
        }
        s.push(src.noise_variance_mean()? * src.covariance_trace()?);
    }
    QpInstance::new(m, s, target.mu().to_vec())
}

/// Expected squared distance between the target's weight vector and the
/// weighted source mixture, under independent posteriors:
/// `E[sigma_t^2] tr(Sigma_t) + sum_i a_i^2 E[sigma_i^2] tr(Sigma_i)
///  + ||mu_t - sum_i a_i mu_i||^2`.
pub fn expected_distance(target: &NigHead, sources: &[&NigHead], w: &SourceWeights) -> Result<f64> {
    if sources.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: sources.len(),
            got: w.len(),
        });
    }
    let mut total = target.noise_variance_mean()? * target.covariance_trace()?;
    let mut mix = vec![0.0; target.dim()];
    for (src, &ai) in sources.iter().zip(w.as_slice()) {
        if src.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: src.dim(),
            });
        }
        total += ai * ai * src.noise_variance_mean()? * src.covariance_trace()?;
        for (m, &v) in mix.iter_mut().zip(src.mu()) {
            *m += ai * v;
        }
    }
    for (m, &t) in mix.iter_mut().zip(target.mu()) {
        *m -= t;
    }
    Ok(total + dot(&mix, &mix))
}
