use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, dot, ln_gamma, Matrix};

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Normal-inverse-gamma prior over regression weights and noise variance:
/// `w | s2 ~ N(mu0, s2 * Lambda0^{-1})`, `s2 ~ InvGamma(alpha0, beta0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NigPrior {
    pub mu0: Vec<f64>,
    pub lambda0: Matrix,
    pub alpha0: f64,
    pub beta0: f64,
}

impl NigPrior {
    /// Unit prior: zero mean, identity precision, alpha = beta = 1.
    pub fn standard(dim: usize) -> Self {
        NigPrior {
            mu0: vec![0.0; dim],
            lambda0: Matrix::identity(dim),
            alpha0: 1.0,
            beta0: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
}

/// Streaming sufficient statistics of a regression dataset:
/// `gram = Phi^T Phi`, `xty = Phi^T y`, `yty = y^T y`, and the row count.
#[derive(Debug, Clone)]
pub struct SuffStats {
    pub gram: Matrix,
    pub xty: Vec<f64>,
    pub yty: f64,
    pub n: usize,
}

impl SuffStats {
    pub fn zeros(dim: usize) -> Self {
        SuffStats {
            gram: Matrix::zeros(dim, dim),
            xty: vec![0.0; dim],
            yty: 0.0,
            n: 0,
        }
    }

    pub fn add_row(&mut self, phi: &[f64], y: f64) {
        self.gram.add_outer(phi, 1.0);
        for (t, &p) in self.xty.iter_mut().zip(phi) {
            *t += p * y;
        }
        self.yty += y * y;
        self.n += 1;
    }

    pub fn from_design(phi: &Matrix, y: &[f64]) -> Result<Self> {
        if phi.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: phi.rows(),
                got: y.len(),
            });
        }
        let mut s = SuffStats::zeros(phi.cols());
        for (i, &yi) in y.iter().enumerate() {
            s.add_row(phi.row(i), yi);
        }
        Ok(s)
    }
}

/// One task's normal-inverse-gamma regression head. Carries both the current
/// posterior parameters and a copy of the prior it was grown from, so the
/// posterior can be recomputed from scratch whenever the features move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NigHead {
    mu: Vec<f64>,
    lambda: Matrix,
    alpha: f64,
    beta: f64,
    prior: NigPrior,
}

impl NigHead {
    pub fn from_prior(prior: NigPrior) -> Self {
        NigHead {
            mu: prior.mu0.clone(),
            lambda: prior.lambda0.clone(),
            alpha: prior.alpha0,
            beta: prior.beta0,
            prior,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn prior(&self) -> &NigPrior {
        &self.prior
    }

    pub fn observation_count(&self) -> f64 {
        2.0 * (self.alpha - self.prior.alpha0)
    }

    /// Mean of the noise variance, `beta / (alpha - 1)`; requires alpha > 1.
    pub fn noise_variance_mean(&self) -> Result<f64> {
        if self.alpha <= 1.0 {
            return Err(Error::AlphaTooSmall { alpha: self.alpha });
        }
        Ok(self.beta / (self.alpha - 1.0))
    }

    /// Conjugate update with a design matrix of feature rows.
    pub fn update(&self, phi: &Matrix, y: &[f64]) -> Result<NigHead> {
        if phi.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: phi.cols(),
            });
        }
        self.update_from_stats(&SuffStats::from_design(phi, y)?)
    }

    /// Conjugate update from sufficient statistics. The current parameters act
    /// as the prior stage; the stored prior copy is preserved unchanged.
    pub fn update_from_stats(&self, stats: &SuffStats) -> Result<NigHead> {
        if stats.gram.rows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: stats.gram.rows(),
            });
        }
        if stats.n == 0 {
            return Ok(self.clone());
        }
        let lambda_n = self.lambda.add(&stats.gram)?;
        // rhs = Lambda * mu + Phi^T y
        let mut rhs = self.lambda.matvec(&self.mu)?;
        for (r, &t) in rhs.iter_mut().zip(&stats.xty) {
            *r += t;
        }
        let factor = cholesky(&lambda_n)?;
        let mu_n = factor.solve(&rhs);
        let alpha_n = self.alpha + stats.n as f64 / 2.0;
        let prior_quad = dot(&self.mu, &self.lambda.matvec(&self.mu)?);
        let post_quad = dot(&mu_n, &lambda_n.matvec(&mu_n)?);
        let beta_n = self.beta + 0.5 * (stats.yty + prior_quad - post_quad);
        if !(beta_n > 0.0) {
            return Err(Error::NonFinite("posterior beta"));
        }
        Ok(NigHead {
            mu: mu_n,
            lambda: lambda_n,
            alpha: alpha_n,
            beta: beta_n,
            prior: self.prior.clone(),
        })
    }

    /// Log marginal likelihood of `(phi, y)` under the current parameters as
    /// the prior stage:
    ///
    /// ```text
    /// -(n/2) ln 2pi + 1/2 ln|L| - 1/2 ln|L_n|
    ///   + a ln b - a_n ln b_n + ln G(a_n) - ln G(a)
    /// ```
    ///
    /// Zero observations give exactly 0.
    pub fn log_marginal_likelihood(&self, phi: &Matrix, y: &[f64]) -> Result<f64> {
        if y.is_empty() {
            return Ok(0.0);
        }
        let post = self.update(phi, y)?;
        let n = y.len() as f64;
        let ld0 = cholesky(&self.lambda)?.log_det();
        let ldn = cholesky(&post.lambda)?.log_det();
        Ok(
            -0.5 * n * LN_2PI + 0.5 * (ld0 - ldn) + self.alpha * self.beta.ln()
                - post.alpha * post.beta.ln()
                + ln_gamma(post.alpha)
                - ln_gamma(self.alpha),
        )
    }

    /// Trace of the posterior weight covariance factor `Lambda^{-1}`.
    pub fn covariance_trace(&self) -> Result<f64> {
        Ok(cholesky(&self.lambda)?.trace_inverse())
    }
}
