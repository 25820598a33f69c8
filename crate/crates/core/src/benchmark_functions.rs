//! Shifted benchmark objectives on the box [-4, 4]^D with the output
//! transforms used by the optimizer and by model training.
//!
//! Two output scales exist on purpose: the optimizer minimizes a square-root
//! compression of the raw value (variance stabilization), and model training
//! additionally passes that through log(1 + y). Fitness thresholds quoted
//! elsewhere in the crate are on the optimizer scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DOMAIN_LO: f64 = -4.0;
pub const DOMAIN_HI: f64 = 4.0;
pub const DEFAULT_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Rosenbrock,
    Ackley,
    Sphere,
    Rastrigin,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::Rosenbrock,
        BenchmarkKind::Ackley,
        BenchmarkKind::Sphere,
        BenchmarkKind::Rastrigin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Rosenbrock => "rosenbrock",
            BenchmarkKind::Ackley => "ackley",
            BenchmarkKind::Sphere => "sphere",
            BenchmarkKind::Rastrigin => "rastrigin",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rosenbrock" => Ok(BenchmarkKind::Rosenbrock),
            "ackley" => Ok(BenchmarkKind::Ackley),
            "sphere" => Ok(BenchmarkKind::Sphere),
            "rastrigin" => Ok(BenchmarkKind::Rastrigin),
            other => Err(Error::Parse(format!("unknown benchmark '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkTask {
    pub kind: BenchmarkKind,
    pub dim: usize,
}

impl BenchmarkTask {
    pub fn new(kind: BenchmarkKind, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "benchmark dimension must be >= 2, got {dim}"
            )));
        }
        Ok(BenchmarkTask { kind, dim })
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(DOMAIN_LO, DOMAIN_HI); self.dim]
    }

    /// Location of the global minimum.
    pub fn optimum(&self) -> Vec<f64> {
        let v = match self.kind {
            BenchmarkKind::Rosenbrock => 1.0,
            BenchmarkKind::Ackley => 0.0,
            BenchmarkKind::Sphere | BenchmarkKind::Rastrigin => -2.0,
        };
        vec![v; self.dim]
    }

    /// Untransformed objective value; non-negative everywhere.
    pub fn evaluate_raw(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let d = self.dim as f64;
        Ok(match self.kind {
            BenchmarkKind::Rosenbrock => x
                .windows(2)
                .map(|w| {
                    let a = w[1] - w[0] * w[0];
                    let b = 1.0 - w[0];
                    100.0 * (a * a + b * b)
                })
                .sum(),
            BenchmarkKind::Ackley => {
                let q = x.iter().map(|v| v * v).sum::<f64>() / d;
                let c = x
                    .iter()
                    .map(|v| (2.0 * std::f64::consts::PI * v).cos())
                    .sum::<f64>()
                    / d;
                -20.0 * (-0.2 * q.sqrt()).exp() - c.exp() + 20.0 + std::f64::consts::E
            }
            BenchmarkKind::Sphere => x.iter().map(|v| (v + 2.0) * (v + 2.0)).sum(),
            BenchmarkKind::Rastrigin => {
                10.0 * d
                    + x.iter()
                        .map(|v| {
                            let s = v + 2.0;
                            s * s - 10.0 * (2.0 * std::f64::consts::PI * s).cos()
                        })
                        .sum::<f64>()
            }
        })
    }

    /// Optimizer-facing fitness: sqrt compression, with Rosenbrock further
    /// divided by 10 and Ackley left as is.
    pub fn evaluate_transformed(&self, x: &[f64]) -> Result<f64> {
        let y = self.evaluate_raw(x)?;
        Ok(match self.kind {
            BenchmarkKind::Rosenbrock => y.sqrt() / 10.0,
            BenchmarkKind::Ackley => y,
            BenchmarkKind::Sphere | BenchmarkKind::Rastrigin => y.sqrt(),
        })
    }
}

/// Extra compression applied on top of the optimizer scale when a value is
/// used as a neural-linear regression target.
pub fn model_target_transform(y: f64) -> Result<f64> {
    if y < 0.0 {
        return Err(Error::NegativeInput(y));
    }
    Ok((1.0 + y).ln())
}
