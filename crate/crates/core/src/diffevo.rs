//! Differential evolution (rand/1/bin) with an optional per-agent base
//! injection hook, which lets a caller substitute the mutation base point for
//! chosen agents without disturbing the random stream: donor indices are
//! always drawn first and the injected point then replaces the drawn base.
//!
//! Replacements are staged during a generation and committed at its end, so
//! every trial in a generation is built against the previous generation's
//! points. Every objective evaluation, including the initial population and
//! rejected trials, is reported as a demonstration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural_linear::Demonstration;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    /// Population size; at least 4 so donor indices can be distinct.
    pub np: usize,
    /// Crossover rate in [0, 1].
    pub cr: f64,
    /// Differential weight in [0, 2].
    pub f: f64,
    /// Inclusive per-dimension search box.
    pub bounds: Vec<(f64, f64)>,
}

impl DeConfig {
    pub fn new(np: usize, cr: f64, f: f64, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let config = DeConfig { np, cr, f, bounds };
        config.validate()?;
        Ok(config)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.np < 4 {
            return Err(Error::PopulationTooSmall { np: self.np });
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::InvalidConfig(format!(
                "crossover rate {} outside [0, 1]",
                self.cr
            )));
        }
        if !(0.0..=2.0).contains(&self.f) {
            return Err(Error::InvalidConfig(format!(
                "differential weight {} outside [0, 2]",
                self.f
            )));
        }
        if self.bounds.is_empty() {
            return Err(Error::InvalidConfig("bounds are empty".into()));
        }
        for &(lo, hi) in &self.bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidConfig(format!("invalid bound ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    config: DeConfig,
    points: Vec<Vec<f64>>,
    fitness: Vec<f64>,
    staged: Vec<Option<(Vec<f64>, f64)>>,
}

impl Population {
    /// Sample the initial population uniformly inside the bounds, agent by
    /// agent, and evaluate every member. One demonstration per member.
    pub fn init(
        config: DeConfig,
        eval: &mut impl FnMut(&[f64]) -> f64,
        rng: &mut Stream,
    ) -> Result<(Population, Vec<Demonstration>)> {
        config.validate()?;
        let mut points = Vec::with_capacity(config.np);
        let mut fitness = Vec::with_capacity(config.np);
        let mut demos = Vec::with_capacity(config.np);
        for _ in 0..config.np {
            let x: Vec<f64> = config
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect();
            let y = eval(&x);
            demos.push(Demonstration::new(x.clone(), y)?);
            points.push(x);
            fitness.push(y);
        }
        let staged = vec![None; config.np];
        Ok((
            Population {
                config,
                points,
                fitness,
                staged,
            },
            demos,
        ))
    }

    pub fn config(&self) -> &DeConfig {
        &self.config
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    /// Best member by fitness; ties break toward the lowest index.
    pub fn best(&self) -> (&[f64], f64) {
        let mut k = 0;
        for i in 1..self.fitness.len() {
            if self.fitness[i] < self.fitness[k] {
                k = i;
            }
        }
        (&self.points[k], self.fitness[k])
    }

    pub fn begin_generation(&mut self) {
        for s in self.staged.iter_mut() {
            *s = None;
        }
    }

    /// Run one agent's mutation, crossover, and selection. `base_override`
    /// replaces the drawn base point after the donor indices are drawn, so
    /// the random stream is identical with and without injection. The trial
    /// replaces the agent only at `commit_generation`.
    pub fn step_agent(
        &mut self,
        j: usize,
        base_override: Option<&[f64]>,
        eval: &mut impl FnMut(&[f64]) -> f64,
        rng: &mut Stream,
    ) -> Result<Demonstration> {
        let np = self.config.np;
        let dim = self.config.dim();
        if j >= np {
            return Err(Error::UnknownHead {
                index: j,
                count: np,
            });
        }
        if let Some(b) = base_override {
            if b.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: b.len(),
                });
            }
        }

        let mut draw_distinct = |used: &[usize]| loop {
            let k = rng.gen_range(0..np);
            if !used.contains(&k) {
                return k;
            }
        };
        let a = draw_distinct(&[j]);
        let b = draw_distinct(&[j, a]);
        let c = draw_distinct(&[j, a, b]);
        let base = base_override.unwrap_or(&self.points[a]);

        let forced = rng.gen_range(0..dim);
        let mut trial = Vec::with_capacity(dim);
        for i in 0..dim {
            let r: f64 = rng.gen();
            let v = if r < self.config.cr || i == forced {
                base[i] + self.config.f * (self.points[b][i] - self.points[c][i])
            } else {
                self.points[j][i]
            };
            let (lo, hi) = self.config.bounds[i];
            trial.push(v.clamp(lo, hi));
        }

        let y = eval(&trial);
        let demo = Demonstration::new(trial.clone(), y)?;
        if y <= self.fitness[j] {
            self.staged[j] = Some((trial, y));
        }
        Ok(demo)
    }

    pub fn commit_generation(&mut self) {
        for (j, slot) in self.staged.iter_mut().enumerate() {
            if let Some((x, y)) = slot.take() {
                self.points[j] = x;
                self.fitness[j] = y;
            }
        }
    }
}

/// One full generation: step every agent against the current points, then
/// commit the staged replacements. `inject` may supply a replacement mutation
/// base per agent. Returns one demonstration per agent.
pub fn de_generation(
    pop: &mut Population,
    mut inject: impl FnMut(usize) -> Option<Vec<f64>>,
    eval: &mut impl FnMut(&[f64]) -> f64,
    rng: &mut Stream,
) -> Result<Vec<Demonstration>> {
    pop.begin_generation();
    let mut demos = Vec::with_capacity(pop.config.np);
    for j in 0..pop.config.np {
        let base = inject(j);
        demos.push(pop.step_agent(j, base.as_deref(), eval, rng)?);
    }
    pop.commit_generation();
    Ok(demos)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCondition {
    pub max_generations: usize,
    /// Stop once the best fitness is at or below this, checked after each
    /// full generation.
    pub target_fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    /// Total objective evaluations so far, counting the initial population.
    pub evaluations: usize,
}

#[derive(Debug)]
pub struct DeRun {
    pub population: Population,
    pub history: Vec<GenerationRecord>,
    pub demonstrations: Vec<Demonstration>,
}

/// Plain differential evolution without injection.
pub fn run_de(
    config: DeConfig,
    stop: StopCondition,
    eval: &mut impl FnMut(&[f64]) -> f64,
    rng: &mut Stream,
) -> Result<DeRun> {
    let np = config.np;
    let (mut population, mut demonstrations) = Population::init(config, eval, rng)?;
    let mut history = Vec::new();
    for generation in 1..=stop.max_generations {
        demonstrations.extend(de_generation(&mut population, |_| None, eval, rng)?);
        history.push(GenerationRecord {
            generation,
            best_fitness: population.best().1,
            evaluations: np * (generation + 1),
        });
        if population.best().1 <= stop.target_fitness {
            break;
        }
    }
    Ok(DeRun {
        population,
        history,
        demonstrations,
    })
}
