use super::{BaseLearner, BatchOrigin};
use crate::diffevo::{DeConfig, Population};
use crate::error::{Error, Result};
use crate::neural_linear::Demonstration;
use crate::rng::Stream;

/// Differential evolution wrapped as a reuse-loop learner.
///
/// Each `explore` call advances one agent; every `np` calls complete a
/// generation, committing staged replacements. A source batch arms an
/// injected base point consumed by the next agent step, leaving the random
/// stream untouched, so runs with and without injection explore identically.
pub struct DeLearner<F: FnMut(&[f64]) -> f64> {
    config: DeConfig,
    eval: F,
    population: Option<Population>,
    cursor: usize,
    pending_inject: Option<Vec<f64>>,
}

impl<F: FnMut(&[f64]) -> f64> DeLearner<F> {
    pub fn new(config: DeConfig, eval: F) -> Result<Self> {
        config.validate()?;
        Ok(DeLearner {
            config,
            eval,
            population: None,
            cursor: 0,
            pending_inject: None,
        })
    }

    /// Best point and fitness so far; `None` before initialization.
    pub fn best(&self) -> Option<(Vec<f64>, f64)> {
        self.population.as_ref().map(|p| {
            let (x, y) = p.best();
            (x.to_vec(), y)
        })
    }

    pub fn population(&self) -> Option<&Population> {
        self.population.as_ref()
    }

    /// Exploration steps taken so far, excluding initialization.
    pub fn evaluations(&self) -> usize {
        self.cursor
    }
}

impl<F: FnMut(&[f64]) -> f64> BaseLearner for DeLearner<F> {
    fn input_dim(&self) -> usize {
        self.config.dim()
    }

    fn initial_demonstrations(&mut self, rng: &mut Stream) -> Result<Vec<Demonstration>> {
        let (pop, demos) = Population::init(self.config.clone(), &mut self.eval, rng)?;
        self.population = Some(pop);
        self.cursor = 0;
        Ok(demos)
    }

    fn explore(&mut self, rng: &mut Stream) -> Result<Demonstration> {
        let np = self.config.np;
        let pop = self
            .population
            .as_mut()
            .ok_or_else(|| Error::InvalidConfig("population not initialized".into()))?;
        let agent = self.cursor % np;
        if agent == 0 {
            pop.begin_generation();
        }
        let inject = self.pending_inject.take();
        let demo = pop.step_agent(agent, inject.as_deref(), &mut self.eval, rng)?;
        self.cursor += 1;
        if self.cursor % np == 0 {
            pop.commit_generation();
        }
        Ok(demo)
    }

    fn train_on(&mut self, batch: &[Demonstration], origin: BatchOrigin) {
        // Target batches echo the learner's own trials, already staged by
        // `explore`; only source experience arms an injection.
        if let BatchOrigin::Source(_) = origin {
            if let Some(best) = batch.iter().min_by(|a, b| a.y.total_cmp(&b.y)) {
                self.pending_inject = Some(best.x.clone());
            }
        }
    }

    fn episode_metric(&self) -> f64 {
        self.population
            .as_ref()
            .map_or(f64::INFINITY, |p| p.best().1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffevo::{run_de, StopCondition};
    use crate::rng::substream;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn config() -> DeConfig {
        DeConfig::new(6, 0.8, 0.6, vec![(-3.0, 3.0); 4]).unwrap()
    }

    #[test]
    fn explore_before_init_errors() {
        let mut learner = DeLearner::new(config(), |x: &[f64]| sphere(x)).unwrap();
        let mut rng = substream(1, 1);
        assert!(learner.explore(&mut rng).is_err());
        assert_eq!(learner.episode_metric(), f64::INFINITY);
        assert!(learner.best().is_none());
    }

    #[test]
    fn agent_steps_match_generation_driver() {
        let seed = 42;
        let mut rng_a = substream(seed, 1);
        let plain = run_de(
            config(),
            StopCondition {
                max_generations: 5,
                target_fitness: f64::NEG_INFINITY,
            },
            &mut |x: &[f64]| sphere(x),
            &mut rng_a,
        )
        .unwrap();

        let mut learner = DeLearner::new(config(), |x: &[f64]| sphere(x)).unwrap();
        let mut rng_b = substream(seed, 1);
        let init = learner.initial_demonstrations(&mut rng_b).unwrap();
        assert_eq!(init.len(), 6);
        let mut metrics = Vec::new();
        for _ in 0..5 {
            for _ in 0..6 {
                learner.explore(&mut rng_b).unwrap();
            }
            metrics.push(learner.episode_metric());
        }
        for (gen, m) in plain.history.iter().zip(&metrics) {
            assert_eq!(gen.best_fitness.to_bits(), m.to_bits());
        }
        let (bx, by) = learner.best().unwrap();
        let (px, py) = plain.population.best();
        assert_eq!(by.to_bits(), py.to_bits());
        assert_eq!(bx, px);
    }

    #[test]
    fn injection_arms_exactly_one_step() {
        let mut learner = DeLearner::new(config(), |x: &[f64]| sphere(x)).unwrap();
        let mut rng = substream(7, 1);
        learner.initial_demonstrations(&mut rng).unwrap();

        // A source batch with an off-population optimum. The next explore
        // uses it as mutation base; with cr=1 semantics we cannot force the
        // whole point through, but the stream parity is what matters here.
        let batch = [
            Demonstration::new(vec![0.0; 4], 0.0).unwrap(),
            Demonstration::new(vec![1.0; 4], 4.0).unwrap(),
        ];
        learner.train_on(&batch, BatchOrigin::Source(0));

        let mut twin = DeLearner::new(config(), |x: &[f64]| sphere(x)).unwrap();
        let mut rng_t = substream(7, 1);
        twin.initial_demonstrations(&mut rng_t).unwrap();

        let d_inj = learner.explore(&mut rng).unwrap();
        let d_plain = twin.explore(&mut rng_t).unwrap();
        // Same stream consumption, different trial because the base differs.
        assert_ne!(d_inj.x, d_plain.x);

        // Second step: injection is spent, both learners see the same base
        // draw, but their populations may already differ via staging. Drive
        // both one more full generation and confirm stream alignment by
        // checking the twin of the twin.
        let mut twin2 = DeLearner::new(config(), |x: &[f64]| sphere(x)).unwrap();
        let mut rng_t2 = substream(7, 1);
        twin2.initial_demonstrations(&mut rng_t2).unwrap();
        twin2.explore(&mut rng_t2).unwrap();
        for _ in 0..5 {
            let a = twin.explore(&mut rng_t).unwrap();
            let b = twin2.explore(&mut rng_t2).unwrap();
            assert_eq!(a.x, b.x);
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
    }

    #[test]
    fn target_batches_are_inert() {
        let mut learner = DeLearner::new(config(), |x: &[f64]| sphere(x)).unwrap();
        let mut rng = substream(9, 1);
        learner.initial_demonstrations(&mut rng).unwrap();
        let demo = Demonstration::new(vec![0.0; 4], 0.0).unwrap();
        learner.train_on(std::slice::from_ref(&demo), BatchOrigin::Target);

        let mut twin = DeLearner::new(config(), |x: &[f64]| sphere(x)).unwrap();
        let mut rng_t = substream(9, 1);
        twin.initial_demonstrations(&mut rng_t).unwrap();

        let a = learner.explore(&mut rng).unwrap();
        let b = twin.explore(&mut rng_t).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn source_batch_picks_lowest_value_point() {
        let mut learner = DeLearner::new(config(), |x: &[f64]| sphere(x)).unwrap();
        let batch = [
            Demonstration::new(vec![2.0; 4], 16.0).unwrap(),
            Demonstration::new(vec![0.5; 4], 1.0).unwrap(),
            Demonstration::new(vec![1.0; 4], 4.0).unwrap(),
        ];
        learner.train_on(&batch, BatchOrigin::Source(2));
        assert_eq!(learner.pending_inject.as_deref(), Some(&[0.5; 4][..]));
    }
}
