use crate::bers::{BaseLearner, BatchOrigin};
use crate::error::Result;
use crate::neural_linear::Demonstration;
use crate::rng::Stream;

use super::{encode_sa, ExplorationPolicy, State, SupplyChainEnv, ENCODED_DIM};

/// The supply-chain task wrapped as a reuse-loop learner.
///
/// Exploration follows a fixed stochastic policy; its purpose is generating
/// target-task transitions for the shared model, whose source weighting is
/// the experiment's real output. Training batches are therefore inert here:
/// a random policy has nothing to update.
pub struct SupplyLearner {
    env: SupplyChainEnv,
    policy: ExplorationPolicy,
    state: State,
    step_in_episode: usize,
    running_return: f64,
    last_episode_return: Option<f64>,
    completed: usize,
    return_sum: f64,
}

impl SupplyLearner {
    pub fn new(env: SupplyChainEnv, policy: ExplorationPolicy) -> Self {
        let state = env.initial_state();
        SupplyLearner {
            env,
            policy,
            state,
            step_in_episode: 0,
            running_return: 0.0,
            last_episode_return: None,
            completed: 0,
            return_sum: 0.0,
        }
    }

    pub fn env(&self) -> &SupplyChainEnv {
        &self.env
    }

    pub fn completed_episodes(&self) -> usize {
        self.completed
    }

    /// Mean undiscounted return over completed environment episodes.
    pub fn mean_return(&self) -> Option<f64> {
        (self.completed > 0).then(|| self.return_sum / self.completed as f64)
    }
}

impl BaseLearner for SupplyLearner {
    fn input_dim(&self) -> usize {
        ENCODED_DIM
    }

    fn explore(&mut self, rng: &mut Stream) -> Result<Demonstration> {
        if self.step_in_episode == 0 {
            self.state = self.env.initial_state();
            self.running_return = 0.0;
        }
        let action = self.policy.sample_action(&self.env, rng);
        let (next, info) = self.env.step(&self.state, &action, rng)?;
        let demo = Demonstration::new(encode_sa(&self.state, &action, &next), info.reward)?;
        self.running_return += info.reward;
        self.state = next;
        self.step_in_episode += 1;
        if self.step_in_episode == self.env.config().horizon {
            self.last_episode_return = Some(self.running_return);
            self.return_sum += self.running_return;
            self.completed += 1;
            self.step_in_episode = 0;
        }
        Ok(demo)
    }

    fn train_on(&mut self, _batch: &[Demonstration], _origin: BatchOrigin) {}

    /// Last completed episode's undiscounted return; before the first
    /// completion, the return accumulated so far.
    fn episode_metric(&self) -> f64 {
        self.last_episode_return.unwrap_or(self.running_return)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::supply_chain::{builtin_scenarios, SupplyConfig};

    fn short_env(horizon: usize) -> SupplyChainEnv {
        let (_, target) = builtin_scenarios();
        let config = SupplyConfig {
            horizon,
            ..SupplyConfig::default()
        };
        SupplyChainEnv::new(target, config).unwrap()
    }

    #[test]
    fn episodes_wrap_at_the_horizon() {
        let mut learner = SupplyLearner::new(short_env(5), ExplorationPolicy::default());
        let mut rng = substream(3, 1);
        assert_eq!(learner.completed_episodes(), 0);
        let mut manual = 0.0;
        for _ in 0..5 {
            let d = learner.explore(&mut rng).unwrap();
            manual += d.y;
        }
        assert_eq!(learner.completed_episodes(), 1);
        assert!((learner.episode_metric() - manual).abs() < 1e-12);
        assert_eq!(learner.mean_return(), Some(learner.episode_metric()));

        // Next episode starts from the initial state again.
        let before = learner.episode_metric();
        learner.explore(&mut rng).unwrap();
        assert_eq!(learner.episode_metric(), before);
        for _ in 0..4 {
            learner.explore(&mut rng).unwrap();
        }
        assert_eq!(learner.completed_episodes(), 2);
    }

    #[test]
    fn partial_episode_reports_running_return() {
        let mut learner = SupplyLearner::new(short_env(10), ExplorationPolicy::default());
        let mut rng = substream(4, 1);
        let mut acc = 0.0;
        for _ in 0..3 {
            acc += learner.explore(&mut rng).unwrap().y;
            assert!((learner.episode_metric() - acc).abs() < 1e-12);
        }
        assert_eq!(learner.mean_return(), None);
    }

    #[test]
    fn demonstrations_have_the_encoded_width() {
        let mut learner = SupplyLearner::new(short_env(5), ExplorationPolicy::default());
        let mut rng = substream(5, 1);
        let d = learner.explore(&mut rng).unwrap();
        assert_eq!(d.x.len(), ENCODED_DIM);
        assert_eq!(learner.input_dim(), ENCODED_DIM);
    }

    #[test]
    fn training_batches_do_not_disturb_exploration() {
        let mut a = SupplyLearner::new(short_env(6), ExplorationPolicy::default());
        let mut b = SupplyLearner::new(short_env(6), ExplorationPolicy::default());
        let mut rng_a = substream(6, 1);
        let mut rng_b = substream(6, 1);
        a.explore(&mut rng_a).unwrap();
        b.explore(&mut rng_b).unwrap();
        let demo = Demonstration::new(vec![0.0; ENCODED_DIM], 1.0).unwrap();
        a.train_on(std::slice::from_ref(&demo), BatchOrigin::Source(0));
        for _ in 0..5 {
            let da = a.explore(&mut rng_a).unwrap();
            let db = b.explore(&mut rng_b).unwrap();
            assert_eq!(da.x, db.x);
            assert_eq!(da.y.to_bits(), db.y.to_bits());
        }
    }
}
