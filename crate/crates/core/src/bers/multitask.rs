use rand::Rng;

use super::{
    make_batch, sample_from_weights, BaseLearner, BatchOrigin, BatchStrategy, Objective,
    ReuseSchedule, RunTrace, TraceRow,
};
use crate::error::{Error, Result};
use crate::neural_linear::{Dataset, MultiHeadModel};
use crate::rng::{substream, Stream};
use crate::source_weighting::{build_qp, SourceWeights};

/// Substream ids 1..3 belong to the single-task loop; each task's private
/// environment stream starts here.
const STREAM_TASK_ENV_BASE: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub schedule: ReuseSchedule,
    pub batch: BatchStrategy,
    pub objective: Objective,
    /// Gradient batches for the one shared refinement after each episode.
    pub refine_batches: usize,
    pub refine_batch_size: usize,
    pub seed: u64,
}

/// One trace per task; `traces[k].weights` range over the other tasks in
/// index order with task `k` skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskRun {
    pub traces: Vec<RunTrace>,
}

/// All-tasks-learn-together variant: every task is both a target and a
/// source for everyone else. Tasks share one model (head `k` per task `k`)
/// and one reuse and training stream, but explore on private environment
/// streams, so adding a task never perturbs another task's exploration.
///
/// Each episode runs every task's steps sequentially against the other
/// tasks' accumulated datasets, then refines the shared model once and
/// re-solves each task's source weighting (warm-started). A task's weights
/// stay uniform until its first solvable weighting, which needs every other
/// head to hold at least one observation.
pub fn run_multitask(
    learners: &mut [&mut dyn BaseLearner],
    model: &mut MultiHeadModel,
    task_names: &[&str],
    config: &MultitaskConfig,
) -> Result<MultitaskRun> {
    let k_tasks = learners.len();
    if k_tasks < 2 {
        return Err(Error::InvalidConfig(format!(
            "multitask needs at least two tasks, got {k_tasks}"
        )));
    }
    if task_names.len() != k_tasks {
        return Err(Error::InvalidConfig(format!(
            "{} task names for {} learners",
            task_names.len(),
            k_tasks
        )));
    }
    if model.n_heads() != k_tasks {
        return Err(Error::UnknownHead {
            index: k_tasks - 1,
            count: model.n_heads(),
        });
    }
    config.schedule.validate()?;
    if config.steps_per_episode == 0 {
        return Err(Error::InvalidConfig(
            "steps per episode must be positive".into(),
        ));
    }
    if let BatchStrategy::Uniform { size: 0 } = config.batch {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let input_dim = model.encoder().input_dim();
    for (k, l) in learners.iter().enumerate() {
        if l.input_dim() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: learners[k].input_dim(),
            });
        }
    }

    let mut reuse = substream(config.seed, 2);
    let mut train = substream(config.seed, 3);
    let mut envs: Vec<Stream> = (0..k_tasks)
        .map(|k| substream(config.seed, STREAM_TASK_ENV_BASE + k as u64))
        .collect();

    let mut datasets: Vec<Dataset> = task_names
        .iter()
        .map(|name| Dataset::new(*name, input_dim))
        .collect();
    for (k, learner) in learners.iter_mut().enumerate() {
        for demo in learner.initial_demonstrations(&mut envs[k])? {
            datasets[k].push(demo)?;
        }
    }

    fn all_data(datasets: &[Dataset]) -> Vec<(usize, &Dataset)> {
        datasets.iter().enumerate().collect()
    }
    model.recompute_heads(&all_data(&datasets))?;

    // Per-task state: weights over the K-1 other tasks, the task's warm
    // start, and its solve count.
    let mut weights: Vec<Vec<f64>> = vec![vec![1.0 / (k_tasks - 1) as f64; k_tasks - 1]; k_tasks];
    let mut solutions: Vec<Option<SourceWeights>> = vec![None; k_tasks];
    let mut qp_solves = vec![0usize; k_tasks];

    fn solve_all(
        model: &MultiHeadModel,
        k_tasks: usize,
        weights: &mut [Vec<f64>],
        solutions: &mut [Option<SourceWeights>],
        qp_solves: &mut [usize],
    ) -> Result<()> {
        for k in 0..k_tasks {
            let target = model.head(k)?;
            let sources: Vec<_> = (0..k_tasks)
                .filter(|&j| j != k)
                .map(|j| model.head(j).expect("head count validated"))
                .collect();
            let solved = build_qp(target, &sources).and_then(|qp| match &solutions[k] {
                Some(w) => qp.solve_warm(w),
                None => qp.solve(),
            });
            match solved {
                Ok(w) => {
                    weights[k] = w.as_slice().to_vec();
                    solutions[k] = Some(w);
                    qp_solves[k] += 1;
                }
                // A source head without observations has no noise estimate
                // yet; keep the current weights until data arrives.
                Err(Error::AlphaTooSmall { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
    solve_all(model, k_tasks, &mut weights, &mut solutions, &mut qp_solves)?;

    let mut rows: Vec<Vec<TraceRow>> = vec![Vec::with_capacity(config.episodes); k_tasks];
    for episode in 1..=config.episodes {
        let p = config.schedule.probability(episode);
        for k in 0..k_tasks {
            let others: Vec<usize> = (0..k_tasks).filter(|&j| j != k).collect();
            for _ in 0..config.steps_per_episode {
                let demo = learners[k].explore(&mut envs[k])?;
                let fired = p > 0.0 && reuse.gen::<f64>() < p;
                if fired {
                    let local = sample_from_weights(&weights[k], reuse.gen())?;
                    let global = others[local];
                    let batch = make_batch(
                        &datasets[global],
                        &config.batch,
                        config.objective,
                        &mut reuse,
                    )?;
                    learners[k].train_on(&batch, BatchOrigin::Source(local));
                } else {
                    learners[k].train_on(std::slice::from_ref(&demo), BatchOrigin::Target);
                }
                datasets[k].push(demo)?;
            }
            rows[k].push(TraceRow {
                episode,
                p,
                objective: learners[k].episode_metric(),
                weights: weights[k].clone(),
            });
        }
        model.refine(
            &all_data(&datasets),
            config.refine_batches,
            config.refine_batch_size,
            &mut train,
        )?;
        solve_all(model, k_tasks, &mut weights, &mut solutions, &mut qp_solves)?;
    }

    let traces = (0..k_tasks)
        .map(|k| RunTrace {
            seed: config.seed,
            source_names: (0..k_tasks)
                .filter(|&j| j != k)
                .map(|j| task_names[j].to_string())
                .collect(),
            rows: std::mem::take(&mut rows[k]),
            qp_solves: qp_solves[k],
        })
        .collect();
    Ok(MultitaskRun { traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bers::DeLearner;
    use crate::diffevo::DeConfig;
    use crate::neural_linear::{Encoder, OutputTransform, TrainConfig};

    fn de_config() -> DeConfig {
        DeConfig::new(6, 0.7, 0.5, vec![(-3.0, 3.0); 3]).unwrap()
    }

    fn mt_config(episodes: usize) -> MultitaskConfig {
        MultitaskConfig {
            episodes,
            steps_per_episode: 6,
            schedule: ReuseSchedule::Constant { p: 0.3 },
            batch: BatchStrategy::SingletonBest,
            objective: Objective::Minimize,
            refine_batches: 1,
            refine_batch_size: 8,
            seed: 50,
        }
    }

    fn model(n_heads: usize, seed: u64) -> MultiHeadModel {
        let mut rng = substream(seed, 0);
        let encoder = Encoder::new(3, &[6, 5], 3, &mut rng).unwrap();
        MultiHeadModel::new(
            encoder,
            n_heads,
            OutputTransform::Identity,
            TrainConfig::default(),
        )
        .unwrap()
    }

    fn run_three(seed: u64) -> MultitaskRun {
        let mut l0 =
            DeLearner::new(de_config(), |x: &[f64]| x.iter().map(|v| v * v).sum()).unwrap();
        let mut l1 = DeLearner::new(de_config(), |x: &[f64]| {
            x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum()
        })
        .unwrap();
        let mut l2 = DeLearner::new(de_config(), |x: &[f64]| {
            x.iter().map(|v| (v + 1.0) * (v + 1.0)).sum()
        })
        .unwrap();
        let mut learners: Vec<&mut dyn BaseLearner> = vec![&mut l0, &mut l1, &mut l2];
        let mut m = model(3, seed);
        let config = MultitaskConfig {
            seed,
            ..mt_config(3)
        };
        run_multitask(&mut learners, &mut m, &["a", "b", "c"], &config).unwrap()
    }

    #[test]
    fn traces_cover_every_task_with_peer_weights() {
        let run = run_three(50);
        assert_eq!(run.traces.len(), 3);
        assert_eq!(run.traces[0].source_names, vec!["b", "c"]);
        assert_eq!(run.traces[1].source_names, vec!["a", "c"]);
        assert_eq!(run.traces[2].source_names, vec!["a", "b"]);
        for trace in &run.traces {
            assert_eq!(trace.rows.len(), 3);
            // Initial solve plus one per episode: every head has data from
            // the starting populations, so no solve is skipped.
            assert_eq!(trace.qp_solves, 4);
            for row in &trace.rows {
                assert_eq!(row.weights.len(), 2);
                let sum: f64 = row.weights.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(row.weights.iter().all(|&w| w >= 0.0));
                assert_eq!(row.p, 0.3);
            }
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let a = run_three(51);
        let b = run_three(51);
        assert_eq!(a, b);
        let c = run_three(52);
        assert_ne!(a, c);
    }

    #[test]
    fn two_tasks_weight_each_other_fully() {
        let mut l0 =
            DeLearner::new(de_config(), |x: &[f64]| x.iter().map(|v| v * v).sum()).unwrap();
        let mut l1 = DeLearner::new(de_config(), |x: &[f64]| {
            x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum()
        })
        .unwrap();
        let mut learners: Vec<&mut dyn BaseLearner> = vec![&mut l0, &mut l1];
        let mut m = model(2, 60);
        let run = run_multitask(&mut learners, &mut m, &["x", "y"], &mt_config(2)).unwrap();
        for trace in &run.traces {
            for row in &trace.rows {
                assert_eq!(row.weights, vec![1.0]);
            }
        }
    }

    #[test]
    fn validation_rejects_mismatched_setups() {
        let mut l0 = DeLearner::new(de_config(), |x: &[f64]| x[0]).unwrap();
        let mut m = model(2, 61);
        let config = mt_config(1);
        {
            let mut learners: Vec<&mut dyn BaseLearner> = vec![&mut l0];
            assert!(run_multitask(&mut learners, &mut m, &["a"], &config).is_err());
        }
        let mut l1 = DeLearner::new(de_config(), |x: &[f64]| x[0]).unwrap();
        {
            let mut learners: Vec<&mut dyn BaseLearner> = vec![&mut l0, &mut l1];
            assert!(run_multitask(&mut learners, &mut m, &["a"], &config).is_err());
        }
        let mut m3 = model(3, 62);
        {
            let mut learners: Vec<&mut dyn BaseLearner> = vec![&mut l0, &mut l1];
            assert!(run_multitask(&mut learners, &mut m3, &["a", "b"], &config).is_err());
        }
    }

    #[test]
    fn tasks_improve_their_own_objectives() {
        let run = run_three(53);
        for trace in &run.traces {
            let first = trace.rows.first().unwrap().objective;
            let last = trace.rows.last().unwrap().objective;
            assert!(last <= first, "{} -> {}", first, last);
        }
    }
}
