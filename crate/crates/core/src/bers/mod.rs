//! Episodic experience reuse around a base learner.
//!
//! The learner explores its own task while, with an annealed per-step
//! probability, a batch drawn from one of several source datasets is fed to
//! it instead of its own experience. Which source gets picked is governed by
//! a selection strategy; the flagship strategy weights sources by solving the
//! simplex quadratic program over the shared model's posterior heads after
//! every episode, so the weighting tracks the growing target dataset.
//!
//! Randomness is split into three independent streams (environment, reuse,
//! model training). Reuse decisions never touch the environment stream, so a
//! run with reuse probability identically zero reproduces the standalone
//! learner bit for bit.

mod de_learner;
mod multitask;
mod ucb;

pub use de_learner::DeLearner;
pub use multitask::{run_multitask, MultitaskConfig, MultitaskRun};
pub use ucb::UcbStats;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural_linear::{Dataset, Demonstration, MultiHeadModel};
use crate::rng::{RngStreams, Stream};
use crate::source_weighting::{build_qp, SourceWeights};

/// Whose experience a training batch carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchOrigin {
    Target,
    Source(usize),
}

/// Direction of the learner's episode metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Minimize,
    Maximize,
}

/// A task learner the reuse loop can drive. Exploration consumes only the
/// environment stream passed to it; `train_on` must not consume randomness.
pub trait BaseLearner {
    /// Width of the demonstrations this learner emits.
    fn input_dim(&self) -> usize;

    /// Demonstrations that exist before the first episode, such as an
    /// optimizer's initial population. Default: none.
    fn initial_demonstrations(&mut self, rng: &mut Stream) -> Result<Vec<Demonstration>> {
        let _ = rng;
        Ok(Vec::new())
    }

    /// One exploration step on the learner's own task.
    fn explore(&mut self, rng: &mut Stream) -> Result<Demonstration>;

    /// Receive a training batch. Source batches may change future behavior;
    /// target batches echo the learner's own latest experience and may be
    /// ignored.
    fn train_on(&mut self, batch: &[Demonstration], origin: BatchOrigin);

    /// Current figure of merit, read at episode boundaries.
    fn episode_metric(&self) -> f64;
}

/// Per-step reuse probability by episode (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReuseSchedule {
    /// `p_m = rate^m`, so the first episode already reuses at `rate`.
    Geometric {
        rate: f64,
    },
    Constant {
        p: f64,
    },
}

impl ReuseSchedule {
    pub fn validate(&self) -> Result<()> {
        let v = match self {
            ReuseSchedule::Geometric { rate } => *rate,
            ReuseSchedule::Constant { p } => *p,
        };
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!(
                "reuse probability parameter {v} outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn probability(&self, episode: usize) -> f64 {
        match self {
            ReuseSchedule::Geometric { rate } => rate.powi(episode as i32),
            ReuseSchedule::Constant { p } => *p,
        }
    }
}

/// How the reused source is picked when the reuse coin fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelectionStrategy {
    /// Sample sources by the quadratic-program weights, re-solved after each
    /// episode over the shared model's posterior heads.
    QpWeights,
    /// One bandit arm per source, chosen once per episode by UCB1 on
    /// normalized episode improvements.
    Ucb,
    /// Uniform over sources.
    Equal,
    /// Always the same source.
    Single { index: usize },
    /// Never reuse; the schedule is overridden to zero.
    NoTransfer,
}

/// What a reuse batch contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BatchStrategy {
    /// The single best demonstration of the chosen source.
    SingletonBest,
    /// A uniform-with-replacement sample of this size.
    Uniform { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BersConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub schedule: ReuseSchedule,
    pub selection: SelectionStrategy,
    pub batch: BatchStrategy,
    pub objective: Objective,
    /// Gradient batches per post-episode model refinement.
    pub refine_batches: usize,
    pub refine_batch_size: usize,
    /// When false the shared model is left untouched and the quadratic
    /// program is never solved; only valid for strategies that need neither.
    pub model_updates: bool,
    pub seed: u64,
}

impl BersConfig {
    pub fn validate(&self, n_sources: usize) -> Result<()> {
        self.schedule.validate()?;
        if self.steps_per_episode == 0 {
            return Err(Error::InvalidConfig(
                "steps per episode must be positive".into(),
            ));
        }
        if let BatchStrategy::Uniform { size: 0 } = self.batch {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        match self.selection {
            SelectionStrategy::Single { index } if index >= n_sources => {
                return Err(Error::InvalidConfig(format!(
                    "single-source index {index} with {n_sources} sources"
                )));
            }
            SelectionStrategy::QpWeights if !self.model_updates => {
                return Err(Error::InvalidConfig(
                    "weight-based selection needs model updates".into(),
                ));
            }
            SelectionStrategy::QpWeights | SelectionStrategy::Ucb | SelectionStrategy::Equal
                if n_sources == 0 =>
            {
                return Err(Error::EmptySourceData);
            }
            _ => {}
        }
        Ok(())
    }
}

/// One trace row: the reuse probability and source weights in effect during
/// the episode, and the learner's metric when the episode ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub episode: usize,
    pub p: f64,
    pub objective: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub seed: u64,
    pub source_names: Vec<String>,
    pub rows: Vec<TraceRow>,
    pub qp_solves: usize,
}

impl RunTrace {
    /// `episode,p_m,objective,a_1..a_N`, one row per episode.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "episode,p_m,objective")?;
        for i in 1..=self.source_names.len() {
            write!(f, ",a_{i}")?;
        }
        writeln!(f)?;
        for row in &self.rows {
            write!(f, "{},{},{}", row.episode, row.p, row.objective)?;
            for w in &row.weights {
                write!(f, ",{w}")?;
            }
            writeln!(f)?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Post-episode view handed to the observer. Episode 0 is the state before
/// the first episode, after initial demonstrations and the initial solve.
pub struct EpisodeSnapshot<'a> {
    pub episode: usize,
    pub p: f64,
    pub metric: f64,
    pub weights: &'a [f64],
    pub model: Option<&'a MultiHeadModel>,
    pub target_data: &'a Dataset,
}

/// Inverse-CDF sample from a weight vector; zero-weight entries can never be
/// drawn. `u` must come from `[0, 1)`.
pub(crate) fn sample_from_weights(weights: &[f64], u: f64) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig("weights sum to zero".into()));
    }
    let mut acc = 0.0;
    let mut last_nonzero = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_nonzero = Some(i);
        if u * total < acc {
            return Ok(i);
        }
    }
    Ok(last_nonzero.expect("positive total implies a nonzero weight"))
}

fn make_batch(
    ds: &Dataset,
    strategy: &BatchStrategy,
    objective: Objective,
    rng: &mut Stream,
) -> Result<Vec<Demonstration>> {
    match strategy {
        BatchStrategy::SingletonBest => {
            let best = match objective {
                Objective::Minimize => ds.best_min(),
                Objective::Maximize => ds.best_max(),
            }
            .ok_or(Error::EmptyDataset)?;
            Ok(vec![best.clone()])
        }
        BatchStrategy::Uniform { size } => {
            if ds.is_empty() {
                return Err(Error::EmptyDataset);
            }
            Ok((0..*size)
                .map(|_| ds.demo(rng.gen_range(0..ds.len())).clone())
                .collect())
        }
    }
}

fn strategy_weights(
    selection: &SelectionStrategy,
    n: usize,
    qp: Option<&SourceWeights>,
    ucb: &UcbStats,
) -> Vec<f64> {
    match selection {
        SelectionStrategy::QpWeights => match qp {
            Some(w) => w.as_slice().to_vec(),
            None => vec![1.0 / n as f64; n],
        },
        SelectionStrategy::Ucb => ucb.weights(),
        SelectionStrategy::Equal => vec![1.0 / n as f64; n],
        SelectionStrategy::Single { index } => {
            let mut w = vec![0.0; n];
            w[*index] = 1.0;
            w
        }
        SelectionStrategy::NoTransfer => vec![0.0; n],
    }
}

/// Run the reuse loop. The model, when updates are on, must have one head
/// per source followed by the target head; the caller is expected to have
/// pretrained it on the source datasets. Target demonstrations whose value
/// falls outside `target_y_bounds` are kept from the model's target dataset
/// but still drive the learner. The observer fires once before the first
/// episode (as episode 0) and once after each episode.
pub fn run_bers<L: BaseLearner>(
    learner: &mut L,
    mut model: Option<&mut MultiHeadModel>,
    source_data: &[&Dataset],
    config: &BersConfig,
    target_y_bounds: Option<(f64, f64)>,
    mut observer: impl FnMut(&EpisodeSnapshot<'_>),
) -> Result<RunTrace> {
    let n = source_data.len();
    config.validate(n)?;
    if config.model_updates {
        let m = model
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("model updates need a model".into()))?;
        if m.n_heads() != n + 1 {
            return Err(Error::UnknownHead {
                index: n,
                count: m.n_heads(),
            });
        }
    }

    let mut streams = RngStreams::from_master(config.seed);
    let mut target = Dataset::new("target", learner.input_dim());
    let in_bounds = |y: f64| target_y_bounds.map_or(true, |(lo, hi)| y >= lo && y <= hi);

    for demo in learner.initial_demonstrations(&mut streams.env)? {
        if in_bounds(demo.y) {
            target.push(demo)?;
        }
    }

    let mut ucb = UcbStats::new(n, 50);
    let mut qp_solution: Option<SourceWeights> = None;
    let mut qp_solves = 0usize;

    fn solve_weights(
        model: &MultiHeadModel,
        n: usize,
        warm: Option<&SourceWeights>,
    ) -> Result<SourceWeights> {
        let target_head = model.head(n)?;
        let sources: Vec<_> = (0..n)
            .map(|i| model.head(i).expect("head count validated"))
            .collect();
        let qp = build_qp(target_head, &sources)?;
        match warm {
            Some(w) => qp.solve_warm(w),
            None => qp.solve(),
        }
    }

    if config.model_updates {
        let m = model.as_deref_mut().expect("checked above");
        let mut data: Vec<(usize, &Dataset)> = source_data
            .iter()
            .enumerate()
            .map(|(i, d)| (i, *d))
            .collect();
        data.push((n, &target));
        // The caller's pretraining only saw source heads; fold the initial
        // target demonstrations in so the first solve sees every posterior.
        m.recompute_heads(&data)?;
        if config.selection == SelectionStrategy::QpWeights {
            qp_solution = Some(solve_weights(m, n, None)?);
            qp_solves += 1;
        }
    }

    let mut weights = strategy_weights(&config.selection, n, qp_solution.as_ref(), &ucb);
    observer(&EpisodeSnapshot {
        episode: 0,
        p: 0.0,
        metric: learner.episode_metric(),
        weights: &weights,
        model: model.as_deref(),
        target_data: &target,
    });

    let mut rows = Vec::with_capacity(config.episodes);
    for episode in 1..=config.episodes {
        let p = match config.selection {
            SelectionStrategy::NoTransfer => 0.0,
            _ => config.schedule.probability(episode),
        };
        let metric_before = learner.episode_metric();
        let ucb_arm = match config.selection {
            SelectionStrategy::Ucb => Some(ucb.select()),
            _ => None,
        };
        let mut reused = false;

        for _ in 0..config.steps_per_episode {
            let demo = learner.explore(&mut streams.env)?;
            let fired = if p > 0.0 {
                let coin: f64 = streams.reuse.gen();
                coin < p
            } else {
                false
            };
            if fired {
                let i = match config.selection {
                    SelectionStrategy::QpWeights | SelectionStrategy::Equal => {
                        sample_from_weights(&weights, streams.reuse.gen())?
                    }
                    SelectionStrategy::Ucb => ucb_arm.expect("arm chosen for ucb"),
                    SelectionStrategy::Single { index } => index,
                    SelectionStrategy::NoTransfer => unreachable!("p is zero"),
                };
                let batch = make_batch(
                    source_data[i],
                    &config.batch,
                    config.objective,
                    &mut streams.reuse,
                )?;
                learner.train_on(&batch, BatchOrigin::Source(i));
                reused = true;
            } else {
                learner.train_on(std::slice::from_ref(&demo), BatchOrigin::Target);
            }
            if in_bounds(demo.y) {
                target.push(demo)?;
            }
        }

        let metric_after = learner.episode_metric();
        if let Some(arm) = ucb_arm {
            if reused {
                let raw = match config.objective {
                    Objective::Minimize => metric_before - metric_after,
                    Objective::Maximize => metric_after - metric_before,
                };
                ucb.record(arm, raw);
            }
        }

        rows.push(TraceRow {
            episode,
            p,
            objective: metric_after,
            weights: weights.clone(),
        });

        if config.model_updates {
            let m = model.as_deref_mut().expect("checked above");
            let mut data: Vec<(usize, &Dataset)> = source_data
                .iter()
                .enumerate()
                .map(|(i, d)| (i, *d))
                .collect();
            data.push((n, &target));
            m.refine(
                &data,
                config.refine_batches,
                config.refine_batch_size,
                &mut streams.train,
            )?;
            if config.selection == SelectionStrategy::QpWeights {
                qp_solution = Some(solve_weights(m, n, qp_solution.as_ref())?);
                qp_solves += 1;
            }
        }
        weights = strategy_weights(&config.selection, n, qp_solution.as_ref(), &ucb);

        observer(&EpisodeSnapshot {
            episode,
            p,
            metric: metric_after,
            weights: &weights,
            model: model.as_deref(),
            target_data: &target,
        });
    }

    Ok(RunTrace {
        seed: config.seed,
        source_names: source_data
            .iter()
            .map(|d| d.task_id().to_string())
            .collect(),
        rows,
        qp_solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffevo::{run_de, DeConfig, StopCondition};
    use crate::neural_linear::{Encoder, OutputTransform, TrainConfig};
    use crate::rng::substream;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn de_config() -> DeConfig {
        DeConfig::new(8, 0.7, 0.5, vec![(-4.0, 4.0); 3]).unwrap()
    }

    fn base_config(selection: SelectionStrategy) -> BersConfig {
        BersConfig {
            episodes: 4,
            steps_per_episode: 8,
            schedule: ReuseSchedule::Geometric { rate: 0.9 },
            selection,
            batch: BatchStrategy::SingletonBest,
            objective: Objective::Minimize,
            refine_batches: 2,
            refine_batch_size: 8,
            model_updates: false,
            seed: 77,
        }
    }

    fn source_dataset(name: &str, seed: u64, n: usize) -> Dataset {
        let mut rng = substream(seed, 5);
        let mut ds = Dataset::new(name, 3);
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = sphere(&x);
            ds.push(Demonstration::new(x, y).unwrap()).unwrap();
        }
        ds
    }

    /// Scripted learner for exercising the loop bookkeeping.
    struct SpyLearner {
        metric: f64,
        step: usize,
        origins: Vec<BatchOrigin>,
        /// Metric improvement granted when a batch from this source arrives.
        effective_source: usize,
    }

    impl SpyLearner {
        fn new(effective_source: usize) -> Self {
            SpyLearner {
                metric: 100.0,
                step: 0,
                origins: Vec::new(),
                effective_source,
            }
        }
    }

    impl BaseLearner for SpyLearner {
        fn input_dim(&self) -> usize {
            1
        }

        fn explore(&mut self, _rng: &mut Stream) -> Result<Demonstration> {
            self.step += 1;
            Demonstration::new(vec![self.step as f64], self.step as f64)
        }

        fn train_on(&mut self, _batch: &[Demonstration], origin: BatchOrigin) {
            self.origins.push(origin);
            if origin == BatchOrigin::Source(self.effective_source) {
                self.metric -= 1.0;
            }
        }

        fn episode_metric(&self) -> f64 {
            self.metric
        }
    }

    #[test]
    fn schedule_values_and_validation() {
        let g = ReuseSchedule::Geometric { rate: 0.95 };
        assert!((g.probability(1) - 0.95).abs() < 1e-15);
        assert!((g.probability(3) - 0.95f64.powi(3)).abs() < 1e-15);
        let c = ReuseSchedule::Constant { p: 0.3 };
        assert_eq!(c.probability(1), 0.3);
        assert_eq!(c.probability(500), 0.3);
        assert!(ReuseSchedule::Geometric { rate: 1.2 }.validate().is_err());
        assert!(ReuseSchedule::Constant { p: -0.1 }.validate().is_err());
    }

    #[test]
    fn weight_sampling_skips_zeros_and_covers_support() {
        let w = [0.0, 0.5, 0.5];
        assert_eq!(sample_from_weights(&w, 0.0).unwrap(), 1);
        assert_eq!(sample_from_weights(&w, 0.49).unwrap(), 1);
        assert_eq!(sample_from_weights(&w, 0.51).unwrap(), 2);
        assert_eq!(sample_from_weights(&w, 0.999999).unwrap(), 2);
        assert!(sample_from_weights(&[0.0, 0.0], 0.5).is_err());
        // Unnormalized weights are normalized by total mass.
        assert_eq!(sample_from_weights(&[2.0, 6.0], 0.2).unwrap(), 0);
        assert_eq!(sample_from_weights(&[2.0, 6.0], 0.3).unwrap(), 1);
    }

    #[test]
    fn no_transfer_matches_standalone_differential_evolution() {
        let episodes = 6;
        let seed = 1234;
        // Standalone run on the environment substream.
        let mut env_rng = substream(seed, 1);
        let plain = run_de(
            de_config(),
            StopCondition {
                max_generations: episodes,
                target_fitness: f64::NEG_INFINITY,
            },
            &mut |x: &[f64]| sphere(x),
            &mut env_rng,
        )
        .unwrap();

        let mut learner = DeLearner::new(de_config(), |x: &[f64]| sphere(x)).unwrap();
        let config = BersConfig {
            episodes,
            steps_per_episode: 8,
            selection: SelectionStrategy::NoTransfer,
            seed,
            ..base_config(SelectionStrategy::NoTransfer)
        };
        let sources = [source_dataset("s1", 2, 5)];
        let refs: Vec<&Dataset> = sources.iter().collect();
        let trace = run_bers(&mut learner, None, &refs, &config, None, |_| {}).unwrap();

        assert_eq!(trace.rows.len(), episodes);
        let best_plain = plain.population.best().1;
        let best_bers = learner.best().unwrap().1;
        assert_eq!(best_plain.to_bits(), best_bers.to_bits());
        for (gen, row) in plain.history.iter().zip(&trace.rows) {
            assert_eq!(gen.best_fitness.to_bits(), row.objective.to_bits());
            assert_eq!(row.p, 0.0);
        }
    }

    #[test]
    fn single_strategy_feeds_only_that_source() {
        let mut learner = SpyLearner::new(1);
        let sources = [source_dataset("a", 3, 4), source_dataset("b", 4, 4)];
        let refs: Vec<&Dataset> = sources.iter().collect();
        let config = BersConfig {
            schedule: ReuseSchedule::Constant { p: 1.0 },
            selection: SelectionStrategy::Single { index: 1 },
            episodes: 3,
            steps_per_episode: 5,
            ..base_config(SelectionStrategy::Single { index: 1 })
        };
        let trace = run_bers(&mut learner, None, &refs, &config, None, |_| {}).unwrap();
        assert_eq!(learner.origins.len(), 15);
        assert!(learner.origins.iter().all(|o| *o == BatchOrigin::Source(1)));
        for row in &trace.rows {
            assert_eq!(row.weights, vec![0.0, 1.0]);
            assert_eq!(row.p, 1.0);
        }
        assert_eq!(trace.qp_solves, 0);
    }

    #[test]
    fn zero_probability_routes_everything_to_target() {
        let mut learner = SpyLearner::new(0);
        let sources = [source_dataset("a", 5, 4)];
        let refs: Vec<&Dataset> = sources.iter().collect();
        let config = BersConfig {
            schedule: ReuseSchedule::Constant { p: 0.0 },
            episodes: 2,
            steps_per_episode: 6,
            ..base_config(SelectionStrategy::Equal)
        };
        run_bers(&mut learner, None, &refs, &config, None, |_| {}).unwrap();
        assert_eq!(learner.origins.len(), 12);
        assert!(learner.origins.iter().all(|o| *o == BatchOrigin::Target));
    }

    #[test]
    fn target_bounds_filter_the_model_dataset_only() {
        let mut learner = SpyLearner::new(0);
        let sources = [source_dataset("a", 6, 4)];
        let refs: Vec<&Dataset> = sources.iter().collect();
        let config = BersConfig {
            schedule: ReuseSchedule::Constant { p: 0.0 },
            episodes: 1,
            steps_per_episode: 10,
            ..base_config(SelectionStrategy::Equal)
        };
        let mut final_len = 0;
        run_bers(
            &mut learner,
            None,
            &refs,
            &config,
            Some((2.5, 7.5)),
            |snap| final_len = snap.target_data.len(),
        )
        .unwrap();
        // Explore values are 1..=10; only 3..=7 pass the bounds.
        assert_eq!(final_len, 5);
        assert_eq!(learner.step, 10);
    }

    #[test]
    fn qp_weights_resolve_each_episode_and_stay_on_the_simplex() {
        let mut rng = substream(9, 0);
        let encoder = Encoder::new(3, &[6, 5], 3, &mut rng).unwrap();
        let mut model = MultiHeadModel::new(
            encoder,
            3,
            OutputTransform::Identity,
            TrainConfig::default(),
        )
        .unwrap();
        let sources = [source_dataset("s1", 7, 30), source_dataset("s2", 8, 30)];
        let refs: Vec<&Dataset> = sources.iter().collect();
        let mut pre_rng = substream(9, 3);
        model
            .pretrain(&[(0, &sources[0]), (1, &sources[1])], 10, 16, &mut pre_rng)
            .unwrap();

        let mut learner = DeLearner::new(de_config(), |x: &[f64]| sphere(x)).unwrap();
        let config = BersConfig {
            episodes: 3,
            steps_per_episode: 8,
            model_updates: true,
            selection: SelectionStrategy::QpWeights,
            refine_batches: 1,
            refine_batch_size: 8,
            ..base_config(SelectionStrategy::QpWeights)
        };
        let mut snapshots = 0;
        let trace = run_bers(
            &mut learner,
            Some(&mut model),
            &refs,
            &config,
            None,
            |snap| {
                snapshots += 1;
                assert!(snap.model.is_some());
                let sum: f64 = snap.weights.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            },
        )
        .unwrap();
        // One initial solve plus one per episode.
        assert_eq!(trace.qp_solves, 4);
        assert_eq!(snapshots, 4);
        assert_eq!(trace.rows.len(), 3);
        for row in &trace.rows {
            assert_eq!(row.weights.len(), 2);
            let sum: f64 = row.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn ucb_selection_concentrates_on_the_helpful_source() {
        let mut learner = SpyLearner::new(0);
        let sources = [
            source_dataset("good", 10, 4),
            source_dataset("bad", 11, 4),
            source_dataset("bad2", 12, 4),
        ];
        let refs: Vec<&Dataset> = sources.iter().collect();
        let config = BersConfig {
            schedule: ReuseSchedule::Constant { p: 1.0 },
            selection: SelectionStrategy::Ucb,
            episodes: 30,
            steps_per_episode: 4,
            ..base_config(SelectionStrategy::Ucb)
        };
        let trace = run_bers(&mut learner, None, &refs, &config, None, |_| {}).unwrap();
        let counts = learner.origins.iter().fold([0usize; 3], |mut acc, o| {
            if let BatchOrigin::Source(i) = o {
                acc[*i] += 1;
            }
            acc
        });
        assert!(
            counts[0] > counts[1] && counts[0] > counts[2],
            "pulls {counts:?}"
        );
        // Trace weights are normalized pull counts.
        let last = trace.rows.last().unwrap();
        let sum: f64 = last.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(last.weights[0] > 0.5, "weights {:?}", last.weights);
    }

    #[test]
    fn config_validation_rejects_inconsistent_setups() {
        let bad = BersConfig {
            selection: SelectionStrategy::QpWeights,
            model_updates: false,
            ..base_config(SelectionStrategy::QpWeights)
        };
        assert!(bad.validate(2).is_err());
        let bad = BersConfig {
            selection: SelectionStrategy::Single { index: 5 },
            ..base_config(SelectionStrategy::Single { index: 5 })
        };
        assert!(bad.validate(2).is_err());
        let bad = BersConfig {
            steps_per_episode: 0,
            ..base_config(SelectionStrategy::Equal)
        };
        assert!(bad.validate(2).is_err());
        assert!(base_config(SelectionStrategy::Equal).validate(0).is_err());
        assert!(base_config(SelectionStrategy::NoTransfer)
            .validate(0)
            .is_ok());
    }

    #[test]
    fn trace_csv_has_header_and_one_row_per_episode() {
        let mut learner = SpyLearner::new(0);
        let sources = [source_dataset("a", 13, 4), source_dataset("b", 14, 4)];
        let refs: Vec<&Dataset> = sources.iter().collect();
        let config = BersConfig {
            episodes: 3,
            ..base_config(SelectionStrategy::Equal)
        };
        let trace = run_bers(&mut learner, None, &refs, &config, None, |_| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        trace.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "episode,p_m,objective,a_1,a_2");
        assert_eq!(lines.count(), 3);
        assert_eq!(trace.source_names, vec!["a", "b"]);
    }
}
