//! All selected benchmark functions learn together: one shared model with a
//! head per task, one weighting per task over the other tasks, and a constant
//! probability of injecting another task's current best solution.

use std::fs;

use bers_core::benchmark_functions::{BenchmarkKind, BenchmarkTask};
use bers_core::bers::{
    run_multitask, BaseLearner, BatchStrategy, DeLearner, MultitaskConfig, Objective, ReuseSchedule,
};
use bers_core::diffevo::DeConfig;
use bers_core::neural_linear::{Encoder, MultiHeadModel};
use bers_core::rng::substream;

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;
use crate::CliError;

use super::{run_trials, write_aggregate_csv};

pub fn run(config: &ExperimentConfig, tasks: Option<Vec<String>>) -> anyhow::Result<()> {
    let names: Vec<String> = tasks.unwrap_or_else(|| {
        BenchmarkKind::ALL
            .iter()
            .map(|k| k.name().to_string())
            .collect()
    });
    if names.len() < 2 {
        return Err(CliError::Config("multitask needs at least two tasks".into()).into());
    }
    let kinds: Vec<BenchmarkKind> = names
        .iter()
        .map(|n| BenchmarkKind::parse(n))
        .collect::<Result<_, _>>()?;
    let trials = config.resolved_trials(20);
    if trials == 0 {
        return Err(CliError::Config("trials must be positive".into()).into());
    }

    let dir = config.out.join("multitask-opt");
    fs::create_dir_all(&dir)?;

    let runs = run_trials(trials, |t| {
        one_trial(config, &kinds, config.seed + t as u64)
    })?;

    let mut manifest = Manifest::new("multitask-opt", config);
    manifest.record_seeds(config.seed, trials);
    // Repeats are legal task selections, so file names carry the task index.
    let file_names: Vec<String> = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| format!("task{i}-{}", k.name()))
        .collect();
    for (t, run) in runs.iter().enumerate() {
        let trial_dir = dir.join(format!("trial{t}"));
        fs::create_dir_all(&trial_dir)?;
        for (trace, file) in run.traces.iter().zip(&file_names) {
            trace.write_csv(trial_dir.join(format!("{file}.csv")))?;
            manifest.add_output(format!("trial{t}/{file}.csv"));
        }
    }
    for (k, file) in file_names.iter().enumerate() {
        let per_task: Vec<_> = runs.iter().map(|r| r.traces[k].clone()).collect();
        write_aggregate_csv(&per_task, &dir.join(format!("aggregate-{file}.csv")))?;
        manifest.add_output(format!("aggregate-{file}.csv"));
    }
    manifest.write(&dir)?;

    println!(
        "multitask over {:?}: {} trials, outputs in {}",
        names,
        trials,
        dir.display()
    );
    Ok(())
}

fn one_trial(
    config: &ExperimentConfig,
    kinds: &[BenchmarkKind],
    seed: u64,
) -> anyhow::Result<bers_core::bers::MultitaskRun> {
    let opt = &config.optimization;
    let tasks: Vec<BenchmarkTask> = kinds
        .iter()
        .map(|&k| BenchmarkTask::new(k, opt.dim))
        .collect::<Result<_, _>>()?;
    let mut learners: Vec<_> = tasks
        .iter()
        .map(|task| {
            DeLearner::new(DeConfig::new(opt.np, opt.cr, opt.f, task.bounds())?, |x| {
                task.evaluate_transformed(x).expect("in-dimension point")
            })
        })
        .collect::<Result<_, _>>()?;
    let mut dyn_learners: Vec<&mut dyn BaseLearner> = learners
        .iter_mut()
        .map(|l| l as &mut dyn BaseLearner)
        .collect();

    let encoder = Encoder::new(
        opt.dim,
        &config.model.hidden,
        config.model.feature_dim,
        &mut substream(seed, 9),
    )?;
    // No pretraining: every task starts cold and learns from live data only.
    let mut model = MultiHeadModel::new(
        encoder,
        kinds.len(),
        config.model.transform,
        config.model.train_config(),
    )?;

    let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
    let mt = MultitaskConfig {
        episodes: opt.episodes,
        steps_per_episode: opt.np,
        schedule: ReuseSchedule::Constant { p: opt.multitask_p },
        batch: BatchStrategy::SingletonBest,
        objective: Objective::Minimize,
        refine_batches: opt.refine_batches,
        refine_batch_size: config.model.batch_size,
        seed,
    };
    Ok(run_multitask(&mut dyn_learners, &mut model, &names, &mt)?)
}
