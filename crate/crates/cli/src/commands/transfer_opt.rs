//! Reuse runs on one optimization target under a source-selection strategy,
//! with per-trial traces and a cross-trial aggregate.

use std::fs;
use std::path::PathBuf;

use bers_core::benchmark_functions::{BenchmarkKind, BenchmarkTask};
use bers_core::bers::{
    run_bers, BatchStrategy, BersConfig, DeLearner, Objective, ReuseSchedule, RunTrace,
    SelectionStrategy,
};
use bers_core::diffevo::DeConfig;
use bers_core::neural_linear::{Dataset, Encoder, MultiHeadModel};
use bers_core::rng::substream;

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;
use crate::CliError;

use super::{load_datasets, run_trials, write_aggregate_csv};

pub fn run(
    config: &ExperimentConfig,
    target: &str,
    strategy: &str,
    data: Option<PathBuf>,
) -> anyhow::Result<()> {
    let target_kind = BenchmarkKind::parse(target)?;
    let names: Vec<&str> = super::gen_source_opt::SOURCE_KINDS
        .iter()
        .map(|k| k.name())
        .collect();
    // Validate the whole invocation before any file is touched.
    let selection = parse_strategy(strategy, names.len())?;
    let trials = config.resolved_trials(20);
    if trials == 0 {
        return Err(CliError::Config("trials must be positive".into()).into());
    }
    let data_dir = data.unwrap_or_else(|| config.out.join("sources"));
    let sources = load_datasets(&data_dir, &names)?;

    let dir = config.out.join(format!(
        "transfer-opt-{}-{}",
        target_kind.name(),
        slug(strategy)
    ));
    fs::create_dir_all(&dir)?;

    let traces = run_trials(trials, |t| {
        one_trial(
            config,
            target_kind,
            selection,
            &sources,
            config.seed + t as u64,
        )
    })?;

    let mut manifest = Manifest::new("transfer-opt", config);
    manifest.record_seeds(config.seed, trials);
    for name in &names {
        manifest.add_dataset(&data_dir.join(format!("{name}.csv")))?;
    }
    for (t, trace) in traces.iter().enumerate() {
        let trial_dir = dir.join(format!("trial{t}"));
        fs::create_dir_all(&trial_dir)?;
        trace.write_csv(trial_dir.join("trace.csv"))?;
        manifest.add_output(format!("trial{t}/trace.csv"));
    }
    write_aggregate_csv(&traces, &dir.join("aggregate.csv"))?;
    manifest.add_output("aggregate.csv");
    manifest.write(&dir)?;

    let best = traces
        .iter()
        .map(|t| t.rows.last().map_or(f64::INFINITY, |r| r.objective))
        .fold(f64::INFINITY, f64::min);
    println!(
        "{} on {}: {} trials, best final objective {:.4}, outputs in {}",
        strategy,
        target_kind.name(),
        trials,
        best,
        dir.display()
    );
    Ok(())
}

fn one_trial(
    config: &ExperimentConfig,
    target: BenchmarkKind,
    selection: SelectionStrategy,
    sources: &[Dataset],
    seed: u64,
) -> anyhow::Result<RunTrace> {
    let opt = &config.optimization;
    let task = BenchmarkTask::new(target, opt.dim)?;
    let eval = |x: &[f64]| task.evaluate_transformed(x).expect("in-dimension point");
    let mut learner = DeLearner::new(DeConfig::new(opt.np, opt.cr, opt.f, task.bounds())?, eval)?;

    let needs_model = selection == SelectionStrategy::QpWeights;
    let mut model = if needs_model {
        let encoder = Encoder::new(
            opt.dim,
            &config.model.hidden,
            config.model.feature_dim,
            &mut substream(seed, 9),
        )?;
        let mut model = MultiHeadModel::new(
            encoder,
            sources.len() + 1,
            config.model.transform,
            config.model.train_config(),
        )?;
        let pretrain: Vec<(usize, &Dataset)> = sources.iter().enumerate().collect();
        model.pretrain(
            &pretrain,
            config.model.pretrain_batches,
            config.model.batch_size,
            &mut substream(seed, 8),
        )?;
        Some(model)
    } else {
        None
    };

    let schedule = match selection {
        SelectionStrategy::NoTransfer => ReuseSchedule::Constant { p: 0.0 },
        _ => ReuseSchedule::Geometric {
            rate: opt.reuse_rate,
        },
    };
    let bers = BersConfig {
        episodes: opt.episodes,
        steps_per_episode: opt.np,
        schedule,
        selection,
        batch: BatchStrategy::SingletonBest,
        objective: Objective::Minimize,
        refine_batches: opt.refine_batches,
        refine_batch_size: config.model.batch_size,
        model_updates: needs_model,
        seed,
    };
    let refs: Vec<&Dataset> = sources.iter().collect();
    Ok(run_bers(
        &mut learner,
        model.as_mut(),
        &refs,
        &bers,
        None,
        |_| {},
    )?)
}

/// bers, ucb, equal, none, or single:<index>.
fn parse_strategy(text: &str, n_sources: usize) -> anyhow::Result<SelectionStrategy> {
    let parsed = match text {
        "bers" => SelectionStrategy::QpWeights,
        "ucb" => SelectionStrategy::Ucb,
        "equal" => SelectionStrategy::Equal,
        "none" => SelectionStrategy::NoTransfer,
        other => match other.strip_prefix("single:") {
            Some(index) => {
                let index: usize = index.parse().map_err(|_| {
                    CliError::Config(format!("bad source index in strategy '{other}'"))
                })?;
                if index >= n_sources {
                    return Err(CliError::Config(format!(
                        "source index {index} out of range, {n_sources} sources"
                    ))
                    .into());
                }
                SelectionStrategy::Single { index }
            }
            None => {
                return Err(CliError::Config(format!(
                    "unknown strategy '{other}', expected bers|ucb|equal|none|single:<i>"
                ))
                .into())
            }
        },
    };
    Ok(parsed)
}

fn slug(strategy: &str) -> String {
    strategy.replace(':', "-")
}
