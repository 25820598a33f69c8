//! Reuse run on the supply-chain target: pretrain on the scenario datasets,
//! collect target transitions with the stochastic policy episode by episode,
//! refine the shared model, and log weights plus posterior snapshots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bers_core::bers::{
    run_bers, BatchStrategy, BersConfig, EpisodeSnapshot, Objective, ReuseSchedule, RunTrace,
    SelectionStrategy,
};
use bers_core::neural_linear::{Dataset, Encoder, MultiHeadModel, NigHead, OutputTransform};
use bers_core::rng::substream;
use bers_core::supply_chain::{
    ExplorationPolicy, Scenario, SupplyChainEnv, SupplyConfig, SupplyLearner,
};

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;
use crate::CliError;

use super::{run_trials, write_aggregate_csv};

pub fn run(config: &ExperimentConfig, data: Option<PathBuf>) -> anyhow::Result<()> {
    let supply = &config.supply;
    let data_dir = data.unwrap_or_else(|| config.out.join("sources-supply"));
    let (sources, names, reward_bounds) = load_supply_sources(&data_dir)?;
    let target_scenario = load_scenario(&data_dir.join("scenarios").join("target.toml"))?;
    let trials = config.resolved_trials(5);
    if trials == 0 {
        return Err(CliError::Config("trials must be positive".into()).into());
    }

    let dir = config.out.join("transfer-supply");
    fs::create_dir_all(&dir)?;

    // Target observations outside the intersection of the source reward
    // ranges are excluded from the model's data.
    let common = reward_bounds
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), &(l, h)| {
            (lo.max(l), hi.min(h))
        });

    let traces = run_trials(trials, |t| {
        let trial_dir = dir.join(format!("trial{t}"));
        fs::create_dir_all(&trial_dir)?;
        one_trial(
            config,
            &sources,
            &names,
            &target_scenario,
            common,
            config.seed + t as u64,
            &trial_dir,
        )
    })?;

    let mut manifest = Manifest::new("transfer-supply", config);
    manifest.record_seeds(config.seed, trials);
    for name in &names {
        manifest.add_dataset(&data_dir.join(format!("{name}.csv")))?;
    }
    for (t, trace) in traces.iter().enumerate() {
        trace.write_csv(dir.join(format!("trial{t}")).join("trace.csv"))?;
        manifest.add_output(format!("trial{t}/trace.csv"));
        for episode in &supply.snapshots {
            if *episode <= supply.episodes {
                manifest.add_output(format!("trial{t}/snapshot-ep{episode}.json"));
            }
        }
    }
    write_aggregate_csv(&traces, &dir.join("aggregate.csv"))?;
    manifest.add_output("aggregate.csv");
    manifest.write(&dir)?;

    let mean_final = traces
        .iter()
        .filter_map(|t| t.rows.last().map(|r| r.objective))
        .sum::<f64>()
        / trials as f64;
    println!(
        "supply transfer: {} trials, mean final episode return {:.2}, outputs in {}",
        trials,
        mean_final,
        dir.display()
    );
    Ok(())
}

#[allow(clippy::type_complexity)]
fn load_supply_sources(dir: &Path) -> anyhow::Result<(Vec<Dataset>, Vec<String>, Vec<(f64, f64)>)> {
    let bounds_path = dir.join("bounds.json");
    if !bounds_path.exists() {
        return Err(CliError::MissingData(format!(
            "{} not found; run gen-source-supply first",
            bounds_path.display()
        ))
        .into());
    }
    let bounds: BTreeMap<String, (f64, f64)> =
        serde_json::from_str(&fs::read_to_string(&bounds_path)?)?;
    if bounds.is_empty() {
        return Err(CliError::MissingData("bounds.json lists no sources".into()).into());
    }
    let names: Vec<String> = bounds.keys().cloned().collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let sources = super::load_datasets(dir, &name_refs)?;
    let reward_bounds: Vec<(f64, f64)> = bounds.values().copied().collect();
    Ok((sources, names, reward_bounds))
}

fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    if !path.exists() {
        return Err(CliError::MissingData(format!(
            "target scenario not found: {}",
            path.display()
        ))
        .into());
    }
    Ok(Scenario::load_toml(path)?)
}

fn one_trial(
    config: &ExperimentConfig,
    sources: &[Dataset],
    names: &[String],
    target_scenario: &Scenario,
    reward_bounds: (f64, f64),
    seed: u64,
    trial_dir: &Path,
) -> anyhow::Result<RunTrace> {
    let supply = &config.supply;
    let env = SupplyChainEnv::new(
        target_scenario.clone(),
        SupplyConfig {
            horizon: supply.horizon,
            ..SupplyConfig::default()
        },
    )?;
    let policy = ExplorationPolicy::new(supply.cheap_bias)?;
    let mut learner = SupplyLearner::new(env, policy);

    let encoder = Encoder::new(
        bers_core::supply_chain::ENCODED_DIM,
        &supply.hidden,
        config.model.feature_dim,
        &mut substream(seed, 9),
    )?;
    // Rewards may be negative, so the supply model never log-transforms.
    let mut model = MultiHeadModel::new(
        encoder,
        sources.len() + 1,
        OutputTransform::Identity,
        config.model.train_config(),
    )?;
    let pretrain: Vec<(usize, &Dataset)> = sources.iter().enumerate().collect();
    model.pretrain(
        &pretrain,
        config.model.pretrain_batches,
        config.model.batch_size,
        &mut substream(seed, 8),
    )?;

    let bers = BersConfig {
        episodes: supply.episodes,
        steps_per_episode: supply.horizon,
        schedule: ReuseSchedule::Geometric {
            rate: supply.reuse_rate,
        },
        selection: SelectionStrategy::QpWeights,
        batch: BatchStrategy::Uniform {
            size: supply.inject_batch,
        },
        objective: Objective::Maximize,
        refine_batches: supply.refine_batches,
        refine_batch_size: config.model.batch_size,
        model_updates: true,
        seed,
    };

    let mut snapshot_error: Option<anyhow::Error> = None;
    let refs: Vec<&Dataset> = sources.iter().collect();
    let trace = run_bers(
        &mut learner,
        Some(&mut model),
        &refs,
        &bers,
        Some(reward_bounds),
        |view| {
            if supply.snapshots.contains(&view.episode) && snapshot_error.is_none() {
                if let Err(err) = write_snapshot(trial_dir, names, view) {
                    snapshot_error = Some(err);
                }
            }
        },
    )?;
    match snapshot_error {
        Some(err) => Err(err),
        None => Ok(trace),
    }
}

#[derive(serde::Serialize)]
struct HeadSnapshot {
    task: String,
    observations: f64,
    alpha: f64,
    beta: f64,
    /// Posterior mean of the observation noise variance; absent until the
    /// head has seen data.
    noise_variance_mean: Option<f64>,
    coefficient_mean: Vec<f64>,
    coefficient_covariance_trace: Option<f64>,
}

#[derive(serde::Serialize)]
struct PosteriorSnapshot {
    episode: usize,
    reuse_probability: f64,
    weights: Vec<f64>,
    target_rows: usize,
    heads: Vec<HeadSnapshot>,
}

fn write_snapshot(
    trial_dir: &Path,
    names: &[String],
    view: &EpisodeSnapshot<'_>,
) -> anyhow::Result<()> {
    let model = view
        .model
        .ok_or_else(|| CliError::Config("snapshots need model updates".into()))?;
    let head_name = |i: usize| {
        names
            .get(i)
            .cloned()
            .unwrap_or_else(|| "target".to_string())
    };
    let heads: Vec<HeadSnapshot> = (0..model.n_heads())
        .map(|i| -> anyhow::Result<HeadSnapshot> {
            let head: &NigHead = model.head(i)?;
            Ok(HeadSnapshot {
                task: head_name(i),
                observations: head.observation_count(),
                alpha: head.alpha(),
                beta: head.beta(),
                noise_variance_mean: head.noise_variance_mean().ok(),
                coefficient_mean: head.mu().to_vec(),
                coefficient_covariance_trace: head.covariance_trace().ok(),
            })
        })
        .collect::<Result<_, _>>()?;
    let snapshot = PosteriorSnapshot {
        episode: view.episode,
        reuse_probability: view.p,
        weights: view.weights.to_vec(),
        target_rows: view.target_data.len(),
        heads,
    };
    let path = trial_dir.join(format!("snapshot-ep{}.json", view.episode));
    fs::write(&path, serde_json::to_string_pretty(&snapshot)?)?;
    Ok(())
}
