//! Generate supply-chain source datasets: collect transitions under the
//! stochastic exploration policy in each cost scenario, subsample, trim the
//! reward tails, and persist the trimmed sets with their reward bounds.

use std::collections::BTreeMap;
use std::fs;

use bers_core::rng::substream;
use bers_core::supply_chain::{
    builtin_scenarios, generate_demonstrations, trim_outliers, ExplorationPolicy, SupplyChainEnv,
    SupplyConfig,
};

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;

pub fn run(config: &ExperimentConfig) -> anyhow::Result<()> {
    let supply = &config.supply;
    let dir = config.out.join("sources-supply");
    let scenario_dir = dir.join("scenarios");
    fs::create_dir_all(&scenario_dir)?;
    let mut manifest = Manifest::new("gen-source-supply", config);
    manifest.seeds = vec![config.seed];

    let (scenarios, target) = builtin_scenarios();
    let policy = ExplorationPolicy::new(supply.cheap_bias)?;
    let env_config = SupplyConfig {
        horizon: supply.horizon,
        ..SupplyConfig::default()
    };

    let mut bounds = BTreeMap::new();
    for (k, scenario) in scenarios.iter().enumerate() {
        let env = SupplyChainEnv::new(scenario.clone(), env_config.clone())?;
        let raw = generate_demonstrations(
            &env,
            &policy,
            supply.collect_steps,
            &mut substream(config.seed, 1 + k as u64),
        )?;
        let kept = if supply.keep_samples < raw.len() {
            raw.subsample(
                supply.keep_samples,
                &mut substream(config.seed, 11 + k as u64),
            )
        } else {
            raw
        };
        let (trimmed, reward_bounds) = trim_outliers(&kept, supply.trim_fraction)?;

        let path = dir.join(format!("{}.csv", scenario.name));
        trimmed.save_csv(&path)?;
        manifest.add_dataset(&path)?;
        manifest.add_output(format!("{}.csv", scenario.name));
        scenario.save_toml(scenario_dir.join(format!("{}.toml", scenario.name)))?;
        manifest.add_output(format!("scenarios/{}.toml", scenario.name));
        bounds.insert(scenario.name.clone(), reward_bounds);

        println!(
            "{}: {} transitions kept, rewards in [{:.3}, {:.3}]",
            scenario.name,
            trimmed.len(),
            reward_bounds.0,
            reward_bounds.1
        );
    }
    target.save_toml(scenario_dir.join("target.toml"))?;
    manifest.add_output("scenarios/target.toml".to_string());

    let bounds_path = dir.join("bounds.json");
    fs::write(&bounds_path, serde_json::to_string_pretty(&bounds)?)?;
    manifest.add_output("bounds.json");

    let path = manifest.write(&dir)?;
    println!("manifest: {}", path.display());
    Ok(())
}
