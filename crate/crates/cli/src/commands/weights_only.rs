//! Solve the source weighting for datasets already on disk: pretrain on the
//! sources, refine on the pooled data, and report one weight vector. No
//! environment or optimizer is touched after the files are read.

use std::fs;
use std::path::{Path, PathBuf};

use bers_core::neural_linear::{Dataset, Encoder, MultiHeadModel, OutputTransform};
use bers_core::rng::substream;
use bers_core::source_weighting::build_qp;

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;
use crate::CliError;

pub fn run(
    config: &ExperimentConfig,
    data: Option<PathBuf>,
    target_data: &Path,
    transform: Option<String>,
    refine_batches: usize,
) -> anyhow::Result<()> {
    let data_dir = data.unwrap_or_else(|| config.out.join("sources"));
    let (sources, names) = load_all_sources(&data_dir, target_data)?;
    if !target_data.exists() {
        return Err(CliError::MissingData(format!(
            "target dataset not found: {}",
            target_data.display()
        ))
        .into());
    }
    let target = Dataset::load_csv(target_data)?;
    let transform = parse_transform(transform.as_deref(), config.model.transform)?;
    let seed = config.seed;

    let dir = config.out.join("weights");
    fs::create_dir_all(&dir)?;

    let encoder = Encoder::new(
        target.input_dim(),
        &config.model.hidden,
        config.model.feature_dim,
        &mut substream(seed, 9),
    )?;
    let mut model = MultiHeadModel::new(
        encoder,
        sources.len() + 1,
        transform,
        config.model.train_config(),
    )?;
    let pretrain: Vec<(usize, &Dataset)> = sources.iter().enumerate().collect();
    model.pretrain(
        &pretrain,
        config.model.pretrain_batches,
        config.model.batch_size,
        &mut substream(seed, 8),
    )?;

    let mut pooled: Vec<(usize, &Dataset)> = sources.iter().enumerate().collect();
    pooled.push((sources.len(), &target));
    model.train_batches(
        &pooled,
        refine_batches,
        config.model.batch_size,
        &mut substream(seed, 10),
    )?;
    model.recompute_heads(&pooled)?;

    let source_heads: Vec<_> = (0..sources.len())
        .map(|i| model.head(i).expect("head exists"))
        .collect();
    let qp = build_qp(model.head(sources.len())?, &source_heads)?;
    let weights = qp.solve()?;

    let mut manifest = Manifest::new("weights-only", config);
    manifest.seeds = vec![seed];
    for name in &names {
        manifest.add_dataset(&data_dir.join(format!("{name}.csv")))?;
    }
    manifest.add_dataset(target_data)?;

    #[derive(serde::Serialize)]
    struct WeightsOut<'a> {
        sources: &'a [String],
        weights: &'a [f64],
        refine_batches: usize,
    }
    let out = WeightsOut {
        sources: &names,
        weights: weights.as_slice(),
        refine_batches,
    };
    fs::write(
        dir.join("weights.json"),
        serde_json::to_string_pretty(&out)?,
    )?;
    manifest.add_output("weights.json");
    manifest.write(&dir)?;

    for (name, w) in names.iter().zip(weights.as_slice()) {
        println!("{name}: {w:.4}");
    }
    Ok(())
}

/// Every *.csv in the directory is a source, sorted by file name for a
/// deterministic head order; the target file is skipped if it lives there.
fn load_all_sources(dir: &Path, target: &Path) -> anyhow::Result<(Vec<Dataset>, Vec<String>)> {
    if !dir.is_dir() {
        return Err(CliError::MissingData(format!(
            "source directory not found: {}",
            dir.display()
        ))
        .into());
    }
    let target = target.canonicalize().ok();
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            if path.extension().is_some_and(|e| e == "csv") && path.canonicalize().ok() != target {
                Some(path.file_stem()?.to_string_lossy().into_owned())
            } else {
                None
            }
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(
            CliError::MissingData(format!("no source datasets in {}", dir.display())).into(),
        );
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let sources = super::load_datasets(dir, &name_refs)?;
    Ok((sources, names))
}

fn parse_transform(
    flag: Option<&str>,
    fallback: OutputTransform,
) -> anyhow::Result<OutputTransform> {
    match flag {
        None => Ok(fallback),
        Some("identity") => Ok(OutputTransform::Identity),
        Some("log1p") => Ok(OutputTransform::Log1p),
        Some(other) => Err(CliError::Config(format!("unknown transform '{other}'")).into()),
    }
}
