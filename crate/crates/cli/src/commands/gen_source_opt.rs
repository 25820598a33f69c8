//! Generate the optimization source datasets: run the base optimizer on each
//! source function until the collection fitness and store every evaluation.

use std::fs;

use bers_core::benchmark_functions::{BenchmarkKind, BenchmarkTask};
use bers_core::diffevo::{run_de, DeConfig, StopCondition};
use bers_core::neural_linear::Dataset;
use bers_core::rng::substream;

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;

pub const SOURCE_KINDS: [BenchmarkKind; 3] = [
    BenchmarkKind::Rosenbrock,
    BenchmarkKind::Ackley,
    BenchmarkKind::Sphere,
];

pub fn run(config: &ExperimentConfig) -> anyhow::Result<()> {
    let opt = &config.optimization;
    let dir = config.out.join("sources");
    fs::create_dir_all(&dir)?;
    let mut manifest = Manifest::new("gen-source-opt", config);
    manifest.seeds = vec![config.seed];

    for (k, kind) in SOURCE_KINDS.iter().enumerate() {
        let task = BenchmarkTask::new(*kind, opt.dim)?;
        let de = DeConfig::new(opt.np, opt.cr, opt.f, task.bounds())?;
        let stop = StopCondition {
            max_generations: opt.generation_cap,
            target_fitness: opt.source_fitness,
        };
        let mut eval = |x: &[f64]| task.evaluate_transformed(x).expect("in-dimension point");
        let run = run_de(
            de,
            stop,
            &mut eval,
            &mut substream(config.seed, 1 + k as u64),
        )?;
        let last = run.history.last().copied();

        let mut dataset = Dataset::new(kind.name(), opt.dim);
        dataset.extend(run.demonstrations)?;
        let path = dir.join(format!("{}.csv", kind.name()));
        dataset.save_csv(&path)?;
        manifest.add_dataset(&path)?;
        manifest.add_output(format!("{}.csv", kind.name()));

        match last {
            Some(record) => println!(
                "{}: {} demonstrations, best {:.4} after {} generations",
                kind.name(),
                dataset.len(),
                record.best_fitness,
                record.generation
            ),
            None => println!(
                "{}: {} demonstrations (initial population only)",
                kind.name(),
                dataset.len()
            ),
        }
    }

    let path = manifest.write(&dir)?;
    println!("manifest: {}", path.display());
    Ok(())
}
