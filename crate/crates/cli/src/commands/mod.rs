//! Experiment commands and the plumbing they share.

pub mod gen_source_opt;
pub mod gen_source_supply;
pub mod multitask_opt;
pub mod transfer_opt;
pub mod transfer_supply;
pub mod weights_only;

use std::path::Path;

use bers_core::bers::RunTrace;
use bers_core::neural_linear::Dataset;

use crate::CliError;

/// Run trials as independent concurrent jobs and return them in trial order.
pub(crate) fn run_trials<T: Send>(
    trials: usize,
    job: impl Fn(usize) -> anyhow::Result<T> + Sync,
) -> anyhow::Result<Vec<T>> {
    let results: Vec<anyhow::Result<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..trials)
            .map(|t| {
                let job = &job;
                scope.spawn(move || job(t))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// Load named datasets from a directory, erroring on the first missing file.
pub(crate) fn load_datasets(dir: &Path, names: &[&str]) -> anyhow::Result<Vec<Dataset>> {
    names
        .iter()
        .map(|name| {
            let path = dir.join(format!("{name}.csv"));
            if !path.exists() {
                return Err(CliError::MissingData(format!(
                    "source dataset not found: {}",
                    path.display()
                ))
                .into());
            }
            Ok(Dataset::load_csv(&path)?)
        })
        .collect()
}

/// Cross-trial aggregate: per-episode mean and standard error of the
/// objective plus mean weights, `episode,p_m,mean_objective,stderr_objective,
/// mean_a_1..mean_a_N`.
pub(crate) fn write_aggregate_csv(traces: &[RunTrace], path: &Path) -> anyhow::Result<()> {
    use std::io::Write;
    let first = traces
        .first()
        .ok_or_else(|| CliError::Config("aggregate needs at least one trace".to_string()))?;
    let episodes = first.rows.len();
    let width = first.source_names.len();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "episode,p_m,mean_objective,stderr_objective")?;
    for i in 1..=width {
        write!(file, ",mean_a_{i}")?;
    }
    writeln!(file)?;
    for row in 0..episodes {
        let values: Vec<f64> = traces.iter().map(|t| t.rows[row].objective).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let stderr = standard_error(&values);
        write!(
            file,
            "{},{},{mean},{stderr}",
            first.rows[row].episode, first.rows[row].p
        )?;
        for i in 0..width {
            let w =
                traces.iter().map(|t| t.rows[row].weights[i]).sum::<f64>() / traces.len() as f64;
            write!(file, ",{w}")?;
        }
        writeln!(file)?;
    }
    file.flush()?;
    Ok(())
}

/// Standard error of the mean; zero for a single observation.
pub(crate) fn standard_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use bers_core::bers::TraceRow;

    #[test]
    fn standard_error_matches_hand_computation() {
        // Values 1,2,3: sample variance 1, stderr sqrt(1/3).
        let se = standard_error(&[1.0, 2.0, 3.0]);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(standard_error(&[5.0]), 0.0);
    }

    #[test]
    fn aggregate_averages_rows_across_traces() {
        let trace = |objective: f64, w: f64| RunTrace {
            seed: 1,
            source_names: vec!["a".into(), "b".into()],
            rows: vec![TraceRow {
                episode: 1,
                p: 0.5,
                objective,
                weights: vec![w, 1.0 - w],
            }],
            qp_solves: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.csv");
        write_aggregate_csv(&[trace(1.0, 0.2), trace(3.0, 0.6)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "episode,p_m,mean_objective,stderr_objective,mean_a_1,mean_a_2"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "1");
        assert_eq!(row[2], "2");
        assert!((row[4].parse::<f64>().unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn trials_run_concurrently_and_keep_order() {
        let out = run_trials(8, |t| Ok(t * t)).unwrap();
        assert_eq!(out, vec![0, 1, 4, 9, 16, 25, 36, 49]);
        let err = run_trials(3, |t| {
            if t == 1 {
                Err(anyhow::anyhow!("boom"))
            } else {
                Ok(t)
            }
        })
        .unwrap_err();
        assert_eq!(err.to_string(), "boom");
    }
}
