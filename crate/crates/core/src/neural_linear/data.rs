use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// One observed (input, outcome) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Demonstration {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("demonstration"));
        }
        Ok(Demonstration { x, y })
    }
}

/// A task's demonstrations, all with the same input width.
///
/// File form is CSV: `x0..x{D-1], y, task_id` per row, floats written with
/// shortest round-trip formatting so load/save is bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    task_id: String,
    input_dim: usize,
    demos: Vec<Demonstration>,
}

impl Dataset {
    pub fn new(task_id: impl Into<String>, input_dim: usize) -> Self {
        Dataset {
            task_id: task_id.into(),
            input_dim,
            demos: Vec::new(),
        }
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn push(&mut self, demo: Demonstration) -> Result<()> {
        if demo.x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: demo.x.len(),
            });
        }
        self.demos.push(demo);
        Ok(())
    }

    pub fn extend(&mut self, demos: impl IntoIterator<Item = Demonstration>) -> Result<()> {
        for d in demos {
            self.push(d)?;
        }
        Ok(())
    }

    pub fn demo(&self, i: usize) -> &Demonstration {
        &self.demos[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Demonstration> {
        self.demos.iter()
    }

    /// Demonstration with the smallest y.
    pub fn best_min(&self) -> Option<&Demonstration> {
        self.demos.iter().min_by(|a, b| a.y.total_cmp(&b.y))
    }

    /// Demonstration with the largest y.
    pub fn best_max(&self) -> Option<&Demonstration> {
        self.demos.iter().max_by(|a, b| a.y.total_cmp(&b.y))
    }

    /// Uniform subsample without replacement; returns the whole dataset when
    /// `n >= len`. Selection order follows the original order.
    pub fn subsample(&self, n: usize, rng: &mut Stream) -> Dataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        for i in 0..n {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        let mut keep = idx[..n].to_vec();
        keep.sort_unstable();
        let mut out = Dataset::new(self.task_id.clone(), self.input_dim);
        for i in keep {
            out.demos.push(self.demos[i].clone());
        }
        out
    }

    /// Keep only demonstrations whose y lies inside every given bound pair.
    pub fn filter_to_bounds(&self, bounds: &[(f64, f64)]) -> Dataset {
        let mut out = Dataset::new(self.task_id.clone(), self.input_dim);
        for d in &self.demos {
            if bounds.iter().all(|&(lo, hi)| d.y >= lo && d.y <= hi) {
                out.demos.push(d.clone());
            }
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        let mut header = String::new();
        for i in 0..self.input_dim {
            let _ = write!(header, "x{i},");
        }
        header.push_str("y,task_id");
        writeln!(w, "{header}")?;
        for d in &self.demos {
            let mut line = String::new();
            for v in &d.x {
                let _ = write!(line, "{v},");
            }
            let _ = write!(line, "{},{}", d.y, self.task_id);
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[cols.len() - 1] != "task_id" || cols[cols.len() - 2] != "y" {
            return Err(Error::Parse(format!(
                "{}: expected header x0..,y,task_id",
                path.display()
            )));
        }
        let input_dim = cols.len() - 2;
        let mut ds: Option<Dataset> = None;
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != input_dim + 2 {
                return Err(Error::Parse(format!(
                    "{}:{}: expected {} fields, got {}",
                    path.display(),
                    ln + 2,
                    input_dim + 2,
                    fields.len()
                )));
            }
            let mut x = Vec::with_capacity(input_dim);
            for f in &fields[..input_dim] {
                x.push(
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), ln + 2)))?,
                );
            }
            let y = fields[input_dim]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), ln + 2)))?;
            let task = fields[input_dim + 1].to_string();
            let ds = ds.get_or_insert_with(|| Dataset::new(task.clone(), input_dim));
            ds.push(Demonstration::new(x, y)?)?;
        }
        ds.ok_or(Error::EmptyDataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn sample(n: usize) -> Dataset {
        let mut ds = Dataset::new("t", 3);
        for i in 0..n {
            let v = i as f64;
            ds.push(Demonstration::new(vec![v, 0.5 * v, -v], v * 0.1).unwrap())
                .unwrap();
        }
        ds
    }

    #[test]
    fn push_checks_dimension() {
        let mut ds = Dataset::new("t", 2);
        assert!(ds
            .push(Demonstration::new(vec![1.0], 0.0).unwrap())
            .is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Demonstration::new(vec![f64::NAN], 0.0).is_err());
        assert!(Demonstration::new(vec![0.0], f64::INFINITY).is_err());
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let mut ds = Dataset::new("alpha", 2);
        ds.push(Demonstration::new(vec![0.1, 1.0 / 3.0], 2.0f64.sqrt()).unwrap())
            .unwrap();
        ds.push(Demonstration::new(vec![-1e-300, 7.25], -0.0).unwrap())
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        ds.save_csv(&path).unwrap();
        let back = Dataset::load_csv(&path).unwrap();
        assert_eq!(back.task_id(), "alpha");
        assert_eq!(back.len(), ds.len());
        for (a, b) in ds.iter().zip(back.iter()) {
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            for (u, v) in a.x.iter().zip(&b.x) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn subsample_sizes() {
        let ds = sample(30);
        let mut rng = Stream::seed_from_u64(1);
        assert_eq!(ds.subsample(10, &mut rng).len(), 10);
        assert_eq!(ds.subsample(40, &mut rng).len(), 30);
    }

    #[test]
    fn best_min_max() {
        let ds = sample(5);
        assert_eq!(ds.best_min().unwrap().y, 0.0);
        assert_eq!(ds.best_max().unwrap().y, 0.4);
    }

    #[test]
    fn filter_keeps_intersection() {
        let ds = sample(10);
        let kept = ds.filter_to_bounds(&[(0.1, 0.8), (0.0, 0.35)]);
        assert_eq!(kept.len(), 3); // y in {0.1, 0.2, 0.3}
    }
}
