use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural_linear::data::Dataset;
use crate::neural_linear::encoder::Encoder;
use crate::neural_linear::head::{NigHead, NigPrior, SuffStats};
use crate::numerics::{cholesky, dot, ln_gamma, Matrix, NodeId, Tape};
use crate::rng::Stream;

const LN_2PI: f64 = 1.837877066409345483560659472811;
const CHECKPOINT_VERSION: u32 = 1;
/// Rows encoded per chunk when recomputing heads over full datasets.
const ENCODE_CHUNK: usize = 512;

/// Transform applied to raw targets before they reach the regression heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    Identity,
    /// `ln(1 + y)`, for non-negative targets with a heavy right tail.
    Log1p,
}

impl OutputTransform {
    pub fn apply(&self, y: f64) -> Result<f64> {
        match self {
            OutputTransform::Identity => Ok(y),
            OutputTransform::Log1p => {
                if y <= -1.0 {
                    return Err(Error::NegativeInput(y));
                }
                Ok((1.0 + y).ln())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// What `refine` is allowed to touch after pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineScope {
    /// Gradient steps keep moving the encoder; heads are then recomputed.
    EncoderAndHeads,
    /// The encoder is frozen; refine only recomputes the closed-form heads.
    HeadsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Coefficient of the squared-norm penalty subtracted from the objective.
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub refine_scope: RefineScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            optimizer: Optimizer::Sgd,
            refine_scope: RefineScope::EncoderAndHeads,
        }
    }
}

/// A per-head slice of a training batch: input rows plus raw targets.
#[derive(Debug, Clone)]
pub struct HeadBatch {
    pub head: usize,
    pub x: Matrix,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

/// Shared encoder plus one normal-inverse-gamma head per task. The encoder is
/// trained by gradient ascent on the summed marginal log likelihood of the
/// batches under each head's prior, minus a squared-norm penalty on the
/// encoder parameters; heads are recomputed in closed form from full datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadModel {
    encoder: Encoder,
    heads: Vec<NigHead>,
    transform: OutputTransform,
    config: TrainConfig,
    adam: Option<AdamState>,
}

impl MultiHeadModel {
    pub fn new(
        encoder: Encoder,
        n_heads: usize,
        transform: OutputTransform,
        config: TrainConfig,
    ) -> Result<Self> {
        if n_heads == 0 {
            return Err(Error::InvalidConfig("model needs at least one head".into()));
        }
        if !(config.learning_rate > 0.0) || config.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(
                "learning rate must be positive and weight decay non-negative".into(),
            ));
        }
        let prior = NigPrior::standard(encoder.output_dim());
        let heads = (0..n_heads)
            .map(|_| NigHead::from_prior(prior.clone()))
            .collect();
        Ok(MultiHeadModel {
            encoder,
            heads,
            transform,
            config,
            adam: None,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head(&self, i: usize) -> Result<&NigHead> {
        self.heads.get(i).ok_or(Error::UnknownHead {
            index: i,
            count: self.heads.len(),
        })
    }

    pub fn heads(&self) -> &[NigHead] {
        &self.heads
    }

    pub fn transform(&self) -> OutputTransform {
        self.transform
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Posterior mean prediction on the transformed target scale.
    pub fn predict(&self, head: usize, x: &[f64]) -> Result<f64> {
        let mu = self.head(head)?.mu().to_vec();
        let phi = self.encoder.encode(x)?;
        Ok(dot(&phi, &mu))
    }

    /// Objective value and per-parameter ascent gradients for one batch set.
    ///
    /// The objective is `sum_b logML(batch_b | prior of head_b)` minus
    /// `weight_decay * sum ||theta||^2`. Marginal likelihoods are taken with
    /// respect to each head's anchored prior, so the objective is a pure
    /// function of the encoder parameters and the batch.
    pub fn objective_and_gradients(&self, batches: &[HeadBatch]) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let params = self.encoder.record_params(&mut tape);

        let mut objective: Option<NodeId> = None;
        let push = |tape: &mut Tape, obj: &mut Option<NodeId>, term: NodeId| -> Result<()> {
            *obj = Some(match *obj {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
            Ok(())
        };

        for batch in batches {
            if batch.x.rows() != batch.y.len() {
                return Err(Error::DimensionMismatch {
                    expected: batch.x.rows(),
                    got: batch.y.len(),
                });
            }
            if batch.y.is_empty() {
                continue;
            }
            let head = self.head(batch.head)?;
            let term = self.record_evidence(&mut tape, &params, head.prior(), batch)?;
            push(&mut tape, &mut objective, term)?;
        }

        if self.config.weight_decay > 0.0 {
            for &p in &params {
                let sq = tape.square(p);
                let ss = tape.reduce_sum(sq);
                let term = tape.scale(ss, -self.config.weight_decay);
                push(&mut tape, &mut objective, term)?;
            }
        }

        let objective = match objective {
            Some(node) => node,
            // No data and no penalty: constant objective, zero gradients.
            None => tape.constant(Matrix::zeros(1, 1)),
        };
        let value = tape.value(objective).get(0, 0);
        if !value.is_finite() {
            return Err(Error::NonFinite("training objective"));
        }
        let grads = tape.gradient(objective)?;
        let out = params.iter().map(|&p| grads.wrt(&tape, p)).collect();
        Ok((value, out))
    }

    /// Record the log marginal likelihood of one batch under a head's prior.
    fn record_evidence(
        &self,
        tape: &mut Tape,
        params: &[NodeId],
        prior: &NigPrior,
        batch: &HeadBatch,
    ) -> Result<NodeId> {
        let n = batch.y.len();
        let y: Vec<f64> = batch
            .y
            .iter()
            .map(|&v| self.transform.apply(v))
            .collect::<Result<_>>()?;

        let phi = self.encoder.record_forward(tape, params, &batch.x)?;
        let phi_t = tape.transpose(phi);
        let gram = tape.matmul(phi_t, phi)?;
        let lambda_n = {
            let l0 = tape.constant(prior.lambda0.clone());
            tape.add(gram, l0)?
        };

        // h = Phi^T y + Lambda0 mu0
        let l0_mu0 = prior.lambda0.matvec(&prior.mu0)?;
        let h = {
            let y_col = tape.constant(Matrix::column(&y)?);
            let pty = tape.matmul(phi_t, y_col)?;
            let c = tape.constant(Matrix::column(&l0_mu0)?);
            tape.add(pty, c)?
        };
        // beta_n = beta0 + (y'y + mu0' Lambda0 mu0 - h' Lambda_n^{-1} h) / 2
        let q = tape.quad_form_spd_inv(lambda_n, h)?;
        let base = prior.beta0 + 0.5 * (dot(&y, &y) + dot(&prior.mu0, &l0_mu0));
        let beta_n = {
            let b = tape.constant(Matrix::new(1, 1, vec![base])?);
            let negq = tape.scale(q, -0.5);
            tape.add(b, negq)?
        };

        let alpha_n = prior.alpha0 + n as f64 / 2.0;
        let const_part = -0.5 * n as f64 * LN_2PI
            + 0.5 * cholesky(&prior.lambda0)?.log_det()
            + prior.alpha0 * prior.beta0.ln()
            + ln_gamma(alpha_n)
            - ln_gamma(prior.alpha0);

        let ld = tape.log_det_spd(lambda_n)?;
        let log_beta = tape.log(beta_n)?;
        let c = tape.constant(Matrix::new(1, 1, vec![const_part])?);
        let t1 = tape.scale(ld, -0.5);
        let t2 = tape.scale(log_beta, -alpha_n);
        let s = tape.add(t1, t2)?;
        tape.add(c, s)
    }

    /// One gradient-ascent step on the batch objective. Returns the objective
    /// value before the step.
    pub fn gradient_step(&mut self, batches: &[HeadBatch]) -> Result<f64> {
        let (value, grads) = self.objective_and_gradients(batches)?;
        let lr = self.config.learning_rate;
        match self.config.optimizer {
            Optimizer::Sgd => {
                let mut slots = self.encoder.parameters_mut();
                for (slot, g) in slots.iter_mut().zip(&grads) {
                    **slot = slot.add(&g.scale(lr))?;
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                if self.adam.is_none() {
                    let zero: Vec<Matrix> = grads
                        .iter()
                        .map(|g| Matrix::zeros(g.rows(), g.cols()))
                        .collect();
                    self.adam = Some(AdamState {
                        m: zero.clone(),
                        v: zero,
                        t: 0,
                    });
                }
                let state = self.adam.as_mut().unwrap();
                state.t += 1;
                let bc1 = 1.0 - beta1.powi(state.t as i32);
                let bc2 = 1.0 - beta2.powi(state.t as i32);
                let mut slots = self.encoder.parameters_mut();
                for ((slot, g), (m, v)) in slots
                    .iter_mut()
                    .zip(&grads)
                    .zip(state.m.iter_mut().zip(state.v.iter_mut()))
                {
                    *m = m.scale(beta1).add(&g.scale(1.0 - beta1))?;
                    *v = v.scale(beta2).add(&g.hadamard(g)?.scale(1.0 - beta2))?;
                    let step = m
                        .scale(1.0 / bc1)
                        .hadamard(&v.scale(1.0 / bc2).map(|x| 1.0 / (x.sqrt() + epsilon)))?;
                    **slot = slot.add(&step.scale(lr))?;
                }
            }
        }
        Ok(value)
    }

    /// Draw one pooled batch: `batch_size` samples uniform with replacement
    /// from the union of the datasets, then split by head. Heads that drew no
    /// samples are absent from the result.
    pub fn pooled_batch(
        data: &[(usize, &Dataset)],
        batch_size: usize,
        rng: &mut Stream,
    ) -> Vec<HeadBatch> {
        let total: usize = data.iter().map(|(_, d)| d.len()).sum();
        if total == 0 || batch_size == 0 {
            return Vec::new();
        }
        let mut drawn: Vec<Vec<usize>> = vec![Vec::new(); data.len()];
        for _ in 0..batch_size {
            let mut k = rng.gen_range(0..total);
            for (pos, (_, d)) in data.iter().enumerate() {
                if k < d.len() {
                    drawn[pos].push(k);
                    break;
                }
                k -= d.len();
            }
        }
        let mut out = Vec::new();
        for (pos, rows) in drawn.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let (head, d) = data[pos];
            let xs: Vec<Vec<f64>> = rows.iter().map(|&i| d.demo(i).x.clone()).collect();
            let y: Vec<f64> = rows.iter().map(|&i| d.demo(i).y).collect();
            out.push(HeadBatch {
                head,
                x: Matrix::from_rows(&xs).expect("dataset rows share a width"),
                y,
            });
        }
        out
    }

    /// Run `n_batches` gradient steps on pooled batches drawn from `data`.
    pub fn train_batches(
        &mut self,
        data: &[(usize, &Dataset)],
        n_batches: usize,
        batch_size: usize,
        rng: &mut Stream,
    ) -> Result<()> {
        for _ in 0..n_batches {
            let batches = Self::pooled_batch(data, batch_size, rng);
            if batches.is_empty() {
                continue;
            }
            self.gradient_step(&batches)?;
        }
        Ok(())
    }

    /// Recompute every head in closed form from the given full datasets under
    /// the current encoder. Heads with no dataset listed are reset to their
    /// priors; a head listed several times sees the union of its datasets.
    pub fn recompute_heads(&mut self, data: &[(usize, &Dataset)]) -> Result<()> {
        let dim = self.encoder.output_dim();
        let mut stats: Vec<Option<SuffStats>> = vec![None; self.heads.len()];
        for &(head, ds) in data {
            if head >= self.heads.len() {
                return Err(Error::UnknownHead {
                    index: head,
                    count: self.heads.len(),
                });
            }
            let acc = stats[head].get_or_insert_with(|| SuffStats::zeros(dim));
            let mut start = 0;
            while start < ds.len() {
                let end = (start + ENCODE_CHUNK).min(ds.len());
                let xs: Vec<Vec<f64>> = (start..end).map(|i| ds.demo(i).x.clone()).collect();
                let phi = self.encoder.encode_batch(&Matrix::from_rows(&xs)?)?;
                for (r, i) in (start..end).enumerate() {
                    let y = self.transform.apply(ds.demo(i).y)?;
                    acc.add_row(phi.row(r), y);
                }
                start = end;
            }
        }
        for (head, s) in self.heads.iter_mut().zip(&stats) {
            let fresh = NigHead::from_prior(head.prior().clone());
            *head = match s {
                Some(s) => fresh.update_from_stats(s)?,
                None => fresh,
            };
        }
        Ok(())
    }

    /// Initial training pass: gradient steps on pooled batches, then a full
    /// closed-form head recomputation.
    pub fn pretrain(
        &mut self,
        data: &[(usize, &Dataset)],
        n_batches: usize,
        batch_size: usize,
        rng: &mut Stream,
    ) -> Result<()> {
        self.train_batches(data, n_batches, batch_size, rng)?;
        self.recompute_heads(data)
    }

    /// Incremental pass between episodes. Honors the configured refine scope:
    /// with `HeadsOnly` the gradient steps are skipped.
    pub fn refine(
        &mut self,
        data: &[(usize, &Dataset)],
        n_batches: usize,
        batch_size: usize,
        rng: &mut Stream,
    ) -> Result<()> {
        if self.config.refine_scope == RefineScope::EncoderAndHeads {
            self.train_batches(data, n_batches, batch_size, rng)?;
        }
        self.recompute_heads(data)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let doc = Checkpoint {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let json = serde_json::to_string(&doc)
            .map_err(|e| Error::Parse(format!("checkpoint encode: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MultiHeadModel> {
        let json = std::fs::read_to_string(path)?;
        let doc: Checkpoint = serde_json::from_str(&json)
            .map_err(|e| Error::Parse(format!("checkpoint decode: {e}")))?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint version {} unsupported, expected {CHECKPOINT_VERSION}",
                doc.version
            )));
        }
        Ok(doc.model)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: MultiHeadModel,
}
