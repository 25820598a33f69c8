use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural_linear::{Dataset, Demonstration};
use crate::rng::Stream;
use crate::supply_chain::{
    encode_sa, Action, SupplyChainEnv, ACTION_DIM, N_NODES, N_WAREHOUSES, TIER_LOW,
};

/// Random search policy over the action space. Each simplex is sampled as a
/// Dirichlet draw built from sums of unit exponentials with integer
/// concentrations, so the number of random draws per action is fixed by the
/// concentrations alone: one uniform for the production level and one
/// exponential per simplex entry per unit of concentration. With
/// `cheap_bias = 1` the policy is uniform and consumes an identical stream
/// regardless of the price table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationPolicy {
    /// Integer Dirichlet concentration on split entries whose route is
    /// low-tier; all other entries (and every keep entry) use 1.
    pub cheap_bias: u32,
}

impl Default for ExplorationPolicy {
    fn default() -> Self {
        ExplorationPolicy { cheap_bias: 1 }
    }
}

impl ExplorationPolicy {
    pub fn new(cheap_bias: u32) -> Result<Self> {
        if cheap_bias == 0 {
            return Err(Error::InvalidConfig("cheap bias must be at least 1".into()));
        }
        Ok(ExplorationPolicy { cheap_bias })
    }

    pub fn sample_action(&self, env: &SupplyChainEnv, rng: &mut Stream) -> Action {
        let scenario = env.scenario();
        let mut v = vec![0.0; ACTION_DIM];
        v[0] = rng.gen::<f64>();

        // Gamma(k, 1) for integer k as a sum of k unit exponentials; the
        // normalized vector is Dirichlet with those concentrations.
        let gamma_int = |k: u32, rng: &mut Stream| -> f64 {
            let mut acc = 0.0;
            for _ in 0..k {
                acc -= (1.0 - rng.gen::<f64>()).ln();
            }
            acc
        };
        let fill = |slice: &mut [f64], conc: &[u32], rng: &mut Stream| {
            let mut total = 0.0;
            for (s, &k) in slice.iter_mut().zip(conc) {
                *s = gamma_int(k, rng);
                total += *s;
            }
            for s in slice.iter_mut() {
                *s /= total;
            }
        };

        let mut conc = vec![1u32; N_NODES];
        for w in 0..N_WAREHOUSES {
            if scenario.factory_tiers[w] == TIER_LOW {
                conc[1 + w] = self.cheap_bias;
            }
        }
        fill(&mut v[1..1 + N_NODES], &conc, rng);

        for w in 0..N_WAREHOUSES {
            let mut conc = vec![1u32; N_WAREHOUSES];
            for (d, c) in conc.iter_mut().enumerate() {
                if d != w && scenario.warehouse_tiers[w][d] == TIER_LOW {
                    *c = self.cheap_bias;
                }
            }
            let start = 1 + N_NODES + w * N_WAREHOUSES;
            fill(&mut v[start..start + N_WAREHOUSES], &conc, rng);
        }

        Action::new(v).expect("sampled splits lie on the simplex")
    }
}

/// Roll the policy for `steps` environment steps, restarting from the
/// initial state every `horizon` steps, and record one demonstration per
/// transition with the step reward as its target.
pub fn generate_demonstrations(
    env: &SupplyChainEnv,
    policy: &ExplorationPolicy,
    steps: usize,
    rng: &mut Stream,
) -> Result<Dataset> {
    let mut ds = Dataset::new(env.scenario().name.clone(), super::ENCODED_DIM);
    let mut state = env.initial_state();
    for t in 0..steps {
        if t > 0 && t % env.config().horizon == 0 {
            state = env.initial_state();
        }
        let action = policy.sample_action(env, rng);
        let (next, info) = env.step(&state, &action, rng)?;
        ds.push(Demonstration::new(
            encode_sa(&state, &action, &next),
            info.reward,
        )?)?;
        state = next;
    }
    Ok(ds)
}

/// Drop the `tail_fraction` lowest- and highest-target demonstrations
/// (`floor(n * tail_fraction)` from each side, ordered by target then by
/// position) and report the surviving target range. Survivors keep their
/// original order.
pub fn trim_outliers(ds: &Dataset, tail_fraction: f64) -> Result<(Dataset, (f64, f64))> {
    if !(0.0..0.5).contains(&tail_fraction) {
        return Err(Error::InvalidConfig(format!(
            "tail fraction {tail_fraction} outside [0, 0.5)"
        )));
    }
    let n = ds.len();
    let k = (n as f64 * tail_fraction).floor() as usize;
    if n == 0 || n <= 2 * k {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| ds.demo(i).y.total_cmp(&ds.demo(j).y).then(i.cmp(&j)));
    let mut keep = vec![true; n];
    for &i in order.iter().take(k) {
        keep[i] = false;
    }
    for &i in order.iter().rev().take(k) {
        keep[i] = false;
    }
    let mut out = Dataset::new(ds.task_id(), ds.input_dim());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, demo) in ds.iter().enumerate() {
        if keep[i] {
            lo = lo.min(demo.y);
            hi = hi.max(demo.y);
            out.push(demo.clone())?;
        }
    }
    Ok((out, (lo, hi)))
}
