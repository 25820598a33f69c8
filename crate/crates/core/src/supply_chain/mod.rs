//! A factory-and-six-warehouses inventory MDP. Each step the agent picks a
//! production level and fractional shipment splits; the factory produces,
//! trucks move stock, Poisson demand arrives at the warehouses, and the
//! reward is revenue minus production, storage, and transport costs. Tasks
//! differ only in their transport price table, so trajectories generated by
//! a price-blind policy are identical across tasks step for step.

mod demos;
mod learner;
mod scenario;

pub use demos::{generate_demonstrations, trim_outliers, ExplorationPolicy};
pub use learner::SupplyLearner;
pub use scenario::{builtin_scenarios, Scenario, N_WAREHOUSES, TIER_HIGH, TIER_LOW, TIER_MID};

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Factory plus six warehouses.
pub const N_NODES: usize = N_WAREHOUSES + 1;
/// Inclusive stock cap per node; arrivals beyond it are discarded.
pub const MAX_STOCK: u32 = 50;
/// Units produced at full throttle in one step.
pub const MAX_PRODUCTION: u32 = 35;
/// One production fraction, a 7-way factory split (keep + six warehouses),
/// and a 6-way split per warehouse (the self entry means keep).
pub const ACTION_DIM: usize = 1 + N_NODES + N_WAREHOUSES * N_WAREHOUSES;
/// Model input: stocks, action, next stocks.
pub const ENCODED_DIM: usize = 2 * N_NODES + ACTION_DIM;
/// Units per truck; a partially filled truck costs as much as a full one.
pub const TRUCK_CAPACITY: u32 = 4;

const PRODUCTION_COST: f64 = 0.1;
const REVENUE_PER_UNIT: f64 = 0.6;
const STORAGE_COST: f64 = 0.03;
const SIMPLEX_SUM_TOL: f64 = 1e-6;

/// Stock on hand at every node; index 0 is the factory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub stocks: [u32; N_NODES],
}

impl State {
    pub fn new(stocks: [u32; N_NODES]) -> Result<State> {
        if stocks.iter().any(|&s| s > MAX_STOCK) {
            return Err(Error::InvalidConfig(format!(
                "stock above {MAX_STOCK}: {stocks:?}"
            )));
        }
        Ok(State { stocks })
    }

    pub fn total(&self) -> u32 {
        self.stocks.iter().sum()
    }
}

/// A validated action vector. Layout: `[0]` production fraction in `[0, 1]`;
/// `[1..8]` the factory's 7-way split (keep, then warehouses A..F);
/// `[8 + 6w ..]` warehouse `w`'s 6-way split over warehouses A..F, where the
/// entry for itself means keep. Every split must lie on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    values: Vec<f64>,
}

impl Action {
    pub fn new(values: Vec<f64>) -> Result<Action> {
        if values.len() != ACTION_DIM {
            return Err(Error::DimensionMismatch {
                expected: ACTION_DIM,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAction("non-finite entry".into()));
        }
        let p = values[0];
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidAction(format!(
                "production fraction {p} outside [0, 1]"
            )));
        }
        let check_simplex = |slice: &[f64], label: &str| -> Result<()> {
            if slice.iter().any(|&v| v < -SIMPLEX_SUM_TOL) {
                return Err(Error::InvalidAction(format!(
                    "{label} has a negative entry"
                )));
            }
            let sum: f64 = slice.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
                return Err(Error::InvalidAction(format!(
                    "{label} sums to {sum}, expected 1"
                )));
            }
            Ok(())
        };
        check_simplex(&values[1..1 + N_NODES], "factory split")?;
        for w in 0..N_WAREHOUSES {
            let start = 1 + N_NODES + w * N_WAREHOUSES;
            check_simplex(&values[start..start + N_WAREHOUSES], "warehouse split")?;
        }
        Ok(Action { values })
    }

    /// The all-keep action: produce nothing, ship nothing.
    pub fn idle() -> Action {
        let mut values = vec![0.0; ACTION_DIM];
        values[1] = 1.0;
        for w in 0..N_WAREHOUSES {
            values[1 + N_NODES + w * N_WAREHOUSES + w] = 1.0;
        }
        Action { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn production_fraction(&self) -> f64 {
        self.values[0]
    }

    /// Factory split: index 0 keeps, index `1 + w` ships to warehouse `w`.
    pub fn factory_split(&self) -> &[f64] {
        &self.values[1..1 + N_NODES]
    }

    /// Warehouse `w`'s split over destination warehouses; entry `w` keeps.
    pub fn warehouse_split(&self, w: usize) -> &[f64] {
        let start = 1 + N_NODES + w * N_WAREHOUSES;
        &self.values[start..start + N_WAREHOUSES]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyConfig {
    pub initial_stocks: [u32; N_NODES],
    pub horizon: usize,
    /// Discount factor for discounted-return reporting; step rewards and the
    /// episode return are undiscounted.
    pub gamma: f64,
    /// Mean Poisson demand per warehouse per step.
    pub demand_means: [f64; N_WAREHOUSES],
    /// Whether factory stock incurs the storage cost too.
    pub storage_includes_factory: bool,
}

impl Default for SupplyConfig {
    fn default() -> Self {
        SupplyConfig {
            initial_stocks: [25; N_NODES],
            horizon: 200,
            gamma: 0.96,
            demand_means: [7.0, 6.0, 6.0, 5.0, 5.0, 5.0],
            storage_includes_factory: true,
        }
    }
}

/// Per-step outcome decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub produced: u32,
    pub sold: u32,
    /// Units discarded by the stock cap, from production and arrivals.
    pub overflow: u32,
    pub trucks: u32,
    pub revenue: f64,
    pub production_cost: f64,
    pub transport_cost: f64,
    pub storage_cost: f64,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct SupplyChainEnv {
    scenario: Scenario,
    config: SupplyConfig,
}

impl SupplyChainEnv {
    pub fn new(scenario: Scenario, config: SupplyConfig) -> Result<SupplyChainEnv> {
        if config.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&config.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} outside [0, 1]",
                config.gamma
            )));
        }
        if config.initial_stocks.iter().any(|&s| s > MAX_STOCK) {
            return Err(Error::InvalidConfig("initial stock above cap".into()));
        }
        if config.demand_means.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidConfig("demand means must be positive".into()));
        }
        Ok(SupplyChainEnv { scenario, config })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &SupplyConfig {
        &self.config
    }

    pub fn initial_state(&self) -> State {
        State {
            stocks: self.config.initial_stocks,
        }
    }

    /// Advance one step. Order: produce into the factory (cap applies, cost
    /// on the pre-cap amount), compute all shipments from pre-arrival stocks
    /// (factory first, then warehouses A..F), land arrivals under the cap,
    /// draw Poisson demand per warehouse (lost sales), then charge storage
    /// on the end-of-step stocks.
    pub fn step(
        &self,
        state: &State,
        action: &Action,
        rng: &mut Stream,
    ) -> Result<(State, StepInfo)> {
        let mut stocks = state.stocks;
        let mut overflow = 0u32;

        let produced = (action.production_fraction() * MAX_PRODUCTION as f64).floor() as u32;
        let production_cost = PRODUCTION_COST * produced as f64;
        let factory_room = MAX_STOCK - stocks[0];
        overflow += produced.saturating_sub(factory_room);
        stocks[0] = (stocks[0] + produced).min(MAX_STOCK);

        let mut arrivals = [0u32; N_NODES];
        let mut transport_cost = 0.0;
        let mut trucks_total = 0u32;

        // Factory shipments come out of the post-production stock; every
        // split reads the shipper's stock before any deduction or arrival.
        let factory_stock = stocks[0];
        let split = action.factory_split();
        let mut factory_out = 0u32;
        for w in 0..N_WAREHOUSES {
            let units = (split[1 + w] * factory_stock as f64).floor() as u32;
            if units == 0 {
                continue;
            }
            let trucks = units.div_ceil(TRUCK_CAPACITY);
            trucks_total += trucks;
            transport_cost += trucks as f64 * self.scenario.factory_tiers[w];
            arrivals[1 + w] += units;
            factory_out += units;
        }
        stocks[0] -= factory_out;

        for w in 0..N_WAREHOUSES {
            let own_stock = stocks[1 + w];
            let split = action.warehouse_split(w);
            let mut out = 0u32;
            for d in 0..N_WAREHOUSES {
                if d == w {
                    continue;
                }
                let units = (split[d] * own_stock as f64).floor() as u32;
                if units == 0 {
                    continue;
                }
                let trucks = units.div_ceil(TRUCK_CAPACITY);
                trucks_total += trucks;
                transport_cost += trucks as f64 * self.scenario.warehouse_tiers[w][d];
                arrivals[1 + d] += units;
                out += units;
            }
            stocks[1 + w] -= out;
        }

        for (node, &inbound) in arrivals.iter().enumerate() {
            let room = MAX_STOCK - stocks[node];
            overflow += inbound.saturating_sub(room);
            stocks[node] = (stocks[node] + inbound).min(MAX_STOCK);
        }

        let mut sold = 0u32;
        for w in 0..N_WAREHOUSES {
            let demand = Poisson::new(self.config.demand_means[w])
                .expect("means validated at construction")
                .sample(rng) as u32;
            let met = demand.min(stocks[1 + w]);
            stocks[1 + w] -= met;
            sold += met;
        }
        let revenue = REVENUE_PER_UNIT * sold as f64;

        let stored: u32 = if self.config.storage_includes_factory {
            stocks.iter().sum()
        } else {
            stocks[1..].iter().sum()
        };
        let storage_cost = STORAGE_COST * stored as f64;

        let reward = revenue - production_cost - storage_cost - transport_cost;
        Ok((
            State { stocks },
            StepInfo {
                produced,
                sold,
                overflow,
                trucks: trucks_total,
                revenue,
                production_cost,
                transport_cost,
                storage_cost,
                reward,
            },
        ))
    }
}

/// Flatten a transition into a model input: stocks scaled to `[0, 1]`, the
/// raw action vector, then next stocks scaled likewise.
pub fn encode_sa(state: &State, action: &Action, next: &State) -> Vec<f64> {
    let mut x = Vec::with_capacity(ENCODED_DIM);
    x.extend(state.stocks.iter().map(|&s| s as f64 / MAX_STOCK as f64));
    x.extend_from_slice(action.as_slice());
    x.extend(next.stocks.iter().map(|&s| s as f64 / MAX_STOCK as f64));
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn env(cheap: &[usize]) -> SupplyChainEnv {
        let scenario = Scenario::from_cheap_set("t", cheap).unwrap();
        SupplyChainEnv::new(scenario, SupplyConfig::default()).unwrap()
    }

    fn random_action(rng: &mut Stream) -> Action {
        let mut v = vec![0.0; ACTION_DIM];
        v[0] = rng.gen::<f64>();
        let mut fill_simplex = |slice: &mut [f64], rng: &mut Stream| {
            let mut total = 0.0;
            for s in slice.iter_mut() {
                *s = -(1.0 - rng.gen::<f64>()).ln();
                total += *s;
            }
            for s in slice.iter_mut() {
                *s /= total;
            }
        };
        fill_simplex(&mut v[1..1 + N_NODES], rng);
        for w in 0..N_WAREHOUSES {
            let start = 1 + N_NODES + w * N_WAREHOUSES;
            fill_simplex(&mut v[start..start + N_WAREHOUSES], rng);
        }
        Action::new(v).unwrap()
    }

    #[test]
    fn idle_step_from_empty_state_is_free() {
        let env = env(&[0, 1]);
        let state = State::new([0; N_NODES]).unwrap();
        let mut rng = substream(3, 1);
        let (next, info) = env.step(&state, &Action::idle(), &mut rng).unwrap();
        assert_eq!(next, state);
        assert_eq!(info.reward, 0.0);
        assert_eq!(info.produced, 0);
        assert_eq!(info.sold, 0);
        assert_eq!(info.trucks, 0);
    }

    #[test]
    fn full_throttle_produces_thirty_five_at_cost() {
        let env = env(&[0]);
        let state = State::new([0; N_NODES]).unwrap();
        let mut a = Action::idle();
        a.values[0] = 1.0;
        let mut rng = substream(5, 1);
        let (next, info) = env.step(&state, &a, &mut rng).unwrap();
        assert_eq!(info.produced, 35);
        assert!((info.production_cost - 3.5).abs() < 1e-12);
        assert_eq!(next.stocks[0], 35);
        // Fractional production floors.
        a.values[0] = 0.5;
        let (_, info) = env.step(&state, &a, &mut rng).unwrap();
        assert_eq!(info.produced, 17);
    }

    #[test]
    fn nine_units_need_three_trucks() {
        let env = env(&[0]);
        // Factory ships 9/20 of its stock of 20 to warehouse A.
        let state = State::new([20, 0, 0, 0, 0, 0, 0]).unwrap();
        let mut a = Action::idle();
        a.values[1] = 1.0 - 0.45;
        a.values[2] = 0.45;
        let mut rng = substream(7, 1);
        let (next, info) = env.step(&state, &a, &mut rng).unwrap();
        assert_eq!(info.trucks, 3);
        assert!((info.transport_cost - 3.0 * TIER_LOW).abs() < 1e-12);
        assert_eq!(next.stocks[0], 11);
    }

    #[test]
    fn production_cost_charged_even_when_capped() {
        let env = env(&[0]);
        let state = State::new([45, 0, 0, 0, 0, 0, 0]).unwrap();
        let mut a = Action::idle();
        a.values[0] = 1.0;
        let mut rng = substream(9, 1);
        let (next, info) = env.step(&state, &a, &mut rng).unwrap();
        assert_eq!(info.produced, 35);
        assert_eq!(next.stocks[0], MAX_STOCK);
        assert_eq!(info.overflow, 30);
        assert!((info.production_cost - 3.5).abs() < 1e-12);
    }

    #[test]
    fn arrivals_above_cap_overflow() {
        let env = env(&[0]);
        // Warehouse A is full; the factory ships it 20 more.
        let state = State::new([40, 50, 0, 0, 0, 0, 0]).unwrap();
        let mut a = Action::idle();
        a.values[1] = 0.5;
        a.values[2] = 0.5;
        let mut rng = substream(11, 1);
        // Kill demand noise by checking conservation instead of exact stocks.
        let (next, info) = env.step(&state, &a, &mut rng).unwrap();
        assert_eq!(info.overflow, 20);
        assert_eq!(
            next.total() as i64,
            state.total() as i64 + info.produced as i64 - info.sold as i64 - info.overflow as i64
        );
    }

    #[test]
    fn stock_is_conserved_exactly_under_random_actions() {
        let env = env(&[1, 3, 5]);
        let mut rng = substream(13, 1);
        let mut state = env.initial_state();
        for _ in 0..500 {
            let action = random_action(&mut rng);
            let (next, info) = env.step(&state, &action, &mut rng).unwrap();
            assert_eq!(
                next.total() as i64,
                state.total() as i64 + info.produced as i64
                    - info.sold as i64
                    - info.overflow as i64,
                "conservation failed at state {state:?}"
            );
            assert!(next.stocks.iter().all(|&s| s <= MAX_STOCK));
            state = next;
        }
    }

    #[test]
    fn shipments_use_pre_arrival_stocks() {
        let env = env(&[0, 1]);
        // A ships everything to B while B ships everything to C: B's outflow
        // must be based on B's starting stock, not on what A sends it.
        let state = State::new([0, 10, 8, 0, 0, 0, 0]).unwrap();
        let mut v = vec![0.0; ACTION_DIM];
        v[1] = 1.0; // factory keeps
        let wa = 1 + N_NODES;
        v[wa + 1] = 1.0; // A -> B
        let wb = 1 + N_NODES + N_WAREHOUSES;
        v[wb + 2] = 1.0; // B -> C
        for w in 2..N_WAREHOUSES {
            v[1 + N_NODES + w * N_WAREHOUSES + w] = 1.0;
        }
        let a = Action::new(v).unwrap();
        let mut rng = substream(17, 1);
        let (next, info) = env.step(&state, &a, &mut rng).unwrap();
        // A ships its own 10 to B before B's inflow lands, and B ships only
        // its original 8 to C. Pre-demand stocks: A = 0, B = 10, C = 8.
        let before_demand = [0u32, 0, 10, 8, 0, 0, 0];
        assert_eq!(info.overflow, 0);
        assert_eq!(info.trucks, 3 + 2);
        for (w, &cap) in before_demand.iter().enumerate() {
            assert!(
                next.stocks[w] <= cap,
                "node {w}: {} > {cap}",
                next.stocks[w]
            );
        }
    }

    #[test]
    fn storage_flag_excludes_factory() {
        let scenario = Scenario::from_cheap_set("t", &[0]).unwrap();
        let mut config = SupplyConfig {
            storage_includes_factory: false,
            ..SupplyConfig::default()
        };
        config.initial_stocks = [50, 0, 0, 0, 0, 0, 0];
        let env = SupplyChainEnv::new(scenario, config).unwrap();
        let mut rng = substream(19, 1);
        let (_, info) = env
            .step(&env.initial_state(), &Action::idle(), &mut rng)
            .unwrap();
        assert_eq!(info.storage_cost, 0.0);
        assert_eq!(info.reward, 0.0);
    }

    #[test]
    fn reward_decomposition_is_internally_consistent() {
        let env = env(&[2, 4]);
        let mut rng = substream(23, 1);
        let mut state = env.initial_state();
        for _ in 0..200 {
            let action = random_action(&mut rng);
            let (next, info) = env.step(&state, &action, &mut rng).unwrap();
            let recomposed =
                info.revenue - info.production_cost - info.storage_cost - info.transport_cost;
            assert!((info.reward - recomposed).abs() < 1e-12);
            assert!((info.revenue - 0.6 * info.sold as f64).abs() < 1e-12);
            state = next;
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let env = env(&[0, 5]);
        let run = |seed: u64| {
            let mut rng = substream(seed, 1);
            let mut state = env.initial_state();
            let mut rewards = Vec::new();
            for _ in 0..50 {
                let action = random_action(&mut rng);
                let (next, info) = env.step(&state, &action, &mut rng).unwrap();
                rewards.push(info.reward);
                state = next;
            }
            (state, rewards)
        };
        let (s1, r1) = run(99);
        let (s2, r2) = run(99);
        assert_eq!(s1, s2);
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn encode_sa_has_scaled_stocks_and_raw_action() {
        let s = State::new([50, 25, 0, 10, 5, 1, 2]).unwrap();
        let a = Action::idle();
        let n = State::new([0, 0, 0, 0, 0, 0, 50]).unwrap();
        let x = encode_sa(&s, &a, &n);
        assert_eq!(x.len(), ENCODED_DIM);
        assert_eq!(x[0], 1.0);
        assert_eq!(x[1], 0.5);
        assert_eq!(&x[N_NODES..N_NODES + ACTION_DIM], a.as_slice());
        assert_eq!(x[ENCODED_DIM - 1], 1.0);
    }

    #[test]
    fn action_validation_rejects_broken_simplexes() {
        let mut v = vec![0.0; ACTION_DIM];
        v[0] = 0.5;
        assert!(Action::new(v.clone()).is_err()); // splits sum to 0
        v[1] = 1.0;
        for w in 0..N_WAREHOUSES {
            v[1 + N_NODES + w * N_WAREHOUSES + w] = 1.0;
        }
        assert!(Action::new(v.clone()).is_ok());
        v[0] = 1.5;
        assert!(Action::new(v.clone()).is_err()); // production out of range
        v[0] = 0.5;
        v[2] = 0.3;
        assert!(Action::new(v.clone()).is_err()); // factory split sums to 1.3
        v[1] = 0.7;
        assert!(Action::new(v.clone()).is_ok());
        assert_eq!(Action::new(vec![0.0; 10]).is_ok(), false);
    }

    #[test]
    fn transport_prices_differ_across_scenarios_for_the_same_route() {
        let cheap_ab = env(&[0, 1]);
        let cheap_ef = env(&[4, 5]);
        let state = State::new([20, 0, 0, 0, 0, 0, 0]).unwrap();
        let mut a = Action::idle();
        a.values[1] = 0.5;
        a.values[2] = 0.5; // factory -> A
        let mut r1 = substream(31, 1);
        let mut r2 = substream(31, 1);
        let (n1, i1) = cheap_ab.step(&state, &a, &mut r1).unwrap();
        let (n2, i2) = cheap_ef.step(&state, &a, &mut r2).unwrap();
        // Identical dynamics, different prices.
        assert_eq!(n1, n2);
        assert_eq!(i1.sold, i2.sold);
        assert!(i1.transport_cost < i2.transport_cost);
    }
}
