use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_WAREHOUSES: usize = 6;

/// Per-truck route prices. A scenario marks a subset of warehouses as cheap
/// to reach; routes into that subset are priced by where the truck starts.
pub const TIER_LOW: f64 = 0.03;
pub const TIER_MID: f64 = 1.50;
pub const TIER_HIGH: f64 = 3.00;

/// Transport price table for one task: per-truck cost by route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Cost per truck from the factory into each warehouse.
    pub factory_tiers: [f64; N_WAREHOUSES],
    /// Cost per truck between warehouses, indexed `[from][to]`. Diagonal
    /// entries are unused and kept at zero.
    pub warehouse_tiers: [[f64; N_WAREHOUSES]; N_WAREHOUSES],
}

impl Scenario {
    /// Price all routes from a set of cheaply reachable warehouses: shipping
    /// into the set costs the low tier from the factory or from inside the
    /// set, the middle tier from outside it; shipping out of the set (to any
    /// non-cheap warehouse) always costs the high tier.
    pub fn from_cheap_set(name: impl Into<String>, cheap: &[usize]) -> Result<Scenario> {
        if cheap.iter().any(|&w| w >= N_WAREHOUSES) {
            return Err(Error::InvalidConfig(format!(
                "cheap warehouse index out of range: {cheap:?}"
            )));
        }
        let is_cheap = |w: usize| cheap.contains(&w);
        let mut factory_tiers = [0.0; N_WAREHOUSES];
        for (w, t) in factory_tiers.iter_mut().enumerate() {
            *t = if is_cheap(w) { TIER_LOW } else { TIER_HIGH };
        }
        let mut warehouse_tiers = [[0.0; N_WAREHOUSES]; N_WAREHOUSES];
        for from in 0..N_WAREHOUSES {
            for to in 0..N_WAREHOUSES {
                if from == to {
                    continue;
                }
                warehouse_tiers[from][to] = if is_cheap(to) {
                    if is_cheap(from) {
                        TIER_LOW
                    } else {
                        TIER_MID
                    }
                } else {
                    TIER_HIGH
                };
            }
        }
        Ok(Scenario {
            name: name.into(),
            factory_tiers,
            warehouse_tiers,
        })
    }

    pub fn save_toml(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Parse(format!("scenario encode: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_toml(path: impl AsRef<Path>) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("scenario decode: {e}")))
    }
}

/// The three source tasks and the target task. Warehouses are indexed A=0
/// through F=5; each scenario is defined by its cheap set.
pub fn builtin_scenarios() -> (Vec<Scenario>, Scenario) {
    let sources = vec![
        Scenario::from_cheap_set("s1", &[0, 1, 2]).unwrap(),
        Scenario::from_cheap_set("s2", &[3, 4, 5]).unwrap(),
        Scenario::from_cheap_set("s3", &[1, 3, 5]).unwrap(),
    ];
    let target = Scenario::from_cheap_set("target", &[0, 1, 3, 4]).unwrap();
    (sources, target)
}
