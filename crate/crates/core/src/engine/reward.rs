//! Reward components: supply-demand gap, dispatch time, extra travel time,
//! newly activated vehicles and hop counts, combined per vehicle and
//! fleet-wide.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::VehicleId;
use crate::grid::Zone;

/// Component weights β₁..β₅.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights(pub [f64; 5]);

impl Default for RewardWeights {
    fn default() -> Self {
        Self([5.0, 1.0, 3.5, 0.05, 2.0])
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::config(format!("reward weights must be finite and non-negative, got {:?}", self.0)));
        }
        Ok(())
    }
}

/// One repositioning order issued this step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub vehicle: VehicleId,
    pub from: Zone,
    pub target: Zone,
    pub eta_minutes: f64,
}

/// Total unmet predicted demand: Σ max(d̄ᵢ − vᵢ, 0).
pub fn supply_demand_gap(demand: &[f64], supply: &[f64]) -> Result<f64> {
    if demand.len() != supply.len() {
        return Err(Error::contract(format!("{} demand zones but {} supply zones", demand.len(), supply.len())));
    }
    Ok(demand.iter().zip(supply).map(|(d, v)| (d - v).max(0.0)).sum())
}

/// Minutes spent on this step's repositioning orders; each vehicle may
/// receive at most one order.
pub fn dispatch_time_total(dispatches: &[Dispatch]) -> Result<f64> {
    let mut seen = BTreeSet::new();
    for d in dispatches {
        if !seen.insert(d.vehicle) {
            return Err(Error::contract(format!("vehicle {} dispatched twice in one step", d.vehicle)));
        }
    }
    Ok(dispatches.iter().map(|d| d.eta_minutes).sum())
}

/// Extra travel time δ = t′ + t^(a) − t^(m), floored at zero.
pub fn extra_travel_delta(elapsed: f64, remaining: f64, baseline: f64) -> f64 {
    (elapsed + remaining - baseline).max(0.0)
}

/// Per-passenger hop counts and their total.
pub fn hops_total(hops: &[u32]) -> (Vec<u32>, u64) {
    (hops.to_vec(), hops.iter().map(|&h| h as u64).sum())
}

/// Vehicles whose occupancy flag went from 0 to 1.
pub fn newly_active(prev: &[bool], curr: &[bool]) -> Result<usize> {
    if prev.len() != curr.len() {
        return Err(Error::contract("occupancy flag vectors differ in length"));
    }
    Ok(prev.iter().zip(curr).filter(|(p, c)| !**p && **c).count())
}

/// Raw per-vehicle inputs for one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleStepInputs {
    /// Passengers boarded in an under-supplied zone.
    pub credited_boardings: usize,
    /// Minutes driven loaded toward a pickup or hop stop.
    pub detour_minutes: f64,
    /// δ of every passenger assigned to or riding in the vehicle.
    pub deltas: Vec<f64>,
    pub activated: bool,
    /// Largest hop count among those passengers.
    pub max_hops: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleReward {
    pub served: f64,
    pub detour: f64,
    pub delta_sum: f64,
    pub activation: f64,
    pub max_hops: f64,
    pub reward: f64,
}

/// r = β₁b − β₂c − β₃Σδ − β₄·activation − β₅·maxH.
pub fn vehicle_reward(inputs: &VehicleStepInputs, w: &RewardWeights) -> VehicleReward {
    let [b1, b2, b3, b4, b5] = w.0;
    let served = inputs.credited_boardings as f64;
    let delta_sum: f64 = inputs.deltas.iter().sum();
    let activation = if inputs.activated { 1.0 } else { 0.0 };
    let max_hops = inputs.max_hops as f64;
    VehicleReward {
        served,
        detour: inputs.detour_minutes,
        delta_sum,
        activation,
        max_hops,
        reward: b1 * served - b2 * inputs.detour_minutes - b3 * delta_sum - b4 * activation - b5 * max_hops,
    }
}

/// Fleet-wide components for one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalComponents {
    pub gap: f64,
    pub dispatch_minutes: f64,
    pub extra_travel: f64,
    pub activations: f64,
    pub hops: f64,
}

/// r̄ = −(β₁·gap + β₂·dispatch + β₃·extra + β₄·activations + β₅·hops).
pub fn global_reward(c: &GlobalComponents, w: &RewardWeights) -> f64 {
    let [b1, b2, b3, b4, b5] = w.0;
    -(b1 * c.gap + b2 * c.dispatch_minutes + b3 * c.extra_travel + b4 * c.activations + b5 * c.hops)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub vehicles: Vec<VehicleReward>,
    pub global: GlobalComponents,
    pub global_reward: f64,
}
