//! Per-vehicle state encoding: local crops of the demand and supply maps
//! around the vehicle plus a few vehicle scalars.

use serde::{Deserialize, Serialize};

use crate::demand::DemandForecast;
use crate::dispatch::action::{ACTION_RADIUS, ACTION_SIDE};
use crate::error::{Error, Result};
use crate::grid::{GridMap, Zone};

/// Steps summed for the demand crop and the near-future supply crop.
pub const NEAR_HORIZON: usize = 15;

const CROP_CELLS: usize = ACTION_SIDE * ACTION_SIDE;
const CROPS: usize = 4;
const SCALARS: usize = 3;

/// Length of every encoded feature vector.
pub const FEATURE_LEN: usize = CROPS * CROP_CELLS + SCALARS;

/// Predicted available-vehicle counts per step (rows) and zone (columns).
/// Row `k` describes time `now + k` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyForecast {
    horizon: usize,
    zones: usize,
    counts: Vec<f64>,
}

impl SupplyForecast {
    pub fn zeros(horizon: usize, zones: usize) -> Self {
        Self { horizon, zones, counts: vec![0.0; horizon * zones] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn zones(&self) -> usize {
        self.zones
    }

    pub fn get(&self, step: usize, zone: usize) -> f64 {
        self.counts[step * self.zones + zone]
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.counts[step * self.zones..(step + 1) * self.zones]
    }

    /// Adds one vehicle to `zone` for every row from `from_step` on.
    pub fn add_from(&mut self, zone: usize, from_step: usize) {
        for k in from_step..self.horizon {
            self.counts[k * self.zones + zone] += 1.0;
        }
    }

    /// Adds one vehicle to `zone` for rows in `from..to`.
    pub fn add_span(&mut self, zone: usize, from: usize, to: usize) {
        self.add(zone, from, to, 1.0);
    }

    /// Adds `delta` to `zone` for rows in `from..to`.
    pub fn add(&mut self, zone: usize, from: usize, to: usize, delta: f64) {
        for k in from..to.min(self.horizon) {
            self.counts[k * self.zones + zone] += delta;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerView {
    pub pickup_time: Option<u64>,
    pub destination: Zone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub zone: Zone,
    pub capacity: usize,
    pub vacant_seats: usize,
    pub passengers: Vec<PassengerView>,
}

/// Environment state: fleet status, predicted supply, predicted demand.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot {
    pub vehicles: Vec<VehicleView>,
    pub supply: SupplyForecast,
    pub demand: DemandForecast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatures(pub Vec<f64>);

impl StateFeatures {
    pub fn zeros() -> Self {
        Self(vec![0.0; FEATURE_LEN])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Writes the `ACTION_SIDE`² window of `values` centred on `at`; cells off the
/// grid stay zero.
fn crop_into(out: &mut [f64], values: &[f64], grid: &GridMap, at: Zone) {
    for dr in -ACTION_RADIUS..=ACTION_RADIUS {
        for dc in -ACTION_RADIUS..=ACTION_RADIUS {
            let slot = ((dr + ACTION_RADIUS) as usize) * ACTION_SIDE + (dc + ACTION_RADIUS) as usize;
            out[slot] = match grid.offset(at, dr, dc) {
                Some(z) => values[grid.id(z)],
                None => 0.0,
            };
        }
    }
}

/// Feature layout: demand over the next 15 steps, supply now, supply at
/// +15 steps, supply at the end of the horizon (each a 15x15 crop), then
/// vacant-seat fraction and normalised row and column.
pub fn encode_state(env: &EnvSnapshot, vehicle: usize, grid: &GridMap) -> Result<StateFeatures> {
    let v = env
        .vehicles
        .get(vehicle)
        .ok_or_else(|| Error::contract(format!("no vehicle {vehicle} in snapshot")))?;
    if v.vacant_seats == 0 {
        return Err(Error::contract(format!("vehicle {vehicle} has no vacant seat")));
    }
    let m = grid.zone_count();
    if env.supply.zones() != m || env.demand.zones() != m {
        return Err(Error::contract("forecast zone count differs from the grid"));
    }
    if env.supply.horizon() == 0 {
        return Err(Error::contract("supply forecast has no rows"));
    }
    grid.check(v.zone)?;

    let mut f = vec![0.0; FEATURE_LEN];
    let demand = env.demand.leading_sum(NEAR_HORIZON);
    let last = env.supply.horizon() - 1;
    let maps: [&[f64]; CROPS] = [
        &demand,
        env.supply.row(0),
        env.supply.row(NEAR_HORIZON.min(last)),
        env.supply.row(last),
    ];
    for (k, map) in maps.iter().enumerate() {
        crop_into(&mut f[k * CROP_CELLS..(k + 1) * CROP_CELLS], map, grid, v.zone);
    }
    let norm = |x: usize, n: usize| if n > 1 { x as f64 / (n - 1) as f64 } else { 0.0 };
    let s = CROPS * CROP_CELLS;
    f[s] = v.vacant_seats as f64 / v.capacity.max(1) as f64;
    f[s + 1] = norm(v.zone.row, grid.rows());
    f[s + 2] = norm(v.zone.col, grid.cols());
    Ok(StateFeatures(f))
}
