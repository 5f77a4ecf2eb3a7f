//! Predicted available-vehicle counts per zone over the planning horizon.

use crate::demand::EtaModel;
use crate::dispatch::SupplyForecast;
use crate::fleet::{StopKind, VehicleState};
use crate::grid::GridMap;
use crate::matching::route_etas;

/// Whole steps needed to cover `minutes`.
pub(crate) fn steps_for(minutes: f64, dt_minutes: u64) -> usize {
    (minutes / dt_minutes as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Adds (`sign = 1`) or removes (`sign = -1`) one vehicle's availability.
///
/// A vehicle with a free seat counts at its zone; a repositioning vehicle
/// moves to its target from its arrival step on. A full vehicle counts at
/// the zone of its next drop-off from that drop's step on.
pub(crate) fn contribute(
    f: &mut SupplyForecast,
    v: &VehicleState,
    grid: &GridMap,
    eta: &EtaModel,
    now: u64,
    dt_minutes: u64,
    sign: f64,
) {
    let h = f.horizon();
    let here = grid.id(v.zone);
    if v.vacant_seats() > 0 {
        match v.reposition_target() {
            Some(target) => {
                let k = steps_for(eta.eta_minutes(v.zone, target, now), dt_minutes);
                f.add(here, 0, k, sign);
                f.add(grid.id(target), k, h, sign);
            }
            None => f.add(here, 0, h, sign),
        }
        return;
    }
    let times = route_etas(v.zone, &v.route, eta, now);
    if let Some(i) = v.route.iter().position(|s| matches!(s.kind, StopKind::Drop(_))) {
        f.add(grid.id(v.route[i].zone), steps_for(times[i], dt_minutes), h, sign);
    }
}

/// Row `k` counts vehicles predicted available at `now + k·dt`.
pub fn forecast_availability(
    fleet: &[VehicleState],
    grid: &GridMap,
    eta: &EtaModel,
    horizon: usize,
    now: u64,
    dt_minutes: u64,
) -> SupplyForecast {
    let mut f = SupplyForecast::zeros(horizon, grid.zone_count());
    for v in fleet {
        contribute(&mut f, v, grid, eta, now, dt_minutes, 1.0);
    }
    f
}
