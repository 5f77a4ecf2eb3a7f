//! Trip planning through hop zones, request grouping, and greedy
//! nearest-vehicle assignment with cheapest route insertion.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::demand::EtaModel;
use crate::error::{Error, Result};
use crate::fleet::{RequestId, Stop, StopKind, VehicleId, VehicleState};
use crate::grid::{GridMap, Zone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegKind {
    Direct,
    ToHop,
    FromHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leg {
    pub from: Zone,
    pub to: Zone,
    pub kind: LegKind,
    pub vehicle: Option<VehicleId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanEvent {
    PickedUp,
    DroppedAtHop,
    DroppedFinal,
}

/// Chained legs of one passenger plus a cursor on the leg in progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripPlan {
    legs: Vec<Leg>,
    cursor: usize,
    riding: bool,
}

impl TripPlan {
    pub fn direct(origin: Zone, destination: Zone) -> Self {
        if origin == destination {
            return Self { legs: Vec::new(), cursor: 0, riding: false };
        }
        Self::from_legs(vec![Leg { from: origin, to: destination, kind: LegKind::Direct, vehicle: None }])
    }

    pub fn via(origin: Zone, hop: Zone, destination: Zone) -> Self {
        Self::from_legs(vec![
            Leg { from: origin, to: hop, kind: LegKind::ToHop, vehicle: None },
            Leg { from: hop, to: destination, kind: LegKind::FromHop, vehicle: None },
        ])
    }

    fn from_legs(legs: Vec<Leg>) -> Self {
        Self { legs, cursor: 0, riding: false }
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn is_riding(&self) -> bool {
        self.riding
    }

    pub fn is_complete(&self) -> bool {
        self.cursor >= self.legs.len()
    }

    pub fn current_leg(&self) -> Option<&Leg> {
        self.legs.get(self.cursor)
    }

    pub fn current_leg_mut(&mut self) -> Option<&mut Leg> {
        self.legs.get_mut(self.cursor)
    }

    /// Number of planned hop zones.
    pub fn planned_hops(&self) -> usize {
        self.legs.len().saturating_sub(1)
    }

    /// Hop zones not yet reached.
    pub fn upcoming_hops(&self) -> impl Iterator<Item = Zone> + '_ {
        let n = self.legs.len();
        self.legs.iter().enumerate().skip(self.cursor).filter(move |(i, _)| i + 1 < n).map(|(_, l)| l.to)
    }

    pub fn advance(&mut self, event: PlanEvent) -> Result<()> {
        let last = self.cursor + 1 == self.legs.len();
        match (event, self.riding) {
            _ if self.is_complete() => return Err(Error::contract(format!("{event:?} on a completed plan"))),
            (PlanEvent::PickedUp, false) => self.riding = true,
            (PlanEvent::DroppedAtHop, true) if !last => {
                self.riding = false;
                self.cursor += 1;
            }
            (PlanEvent::DroppedFinal, true) if last => {
                self.riding = false;
                self.cursor += 1;
            }
            _ => {
                return Err(Error::contract(format!(
                    "{event:?} illegal on leg {} of {} (riding: {})",
                    self.cursor,
                    self.legs.len(),
                    self.riding
                )))
            }
        }
        Ok(())
    }
}

/// Returns the plan after `event`; the input is left untouched.
pub fn update_plan_progress(plan: &TripPlan, event: PlanEvent) -> Result<TripPlan> {
    let mut next = plan.clone();
    next.advance(event)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlanMode {
    /// Route through at most one hop zone whose detour stays within
    /// `(1 + detour) ×` the direct distance.
    MultiHop { detour: f64 },
    DirectOnly,
}

pub fn plan_trip(origin: Zone, destination: Zone, grid: &GridMap, mode: PlanMode) -> TripPlan {
    plan_trip_where(origin, destination, grid, mode, |_| true)
}

/// Like [`plan_trip`], with hop zones further filtered by `admissible`.
pub fn plan_trip_where(
    origin: Zone,
    destination: Zone,
    grid: &GridMap,
    mode: PlanMode,
    admissible: impl Fn(Zone) -> bool,
) -> TripPlan {
    let PlanMode::MultiHop { detour } = mode else {
        return TripPlan::direct(origin, destination);
    };
    if origin == destination {
        return TripPlan::direct(origin, destination);
    }
    let direct = origin.cells_to(destination) as f64;
    let bound = (1.0 + detour) * direct;
    let best = grid
        .hop_zones()
        .into_iter()
        .filter(|&h| h != origin && h != destination)
        .map(|h| (origin.cells_to(h) + h.cells_to(destination), h))
        .filter(|&(d, _)| d as f64 <= bound + 1e-9)
        .filter(|&(_, h)| admissible(h))
        .min_by_key(|&(d, h)| (d, grid.id(h)));
    match best {
        Some((_, h)) => TripPlan::via(origin, h, destination),
        None => TripPlan::direct(origin, destination),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub from: Zone,
    pub to: Zone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestGroup {
    pub key: GroupKey,
    pub kind: LegKind,
    pub members: Vec<RequestId>,
}

/// Partitions requests by the endpoints of the leg they are waiting for.
/// Groups come out in key order, members in id order.
pub fn group_requests(pending: impl IntoIterator<Item = (RequestId, Leg)>) -> Vec<RequestGroup> {
    let mut groups: BTreeMap<GroupKey, RequestGroup> = BTreeMap::new();
    for (id, leg) in pending {
        let key = GroupKey { from: leg.from, to: leg.to };
        groups.entry(key).or_insert_with(|| RequestGroup { key, kind: leg.kind, members: Vec::new() }).members.push(id);
    }
    let mut out: Vec<RequestGroup> = groups.into_values().collect();
    for g in &mut out {
        g.members.sort();
        g.members.dedup();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeatPolicy {
    /// Any vacant seat may be sold.
    Shared,
    /// One passenger per trip: only empty, unpromised vehicles qualify.
    Solo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub radius_cells: usize,
    pub seats: SeatPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub vehicle: VehicleId,
    pub requests: Vec<RequestId>,
    /// Estimated pickup minutes from now, per entry of `requests`.
    pub pickup_etas: Vec<f64>,
    pub route: Vec<Stop>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    Assigned { assignment: Assignment, overflow: Vec<RequestId> },
    /// No vehicle with a free seat within the radius.
    NoCandidate,
}

/// Minutes along `route` starting from `at`, up to and including each stop.
pub fn route_etas(at: Zone, route: &[Stop], eta: &EtaModel, now: u64) -> Vec<f64> {
    let mut t = 0.0;
    let mut prev = at;
    route
        .iter()
        .map(|s| {
            t += eta.eta_minutes(prev, s.zone, now);
            prev = s.zone;
            t
        })
        .collect()
}

fn route_cost(at: Zone, route: &[Stop], eta: &EtaModel, now: u64) -> f64 {
    route_etas(at, route, eta, now).last().copied().unwrap_or(0.0)
}

/// Cheapest insertion of a pickup and then its drop after it; ties go to
/// the earliest position.
pub fn insert_trip(at: Zone, route: &mut Vec<Stop>, pickup: Stop, drop: Stop, eta: &EtaModel, now: u64) {
    let mut best = (f64::INFINITY, 0);
    for i in 0..=route.len() {
        let mut trial = route.clone();
        trial.insert(i, pickup);
        let c = route_cost(at, &trial, eta, now);
        if c < best.0 - 1e-9 {
            best = (c, i);
        }
    }
    route.insert(best.1, pickup);
    let mut best_drop = (f64::INFINITY, best.1 + 1);
    for j in best.1 + 1..=route.len() {
        let mut trial = route.clone();
        trial.insert(j, drop);
        let c = route_cost(at, &trial, eta, now);
        if c < best_drop.0 - 1e-9 {
            best_drop = (c, j);
        }
    }
    route.insert(best_drop.1, drop);
}

fn seats_for(v: &VehicleState, seats: SeatPolicy) -> usize {
    match seats {
        SeatPolicy::Shared => v.vacant_seats(),
        SeatPolicy::Solo if v.onboard.is_empty() && v.assigned_count() == 0 => 1.min(v.capacity),
        SeatPolicy::Solo => 0,
    }
}

/// Trial assignment of up to `seats` members of `group` to `v`.
fn trial(group: &RequestGroup, v: &VehicleState, seats: usize, eta: &EtaModel, now: u64) -> Assignment {
    let mut route: Vec<Stop> = v.route.iter().copied().filter(|s| !matches!(s.kind, StopKind::Reposition)).collect();
    let taken: Vec<RequestId> = group.members.iter().copied().take(seats).collect();
    for &r in &taken {
        insert_trip(v.zone, &mut route, Stop::pickup(group.key.from, r), Stop::drop_off(group.key.to, r), eta, now);
    }
    let times = route_etas(v.zone, &route, eta, now);
    let pickup_etas = taken
        .iter()
        .map(|&r| {
            let pos = route.iter().position(|s| s.kind == StopKind::Pickup(r)).expect("inserted");
            times[pos]
        })
        .collect();
    Assignment { vehicle: v.id, requests: taken, pickup_etas, route }
}

/// Picks the vehicle reaching the group's pickup zone soonest (after route
/// insertion) among those with free seats inside the radius and not in
/// `excluded`; ties go to the lowest vehicle id.
pub fn match_vehicle(
    group: &RequestGroup,
    fleet: &[VehicleState],
    excluded: &BTreeSet<VehicleId>,
    eta: &EtaModel,
    now: u64,
    params: MatchParams,
) -> Result<MatchOutcome> {
    if group.members.is_empty() {
        return Err(Error::contract("cannot match an empty group"));
    }
    let pickup = group.key.from;
    let mut best: Option<(f64, Assignment)> = None;
    for v in fleet {
        let seats = seats_for(v, params.seats);
        if seats == 0 || excluded.contains(&v.id) || v.zone.cells_to(pickup) > params.radius_cells {
            continue;
        }
        let a = trial(group, v, seats, eta, now);
        let first = a.pickup_etas.iter().copied().fold(f64::INFINITY, f64::min);
        let better = match &best {
            None => true,
            Some((t, b)) => first < *t - 1e-9 || ((first - *t).abs() <= 1e-9 && a.vehicle < b.vehicle),
        };
        if better {
            best = Some((first, a));
        }
    }
    Ok(match best {
        None => MatchOutcome::NoCandidate,
        Some((_, assignment)) => {
            let overflow = group.members.iter().copied().filter(|r| !assignment.requests.contains(r)).collect();
            MatchOutcome::Assigned { assignment, overflow }
        }
    })
}
