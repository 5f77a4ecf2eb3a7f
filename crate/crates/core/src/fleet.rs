//! Vehicle and passenger records shared by matching and the engine.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::Zone;
use crate::matching::TripPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub usize);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "purpose", content = "request", rename_all = "snake_case")]
pub enum StopKind {
    Pickup(RequestId),
    /// End of the passenger's current leg: a hop zone or the destination.
    Drop(RequestId),
    Reposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub zone: Zone,
    pub kind: StopKind,
}

impl Stop {
    pub fn pickup(zone: Zone, r: RequestId) -> Self {
        Self { zone, kind: StopKind::Pickup(r) }
    }

    pub fn drop_off(zone: Zone, r: RequestId) -> Self {
        Self { zone, kind: StopKind::Drop(r) }
    }

    pub fn reposition(zone: Zone) -> Self {
        Self { zone, kind: StopKind::Reposition }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub zone: Zone,
    pub capacity: usize,
    pub onboard: Vec<RequestId>,
    pub route: Vec<Stop>,
    /// Occupancy flag: at least one passenger onboard.
    pub occupied: bool,
    /// Cells driven with at least one passenger onboard.
    pub occupied_cells: u64,
    /// Sum over moves of the number of passengers onboard.
    pub passenger_cells: u64,
    pub driven_cells: u64,
}

impl VehicleState {
    pub fn new(id: VehicleId, zone: Zone, capacity: usize) -> Self {
        Self {
            id,
            zone,
            capacity,
            onboard: Vec::new(),
            route: Vec::new(),
            occupied: false,
            occupied_cells: 0,
            passenger_cells: 0,
            driven_cells: 0,
        }
    }

    /// Requests waiting for this vehicle to pick them up.
    pub fn assigned(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.route.iter().filter_map(|s| match s.kind {
            StopKind::Pickup(r) => Some(r),
            _ => None,
        })
    }

    pub fn assigned_count(&self) -> usize {
        self.assigned().count()
    }

    pub fn vacant_seats(&self) -> usize {
        self.capacity.saturating_sub(self.onboard.len() + self.assigned_count())
    }

    /// Has passengers onboard or promised a pickup.
    pub fn is_committed(&self) -> bool {
        !self.onboard.is_empty() || self.route.iter().any(|s| !matches!(s.kind, StopKind::Reposition))
    }

    pub fn reposition_target(&self) -> Option<Zone> {
        match self.route.as_slice() {
            [Stop { zone, kind: StopKind::Reposition }] => Some(*zone),
            _ => None,
        }
    }

    /// Effective distance of this vehicle: passenger-cells over occupied cells.
    pub fn effective_distance(&self) -> Option<f64> {
        (self.occupied_cells > 0).then(|| self.passenger_cells as f64 / self.occupied_cells as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassengerState {
    Pending,
    Assigned,
    Riding,
    HopWaiting,
    Completed,
    Rejected,
}

impl PassengerState {
    pub const ALL: [PassengerState; 6] = [
        PassengerState::Pending,
        PassengerState::Assigned,
        PassengerState::Riding,
        PassengerState::HopWaiting,
        PassengerState::Completed,
        PassengerState::Rejected,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerRecord {
    pub id: RequestId,
    pub request_time: u64,
    pub origin: Zone,
    pub destination: Zone,
    pub plan: TripPlan,
    pub state: PassengerState,
    pub vehicle: Option<VehicleId>,
    /// Boarding time of every leg so far.
    pub pickup_times: Vec<u64>,
    /// Drop-off time at each hop zone.
    pub hop_times: Vec<u64>,
    pub hops: u32,
    /// Solo direct-trip minutes t^(m).
    pub baseline_minutes: f64,
    pub hop_deadline: Option<u64>,
    /// Vehicle that left this passenger at a hop zone.
    pub excluded: Option<VehicleId>,
    pub ever_assigned: bool,
    pub completed_at: Option<u64>,
}

impl PassengerRecord {
    pub fn new(id: RequestId, request_time: u64, origin: Zone, destination: Zone, plan: TripPlan, baseline: f64) -> Self {
        Self {
            id,
            request_time,
            origin,
            destination,
            plan,
            state: PassengerState::Pending,
            vehicle: None,
            pickup_times: Vec::new(),
            hop_times: Vec::new(),
            hops: 0,
            baseline_minutes: baseline,
            hop_deadline: None,
            excluded: None,
            ever_assigned: false,
            completed_at: None,
        }
    }

    /// Assigned to or riding in a vehicle.
    pub fn is_active(&self) -> bool {
        matches!(self.state, PassengerState::Assigned | PassengerState::Riding)
    }

    /// Waiting for a vehicle for its current leg.
    pub fn needs_vehicle(&self) -> bool {
        matches!(self.state, PassengerState::Pending | PassengerState::HopWaiting)
    }

    /// Zone the passenger currently occupies or waits at; riding passengers
    /// report their last boarding zone.
    pub fn waiting_zone(&self) -> Zone {
        self.plan.current_leg().map(|l| l.from).unwrap_or(self.destination)
    }

    /// First pickup delay plus time spent at hop zones.
    pub fn wait_minutes(&self) -> Option<u64> {
        let first = *self.pickup_times.first()?;
        let hop_wait: u64 = self.hop_times.iter().zip(self.pickup_times.iter().skip(1)).map(|(d, p)| p - d).sum();
        Some(first - self.request_time + hop_wait)
    }
}
