//! Time-stepped fleet simulation: admission and planning, grouping,
//! matching, policy queries, movement, hop-wait expiry, rewards.

pub mod forecast;
pub mod reward;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demand::{predict_demand, DemandPredictor, EtaModel, TripRecord};
use crate::dispatch::{
    encode_state, ActionIndex, ActionMask, Agent, EnvSnapshot, PassengerView, StateFeatures, Transition,
    VehicleView, NEAR_HORIZON,
};
use crate::error::{Error, Result};
use crate::eventlog::{EventKind, EventLog};
use crate::fleet::{PassengerRecord, PassengerState, RequestId, Stop, StopKind, VehicleId, VehicleState};
use crate::grid::{GridMap, Zone};
use crate::matching::{
    group_requests, match_vehicle, plan_trip_where, route_etas, LegKind, MatchOutcome, MatchParams, PlanEvent, PlanMode,
    SeatPolicy,
};

pub use forecast::forecast_availability;
pub use reward::{
    dispatch_time_total, extra_travel_delta, global_reward, hops_total, newly_active, supply_demand_gap, vehicle_reward,
    Dispatch, GlobalComponents, RewardBreakdown, RewardWeights, VehicleReward, VehicleStepInputs,
};

/// Operating mode: multi-hop sharing, sharing without transfers, or one
/// passenger per vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mhrs,
    Rs,
    Nors,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Mhrs, Mode::Rs, Mode::Nors];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Mhrs => "mhrs",
            Mode::Rs => "rs",
            Mode::Nors => "nors",
        }
    }

    pub fn plan_mode(self, detour: f64) -> PlanMode {
        match self {
            Mode::Mhrs => PlanMode::MultiHop { detour },
            Mode::Rs | Mode::Nors => PlanMode::DirectOnly,
        }
    }

    pub fn seats(self) -> SeatPolicy {
        match self {
            Mode::Nors => SeatPolicy::Solo,
            Mode::Mhrs | Mode::Rs => SeatPolicy::Shared,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mhrs" => Ok(Mode::Mhrs),
            "rs" => Ok(Mode::Rs),
            "nors" => Ok(Mode::Nors),
            other => Err(Error::config(format!("unknown mode `{other}` (expected mhrs, rs or nors)"))),
        }
    }
}

/// Rejection radius in cells for a 5 km reach.
pub fn default_radius_cells(cell_edge_m: f64) -> usize {
    (5000.0 / cell_edge_m).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt_minutes: u64,
    pub horizon_steps: usize,
    pub fleet_size: usize,
    pub capacity: usize,
    pub weights: RewardWeights,
    /// Steps at the start of a run without repositioning.
    pub warmup_steps: u64,
    pub radius_cells: usize,
    pub hop_wait_minutes: u64,
    pub hop_detour: f64,
    pub max_hops: u32,
    pub mode: Mode,
    pub seed: u64,
    pub start_minute: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_minutes: 1,
            horizon_steps: 30,
            fleet_size: 20,
            capacity: 4,
            weights: RewardWeights::default(),
            warmup_steps: 20,
            radius_cells: default_radius_cells(800.0),
            hop_wait_minutes: 10,
            hop_detour: 0.2,
            max_hops: 3,
            mode: Mode::Mhrs,
            seed: 0,
            start_minute: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt_minutes == 0 {
            return Err(Error::config("dt_minutes must be positive"));
        }
        if self.horizon_steps == 0 {
            return Err(Error::config("horizon_steps must be positive"));
        }
        if self.fleet_size == 0 || self.capacity == 0 {
            return Err(Error::config("fleet_size and capacity must be positive"));
        }
        if !(self.hop_detour.is_finite() && self.hop_detour >= 0.0) {
            return Err(Error::config("hop_detour must be non-negative"));
        }
        self.weights.validate()
    }
}

/// Number of admitted passengers in each state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub pending: usize,
    pub assigned: usize,
    pub riding: usize,
    pub hop_waiting: usize,
    pub completed: usize,
    pub rejected: usize,
}

impl StateCounts {
    pub fn total(&self) -> usize {
        self.pending + self.assigned + self.riding + self.hop_waiting + self.completed + self.rejected
    }

    fn bump(&mut self, s: PassengerState) {
        match s {
            PassengerState::Pending => self.pending += 1,
            PassengerState::Assigned => self.assigned += 1,
            PassengerState::Riding => self.riding += 1,
            PassengerState::HopWaiting => self.hop_waiting += 1,
            PassengerState::Completed => self.completed += 1,
            PassengerState::Rejected => self.rejected += 1,
        }
    }
}

/// Inputs of the extra-travel term for one assigned or riding passenger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassengerSnapshot {
    pub request: RequestId,
    pub vehicle: VehicleId,
    pub elapsed: f64,
    pub remaining: f64,
    pub baseline: f64,
    pub hops: u32,
}

/// Everything the step's rewards were computed from, plus the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub time: u64,
    /// Predicted requests per zone over the next 15 steps.
    pub demand: Vec<f64>,
    /// Vehicles available per zone at the start of the policy phase.
    pub supply: Vec<f64>,
    pub dispatches: Vec<Dispatch>,
    pub passengers: Vec<PassengerSnapshot>,
    pub prev_occupied: Vec<bool>,
    pub occupied: Vec<bool>,
    pub vehicle_inputs: Vec<VehicleStepInputs>,
    pub rewards: RewardBreakdown,
    pub counts: StateCounts,
    pub idle_vehicles: usize,
    pub used_vehicles: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub record: StepRecord,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone)]
struct OpenDecision {
    features: StateFeatures,
    action: ActionIndex,
    reward: f64,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    grid: GridMap,
    eta: EtaModel,
    predictor: DemandPredictor,
    workload: Vec<TripRecord>,
    next_request: usize,
    vehicles: Vec<VehicleState>,
    passengers: Vec<PassengerRecord>,
    /// Passengers not yet completed or rejected.
    live: Vec<usize>,
    step: u64,
    prev_occupied: Vec<bool>,
    open: Vec<Option<OpenDecision>>,
    log: EventLog,
    idle_vehicle_steps: u64,
    used_vehicle_steps: u64,
}

/// Places one vehicle at the origin of each of the first `fleet_size`
/// requests.
pub fn init_sim(
    cfg: SimConfig,
    grid: GridMap,
    eta: EtaModel,
    predictor: DemandPredictor,
    requests: Vec<TripRecord>,
) -> Result<Simulator> {
    if requests.len() < cfg.fleet_size {
        return Err(Error::config(format!(
            "{} vehicles need at least as many requests to seed positions, got {}",
            cfg.fleet_size,
            requests.len()
        )));
    }
    let positions: Vec<Zone> = requests.iter().take(cfg.fleet_size).map(|r| r.origin).collect();
    Simulator::with_fleet(cfg, grid, eta, predictor, requests, &positions)
}

impl Simulator {
    /// Explicit starting zones, one per vehicle (ids follow the slice order).
    pub fn with_fleet(
        cfg: SimConfig,
        grid: GridMap,
        eta: EtaModel,
        predictor: DemandPredictor,
        requests: Vec<TripRecord>,
        positions: &[Zone],
    ) -> Result<Self> {
        cfg.validate()?;
        if positions.len() != cfg.fleet_size {
            return Err(Error::config(format!("{} start zones for a fleet of {}", positions.len(), cfg.fleet_size)));
        }
        if predictor.zones() != grid.zone_count() {
            return Err(Error::config("demand predictor zone count differs from the grid"));
        }
        if requests.windows(2).any(|w| w[0].request_time > w[1].request_time) {
            return Err(Error::input("requests must be sorted by request time"));
        }
        for r in &requests {
            grid.check(r.origin)?;
            grid.check(r.destination)?;
        }
        for &p in positions {
            grid.check(p)?;
        }
        let vehicles: Vec<VehicleState> =
            positions.iter().enumerate().map(|(i, &z)| VehicleState::new(VehicleId(i), z, cfg.capacity)).collect();
        let mut log = EventLog::new();
        log.push(
            cfg.start_minute,
            EventKind::Start { mode: cfg.mode.to_string(), vehicles: vehicles.len(), dt_minutes: cfg.dt_minutes, seed: cfg.seed },
        );
        Ok(Self {
            prev_occupied: vec![false; vehicles.len()],
            open: vec![None; vehicles.len()],
            vehicles,
            cfg,
            grid,
            eta,
            predictor,
            workload: requests,
            next_request: 0,
            passengers: Vec::new(),
            live: Vec::new(),
            step: 0,
            log,
            idle_vehicle_steps: 0,
            used_vehicle_steps: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &GridMap {
        &self.grid
    }

    pub fn eta(&self) -> &EtaModel {
        &self.eta
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn passengers(&self) -> &[PassengerRecord] {
        &self.passengers
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn now(&self) -> u64 {
        self.cfg.start_minute + self.step * self.cfg.dt_minutes
    }

    /// Requests in the workload that have not yet arrived.
    pub fn remaining_requests(&self) -> usize {
        self.workload.len() - self.next_request
    }

    pub fn idle_vehicle_steps(&self) -> u64 {
        self.idle_vehicle_steps
    }

    pub fn used_vehicle_steps(&self) -> u64 {
        self.used_vehicle_steps
    }

    pub fn counts(&self) -> StateCounts {
        let mut c = StateCounts::default();
        for p in &self.passengers {
            c.bump(p.state);
        }
        c
    }

    /// Advances one step. Transitions closed by this step's policy queries
    /// are returned; feeding them to the agent is left to the caller.
    pub fn step(&mut self, agent: Option<&mut Agent>) -> Result<StepOutcome> {
        let now = self.now();
        let dt = self.cfg.dt_minutes;
        let t_end = now + dt;

        self.admit(now)?;
        self.match_pending(now)?;

        let demand = predict_demand(&self.predictor, now, self.cfg.horizon_steps, dt)?;
        let supply = forecast_availability(&self.vehicles, &self.grid, &self.eta, self.cfg.horizon_steps, now, dt);
        let near_demand = demand.leading_sum(NEAR_HORIZON);
        let supply_now = supply.row(0).to_vec();

        let mut dispatches = Vec::new();
        let mut transitions = Vec::new();
        if let Some(agent) = agent {
            if self.step >= self.cfg.warmup_steps {
                let mut env = EnvSnapshot { vehicles: self.vehicle_views(), supply, demand };
                self.decide(agent, &mut env, now, &mut dispatches, &mut transitions)?;
            }
        }

        let n = self.vehicles.len();
        let mut boarded: Vec<Vec<Zone>> = vec![Vec::new(); n];
        let mut detour = vec![0.0; n];
        for i in 0..n {
            self.advance_vehicle(i, now, t_end, &mut boarded[i], &mut detour[i])?;
        }
        self.expire(t_end);

        let record = self.settle(now, t_end, near_demand, supply_now, dispatches, &boarded, &detour)?;
        self.check_invariants()?;
        self.log.push(t_end, EventKind::StepEnd { step: self.step });
        self.live.retain(|&i| !matches!(self.passengers[i].state, PassengerState::Completed | PassengerState::Rejected));
        self.step += 1;
        Ok(StepOutcome { record, transitions })
    }

    /// Runs `steps` steps, training `agent` on the transitions as they close
    /// and flushing open decisions as terminal at the end.
    pub fn run(&mut self, steps: u64, mut agent: Option<&mut Agent>) -> Result<Vec<StepRecord>> {
        let mut records = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let out = self.step(agent.as_deref_mut())?;
            if let Some(a) = agent.as_deref_mut() {
                for t in out.transitions {
                    a.observe(t)?;
                }
                a.on_engine_step()?;
            }
            records.push(out.record);
        }
        let tail = self.finish();
        if let Some(a) = agent {
            for t in tail {
                a.observe(t)?;
            }
        }
        Ok(records)
    }

    /// Closes every open decision as a terminal transition.
    pub fn finish(&mut self) -> Vec<Transition> {
        self.open
            .iter_mut()
            .filter_map(Option::take)
            .map(|d| Transition {
                next_features: d.features.clone(),
                features: d.features,
                action: d.action,
                reward: d.reward,
                next_mask: ActionMask::stay_only(),
                terminal: true,
            })
            .collect()
    }

    fn admit(&mut self, now: u64) -> Result<()> {
        let horizon = now + self.cfg.dt_minutes;
        while self.next_request < self.workload.len() && self.workload[self.next_request].request_time < horizon {
            let rec = self.workload[self.next_request].clone();
            let id = RequestId(self.next_request);
            self.next_request += 1;
            let plan = plan_trip_where(rec.origin, rec.destination, &self.grid, self.cfg.mode.plan_mode(self.cfg.hop_detour), |h| {
                self.has_partner(h, rec.origin, rec.destination)
            });
            let hop = plan.legs().first().filter(|l| l.kind == LegKind::ToHop).map(|l| l.to);
            let baseline = self.eta.eta_minutes(rec.origin, rec.destination, rec.request_time);
            let mut p = PassengerRecord::new(id, rec.request_time, rec.origin, rec.destination, plan, baseline);
            self.log.push(now, EventKind::Request { request: id, origin: rec.origin, destination: rec.destination, hop });
            if p.plan.is_complete() {
                p.state = PassengerState::Completed;
                p.ever_assigned = true;
                p.pickup_times.push(rec.request_time);
                p.completed_at = Some(rec.request_time);
                self.log.push(rec.request_time, EventKind::Dropoff { vehicle: None, request: id, zone: rec.destination });
            } else {
                self.live.push(id.0);
            }
            self.passengers.push(p);
        }
        Ok(())
    }

    /// Where a live passenger is now.
    fn location(&self, p: &PassengerRecord) -> Zone {
        match (p.state, p.vehicle) {
            (PassengerState::Riding, Some(v)) => self.vehicles[v.0].zone,
            _ => p.waiting_zone(),
        }
    }

    /// A hop at `h` is worth planning only if another live itinerary, in a
    /// vehicle with a free seat if it has one, will pass through `h` and then
    /// `destination`, reaching `h` no sooner than this rider could and
    /// without passing `origin` (where the two could simply share from the
    /// start).
    fn has_partner(&self, h: Zone, origin: Zone, destination: Zone) -> bool {
        self.live.iter().map(|&i| &self.passengers[i]).any(|p| {
            let at = self.location(p);
            let seat = match p.vehicle {
                Some(v) => self.vehicles[v.0].vacant_seats() > 0,
                None => true,
            };
            seat && h.between(at, p.destination)
                && destination.between(h, p.destination)
                && !origin.between(at, p.destination)
                && at.cells_to(h) >= origin.cells_to(h)
                && !p.plan.upcoming_hops().any(|z| z == h)
        })
    }

    fn match_pending(&mut self, now: u64) -> Result<()> {
        let waiting: Vec<_> = self
            .live
            .iter()
            .map(|&i| &self.passengers[i])
            .filter(|p| p.needs_vehicle())
            .map(|p| (p.id, *p.plan.current_leg().expect("live plan has a leg")))
            .collect();
        let params = MatchParams { radius_cells: self.cfg.radius_cells, seats: self.cfg.mode.seats() };
        for group in group_requests(waiting) {
            let excluded: BTreeSet<VehicleId> = group.members.iter().filter_map(|r| self.passengers[r.0].excluded).collect();
            match match_vehicle(&group, &self.vehicles, &excluded, &self.eta, now, params)? {
                MatchOutcome::Assigned { assignment, .. } => {
                    let v = assignment.vehicle;
                    self.vehicles[v.0].route = assignment.route;
                    for &r in &assignment.requests {
                        let p = &mut self.passengers[r.0];
                        p.state = PassengerState::Assigned;
                        p.vehicle = Some(v);
                        p.ever_assigned = true;
                        p.plan.current_leg_mut().expect("leg").vehicle = Some(v);
                    }
                    self.log.push(
                        now,
                        EventKind::Assign {
                            vehicle: v,
                            requests: assignment.requests,
                            leg: group.kind,
                            zone: group.key.from,
                            pickup_etas: assignment.pickup_etas,
                        },
                    );
                }
                MatchOutcome::NoCandidate => {
                    for &r in &group.members {
                        let p = &mut self.passengers[r.0];
                        if p.state == PassengerState::Pending {
                            p.state = PassengerState::Rejected;
                            self.log.push(now, EventKind::Reject { request: r, zone: group.key.from });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn vehicle_views(&self) -> Vec<VehicleView> {
        self.vehicles
            .iter()
            .map(|v| VehicleView {
                zone: v.zone,
                capacity: v.capacity,
                vacant_seats: v.vacant_seats(),
                passengers: v
                    .onboard
                    .iter()
                    .map(|r| {
                        let p = &self.passengers[r.0];
                        PassengerView { pickup_time: p.pickup_times.last().copied(), destination: p.destination }
                    })
                    .collect(),
            })
            .collect()
    }

    /// Queries the policy for each uncommitted vehicle with a free seat, in
    /// id order, updating the supply forecast after every decision.
    fn decide(
        &mut self,
        agent: &mut Agent,
        env: &mut EnvSnapshot,
        now: u64,
        dispatches: &mut Vec<Dispatch>,
        transitions: &mut Vec<Transition>,
    ) -> Result<()> {
        let dt = self.cfg.dt_minutes;
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if v.vacant_seats() == 0 || v.is_committed() {
                continue;
            }
            let features = encode_state(env, i, &self.grid)?;
            let mask = ActionMask::in_bounds(&self.grid, v.zone);
            if let Some(prev) = self.open[i].take() {
                transitions.push(Transition {
                    features: prev.features,
                    action: prev.action,
                    reward: prev.reward,
                    next_features: features.clone(),
                    next_mask: mask,
                    terminal: false,
                });
            }
            let action = agent.act(&features, &mask)?;
            let (dr, dc) = action.offset();
            let from = v.zone;
            let target = self.grid.offset(from, dr, dc).ok_or_else(|| Error::contract(format!("action {action} leaves the grid")))?;
            if target != from {
                let eta = self.eta.eta_minutes(from, target, now);
                forecast::contribute(&mut env.supply, &self.vehicles[i], &self.grid, &self.eta, now, dt, -1.0);
                self.vehicles[i].route = vec![Stop::reposition(target)];
                forecast::contribute(&mut env.supply, &self.vehicles[i], &self.grid, &self.eta, now, dt, 1.0);
                self.log.push(now, EventKind::Dispatch { vehicle: VehicleId(i), zone: from, target, eta });
                dispatches.push(Dispatch { vehicle: VehicleId(i), from, target, eta_minutes: eta });
            }
            self.open[i] = Some(OpenDecision { features, action, reward: 0.0 });
        }
        Ok(())
    }

    /// Serves stops at the current zone, moves one cell, serves stops at the
    /// new zone.
    fn advance_vehicle(&mut self, i: usize, now: u64, t_end: u64, boarded: &mut Vec<Zone>, detour: &mut f64) -> Result<()> {
        self.serve_stops(i, now, boarded)?;
        let Some(next) = self.vehicles[i].route.first().copied() else {
            return Ok(());
        };
        let v = &self.vehicles[i];
        let loaded = !v.onboard.is_empty();
        let detouring = match next.kind {
            StopKind::Pickup(_) => true,
            StopKind::Drop(r) => self.passengers[r.0].plan.current_leg().is_some_and(|l| l.kind == LegKind::ToHop),
            StopKind::Reposition => false,
        };
        if loaded && detouring {
            *detour = self.cfg.dt_minutes as f64;
        }
        let v = &mut self.vehicles[i];
        let from = v.zone;
        v.zone = from.step_toward(next.zone);
        v.driven_cells += 1;
        if loaded {
            v.occupied_cells += 1;
            v.passenger_cells += v.onboard.len() as u64;
        }
        let onboard = v.onboard.clone();
        self.log.push(now, EventKind::Move { vehicle: VehicleId(i), zone: from, to: v.zone, onboard });
        self.serve_stops(i, t_end, boarded)
    }

    fn serve_stops(&mut self, i: usize, time: u64, boarded: &mut Vec<Zone>) -> Result<()> {
        let vid = VehicleId(i);
        while let Some(stop) = self.vehicles[i].route.first().copied() {
            if stop.zone != self.vehicles[i].zone {
                break;
            }
            self.vehicles[i].route.remove(0);
            match stop.kind {
                StopKind::Reposition => {}
                StopKind::Pickup(r) => {
                    let p = &mut self.passengers[r.0];
                    // A coarse step can reach the origin before the request time.
                    let time = time.max(p.request_time);
                    p.plan.advance(PlanEvent::PickedUp)?;
                    p.state = PassengerState::Riding;
                    p.pickup_times.push(time);
                    self.vehicles[i].onboard.push(r);
                    boarded.push(stop.zone);
                    self.log.push(time, EventKind::Pickup { vehicle: vid, request: r, zone: stop.zone });
                }
                StopKind::Drop(r) => {
                    self.vehicles[i].onboard.retain(|&x| x != r);
                    let p = &mut self.passengers[r.0];
                    let to_hop = p.plan.current_leg().is_some_and(|l| l.kind == LegKind::ToHop);
                    if to_hop {
                        p.plan.advance(PlanEvent::DroppedAtHop)?;
                        p.state = PassengerState::HopWaiting;
                        p.hops += 1;
                        p.hop_times.push(time);
                        p.hop_deadline = Some(time + self.cfg.hop_wait_minutes);
                        p.excluded = Some(vid);
                        p.vehicle = None;
                        self.log.push(time, EventKind::Hop { vehicle: vid, request: r, zone: stop.zone });
                    } else {
                        p.plan.advance(PlanEvent::DroppedFinal)?;
                        p.state = PassengerState::Completed;
                        p.completed_at = Some(time);
                        p.vehicle = None;
                        self.log.push(time, EventKind::Dropoff { vehicle: Some(vid), request: r, zone: stop.zone });
                    }
                }
            }
        }
        Ok(())
    }

    fn expire(&mut self, t_end: u64) {
        for &i in &self.live {
            let p = &mut self.passengers[i];
            if p.state == PassengerState::HopWaiting && p.hop_deadline.is_some_and(|d| t_end > d) {
                p.state = PassengerState::Rejected;
                let zone = p.waiting_zone();
                self.log.push(t_end, EventKind::Expire { request: p.id, zone });
            }
        }
    }

    /// Remaining estimated minutes of a passenger served by `v`.
    fn remaining_minutes(&self, p: &PassengerRecord, v: &VehicleState, t_end: u64) -> f64 {
        let times = route_etas(v.zone, &v.route, &self.eta, t_end);
        let drop = v.route.iter().position(|s| s.kind == StopKind::Drop(p.id));
        let mut rem = drop.map(|k| times[k]).unwrap_or(0.0);
        if let Some(l) = p.plan.current_leg().filter(|l| l.kind == LegKind::ToHop) {
            rem += self.eta.eta_minutes(l.to, p.destination, t_end);
        }
        rem
    }

    #[allow(clippy::too_many_arguments)]
    fn settle(
        &mut self,
        now: u64,
        t_end: u64,
        demand: Vec<f64>,
        supply: Vec<f64>,
        dispatches: Vec<Dispatch>,
        boarded: &[Vec<Zone>],
        detour: &[f64],
    ) -> Result<StepRecord> {
        let n = self.vehicles.len();
        let occupied: Vec<bool> = self.vehicles.iter().map(|v| !v.onboard.is_empty()).collect();
        for (v, &o) in self.vehicles.iter_mut().zip(&occupied) {
            v.occupied = o;
        }
        let mut inputs: Vec<VehicleStepInputs> = (0..n)
            .map(|i| VehicleStepInputs {
                credited_boardings: boarded[i].iter().filter(|z| supply[self.grid.id(**z)] < demand[self.grid.id(**z)]).count(),
                detour_minutes: detour[i],
                deltas: Vec::new(),
                activated: occupied[i] && !self.prev_occupied[i],
                max_hops: 0,
            })
            .collect();
        let mut snaps = Vec::new();
        for &i in &self.live {
            let p = &self.passengers[i];
            let Some(vid) = p.vehicle.filter(|_| p.is_active()) else { continue };
            let remaining = self.remaining_minutes(p, &self.vehicles[vid.0], t_end);
            let elapsed = (t_end - p.request_time) as f64;
            inputs[vid.0].deltas.push(extra_travel_delta(elapsed, remaining, p.baseline_minutes));
            inputs[vid.0].max_hops = inputs[vid.0].max_hops.max(p.hops);
            snaps.push(PassengerSnapshot { request: p.id, vehicle: vid, elapsed, remaining, baseline: p.baseline_minutes, hops: p.hops });
        }
        let w = self.cfg.weights;
        let vehicles: Vec<VehicleReward> = inputs.iter().map(|x| vehicle_reward(x, &w)).collect();
        let hop_counts: Vec<u32> = snaps.iter().map(|s| s.hops).collect();
        let global = GlobalComponents {
            gap: supply_demand_gap(&demand, &supply)?,
            dispatch_minutes: dispatch_time_total(&dispatches)?,
            extra_travel: vehicles.iter().map(|r| r.delta_sum).sum(),
            activations: newly_active(&self.prev_occupied, &occupied)? as f64,
            hops: hops_total(&hop_counts).1 as f64,
        };
        let rewards = RewardBreakdown { global_reward: global_reward(&global, &w), vehicles, global };
        for (slot, r) in self.open.iter_mut().zip(&rewards.vehicles) {
            if let Some(d) = slot {
                d.reward += r.reward;
            }
        }

        let idle_vehicles = self.vehicles.iter().filter(|v| !v.is_committed()).count();
        let used_vehicles = occupied.iter().filter(|&&o| o).count();
        self.idle_vehicle_steps += idle_vehicles as u64;
        self.used_vehicle_steps += used_vehicles as u64;
        let prev_occupied = std::mem::replace(&mut self.prev_occupied, occupied.clone());
        Ok(StepRecord {
            step: self.step,
            time: now,
            demand,
            supply,
            dispatches,
            passengers: snaps,
            prev_occupied,
            occupied,
            vehicle_inputs: inputs,
            rewards,
            counts: self.counts(),
            idle_vehicles,
            used_vehicles,
        })
    }

    fn breach(&self, what: String) -> Error {
        let dump = serde_json::json!({
            "step": self.step,
            "time": self.now(),
            "vehicles": self.vehicles,
            "live_passengers": self.live.iter().map(|&i| &self.passengers[i]).collect::<Vec<_>>(),
        });
        Error::InvariantBreach(format!("{what}\n{dump}"))
    }

    /// Conservation, single-vehicle occupancy, capacity and mode limits.
    pub fn check_invariants(&self) -> Result<()> {
        let counts = self.counts();
        if counts.total() != self.next_request {
            return Err(self.breach(format!("state counts {counts:?} do not add up to {} admitted", self.next_request)));
        }
        let mut riding_in = vec![None; self.passengers.len()];
        let mut promised = vec![0usize; self.passengers.len()];
        for v in &self.vehicles {
            if v.onboard.len() > v.capacity || v.onboard.len() + v.assigned_count() > v.capacity {
                return Err(self.breach(format!("vehicle {} over capacity", v.id)));
            }
            if self.cfg.mode == Mode::Nors && v.onboard.len() > 1 {
                return Err(self.breach(format!("vehicle {} pooled in single-passenger mode", v.id)));
            }
            for &r in &v.onboard {
                if riding_in[r.0].replace(v.id).is_some() {
                    return Err(self.breach(format!("passenger {r} onboard two vehicles")));
                }
            }
            for r in v.assigned() {
                promised[r.0] += 1;
                if self.passengers[r.0].vehicle != Some(v.id) {
                    return Err(self.breach(format!("pickup of {r} on {} but passenger points elsewhere", v.id)));
                }
            }
        }
        for p in &self.passengers {
            let ok = match p.state {
                PassengerState::Riding => riding_in[p.id.0].is_some() && riding_in[p.id.0] == p.vehicle,
                PassengerState::Assigned => riding_in[p.id.0].is_none() && promised[p.id.0] == 1,
                _ => riding_in[p.id.0].is_none() && promised[p.id.0] == 0,
            };
            if !ok {
                return Err(self.breach(format!("passenger {} in state {:?} disagrees with the fleet", p.id, p.state)));
            }
            if p.hops > self.cfg.max_hops || (self.cfg.mode != Mode::Mhrs && p.hops > 0) {
                return Err(self.breach(format!("passenger {} made {} hops", p.id, p.hops)));
            }
        }
        Ok(())
    }
}
