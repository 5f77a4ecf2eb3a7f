//! Run metrics, recomputed from the event log and cross-checked against the
//! simulator's own counters, plus multi-seed mode comparison tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::{Mode, Simulator, StepRecord};
use crate::error::{Error, Result};
use crate::eventlog::{EventKind, EventLog};
use crate::fleet::{PassengerState, RequestId, VehicleId};

/// Counts and sums from which every headline metric derives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub requests: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub completed: u64,
    /// Summed over completed trips.
    pub wait_minutes: u64,
    pub idle_minutes: u64,
    pub occupied_cells: u64,
    pub passenger_cells: u64,
    /// Index = hops made, value = completed trips.
    pub hop_histogram: Vec<u64>,
    pub used_vehicle_steps: u64,
    pub steps: u64,
}

impl Tally {
    pub fn accept_rate(&self) -> Result<f64> {
        ratio(self.accepted as f64, self.requests as f64, "accept rate of a run without requests")
    }

    pub fn mean_wait_minutes(&self) -> Result<f64> {
        ratio(self.wait_minutes as f64, self.completed as f64, "wait time without completed trips")
    }

    pub fn idle_minutes_per_request(&self) -> Result<f64> {
        ratio(self.idle_minutes as f64, self.requests as f64, "idle time per request without requests")
    }

    pub fn effective_distance(&self) -> Result<f64> {
        ratio(self.passenger_cells as f64, self.occupied_cells as f64, "effective distance without loaded travel")
    }

    pub fn mean_used_vehicles(&self) -> Result<f64> {
        ratio(self.used_vehicle_steps as f64, self.steps as f64, "used vehicles of a run without steps")
    }

    /// Share of completed trips with at least one hop.
    pub fn hop_share(&self) -> Result<f64> {
        let hopped: u64 = self.hop_histogram.iter().skip(1).sum();
        ratio(hopped as f64, self.completed as f64, "hop share without completed trips")
    }
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den == 0.0 {
        return Err(Error::UndefinedMetric(what.to_string()));
    }
    Ok(num / den)
}

fn bump_hist(h: &mut Vec<u64>, hops: usize) {
    if h.len() <= hops {
        h.resize(hops + 1, 0);
    }
    h[hops] += 1;
}

/// Metrics replayed from the log alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogReplay {
    pub tally: Tally,
    /// Σ direct cells / Σ apportioned vehicle cells over completed trips,
    /// splitting each loaded move equally among the passengers onboard.
    pub direct_distance_ratio: Option<f64>,
    pub vehicle_effective_distance: BTreeMap<VehicleId, f64>,
}

pub fn replay_log(log: &EventLog) -> Result<LogReplay> {
    let mut t = Tally::default();
    let mut dt = 1u64;
    let mut request_at: BTreeMap<RequestId, (u64, usize)> = BTreeMap::new();
    let mut assigned: BTreeSet<RequestId> = BTreeSet::new();
    let mut rejected: BTreeSet<RequestId> = BTreeSet::new();
    let mut first_pickup: BTreeMap<RequestId, u64> = BTreeMap::new();
    let mut last_hop: BTreeMap<RequestId, u64> = BTreeMap::new();
    let mut hop_wait: BTreeMap<RequestId, u64> = BTreeMap::new();
    let mut hops: BTreeMap<RequestId, usize> = BTreeMap::new();
    let mut share: BTreeMap<RequestId, f64> = BTreeMap::new();
    let mut committed: Vec<BTreeSet<RequestId>> = Vec::new();
    let mut onboard: Vec<BTreeSet<RequestId>> = Vec::new();
    let mut per_vehicle: Vec<(u64, u64)> = Vec::new();
    let (mut direct_sum, mut share_sum) = (0.0, 0.0);

    for e in log.events() {
        match &e.kind {
            EventKind::Start { vehicles, dt_minutes, .. } => {
                let fleet = *vehicles;
                dt = *dt_minutes;
                committed = vec![BTreeSet::new(); fleet];
                onboard = vec![BTreeSet::new(); fleet];
                per_vehicle = vec![(0, 0); fleet];
            }
            EventKind::Request { request, origin, destination, .. } => {
                t.requests += 1;
                request_at.insert(*request, (e.time, origin.cells_to(*destination)));
            }
            EventKind::Assign { vehicle, requests, .. } => {
                for r in requests {
                    assigned.insert(*r);
                    committed[vehicle.0].insert(*r);
                }
            }
            EventKind::Pickup { vehicle, request, .. } => {
                first_pickup.entry(*request).or_insert(e.time);
                if let Some(h) = last_hop.remove(request) {
                    *hop_wait.entry(*request).or_default() += e.time - h;
                }
                onboard[vehicle.0].insert(*request);
            }
            EventKind::Hop { vehicle, request, .. } => {
                *hops.entry(*request).or_default() += 1;
                last_hop.insert(*request, e.time);
                committed[vehicle.0].remove(request);
                onboard[vehicle.0].remove(request);
            }
            EventKind::Dropoff { vehicle, request, .. } => {
                t.completed += 1;
                let (requested, direct) = request_at[request];
                let first = match vehicle {
                    Some(v) => {
                        committed[v.0].remove(request);
                        onboard[v.0].remove(request);
                        first_pickup[request]
                    }
                    None => {
                        assigned.insert(*request);
                        requested
                    }
                };
                t.wait_minutes += first - requested + hop_wait.get(request).copied().unwrap_or(0);
                bump_hist(&mut t.hop_histogram, hops.get(request).copied().unwrap_or(0));
                if let Some(s) = share.get(request).filter(|s| **s > 0.0) {
                    direct_sum += direct as f64;
                    share_sum += s;
                }
            }
            EventKind::Reject { request, .. } | EventKind::Expire { request, .. } => {
                rejected.insert(*request);
            }
            EventKind::Move { vehicle, onboard: riders, .. } => {
                if !riders.is_empty() {
                    t.occupied_cells += 1;
                    t.passenger_cells += riders.len() as u64;
                    per_vehicle[vehicle.0].0 += 1;
                    per_vehicle[vehicle.0].1 += riders.len() as u64;
                    for r in riders {
                        *share.entry(*r).or_default() += 1.0 / riders.len() as f64;
                    }
                }
            }
            EventKind::StepEnd { .. } => {
                t.steps += 1;
                t.idle_minutes += committed.iter().filter(|c| c.is_empty()).count() as u64 * dt;
                t.used_vehicle_steps += onboard.iter().filter(|o| !o.is_empty()).count() as u64;
            }
            EventKind::Dispatch { .. } => {}
        }
    }
    t.rejected = rejected.len() as u64;
    t.accepted = assigned.difference(&rejected).count() as u64;
    Ok(LogReplay {
        tally: t,
        direct_distance_ratio: (share_sum > 0.0).then(|| direct_sum / share_sum),
        vehicle_effective_distance: per_vehicle
            .iter()
            .enumerate()
            .filter(|(_, (occ, _))| *occ > 0)
            .map(|(i, (occ, pass))| (VehicleId(i), *pass as f64 / *occ as f64))
            .collect(),
    })
}

pub fn accept_rate(log: &EventLog) -> Result<f64> {
    replay_log(log)?.tally.accept_rate()
}

pub fn wait_time_stats(log: &EventLog) -> Result<f64> {
    replay_log(log)?.tally.mean_wait_minutes()
}

pub fn idle_time_stats(log: &EventLog) -> Result<f64> {
    replay_log(log)?.tally.idle_minutes_per_request()
}

pub fn effective_distance(log: &EventLog) -> Result<f64> {
    replay_log(log)?.tally.effective_distance()
}

/// The simulator's own running counters, in the same shape as a replay.
pub fn online_tally(sim: &Simulator) -> Tally {
    let mut t = Tally::default();
    for p in sim.passengers() {
        t.requests += 1;
        match p.state {
            PassengerState::Rejected => t.rejected += 1,
            _ if p.ever_assigned => t.accepted += 1,
            _ => {}
        }
        if p.state == PassengerState::Completed {
            t.completed += 1;
            t.wait_minutes += p.wait_minutes().unwrap_or(0);
            bump_hist(&mut t.hop_histogram, p.hops as usize);
        }
    }
    for v in sim.vehicles() {
        t.occupied_cells += v.occupied_cells;
        t.passenger_cells += v.passenger_cells;
    }
    t.idle_minutes = sim.idle_vehicle_steps() * sim.config().dt_minutes;
    t.used_vehicle_steps = sim.used_vehicle_steps();
    t.steps = sim.steps_done();
    t
}

/// Fails unless the log replay reproduces the online counters exactly.
pub fn cross_check(sim: &Simulator) -> Result<LogReplay> {
    let replay = replay_log(sim.log())?;
    let online = online_tally(sim);
    if replay.tally != online {
        return Err(Error::InvariantBreach(format!(
            "log replay disagrees with online counters\nreplay: {:?}\nonline: {online:?}",
            replay.tally
        )));
    }
    Ok(replay)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub workload_hash: String,
    pub tally: Tally,
    pub accept_rate: Option<f64>,
    pub mean_wait_minutes: Option<f64>,
    pub mean_idle_minutes_per_request: Option<f64>,
    pub effective_distance: Option<f64>,
    pub direct_distance_ratio: Option<f64>,
    pub hop_share: Option<f64>,
    pub mean_used_vehicles: Option<f64>,
    pub mean_global_reward: Option<f64>,
    pub reward_trace: Vec<f64>,
}

impl RunSummary {
    pub fn new(mode: Mode, seed: u64, config_hash: &str, workload_hash: &str, replay: &LogReplay, records: &[StepRecord]) -> Self {
        let t = &replay.tally;
        let reward_trace: Vec<f64> = records.iter().map(|r| r.rewards.global_reward).collect();
        Self {
            mode,
            seed,
            config_hash: config_hash.to_string(),
            workload_hash: workload_hash.to_string(),
            accept_rate: t.accept_rate().ok(),
            mean_wait_minutes: t.mean_wait_minutes().ok(),
            mean_idle_minutes_per_request: t.idle_minutes_per_request().ok(),
            effective_distance: t.effective_distance().ok(),
            direct_distance_ratio: replay.direct_distance_ratio,
            hop_share: t.hop_share().ok(),
            mean_used_vehicles: t.mean_used_vehicles().ok(),
            mean_global_reward: (!reward_trace.is_empty()).then(|| reward_trace.iter().sum::<f64>() / reward_trace.len() as f64),
            reward_trace,
            tally: t.clone(),
        }
    }

    /// Named headline metrics, in table order.
    pub fn headline(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("accept_rate", self.accept_rate),
            ("mean_wait_minutes", self.mean_wait_minutes),
            ("mean_idle_minutes_per_request", self.mean_idle_minutes_per_request),
            ("effective_distance", self.effective_distance),
            ("direct_distance_ratio", self.direct_distance_ratio),
            ("hop_share", self.hop_share),
            ("mean_used_vehicles", self.mean_used_vehicles),
            ("mean_global_reward", self.mean_global_reward),
        ]
    }
}

/// Per-step CSV of reward components, passenger states and fleet usage.
pub fn step_csv(records: &[StepRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "step", "time", "global_reward", "gap", "dispatch_minutes", "extra_travel", "activations", "hops", "pending",
        "assigned", "riding", "hop_waiting", "completed", "rejected", "idle_vehicles", "used_vehicles",
    ])
    .map_err(io)?;
    for r in records {
        let g = &r.rewards.global;
        let c = &r.counts;
        w.write_record(&[
            r.step.to_string(),
            r.time.to_string(),
            r.rewards.global_reward.to_string(),
            g.gap.to_string(),
            g.dispatch_minutes.to_string(),
            g.extra_travel.to_string(),
            g.activations.to_string(),
            g.hops.to_string(),
            c.pending.to_string(),
            c.assigned.to_string(),
            c.riding.to_string(),
            c.hop_waiting.to_string(),
            c.completed.to_string(),
            c.rejected.to_string(),
            r.idle_vehicles.to_string(),
            r.used_vehicles.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of ASCII fields"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: Mode,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn get(&self, mode: Mode, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.mode == mode && r.metric == metric)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["mode", "metric", "n", "mean", "std"]).map_err(io)?;
        for r in &self.rows {
            w.write_record(&[r.mode.to_string(), r.metric.clone(), r.n.to_string(), r.mean.to_string(), r.std.to_string()])
                .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV of ASCII fields"))
    }

    /// `{metric: {mode: {mean, std, values}}}` for plotting.
    pub fn to_series_json(&self) -> String {
        let mut out: BTreeMap<&str, BTreeMap<String, serde_json::Value>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(&r.metric)
                .or_default()
                .insert(r.mode.to_string(), serde_json::json!({ "mean": r.mean, "std": r.std, "values": r.values }));
        }
        serde_json::to_string_pretty(&out).expect("plain JSON values")
    }
}

/// Mean and sample standard deviation per mode and metric. Every seed must
/// have been run on one workload across all modes.
pub fn compare_modes(runs: &[RunSummary]) -> Result<ComparisonTable> {
    let mut by_seed: BTreeMap<u64, &str> = BTreeMap::new();
    for r in runs {
        match by_seed.get(&r.seed) {
            Some(h) if *h != r.workload_hash => {
                return Err(Error::InvalidComparison(format!("seed {} ran on different workloads across modes", r.seed)))
            }
            _ => {
                by_seed.insert(r.seed, &r.workload_hash);
            }
        }
    }
    let modes: BTreeSet<Mode> = runs.iter().map(|r| r.mode).collect();
    let mut rows = Vec::new();
    for mode in modes {
        let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.mode == mode).collect();
        for (k, (metric, _)) in mine[0].headline().into_iter().enumerate() {
            let values: Vec<f64> = mine.iter().filter_map(|r| r.headline()[k].1).collect();
            let n = values.len();
            let mean = if n > 0 { values.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let std = if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
            rows.push(ComparisonRow { mode, metric: metric.to_string(), n, mean, std, values });
        }
    }
    Ok(ComparisonTable { rows })
}
