#![allow(dead_code)]

pub mod nets;

use mhrs_core::config::RunConfig;
use mhrs_core::demand::{DemandPredictor, EtaModel, TripRecord};
use mhrs_core::engine::{Mode, SimConfig, Simulator, StepRecord};
use mhrs_core::eventlog::EventKind;
use mhrs_core::experiment::{evaluate, train_agent, Episode, Scenario};
use mhrs_core::grid::{GridMap, Zone};

pub fn z(r: usize, c: usize) -> Zone {
    Zone::new(r, c)
}

/// Simulator on a bare lattice with explicit hop zones and fleet positions;
/// one cell per minute, flat zero demand prediction.
pub fn toy_sim(rows: usize, cols: usize, hops: &[Zone], requests: Vec<TripRecord>, fleet: &[Zone], mode: Mode) -> Simulator {
    let mut grid = GridMap::new(rows, cols, 800.0).unwrap();
    grid.set_hop_zones(hops.iter().copied()).unwrap();
    let eta = EtaModel::distance_only(&grid, 800.0).unwrap();
    let pred = DemandPredictor::zeros(grid.zone_count(), 60).unwrap();
    let cfg = SimConfig { fleet_size: fleet.len(), mode, ..SimConfig::default() };
    Simulator::with_fleet(cfg, grid, eta, pred, requests, fleet).unwrap()
}

/// Two riders heading to the park P: rider 2 from C, rider 1 from A one
/// minute later. B sits on both shortest paths, z = 2 cells before B on
/// rider 2's trip and y = 1 cell after it.
pub mod fig1 {
    use super::*;

    pub const C: Zone = Zone { row: 0, col: 0 };
    pub const B: Zone = Zone { row: 0, col: 2 };
    pub const P: Zone = Zone { row: 0, col: 3 };
    pub const A: Zone = Zone { row: 1, col: 2 };
    /// Request ids in admission order.
    pub const RIDER2: usize = 0;
    pub const RIDER1: usize = 1;

    pub fn sim(mode: Mode) -> Simulator {
        let requests = vec![TripRecord::new(0, C, P), TripRecord::new(1, A, P)];
        toy_sim(2, 4, &[B], requests, &[A, C], mode)
    }
}

/// Five riders: 4 and 5 from G to Central Park, 1 from D to Central Park,
/// 2 and 3 from E and E′ to Times Square. F is the only hop zone.
pub mod fig2 {
    use super::*;

    pub const F: Zone = Zone { row: 1, col: 3 };
    pub const CP: Zone = Zone { row: 1, col: 6 };
    pub const TS: Zone = Zone { row: 2, col: 6 };
    pub const D: Zone = Zone { row: 2, col: 1 };
    pub const G: Zone = Zone { row: 1, col: 0 };
    pub const E: Zone = Zone { row: 2, col: 3 };
    pub const E2: Zone = Zone { row: 2, col: 5 };
    pub const RIDER4: usize = 0;
    pub const RIDER5: usize = 1;
    pub const RIDER1: usize = 2;
    pub const RIDER2: usize = 3;
    pub const RIDER3: usize = 4;

    pub fn requests() -> Vec<TripRecord> {
        vec![
            TripRecord::new(0, G, CP),
            TripRecord::new(0, G, CP),
            TripRecord::new(0, D, CP),
            TripRecord::new(0, E, TS),
            TripRecord::new(0, E2, TS),
        ]
    }

    pub fn sim(mode: Mode, fleet: &[Zone]) -> Simulator {
        toy_sim(3, 7, &[F], requests(), fleet, mode)
    }
}

pub fn run_until_settled(sim: &mut Simulator, max_steps: u64) -> Vec<StepRecord> {
    let mut out = Vec::new();
    for _ in 0..max_steps {
        out.push(sim.step(None).unwrap().record);
        let c = sim.counts();
        if sim.remaining_requests() == 0 && c.pending + c.assigned + c.riding + c.hop_waiting == 0 {
            break;
        }
    }
    out
}

/// Small city used by the mode-degeneration and conservation checks.
pub fn toy_config() -> RunConfig {
    RunConfig {
        rows: 6,
        cols: 6,
        fleet_size: 6,
        steps: 150,
        requests_per_step: 1.2,
        warmup_steps: 10,
        hop_min_requests: 3,
        hop_spacing: 2,
        hidden_layers: vec![16],
        batch_size: 8,
        epsilon_decay_decisions: 300,
        ..RunConfig::default()
    }
}

/// Trains briefly, then evaluates, so dispatch decisions appear in the run.
pub fn toy_episode(mode: Mode, seed: u64) -> Episode {
    let cfg = toy_config();
    let scn = Scenario::synthetic(&cfg, seed).unwrap();
    let mut agent = train_agent(&scn, mode, seed, 300).unwrap();
    evaluate(&scn, mode, seed, Some(&mut agent)).unwrap()
}

pub fn count_events(ep: &Episode, pred: impl Fn(&EventKind) -> bool) -> usize {
    ep.sim.log().events().iter().filter(|e| pred(&e.kind)).count()
}

/// Fleet-wide step reward recomputed from the raw step inputs with plain
/// loops: unmet demand, repositioning minutes, extra travel, activations
/// and hops.
pub fn brute_force_global(rec: &StepRecord, beta: [f64; 5]) -> f64 {
    let mut gap = 0.0;
    for i in 0..rec.demand.len() {
        if rec.demand[i] > rec.supply[i] {
            gap += rec.demand[i] - rec.supply[i];
        }
    }
    let mut dispatch = 0.0;
    for d in &rec.dispatches {
        dispatch += d.eta_minutes;
    }
    let mut extra = 0.0;
    let mut hops = 0.0;
    for p in &rec.passengers {
        let delta = p.elapsed + p.remaining - p.baseline;
        if delta > 0.0 {
            extra += delta;
        }
        hops += p.hops as f64;
    }
    let mut activations = 0.0;
    for n in 0..rec.occupied.len() {
        if rec.occupied[n] && !rec.prev_occupied[n] {
            activations += 1.0;
        }
    }
    -(beta[0] * gap + beta[1] * dispatch + beta[2] * extra + beta[3] * activations + beta[4] * hops)
}
