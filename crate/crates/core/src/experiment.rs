//! Scenario construction, single runs, policy training and multi-seed
//! benchmarks over the three operating modes.

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::demand::{fit_demand, synth_workload_with, write_trips_csv, DemandPredictor, DestinationChoice, EtaModel, SynthOptions, TripRecord};
use crate::dispatch::Agent;
use crate::engine::{init_sim, Mode, Simulator, StepRecord};
use crate::error::{Error, Result};
use crate::grid::GridMap;
use crate::metrics::{compare_modes, cross_check, ComparisonTable, LogReplay, RunSummary};

/// Geometry, travel-time model and demand predictor shared by every run on
/// one seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: RunConfig,
    pub grid: GridMap,
    pub eta: EtaModel,
    pub predictor: DemandPredictor,
}

/// Uniform Poisson workload at `requests_per_step` over the whole grid.
pub fn workload(cfg: &RunConfig, grid: &GridMap, seed: u64) -> Result<Vec<TripRecord>> {
    let rate = cfg.requests_per_step / grid.zone_count() as f64;
    let rates = vec![rate; grid.zone_count()];
    let opts = SynthOptions { step_minutes: cfg.dt_minutes, start_minute: cfg.start_minute, destinations: DestinationChoice::UniformOther };
    synth_workload_with(grid, &rates, cfg.steps as usize, seed, &opts)
}

pub fn workload_hash(records: &[TripRecord]) -> String {
    hex::encode(Sha256::digest(write_trips_csv(records).as_bytes()))
}

/// Requests originating in each zone.
pub fn origin_counts(grid: &GridMap, records: &[TripRecord]) -> Vec<u64> {
    let mut counts = vec![0; grid.zone_count()];
    for r in records {
        counts[grid.id(r.origin)] += 1;
    }
    counts
}

impl Scenario {
    /// Selects hop zones and fits the demand predictor on `history`.
    pub fn from_history(config: &RunConfig, history: &[TripRecord]) -> Result<Self> {
        config.validate()?;
        let mut grid = config.grid()?;
        grid.select_hop_zones(&origin_counts(&grid, history), config.hop_spacing, config.hop_min_requests)?;
        let predictor = fit_demand(history, &grid, config.demand_bin_minutes)?;
        let eta = EtaModel::distance_only(&grid, config.speed_m_per_min())?;
        Ok(Self { config: config.clone(), grid, eta, predictor })
    }

    /// Built from [`synthetic_history`] for `seed`.
    pub fn synthetic(config: &RunConfig, seed: u64) -> Result<Self> {
        Self::from_history(config, &synthetic_history(config, seed)?)
    }
}

/// Workload drawn with a seed derived from, and disjoint from, `seed`.
pub fn synthetic_history(config: &RunConfig, seed: u64) -> Result<Vec<TripRecord>> {
    workload(config, &config.grid()?, seed ^ 0x4d48_5253_0000_0001)
}

fn training_seed(seed: u64, episode: u64) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(0x7472_6169_6e00_0000).wrapping_add(episode)
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub sim: Simulator,
    pub records: Vec<StepRecord>,
    pub replay: LogReplay,
    pub summary: RunSummary,
}

/// One run of `scn.config.steps` steps; metrics are replayed from the log
/// and checked against the simulator's counters.
pub fn run_episode(scn: &Scenario, mode: Mode, seed: u64, requests: Vec<TripRecord>, agent: Option<&mut Agent>) -> Result<Episode> {
    let mut sim_cfg = scn.config.sim();
    sim_cfg.mode = mode;
    sim_cfg.seed = seed;
    let hash = workload_hash(&requests);
    let mut sim = init_sim(sim_cfg, scn.grid.clone(), scn.eta.clone(), scn.predictor.clone(), requests)?;
    let records = sim.run(scn.config.steps, agent)?;
    let replay = cross_check(&sim)?;
    let summary = RunSummary::new(mode, seed, &scn.config.hash(), &hash, &replay, &records);
    Ok(Episode { sim, records, replay, summary })
}

/// Trains a fresh agent on workloads disjoint from the evaluation seed
/// until it has made `decisions` decisions.
pub fn train_agent(scn: &Scenario, mode: Mode, seed: u64, decisions: u64) -> Result<Agent> {
    let mut train_cfg = scn.config.train();
    train_cfg.seed = seed;
    let mut agent = Agent::new(train_cfg)?;
    train_more(scn, mode, seed, &mut agent, decisions)?;
    Ok(agent)
}

/// Continues training `agent` for `extra` more decisions. Episode workloads
/// are keyed by the decision count on entry, so a resumed run does not
/// replay the workloads of its first session.
pub fn train_more(scn: &Scenario, mode: Mode, seed: u64, agent: &mut Agent, extra: u64) -> Result<()> {
    agent.set_training(true);
    let start = agent.decisions();
    let goal = start + extra;
    let mut episode = start;
    while agent.decisions() < goal {
        let before = agent.decisions();
        let requests = workload(&scn.config, &scn.grid, training_seed(seed, episode))?;
        run_episode(scn, mode, seed, requests, Some(&mut *agent))?;
        if agent.decisions() == before {
            return Err(Error::config("training episode made no dispatch decisions (warm-up longer than the run?)"));
        }
        episode += 1;
    }
    Ok(())
}

/// Greedy evaluation of `agent` (or no repositioning at all) on the
/// held-out workload of `seed`.
pub fn evaluate(scn: &Scenario, mode: Mode, seed: u64, agent: Option<&mut Agent>) -> Result<Episode> {
    let requests = workload(&scn.config, &scn.grid, seed)?;
    match agent {
        Some(a) => {
            a.set_training(false);
            run_episode(scn, mode, seed, requests, Some(a))
        }
        None => run_episode(scn, mode, seed, requests, None),
    }
}

/// Per seed: build the scenario, then train and evaluate each mode.
pub fn benchmark(cfg: &RunConfig, modes: &[Mode], seeds: &[u64], train_decisions: u64) -> Result<(Vec<RunSummary>, ComparisonTable)> {
    let mut runs = Vec::new();
    for &seed in seeds {
        let scn = Scenario::synthetic(cfg, seed)?;
        for &mode in modes {
            let mut agent = if train_decisions > 0 { Some(train_agent(&scn, mode, seed, train_decisions)?) } else { None };
            runs.push(evaluate(&scn, mode, seed, agent.as_mut())?.summary);
        }
    }
    let table = compare_modes(&runs)?;
    Ok((runs, table))
}
