//! Python bindings: build scenarios, step simulations and run benchmarks.
//! Structured results cross the boundary as Python dicts and lists decoded
//! from their JSON form.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use mhrs_core::demand::TripRecord;
use mhrs_core::dispatch::Agent;
use mhrs_core::engine::init_sim;
use mhrs_core::experiment::{benchmark, run_episode, train_agent, workload, Scenario};
use mhrs_core::grid::Zone;
use mhrs_core::matching::{plan_trip, LegKind, PlanMode};
use mhrs_core::metrics::{cross_check, step_csv, RunSummary};
use mhrs_core::{Error, GridMap, Mode, RunConfig, Simulator};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::Contract(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn from_json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(|e: Error| py_err(e))
}

/// Config from TOML text with optional mode and seed overrides.
fn config(toml: &str, mode: Option<&str>, seed: Option<u64>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::from_toml(toml).map_err(py_err)?;
    if let Some(m) = mode {
        cfg.mode = parse_mode(m)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Default configuration as TOML text.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_toml()
}

/// A single simulation over the synthetic workload of `seed`, without a
/// learned repositioning policy unless `train_decisions` > 0.
#[pyclass(module = "mhrs", unsendable)]
struct Simulation {
    sim: Simulator,
    agent: Option<Agent>,
    records: Vec<mhrs_core::engine::StepRecord>,
    cfg: RunConfig,
    workload_hash: String,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (config_toml = "", mode = None, seed = None, train_decisions = 0))]
    fn new(config_toml: &str, mode: Option<&str>, seed: Option<u64>, train_decisions: u64) -> PyResult<Self> {
        let cfg = config(config_toml, mode, seed)?;
        let scn = Scenario::synthetic(&cfg, cfg.seed).map_err(py_err)?;
        let agent = if train_decisions > 0 {
            let mut a = train_agent(&scn, cfg.mode, cfg.seed, train_decisions).map_err(py_err)?;
            a.set_training(false);
            Some(a)
        } else {
            None
        };
        let requests = workload(&cfg, &scn.grid, cfg.seed).map_err(py_err)?;
        let workload_hash = mhrs_core::experiment::workload_hash(&requests);
        let mut sim_cfg = cfg.sim();
        sim_cfg.seed = cfg.seed;
        let sim = init_sim(sim_cfg, scn.grid, scn.eta, scn.predictor, requests).map_err(py_err)?;
        Ok(Self { sim, agent, records: Vec::new(), cfg, workload_hash })
    }

    /// Advances one step and returns the step's global reward components.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let out = self.sim.step(self.agent.as_mut()).map_err(py_err)?;
        let g = &out.record.rewards.global;
        let doc = serde_json::json!({
            "time": out.record.time,
            "global_reward": out.record.rewards.global_reward,
            "gap": g.gap,
            "dispatch_minutes": g.dispatch_minutes,
            "extra_travel": g.extra_travel,
            "activations": g.activations,
            "hops": g.hops,
        });
        self.records.push(out.record);
        from_json(py, &doc)
    }

    /// Runs `steps` more steps (default: the rest of the configured run).
    #[pyo3(signature = (steps = None))]
    fn run(&mut self, steps: Option<u64>) -> PyResult<()> {
        let n = steps.unwrap_or_else(|| self.cfg.steps.saturating_sub(self.sim.steps_done()));
        for _ in 0..n {
            let out = self.sim.step(self.agent.as_mut()).map_err(py_err)?;
            self.records.push(out.record);
        }
        Ok(())
    }

    #[getter]
    fn now(&self) -> u64 {
        self.sim.now()
    }

    /// Passenger counts per lifecycle state.
    fn counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let c = self.sim.counts();
        from_json(
            py,
            &serde_json::json!({
                "pending": c.pending, "assigned": c.assigned, "riding": c.riding,
                "hop_waiting": c.hop_waiting, "completed": c.completed, "rejected": c.rejected,
            }),
        )
    }

    /// Headline metrics replayed from the event log and checked against the
    /// online counters.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let replay = cross_check(&self.sim).map_err(py_err)?;
        let s = RunSummary::new(self.cfg.mode, self.cfg.seed, &self.cfg.hash(), &self.workload_hash, &replay, &self.records);
        from_json(py, &s)
    }

    fn events_jsonl(&self) -> String {
        self.sim.log().to_jsonl()
    }

    fn steps_csv(&self) -> PyResult<String> {
        step_csv(&self.records).map_err(py_err)
    }
}

/// One full run; returns its summary.
#[pyfunction]
#[pyo3(signature = (config_toml = "", mode = None, seed = None, train_decisions = 0))]
fn simulate<'py>(
    py: Python<'py>,
    config_toml: &str,
    mode: Option<&str>,
    seed: Option<u64>,
    train_decisions: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_toml, mode, seed)?;
    let scn = Scenario::synthetic(&cfg, cfg.seed).map_err(py_err)?;
    let mut agent = if train_decisions > 0 {
        let mut a = train_agent(&scn, cfg.mode, cfg.seed, train_decisions).map_err(py_err)?;
        a.set_training(false);
        Some(a)
    } else {
        None
    };
    let requests = workload(&cfg, &scn.grid, cfg.seed).map_err(py_err)?;
    let ep = run_episode(&scn, cfg.mode, cfg.seed, requests, agent.as_mut()).map_err(py_err)?;
    from_json(py, &ep.summary)
}

/// Trains and evaluates each mode on seeds `seed .. seed + seeds`; returns
/// the comparison table as CSV text.
#[pyfunction]
#[pyo3(signature = (config_toml = "", seeds = 1, train_decisions = 0, modes = None))]
fn compare(config_toml: &str, seeds: u64, train_decisions: u64, modes: Option<Vec<String>>) -> PyResult<String> {
    let cfg = config(config_toml, None, None)?;
    let modes = match modes {
        Some(ms) => ms.iter().map(|m| parse_mode(m)).collect::<PyResult<Vec<_>>>()?,
        None => Mode::ALL.to_vec(),
    };
    let seed_list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
    let (_, table) = benchmark(&cfg, &modes, &seed_list, train_decisions).map_err(py_err)?;
    table.to_csv().map_err(py_err)
}

/// Legs of a trip on a `rows` × `cols` lattice with the given hop zones,
/// as `(from, to, kind)` tuples with zones as `(row, col)`.
#[pyfunction]
#[pyo3(signature = (origin, destination, rows, cols, hops = Vec::new(), detour = 0.2))]
fn plan(
    origin: (usize, usize),
    destination: (usize, usize),
    rows: usize,
    cols: usize,
    hops: Vec<(usize, usize)>,
    detour: f64,
) -> PyResult<Vec<((usize, usize), (usize, usize), &'static str)>> {
    let mut grid = GridMap::new(rows, cols, 800.0).map_err(py_err)?;
    grid.set_hop_zones(hops.into_iter().map(|(r, c)| Zone::new(r, c))).map_err(py_err)?;
    let (o, d) = (Zone::new(origin.0, origin.1), Zone::new(destination.0, destination.1));
    grid.check(o).map_err(py_err)?;
    grid.check(d).map_err(py_err)?;
    let trip = plan_trip(o, d, &grid, PlanMode::MultiHop { detour });
    Ok(trip
        .legs()
        .iter()
        .map(|l| {
            let kind = match l.kind {
                LegKind::Direct => "direct",
                LegKind::ToHop => "to_hop",
                LegKind::FromHop => "from_hop",
            };
            ((l.from.row, l.from.col), (l.to.row, l.to.col), kind)
        })
        .collect())
}

/// Synthetic workload of `seed` as `(minute, origin, destination)` tuples.
#[pyfunction]
#[pyo3(signature = (config_toml = "", seed = 0))]
fn synthetic_trips(config_toml: &str, seed: u64) -> PyResult<Vec<(u64, (usize, usize), (usize, usize))>> {
    let cfg = config(config_toml, None, None)?;
    let grid = cfg.grid().map_err(py_err)?;
    let trips: Vec<TripRecord> = workload(&cfg, &grid, seed).map_err(py_err)?;
    Ok(trips
        .iter()
        .map(|t| (t.request_time, (t.origin.row, t.origin.col), (t.destination.row, t.destination.col)))
        .collect())
}

#[pymodule]
pub fn mhrs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_trips, m)?)?;
    Ok(())
}
