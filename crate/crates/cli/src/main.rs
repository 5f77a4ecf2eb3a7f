//! `mhrs`: run, train and compare fleet dispatch policies on a grid city.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mhrs_core::demand::{fit_demand, fit_eta, ingest_trips_path, read_travel_samples, TripRecord};
use mhrs_core::dispatch::{Agent, Checkpoint};
use mhrs_core::experiment::{benchmark, origin_counts, run_episode, synthetic_history, train_more, workload, Scenario};
use mhrs_core::metrics::step_csv;
use mhrs_core::{Error, Mode, RunConfig};

const VERSION: &str = env!("MHRS_VERSION");

#[derive(Parser)]
#[command(name = "mhrs", version = VERSION, about = "Multi-hop ride-sharing fleet simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its event log, step table and summary.
    Simulate(SimulateArgs),
    /// Train a dispatch policy and save a checkpoint.
    Train(TrainArgs),
    /// Train and evaluate every mode over several seeds.
    Compare(CompareArgs),
    /// Select hop zones from trip history.
    Hopzones(HistoryArgs),
    /// Fit the historical-mean demand predictor.
    FitDemand(HistoryArgs),
    /// Fit the travel-time table from observed durations.
    FitEta(FitEtaArgs),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HistoryArgs {
    #[command(flatten)]
    common: Common,
    /// Trip CSV used as history; a synthetic history is drawn otherwise.
    #[arg(long)]
    trips: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    steps: Option<u64>,
    /// Trip CSV replayed as the workload (and used as history).
    #[arg(long)]
    trips: Option<PathBuf>,
    #[arg(long)]
    checkpoint_in: Option<PathBuf>,
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// Learn while simulating.
    #[arg(long, conflicts_with = "eval")]
    train: bool,
    /// Act greedily without learning (the default).
    #[arg(long)]
    eval: bool,
    /// Fixed exploration rate overriding the schedule.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    steps: Option<u64>,
    /// Decisions to train for; defaults to `train_decisions` in the config.
    #[arg(long)]
    decisions: Option<u64>,
    #[arg(long)]
    checkpoint_in: Option<PathBuf>,
    /// Defaults to `checkpoint.json` under --out.
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    steps: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    decisions: Option<u64>,
    /// Comma-separated subset of mhrs, rs, nors.
    #[arg(long, value_delimiter = ',', default_values_t = Mode::ALL.to_vec())]
    modes: Vec<Mode>,
}

#[derive(Args)]
struct FitEtaArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with header `depart_min,origin_row,origin_col,dest_row,dest_col,minutes`.
    #[arg(long)]
    samples: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::InvalidConfig(_)) => 2,
            CliError::Core(Error::InvariantBreach(_)) => 3,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn revalidate(cfg: RunConfig) -> Result<RunConfig> {
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write(path, text + "\n")
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig, extra: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": VERSION,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "config": cfg,
        "outputs": extra,
    });
    write_json(&out.join("manifest.json"), &manifest)
}

fn read_trips(path: &Path, cfg: &RunConfig) -> Result<Vec<TripRecord>> {
    let grid = cfg.grid()?;
    let report = ingest_trips_path(path, &grid, cfg.bounding_box().as_ref())?;
    if report.records.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no usable trips", path.display())).into());
    }
    Ok(report.records)
}

/// History for scenario building: the given trip file, or a synthetic draw.
fn scenario(cfg: &RunConfig, trips: Option<&Path>) -> Result<(Scenario, Option<Vec<TripRecord>>)> {
    match trips {
        Some(path) => {
            let records = read_trips(path, cfg)?;
            Ok((Scenario::from_history(cfg, &records)?, Some(records)))
        }
        None => Ok((Scenario::synthetic(cfg, cfg.seed)?, None)),
    }
}

fn load_agent(cfg: &RunConfig, path: &Path) -> Result<Agent> {
    let ck = Checkpoint::load(path)?;
    Ok(Agent::from_checkpoint(cfg.train(), &ck)?)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    let cfg = revalidate(cfg)?;
    let out = &args.common.out;
    prepare_out(out)?;
    let (scn, trips) = scenario(&cfg, args.trips.as_deref())?;
    let requests = match trips {
        Some(t) => t,
        None => workload(&cfg, &scn.grid, cfg.seed)?,
    };
    let mut agent = match (&args.checkpoint_in, args.train) {
        (Some(path), _) => Some(load_agent(&cfg, path)?),
        (None, true) => Some(Agent::new(cfg.train())?),
        (None, false) => None,
    };
    if let Some(a) = agent.as_mut() {
        a.set_training(args.train);
        a.set_epsilon(args.epsilon)?;
    }
    let ep = run_episode(&scn, cfg.mode, cfg.seed, requests, agent.as_mut())?;
    ep.sim.log().save(&out.join("events.jsonl"))?;
    write(&out.join("steps.csv"), step_csv(&ep.records)?)?;
    write_json(&out.join("summary.json"), &ep.summary)?;
    let mut outputs = vec!["events.jsonl", "steps.csv", "summary.json"];
    if let (Some(a), Some(path)) = (&agent, &args.checkpoint_out) {
        a.checkpoint(&cfg.hash()).save(path)?;
        outputs.push("checkpoint");
    }
    write_manifest(out, "simulate", &cfg, json!(outputs))?;
    println!("{}", serde_json::to_string(&ep.summary.headline()).unwrap_or_default());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    let cfg = revalidate(cfg)?;
    let out = &args.common.out;
    prepare_out(out)?;
    let scn = Scenario::synthetic(&cfg, cfg.seed)?;
    let mut agent = match &args.checkpoint_in {
        Some(path) => load_agent(&cfg, path)?,
        None => Agent::new(cfg.train())?,
    };
    agent.set_epsilon(args.epsilon)?;
    let decisions = args.decisions.unwrap_or(cfg.train_decisions);
    train_more(&scn, cfg.mode, cfg.seed, &mut agent, decisions)?;
    let ck_path = args.checkpoint_out.unwrap_or_else(|| out.join("checkpoint.json"));
    agent.checkpoint(&cfg.hash()).save(&ck_path)?;
    let stats = json!({
        "decisions": agent.decisions(),
        "train_steps": agent.train_steps(),
        "last_loss": agent.last_loss(),
        "checkpoint": ck_path,
    });
    write_json(&out.join("training.json"), &stats)?;
    write_manifest(out, "train", &cfg, json!(["training.json", "checkpoint"]))?;
    println!("{stats}");
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    let cfg = revalidate(cfg)?;
    if args.seeds == 0 || args.modes.is_empty() {
        return Err(Error::InvalidConfig("compare needs at least one seed and one mode".into()).into());
    }
    let out = &args.common.out;
    prepare_out(out)?;
    let seeds: Vec<u64> = (cfg.seed..cfg.seed + args.seeds).collect();
    let decisions = args.decisions.unwrap_or(cfg.train_decisions);
    let (runs, table) = benchmark(&cfg, &args.modes, &seeds, decisions)?;
    write_json(&out.join("runs.json"), &runs)?;
    write(&out.join("comparison.csv"), table.to_csv()?)?;
    write(&out.join("comparison.json"), table.to_series_json() + "\n")?;
    write_manifest(out, "compare", &cfg, json!({"seeds": seeds, "decisions": decisions, "files": ["runs.json", "comparison.csv", "comparison.json"]}))?;
    for mode in &args.modes {
        if let Some(row) = table.get(*mode, "accept_rate") {
            println!("{:<5} accept_rate {:.4} ± {:.4}", mode.as_str(), row.mean, row.std);
        }
    }
    Ok(())
}

fn hopzones(args: HistoryArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let out = &args.common.out;
    prepare_out(out)?;
    let (scn, trips) = scenario(&cfg, args.trips.as_deref())?;
    let history = match trips {
        Some(t) => t,
        None => synthetic_history(&cfg, cfg.seed)?,
    };
    let counts = origin_counts(&scn.grid, &history);
    let hops = scn.grid.hop_zones();
    let doc = json!({ "hop_zones": hops, "origin_counts": counts, "spacing": cfg.hop_spacing, "min_requests": cfg.hop_min_requests });
    write_json(&out.join("hop_zones.json"), &doc)?;
    write_manifest(out, "hopzones", &cfg, json!(["hop_zones.json"]))?;
    println!("{} hop zones", hops.len());
    Ok(())
}

fn fit_demand_cmd(args: HistoryArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let out = &args.common.out;
    prepare_out(out)?;
    let grid = cfg.grid()?;
    let history = match &args.trips {
        Some(path) => read_trips(path, &cfg)?,
        None => synthetic_history(&cfg, cfg.seed)?,
    };
    let predictor = fit_demand(&history, &grid, cfg.demand_bin_minutes)?;
    write_json(&out.join("demand.json"), &predictor)?;
    write_manifest(out, "fit-demand", &cfg, json!({"trips": history.len(), "files": ["demand.json"]}))?;
    println!("fitted on {} trips", history.len());
    Ok(())
}

fn fit_eta_cmd(args: FitEtaArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let out = &args.common.out;
    prepare_out(out)?;
    let grid = cfg.grid()?;
    let file = File::open(&args.samples).map_err(|e| CliError::Io(args.samples.clone(), e))?;
    let samples = read_travel_samples(BufReader::new(file), &grid)?;
    let model = fit_eta(&samples, &grid, cfg.eta_bin_minutes, cfg.speed_m_per_min())?;
    write(&out.join("eta.json"), model.to_json() + "\n")?;
    write_manifest(out, "fit-eta", &cfg, json!({"samples": samples.len(), "files": ["eta.json"]}))?;
    println!("fitted on {} samples, fallback speed {:.1} m/min", samples.len(), model.speed_m_per_min());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Compare(a) => compare(a),
        Command::Hopzones(a) => hopzones(a),
        Command::FitDemand(a) => fit_demand_cmd(a),
        Command::FitEta(a) => fit_eta_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::from(Error::InvalidConfig("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::InvariantBreach("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(Error::InvalidInput("x".into())).exit_code(), 1);
    }

    #[test]
    fn arguments_parse() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["mhrs", "compare", "--out", "o", "--modes", "rs,nors"]).unwrap();
        match cli.command {
            Command::Compare(a) => assert_eq!(a.modes, vec![Mode::Rs, Mode::Nors]),
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["mhrs", "simulate", "--out", "o", "--train", "--eval"]).is_err());
    }
}
