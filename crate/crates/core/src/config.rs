//! Flat key-value experiment configuration (TOML) and its content hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demand::BoundingBox;
use crate::dispatch::TrainConfig;
use crate::engine::{default_radius_cells, Mode, RewardWeights, SimConfig};
use crate::error::{Error, Result};
use crate::grid::GridMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // grid
    pub rows: usize,
    pub cols: usize,
    pub cell_edge_m: f64,
    pub hop_spacing: usize,
    pub hop_min_requests: u64,
    // demand and travel times
    pub demand_bin_minutes: u64,
    pub eta_bin_minutes: u64,
    /// Defaults to one cell per step.
    pub default_speed_m_per_min: Option<f64>,
    /// `[min_lat, max_lat, min_lon, max_lon]` for geographic trip files.
    pub bbox: Option<[f64; 4]>,
    // workload
    pub requests_per_step: f64,
    pub steps: u64,
    pub start_minute: u64,
    // simulation
    pub dt_minutes: u64,
    pub horizon_steps: usize,
    pub fleet_size: usize,
    pub capacity: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub beta5: f64,
    pub warmup_steps: u64,
    /// Defaults to a 5 km reach in cells.
    pub radius_cells: Option<usize>,
    pub hop_wait_minutes: u64,
    pub hop_detour: f64,
    pub max_hops: u32,
    pub mode: Mode,
    pub seed: u64,
    // learning
    pub discount: f64,
    pub target_blend: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_decisions: u64,
    pub sync_interval_steps: u64,
    pub train_every: u64,
    pub hidden_layers: Vec<usize>,
    pub grad_clip: f64,
    pub train_decisions: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let train = TrainConfig::default();
        let [beta1, beta2, beta3, beta4, beta5] = RewardWeights::default().0;
        Self {
            rows: 10,
            cols: 10,
            cell_edge_m: 800.0,
            hop_spacing: 3,
            hop_min_requests: 10,
            demand_bin_minutes: 60,
            eta_bin_minutes: 60,
            default_speed_m_per_min: None,
            bbox: None,
            requests_per_step: 2.0,
            steps: 750,
            start_minute: sim.start_minute,
            dt_minutes: sim.dt_minutes,
            horizon_steps: sim.horizon_steps,
            fleet_size: sim.fleet_size,
            capacity: sim.capacity,
            beta1,
            beta2,
            beta3,
            beta4,
            beta5,
            warmup_steps: sim.warmup_steps,
            radius_cells: None,
            hop_wait_minutes: sim.hop_wait_minutes,
            hop_detour: sim.hop_detour,
            max_hops: sim.max_hops,
            mode: sim.mode,
            seed: sim.seed,
            discount: train.discount,
            target_blend: train.target_blend,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            buffer_capacity: train.buffer_capacity,
            epsilon_start: train.epsilon_start,
            epsilon_end: train.epsilon_end,
            epsilon_decay_decisions: train.epsilon_decay_decisions,
            sync_interval_steps: train.sync_interval_steps,
            train_every: train.train_every,
            hidden_layers: train.hidden_layers,
            grad_clip: train.grad_clip,
            train_decisions: 20_000,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.sim().validate()?;
        self.train().validate()?;
        if !(self.requests_per_step.is_finite() && self.requests_per_step >= 0.0) {
            return Err(Error::config("requests_per_step must be non-negative"));
        }
        if self.hop_spacing == 0 || self.demand_bin_minutes == 0 || self.eta_bin_minutes == 0 {
            return Err(Error::config("hop_spacing and bin widths must be positive"));
        }
        if let Some(s) = self.default_speed_m_per_min {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config("default_speed_m_per_min must be positive"));
            }
        }
        if let Some(b) = self.bounding_box() {
            b.validate()?;
        }
        Ok(())
    }

    /// Lattice without hop zones.
    pub fn grid(&self) -> Result<GridMap> {
        GridMap::new(self.rows, self.cols, self.cell_edge_m)
    }

    pub fn speed_m_per_min(&self) -> f64 {
        self.default_speed_m_per_min.unwrap_or(self.cell_edge_m / self.dt_minutes.max(1) as f64)
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        self.bbox.map(|[min_lat, max_lat, min_lon, max_lon]| BoundingBox { min_lat, max_lat, min_lon, max_lon })
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            dt_minutes: self.dt_minutes,
            horizon_steps: self.horizon_steps,
            fleet_size: self.fleet_size,
            capacity: self.capacity,
            weights: RewardWeights([self.beta1, self.beta2, self.beta3, self.beta4, self.beta5]),
            warmup_steps: self.warmup_steps,
            radius_cells: self.radius_cells.unwrap_or_else(|| default_radius_cells(self.cell_edge_m)),
            hop_wait_minutes: self.hop_wait_minutes,
            hop_detour: self.hop_detour,
            max_hops: self.max_hops,
            mode: self.mode,
            seed: self.seed,
            start_minute: self.start_minute,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            discount: self.discount,
            target_blend: self.target_blend,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_decisions: self.epsilon_decay_decisions,
            sync_interval_steps: self.sync_interval_steps,
            train_every: self.train_every,
            hidden_layers: self.hidden_layers.clone(),
            grad_clip: self.grad_clip,
            seed: self.seed,
        }
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.sim().radius_cells, 7);
        assert_eq!(c.speed_m_per_min(), 800.0);
    }

    #[test]
    fn flat_keys_override() {
        let c = RunConfig::from_toml("rows = 5\nmode = \"nors\"\nbeta3 = 0.0\nhidden_layers = [32]\n").unwrap();
        assert_eq!(c.rows, 5);
        assert_eq!(c.mode, Mode::Nors);
        assert_eq!(c.sim().weights.0[2], 0.0);
        assert_eq!(c.train().hidden_layers, vec![32]);
    }

    #[test]
    fn unknown_and_invalid_keys_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("colour = 3"), Err(Error::InvalidConfig(_))));
        assert!(matches!(RunConfig::from_toml("rows = 0"), Err(Error::InvalidConfig(_))));
        assert!(matches!(RunConfig::from_toml("beta1 = -1.0"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(RunConfig::from_toml(&a.to_toml()).unwrap(), a);
    }
}
