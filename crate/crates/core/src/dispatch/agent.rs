use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dispatch::action::{select_action, ActionIndex, ActionMask, ACTION_COUNT};
use crate::dispatch::features::{StateFeatures, FEATURE_LEN};
use crate::dispatch::network::{q_forward, Checkpoint, QNetwork};
use crate::dispatch::replay::{ReplayBuffer, Transition};
use crate::dispatch::train::{sync_target, train_step, TrainConfig};
use crate::error::{Error, Result};

/// Shared dispatch policy: one online/target network pair queried for every
/// vehicle, plus its replay memory and schedules.
#[derive(Debug, Clone)]
pub struct Agent {
    cfg: TrainConfig,
    online: QNetwork,
    target: QNetwork,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    training: bool,
    epsilon_override: Option<f64>,
    decisions: u64,
    observed: u64,
    train_steps: u64,
    engine_steps: u64,
    last_loss: Option<f64>,
}

impl Agent {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        let online = QNetwork::new(FEATURE_LEN, &cfg.hidden_layers, ACTION_COUNT, &mut init)?;
        Self::with_network(cfg, online)
    }

    /// Resumes from a checkpoint whose shape must match `cfg.hidden_layers`.
    pub fn from_checkpoint(cfg: TrainConfig, ck: &Checkpoint) -> Result<Self> {
        cfg.validate()?;
        let online = QNetwork::from_checkpoint(ck, Some(&Self::expected_shape(&cfg)))?;
        let mut agent = Self::with_network(cfg, online)?;
        agent.train_steps = ck.train_steps;
        agent.decisions = ck.decisions;
        Ok(agent)
    }

    fn with_network(cfg: TrainConfig, online: QNetwork) -> Result<Self> {
        Ok(Self {
            replay: ReplayBuffer::new(cfg.buffer_capacity, cfg.seed ^ 0x5eed)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)),
            target: online.clone(),
            online,
            cfg,
            training: true,
            epsilon_override: None,
            decisions: 0,
            observed: 0,
            train_steps: 0,
            engine_steps: 0,
            last_loss: None,
        })
    }

    pub fn expected_shape(cfg: &TrainConfig) -> Vec<(usize, usize)> {
        let dims: Vec<usize> =
            std::iter::once(FEATURE_LEN).chain(cfg.hidden_layers.iter().copied()).chain([ACTION_COUNT]).collect();
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Evaluation mode acts greedily (unless an epsilon override is set) and
    /// neither stores transitions nor updates weights.
    pub fn set_training(&mut self, on: bool) {
        self.training = on;
    }

    pub fn set_epsilon(&mut self, eps: Option<f64>) -> Result<()> {
        if let Some(e) = eps {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::config(format!("epsilon {e} outside [0, 1]")));
            }
        }
        self.epsilon_override = eps;
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        match self.epsilon_override {
            Some(e) => e,
            None if self.training => self.cfg.epsilon_at(self.decisions),
            None => 0.0,
        }
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn act(&mut self, f: &StateFeatures, mask: &ActionMask) -> Result<ActionIndex> {
        let q = q_forward(&self.online, f)?;
        let a = select_action(&q, mask, self.epsilon(), &mut self.rng)?;
        self.decisions += 1;
        Ok(a)
    }

    /// Stores a transition and runs a gradient step every `train_every`
    /// stored transitions once the buffer holds a full batch.
    pub fn observe(&mut self, t: Transition) -> Result<()> {
        if !self.training {
            return Ok(());
        }
        self.replay.push(t);
        self.observed += 1;
        if self.observed % self.cfg.train_every == 0 && self.replay.len() >= self.cfg.batch_size {
            let batch = self.replay.sample(self.cfg.batch_size)?;
            self.last_loss = Some(train_step(&mut self.online, &self.target, &batch, &self.cfg)?);
            self.train_steps += 1;
        }
        Ok(())
    }

    /// Called once per engine step; blends the target network on schedule.
    pub fn on_engine_step(&mut self) -> Result<()> {
        self.engine_steps += 1;
        if self.training && self.engine_steps % self.cfg.sync_interval_steps == 0 {
            sync_target(&self.online, &mut self.target, self.cfg.target_blend)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self, config_hash: &str) -> Checkpoint {
        self.online.to_checkpoint(self.train_steps, self.decisions, config_hash)
    }
}
