use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dispatch::action::masked_argmax;
use crate::dispatch::network::QNetwork;
use crate::dispatch::replay::Transition;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Discount factor η.
    pub discount: f64,
    /// Soft target blend α: `target = α·target + (1−α)·online`.
    pub target_blend: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_decisions: u64,
    /// Engine steps between target blends.
    pub sync_interval_steps: u64,
    /// Stored transitions between gradient steps.
    pub train_every: u64,
    pub hidden_layers: Vec<usize>,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            target_blend: 0.9,
            learning_rate: 1e-3,
            batch_size: 32,
            buffer_capacity: 50_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_decisions: 10_000,
            sync_interval_steps: 50,
            train_every: 1,
            hidden_layers: vec![256, 256],
            grad_clip: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config(format!("discount must lie in (0, 1), got {}", self.discount)));
        }
        if !(self.target_blend > 0.0 && self.target_blend <= 1.0) {
            return Err(Error::config(format!("target_blend must lie in (0, 1], got {}", self.target_blend)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::config("need 0 < batch_size <= buffer_capacity"));
        }
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) {
            return Err(Error::config("epsilon bounds must lie in [0, 1]"));
        }
        if self.sync_interval_steps == 0 || self.train_every == 0 {
            return Err(Error::config("sync_interval_steps and train_every must be positive"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::config("grad_clip must be non-negative"));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`, flat afterwards.
    pub fn epsilon_at(&self, decisions: u64) -> f64 {
        if self.epsilon_decay_decisions == 0 || decisions >= self.epsilon_decay_decisions {
            return self.epsilon_end;
        }
        let frac = decisions as f64 / self.epsilon_decay_decisions as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

fn stack(rows: impl ExactSizeIterator<Item = Vec<f64>>, width: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let flat: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((n, width), flat).map_err(|e| Error::contract(format!("ragged feature batch: {e}")))
}

/// Double-Q regression targets: the online network picks the next action
/// (within the next-state mask), the target network scores it.
pub fn double_q_targets(online: &QNetwork, target: &QNetwork, batch: &[Transition], discount: f64) -> Result<Vec<f64>> {
    let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch[i].terminal).collect();
    let mut y: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    if live.is_empty() {
        return Ok(y);
    }
    let next = stack(live.iter().map(|&i| batch[i].next_features.0.clone()), online.input_len())?;
    let q_online = online.forward_batch(&next)?;
    let q_target = target.forward_batch(&next)?;
    for (row, &i) in live.iter().enumerate() {
        let q = q_online.row(row);
        let a = masked_argmax(q.as_slice().expect("standard layout"), &batch[i].next_mask)
            .ok_or_else(|| Error::contract("next-state mask selects no action"))?;
        y[i] += discount * q_target[[row, a]];
    }
    Ok(y)
}

/// One Adam step on the mean squared TD error; returns the loss measured
/// before the update.
pub fn train_step(net: &mut QNetwork, target: &QNetwork, batch: &[Transition], cfg: &TrainConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("empty training batch"));
    }
    let y = double_q_targets(net, target, batch, cfg.discount)?;
    let x = stack(batch.iter().map(|t| t.features.0.clone()), net.input_len())?;
    let actions: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
    let (loss, grads) = net.loss_and_gradients(&x, &actions, &y)?;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged(format!("loss {loss} on a batch of {}", batch.len())));
    }
    net.apply_adam(&grads, cfg.learning_rate, cfg.grad_clip)?;
    if !net.is_finite() {
        return Err(Error::TrainingDiverged("non-finite parameter after update".into()));
    }
    Ok(loss)
}

/// `target ← α·target + (1−α)·online`.
pub fn sync_target(net: &QNetwork, target: &mut QNetwork, alpha: f64) -> Result<()> {
    if net.shape() != target.shape() {
        return Err(Error::contract(format!("online shape {:?} differs from target {:?}", net.shape(), target.shape())));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("blend {alpha} outside [0, 1]")));
    }
    for (t, o) in target.layers_mut().iter_mut().zip(net.layers()) {
        t.weights.zip_mut_with(&o.weights, |t, &o| *t = alpha * *t + (1.0 - alpha) * o);
        t.bias.zip_mut_with(&o.bias, |t, &o| *t = alpha * *t + (1.0 - alpha) * o);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::dispatch::action::{ActionIndex, ActionMask};
    use crate::dispatch::features::StateFeatures;
    use crate::dispatch::network::Dense;

    fn scalar_net(w: f64) -> QNetwork {
        QNetwork::from_layers(vec![Dense { weights: array![[w]], bias: array![0.0] }]).unwrap()
    }

    #[test]
    fn blend_extremes_and_midpoint() {
        let online = scalar_net(0.0);
        let mut target = scalar_net(1.0);
        sync_target(&online, &mut target, 1.0).unwrap();
        assert_eq!(target.layers()[0].weights[[0, 0]], 1.0);
        sync_target(&online, &mut target, 0.9).unwrap();
        assert!((target.layers()[0].weights[[0, 0]] - 0.9).abs() < 1e-15);
        sync_target(&online, &mut target, 0.0).unwrap();
        assert_eq!(target.layers(), online.layers());
    }

    #[test]
    fn blend_rejects_shape_mismatch() {
        let online = QNetwork::zeros(2, &[], 3).unwrap();
        let mut target = QNetwork::zeros(2, &[4], 3).unwrap();
        assert!(matches!(sync_target(&online, &mut target, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn terminal_batch_at_reward_has_zero_loss() {
        // Output is constant 2.5 through the bias.
        let mut net = QNetwork::from_layers(vec![Dense { weights: array![[0.0]], bias: array![2.5] }]).unwrap();
        let target = net.clone();
        let t = Transition {
            features: StateFeatures(vec![1.0]),
            action: ActionIndex::new(0).unwrap(),
            reward: 2.5,
            next_features: StateFeatures(vec![1.0]),
            next_mask: ActionMask::from_indices([0]).unwrap(),
            terminal: true,
        };
        let loss = train_step(&mut net, &target, &[t.clone(), t], &TrainConfig::default()).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let cfg = TrainConfig { epsilon_start: 1.0, epsilon_end: 0.1, epsilon_decay_decisions: 10, ..Default::default() };
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(5) - 0.55).abs() < 1e-12);
        assert_eq!(cfg.epsilon_at(10), 0.1);
        assert_eq!(cfg.epsilon_at(1000), 0.1);
    }

    #[test]
    fn default_config_is_valid() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig { discount: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
