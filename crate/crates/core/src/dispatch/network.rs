//! Fully connected action-value network: rectifier hidden layers and a linear
//! output head, trained with hand-written backpropagation and Adam.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dispatch::action::ACTION_COUNT;
use crate::dispatch::features::StateFeatures;
use crate::error::{Error, Result};

const CHECKPOINT_FORMAT: &str = "mhrs-qnet/1";

/// Affine layer storing weights as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Per-layer `(d weights, d bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|(w, b)| w.iter().map(|x| x * x).sum::<f64>() + b.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            w.mapv_inplace(|x| x * k);
            b.mapv_inplace(|x| x * k);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct AdamState {
    step: u64,
    first: Vec<(Array2<f64>, Array1<f64>)>,
    second: Vec<(Array2<f64>, Array1<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
    adam: AdamState,
}

impl QNetwork {
    /// He-uniform initialised network.
    pub fn new(input: usize, hidden: &[usize], output: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(input, hidden, output)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs() as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn zeros(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let dims: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).chain([output]).collect();
        if dims.contains(&0) {
            return Err(Error::config(format!("layer widths must be positive, got {dims:?}")));
        }
        Self::from_layers(dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect())
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::contract(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        if layers.iter().any(|l| l.bias.len() != l.outputs()) {
            return Err(Error::contract("bias length differs from layer width"));
        }
        Ok(Self { layers, adam: AdamState::default() })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn shape(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs(), l.outputs())).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_len() {
            return Err(Error::contract(format!("expected {} inputs, got {}", self.input_len(), input.len())));
        }
        let mut a = ArrayView1::from(input).to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            a = l.weights.dot(&a) + &l.bias;
            if i < last {
                a.mapv_inplace(relu);
            }
        }
        Ok(a.to_vec())
    }

    /// Row-per-example forward pass.
    pub fn forward_batch(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(inputs)?.pop().expect("at least one layer"))
    }

    /// Activations after every layer (input excluded), last entry is the output.
    fn forward_cached(&self, inputs: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        if inputs.ncols() != self.input_len() {
            return Err(Error::contract(format!("expected {} inputs, got {}", self.input_len(), inputs.ncols())));
        }
        let last = self.layers.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let prev = if i == 0 { inputs } else { &acts[i - 1] };
            let mut z = prev.dot(&l.weights.t()) + &l.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Mean squared error between `Q(s_i, a_i)` and `targets[i]` and its
    /// gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, inputs: &Array2<f64>, actions: &[usize], targets: &[f64]) -> Result<(f64, Gradients)> {
        let n = inputs.nrows();
        if n == 0 || actions.len() != n || targets.len() != n {
            return Err(Error::contract(format!(
                "batch of {n} rows with {} actions and {} targets",
                actions.len(),
                targets.len()
            )));
        }
        if let Some(a) = actions.iter().find(|&&a| a >= self.output_len()) {
            return Err(Error::contract(format!("action {a} outside the output head")));
        }
        let acts = self.forward_cached(inputs)?;
        let out = &acts[acts.len() - 1];

        let mut loss = 0.0;
        let mut delta = Array2::<f64>::zeros(out.raw_dim());
        for i in 0..n {
            let err = out[[i, actions[i]]] - targets[i];
            loss += err * err;
            delta[[i, actions[i]]] = 2.0 * err / n as f64;
        }
        loss /= n as f64;

        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let prev = if i == 0 { inputs } else { &acts[i - 1] };
            let dw = delta.t().dot(prev);
            let db = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights);
                back.zip_mut_with(prev, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push((dw, db));
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    /// One Adam step (beta1 0.9, beta2 0.999). Gradients are rescaled to at
    /// most `clip_norm` in global L2 norm when `clip_norm > 0`.
    pub fn apply_adam(&mut self, grads: &Gradients, learning_rate: f64, clip_norm: f64) -> Result<()> {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        if grads.layers.len() != self.layers.len() {
            return Err(Error::contract("gradient layer count differs from network"));
        }
        let mut g = grads.clone();
        let norm = g.norm();
        if !norm.is_finite() {
            return Err(Error::TrainingDiverged(format!("gradient norm {norm}")));
        }
        if clip_norm > 0.0 && norm > clip_norm {
            g.scale(clip_norm / norm);
        }
        if self.adam.first.len() != self.layers.len() {
            let zero: Vec<_> = self.layers.iter().map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len()))).collect();
            self.adam.first = zero.clone();
            self.adam.second = zero;
            self.adam.step = 0;
        }
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let lr = learning_rate * (1.0 - B2.powi(t)).sqrt() / (1.0 - B1.powi(t));
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in self
            .layers
            .iter_mut()
            .zip(&g.layers)
            .zip(self.adam.first.iter_mut())
            .zip(self.adam.second.iter_mut())
        {
            if layer.weights.raw_dim() != gw.raw_dim() || layer.bias.len() != gb.len() {
                return Err(Error::contract("gradient shape differs from layer"));
            }
            ndarray::Zip::from(&mut layer.weights).and(gw).and(mw).and(vw).for_each(|p, &g, m, v| {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *p -= lr * *m / (v.sqrt() + EPS);
            });
            ndarray::Zip::from(&mut layer.bias).and(gb).and(mb).and(vb).for_each(|p, &g, m, v| {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *p -= lr * *m / (v.sqrt() + EPS);
            });
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, train_steps: u64, decisions: u64, config_hash: &str) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            train_steps,
            decisions,
            config_hash: config_hash.to_string(),
        }
    }

    /// Rebuilds a network from a checkpoint; `expected` layer shapes, when
    /// given, must match exactly.
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<&[(usize, usize)]>) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unknown checkpoint format `{}`", ck.format)));
        }
        let mut layers = Vec::with_capacity(ck.layers.len());
        for (i, rec) in ck.layers.iter().enumerate() {
            if rec.weights.len() != rec.inputs * rec.outputs || rec.bias.len() != rec.outputs {
                return Err(Error::Format(format!("layer {i} arrays do not match its declared shape")));
            }
            layers.push(Dense {
                weights: Array2::from_shape_vec((rec.outputs, rec.inputs), rec.weights.clone())
                    .map_err(|e| Error::Format(e.to_string()))?,
                bias: Array1::from(rec.bias.clone()),
            });
        }
        let net = Self::from_layers(layers)?;
        if let Some(shape) = expected {
            if net.shape() != shape {
                return Err(Error::contract(format!("checkpoint shape {:?} differs from expected {shape:?}", net.shape())));
            }
        }
        Ok(net)
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Self-describing JSON network checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub layers: Vec<LayerRecord>,
    pub train_steps: u64,
    pub decisions: u64,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("checkpoint {}: {e}", path.display())))
    }
}

/// Action values for one encoded state; the network must expose the
/// 225-slot relocation head.
pub fn q_forward(net: &QNetwork, f: &StateFeatures) -> Result<Vec<f64>> {
    if net.output_len() != ACTION_COUNT {
        return Err(Error::contract(format!("network head has {} outputs, expected {ACTION_COUNT}", net.output_len())));
    }
    let q = net.forward(f.as_slice())?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged("non-finite action value".into()));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_weights_give_zero_q() {
        let net = QNetwork::zeros(10, &[8, 8], ACTION_COUNT).unwrap();
        let q = q_forward(&net, &StateFeatures(vec![1.5; 10])).unwrap();
        assert_eq!(q.len(), ACTION_COUNT);
        assert!(q.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_set_linear_layer() {
        let layer = Dense { weights: array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]], bias: array![0.5, -1.0] };
        let net = QNetwork::from_layers(vec![layer]).unwrap();
        // [1*2 + 2*(-1) + 3*4 + 0.5, -1*2 + 0.5*(-1) + 0 - 1]
        assert_eq!(net.forward(&[2.0, -1.0, 4.0]).unwrap(), vec![12.5, -3.5]);
    }

    #[test]
    fn rectifier_zeroes_negative_preactivations() {
        let hidden = Dense { weights: array![[1.0], [-1.0]], bias: array![0.0, 0.0] };
        let out = Dense { weights: array![[1.0, 1.0]], bias: array![0.0] };
        let net = QNetwork::from_layers(vec![hidden, out]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![3.0]);
        assert_eq!(net.forward(&[-2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let net = QNetwork::zeros(4, &[3], 2).unwrap();
        assert!(matches!(net.forward(&[1.0; 5]), Err(Error::Contract(_))));
        let bad = vec![Dense::zeros(4, 3), Dense::zeros(2, 2)];
        assert!(QNetwork::from_layers(bad).is_err());
        assert!(q_forward(&net, &StateFeatures(vec![0.0; 4])).is_err());
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = QNetwork::new(5, &[7, 6], 4, &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i as f64 - j as f64) * 0.3);
        let batch = net.forward_batch(&x).unwrap();
        for i in 0..3 {
            let single = net.forward(x.row(i).as_slice().unwrap()).unwrap();
            for (a, b) in single.iter().zip(batch.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_and_shape_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = QNetwork::new(6, &[5], 3, &mut rng).unwrap();
        let ck = net.to_checkpoint(12, 34, "abc");
        let json = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        let restored = QNetwork::from_checkpoint(&back, Some(&[(6, 5), (5, 3)])).unwrap();
        assert_eq!(restored.layers(), net.layers());
        assert!(QNetwork::from_checkpoint(&back, Some(&[(6, 4), (4, 3)])).is_err());
        let mut broken = back.clone();
        broken.layers[0].weights.pop();
        assert!(matches!(QNetwork::from_checkpoint(&broken, None), Err(Error::Format(_))));
    }
}
