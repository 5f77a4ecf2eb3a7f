//! Independent oracles for the Q-network and the exploration policy.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use mhrs_core::dispatch::{
    select_action, sync_target, train_step, ActionIndex, ActionMask, QNetwork, StateFeatures, TrainConfig, Transition,
    ACTION_COUNT,
};

pub fn net(input: usize, hidden: &[usize], output: usize, seed: u64) -> QNetwork {
    QNetwork::new(input, hidden, output, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn flat_params(n: &QNetwork) -> Vec<f64> {
    n.layers().iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>()).collect()
}

pub fn set_param(n: &mut QNetwork, mut k: usize, v: f64) {
    for l in n.layers_mut() {
        let w = l.weights.len();
        if k < w {
            *l.weights.iter_mut().nth(k).unwrap() = v;
            return;
        }
        k -= w;
        let b = l.bias.len();
        if k < b {
            l.bias[k] = v;
            return;
        }
        k -= b;
    }
    panic!("parameter index out of range");
}

fn mse(n: &QNetwork, x: &Array2<f64>, actions: &[usize], y: &[f64]) -> f64 {
    let q = n.forward_batch(x).unwrap();
    actions.iter().zip(y).enumerate().map(|(i, (&a, &t))| (q[[i, a]] - t).powi(2)).sum::<f64>() / y.len() as f64
}

/// Worst relative gap between backprop and central differences on a
/// 4-input, 6-hidden, 3-output network.
pub fn worst_gradient_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut n = net(4, &[6], 3, 5);
    let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
    let actions = [0, 2, 1, 1, 0];
    let y = [0.3, -1.2, 0.7, 2.0, -0.4];
    let (_, grads) = n.loss_and_gradients(&x, &actions, &y).unwrap();
    let analytic: Vec<f64> = grads.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>()).collect();
    let base = flat_params(&n);
    assert_eq!(analytic.len(), base.len());
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        set_param(&mut n, k, base[k] + h);
        let up = mse(&n, &x, &actions, &y);
        set_param(&mut n, k, base[k] - h);
        let down = mse(&n, &x, &actions, &y);
        set_param(&mut n, k, base[k]);
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(analytic[k].abs());
        if scale > 1e-8 {
            worst = worst.max((numeric - analytic[k]).abs() / scale);
        }
    }
    worst
}

fn one_hot(s: usize) -> StateFeatures {
    let mut v = vec![0.0; 2];
    v[s] = 1.0;
    StateFeatures(v)
}

/// Two states, two actions: action 0 stays, action 1 switches.
fn mdp_reward(s: usize, a: usize) -> f64 {
    [[0.0, 1.0], [2.0, 0.0]][s][a]
}

fn value_iteration(gamma: f64) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..2000 {
        let v = [q[0][0].max(q[0][1]), q[1][0].max(q[1][1])];
        let mut next = [[0.0; 2]; 2];
        for s in 0..2 {
            for a in 0..2 {
                let s2 = if a == 0 { s } else { 1 - s };
                next[s][a] = mdp_reward(s, a) + gamma * v[s2];
            }
        }
        q = next;
    }
    q
}

/// Largest |Q − Q*| after training on the full two-state transition table.
pub fn mdp_max_error() -> f64 {
    let gamma = 0.5;
    let oracle = value_iteration(gamma);
    let cfg = TrainConfig { discount: gamma, learning_rate: 0.01, grad_clip: 0.0, ..TrainConfig::default() };
    let mask = ActionMask::from_indices([0, 1]).unwrap();
    let batch: Vec<Transition> = (0..2)
        .flat_map(|s| {
            (0..2).map(move |a| {
                let s2 = if a == 0 { s } else { 1 - s };
                Transition {
                    features: one_hot(s),
                    action: ActionIndex::new(a).unwrap(),
                    reward: mdp_reward(s, a),
                    next_features: one_hot(s2),
                    next_mask: mask,
                    terminal: false,
                }
            })
        })
        .collect();
    let mut online = net(2, &[16], 2, 3);
    let mut target = online.clone();
    for step in 0..6000 {
        train_step(&mut online, &target, &batch, &cfg).unwrap();
        if step % 10 == 0 {
            sync_target(&online, &mut target, 0.5).unwrap();
        }
    }
    let mut worst: f64 = 0.0;
    for (s, row) in oracle.iter().enumerate() {
        let q = online.forward(&one_hot(s).0).unwrap();
        for (a, want) in row.iter().enumerate() {
            worst = worst.max((q[a] - want).abs());
        }
    }
    worst
}

/// Upper-tail p-value of Pearson's statistic against a uniform split.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// p-value of 10⁴ fully exploratory draws over a sparse mask.
pub fn exploration_p_value() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let allowed: Vec<usize> = (0..ACTION_COUNT).filter(|i| i % 9 == 0).collect();
    let mask = ActionMask::from_indices(allowed.iter().copied()).unwrap();
    let q: Vec<f64> = (0..ACTION_COUNT).map(|i| i as f64).collect();
    let mut counts = vec![0u64; allowed.len()];
    for _ in 0..10_000 {
        let a = select_action(&q, &mask, 1.0, &mut rng).unwrap().index();
        let k = allowed.iter().position(|&x| x == a).expect("action inside the mask");
        counts[k] += 1;
    }
    chi_square_uniform(&counts)
}
