//! Per-vehicle relocation policy: state encoding, the 225-way action head,
//! the Q-network, replay memory and double-Q training.

pub mod action;
pub mod agent;
pub mod features;
pub mod network;
pub mod replay;
pub mod train;

pub use action::{masked_argmax, select_action, ActionIndex, ActionMask, ACTION_COUNT, ACTION_RADIUS, ACTION_SIDE};
pub use agent::Agent;
pub use features::{encode_state, EnvSnapshot, PassengerView, StateFeatures, SupplyForecast, VehicleView, FEATURE_LEN, NEAR_HORIZON};
pub use network::{q_forward, Checkpoint, Dense, Gradients, LayerRecord, QNetwork};
pub use replay::{push_transition, ReplayBuffer, Transition};
pub use train::{double_q_targets, sync_target, train_step, TrainConfig};
