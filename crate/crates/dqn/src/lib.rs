//! A small deep Q-network trained in self-play on the iterated prisoner's
//! dilemma: two-layer rectifier network, replay buffer, soft target updates,
//! Huber loss and plain stochastic gradient descent.

mod error;
pub mod net;
pub mod replay;
pub mod train;

pub use error::{DqnError, Result};
pub use net::{gradient_check, MlpQNet, Sample};
pub use replay::{ReplayBuffer, Transition};
pub use train::{selfplay_train, train_step, write_log_csv, DqnConfig, IterLog, TrainReport, LOG_HEADER, PRETRAIN_WINDOW};
