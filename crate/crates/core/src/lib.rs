//! Self-play ε-greedy Q-learning in the one-step-memory iterated prisoner's dilemma.
//!
//! The crate is organised bottom-up:
//!
//! - [`game`]: actions, one-step-memory states and the symmetric payoff matrix.
//! - [`policy`]: the shared Q-table, ε-greedy action selection and the
//!   classification of greedy policies into named memory-one strategies.
//! - [`rng`]: reproducible counter-based random streams.
//! - [`engine`]: the self-play learner, trajectory recording and phase detection.
//! - [`equilibria`]: exact Bellman fixed points, closed-form validators,
//!   subgame-perfection checks and exact policy-pair returns.
//! - [`theory`]: machine checks of the convergence results (initialisation
//!   brackets, the three-phase deterministic oracle, exploration-event
//!   probabilities and the stochastic bounds).
//! - [`sweep`]: Monte-Carlo grids over (α, ε, g, γ).

pub mod engine;
pub mod equilibria;
mod error;
pub mod game;
pub mod linalg;
pub mod policy;
pub mod rng;
pub mod sweep;
pub mod theory;

pub use engine::{RunConfig, StepLog, TrajectoryRecord, UpdateMode};
pub use error::{Error, Result};
pub use game::{Action, PayoffMatrix, State};
pub use policy::{PolicyName, PolicyProfile, QTable};
pub use rng::RandomStream;
