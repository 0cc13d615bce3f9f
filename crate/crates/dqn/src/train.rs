//! Replay-based TD training and the two-phase self-play schedule.

use std::io::{self, Write};

use ipd_core::engine::fmt_f64;
use ipd_core::game::next_state;
use ipd_core::{Action, PayoffMatrix, PolicyName, RandomStream, State};
use serde::{Deserialize, Serialize};

use crate::error::{DqnError, Result};
use crate::net::{MlpQNet, Sample};
use crate::replay::{ReplayBuffer, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub tau: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    /// Iterations against a uniformly random opponent.
    pub pretrain_iters: u64,
    /// Self-play iterations after pretraining.
    pub num_iters: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub buffer_capacity: usize,
    /// Games advanced by one round per iteration.
    pub n_games: usize,
    pub g: f64,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.8,
            tau: 0.01,
            eps_start: 0.5,
            eps_end: 0.01,
            eps_decay_steps: 600,
            pretrain_iters: 600,
            num_iters: 10_000,
            batch_size: 256,
            learning_rate: 0.2,
            hidden: 32,
            buffer_capacity: 5_000,
            n_games: 64,
            g: 1.8,
            seed: 8,
        }
    }
}

impl DqnConfig {
    /// Full-size batch and replay capacity.
    pub fn paper_scale() -> DqnConfig {
        DqnConfig {
            batch_size: 16_384,
            buffer_capacity: 1_000_000,
            ..DqnConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DqnError::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 0.5) {
            return bad(format!(
                "need 0 <= eps_end <= eps_start <= 0.5, got {} and {}",
                self.eps_end, self.eps_start
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.hidden == 0 || self.buffer_capacity == 0 || self.n_games == 0 {
            return bad("batch_size, hidden, buffer_capacity and n_games must be positive".into());
        }
        PayoffMatrix::from_g(self.g)?;
        Ok(())
    }

    /// Exploration rate at self-play iteration `i` (0-based): linear from
    /// `eps_start` to `eps_end` over `eps_decay_steps`, then flat.
    pub fn epsilon_at(&self, i: u64) -> f64 {
        if self.eps_decay_steps == 0 || i >= self.eps_decay_steps {
            return self.eps_end;
        }
        let f = i as f64 / self.eps_decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * f
    }
}

/// Samples a batch, regresses `net(s)_a` on `r + γ max target(s')`, takes one
/// gradient step and moves `target` toward `net`. Returns the batch loss.
pub fn train_step(
    net: &mut MlpQNet,
    target: &mut MlpQNet,
    buffer: &ReplayBuffer,
    cfg: &DqnConfig,
    rng: &mut RandomStream,
) -> Result<f64> {
    if buffer.is_empty() {
        return Err(DqnError::Config("replay buffer is empty".into()));
    }
    let batch: Vec<Sample> = buffer
        .sample(cfg.batch_size, rng)
        .into_iter()
        .map(|t| {
            let [qd, qc] = target.values(t.next_state);
            Sample {
                state: t.state,
                action: t.action,
                target: t.reward + cfg.gamma * qd.max(qc),
            }
        })
        .collect();
    let (loss, grad) = net.loss_and_grad(&batch);
    if !loss.is_finite() {
        return Err(DqnError::Training {
            iter: 0,
            seed: cfg.seed,
            msg: format!("non-finite loss {loss}"),
        });
    }
    net.sgd_step(&grad, cfg.learning_rate);
    target.soft_update(net, cfg.tau);
    Ok(loss)
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterLog {
    pub iter: u64,
    pub epsilon: f64,
    pub p_c_cc: f64,
    pub p_c_dd: f64,
    pub p_c_cd: f64,
    pub p_c_dc: f64,
    pub loss: f64,
    pub policy: PolicyName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    /// Modal greedy class over the last [`PRETRAIN_WINDOW`] pretraining iterations.
    pub pretrain_policy: PolicyName,
    /// Greedy class after the last pretraining iteration.
    pub pretrain_last_policy: PolicyName,
    pub final_policy: PolicyName,
    pub final_values: [[f64; 2]; 4],
    pub log: Vec<IterLog>,
}

impl TrainReport {
    /// Final greedy cooperation pattern of Pavlov with every probability
    /// beyond 0.9 / below 0.1.
    pub fn is_pavlov_pattern(&self) -> bool {
        self.log.last().is_some_and(|l| {
            l.p_c_cc > 0.9 && l.p_c_dd > 0.9 && l.p_c_cd < 0.1 && l.p_c_dc < 0.1
        })
    }
}

/// Greedy action with probability `1 − ε`, the other one otherwise.
fn explore(greedy: Action, epsilon: f64, rng: &mut RandomStream) -> Action {
    if rng.uniform() < epsilon {
        greedy.other()
    } else {
        greedy
    }
}

pub const PRETRAIN_WINDOW: usize = 100;

/// Most frequent class; ties go to the smaller name.
fn mode(policies: impl Iterator<Item = PolicyName>) -> Option<PolicyName> {
    let mut counts = std::collections::BTreeMap::new();
    for p in policies {
        *counts.entry(p).or_insert(0usize) += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(p, _)| p)
}

impl TrainReport {
    /// Most frequent greedy class over the last `window` iterations.
    pub fn mode_policy(&self, window: usize) -> Option<PolicyName> {
        mode(self.log.iter().rev().take(window).map(|l| l.policy))
    }
}

fn p_cooperate(net: &MlpQNet, s: State, epsilon: f64) -> f64 {
    match net.greedy(s) {
        Action::C => 1.0 - epsilon,
        Action::D => epsilon,
    }
}

fn log_row(net: &MlpQNet, iter: u64, epsilon: f64, loss: f64) -> IterLog {
    IterLog {
        iter,
        epsilon,
        p_c_cc: p_cooperate(net, State::CC, epsilon),
        p_c_dd: p_cooperate(net, State::DD, epsilon),
        p_c_cd: p_cooperate(net, State::CD, epsilon),
        p_c_dc: p_cooperate(net, State::DC, epsilon),
        loss,
        policy: PolicyName::from_profile(&net.greedy_profile()),
    }
}

/// Pretraining against a uniformly random opponent, then self-play against
/// the same network seen from the swapped state, with decaying exploration.
/// Each iteration advances `n_games` games by one round, stores the first
/// player's transitions and takes one training step. Iterations are numbered
/// 1..=pretrain_iters + num_iters.
pub fn selfplay_train(cfg: &DqnConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let m = PayoffMatrix::from_g(cfg.g)?;
    let root = RandomStream::new(cfg.seed);
    let mut init_rng = root.derive(0);
    let mut play_rng = root.derive(1);
    let mut batch_rng = root.derive(2);

    let mut net = MlpQNet::init(cfg.hidden, &mut init_rng);
    let mut target = net.clone();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut games: Vec<State> = (0..cfg.n_games).map(|_| State::from_index(play_rng.below(4))).collect();
    let mut log = Vec::new();
    let initial_policy = PolicyName::from_profile(&net.greedy_profile());

    let total = cfg.pretrain_iters + cfg.num_iters;
    for iter in 1..=total {
        let pretraining = iter <= cfg.pretrain_iters;
        let epsilon = if pretraining {
            cfg.eps_start
        } else {
            cfg.epsilon_at(iter - cfg.pretrain_iters - 1)
        };
        for s in games.iter_mut() {
            let a1 = explore(net.greedy(*s), epsilon, &mut play_rng);
            let a2 = if pretraining {
                explore(Action::D, 0.5, &mut play_rng)
            } else {
                explore(net.greedy(s.swap()), epsilon, &mut play_rng)
            };
            let next = next_state(a1, a2);
            buffer.push(Transition {
                state: *s,
                action: a1,
                reward: m.reward(a1, a2),
                next_state: next,
            });
            *s = next;
        }
        let loss = train_step(&mut net, &mut target, &buffer, cfg, &mut batch_rng).map_err(|e| match e {
            DqnError::Training { seed, msg, .. } => DqnError::Training { iter, seed, msg },
            other => other,
        })?;
        if !net.is_finite() {
            return Err(DqnError::Training {
                iter,
                seed: cfg.seed,
                msg: "non-finite network weights".into(),
            });
        }
        log.push(log_row(&net, iter, epsilon, loss));
    }
    let pre = &log[..cfg.pretrain_iters as usize];
    let start = pre.len().saturating_sub(PRETRAIN_WINDOW);
    Ok(TrainReport {
        seed: cfg.seed,
        pretrain_policy: mode(pre[start..].iter().map(|l| l.policy)).unwrap_or(initial_policy),
        pretrain_last_policy: pre.last().map_or(initial_policy, |l| l.policy),
        final_policy: PolicyName::from_profile(&net.greedy_profile()),
        final_values: State::ALL.map(|s| net.values(s)),
        log,
    })
}

pub const LOG_HEADER: &str = "iter,epsilon,p_c_cc,p_c_dd,p_c_cd,p_c_dc,loss";

pub fn write_log_csv<W: Write>(log: &[IterLog], mut w: W) -> io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for l in log {
        let vals = [l.epsilon, l.p_c_cc, l.p_c_dd, l.p_c_cd, l.p_c_dc, l.loss].map(fmt_f64);
        writeln!(w, "{},{}", l.iter, vals.join(","))?;
    }
    Ok(())
}
