//! The self-play learner: both players act from one shared Q-table, each from
//! its own perspective, and the table is updated after every round.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::game::{next_state, Action, PayoffMatrix, State};
use crate::policy::{check_epsilon, classify, epsilon_greedy_draw, is_cooperative, PolicyName, QTable};
use crate::rng::RandomStream;

/// Which table entries a round updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Only player 1's entry `(s_t, a¹_t)`.
    #[default]
    P1Only,
    /// Player 1's entry and player 2's mirrored entry, both with targets from
    /// the pre-round table. When the two coincide the entry is updated once.
    BothPerspectives,
}

/// Initial Q-values: an explicit table or the name of a preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QInit {
    Preset(String),
    Table(QTable),
}

impl Default for QInit {
    fn default() -> Self {
        QInit::Preset(PRESET_DEFAULT.to_string())
    }
}

pub const PRESET_DEFAULT: &str = "optimistic-default";
pub const PRESET_SCALED: &str = "optimistic-scaled";
pub const PRESET_PAVLOV: &str = "pavlov-fixed-point";
pub const PRESET_ZEROS: &str = "zeros";

/// Named initial tables.
///
/// - `optimistic-default`: hand-picked values for g = 1.8, γ = 0.6.
/// - `optimistic-scaled`: the same relative placement inside the brackets
///   `r_dd/(1−γ) < (r_dd+γ r_cc)/(1−γ²) < r_cc/(1−γ)` for any parameters;
///   equals `optimistic-default` at g = 1.8, γ = 0.6.
/// - `pavlov-fixed-point`: the exact Pavlov fixed point at ε = 0.
/// - `zeros`: all entries 0.
pub fn preset(name: &str, m: &PayoffMatrix, gamma: f64) -> Result<QTable> {
    match name {
        PRESET_DEFAULT => Ok(QTable::from_pairs([(6.0, 6.5), (7.0, 7.5), (4.0, 5.0), (4.0, 5.0)])),
        PRESET_SCALED => {
            let v = m.r_dd() / (1.0 - gamma);
            let l = (m.r_dd() + gamma * m.r_cc()) / (1.0 - gamma * gamma);
            let u = m.r_cc() / (1.0 - gamma);
            let off = v - 2.0 * (l - v) / 3.0;
            Ok(QTable::from_pairs([
                (v + 2.0 * (l - v) / 3.0, l),
                (l + (u - l) / 5.0, l + 2.0 * (u - l) / 5.0),
                (off, v),
                (off, v),
            ]))
        }
        PRESET_PAVLOV => {
            let profile = crate::policy::PolicyProfile::named(PolicyName::Pavlov, 0.0)?;
            Ok(crate::equilibria::solve_fixed_point(&profile, m, gamma)?.q_star)
        }
        PRESET_ZEROS => Ok(QTable::zeros()),
        other => Err(domain(format!(
            "unknown preset {other:?}; expected one of {PRESET_DEFAULT}, {PRESET_SCALED}, {PRESET_PAVLOV}, {PRESET_ZEROS}"
        ))),
    }
}

/// Parameters of one learning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub payoff: PayoffMatrix,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub n_iter: u64,
    pub s0: State,
    pub q_init: QInit,
    pub seed: u64,
    pub update_mode: UpdateMode,
    /// Keep a Q-table snapshot every this many steps; `None` picks 1 for runs
    /// of at most 10⁴ steps and 10 otherwise.
    pub snapshot_stride: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            payoff: PayoffMatrix::default(),
            gamma: 0.6,
            alpha: 0.1,
            epsilon: 0.0,
            n_iter: 2000,
            s0: State::DD,
            q_init: QInit::default(),
            seed: 0,
            update_mode: UpdateMode::P1Only,
            snapshot_stride: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(domain(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        check_epsilon(self.epsilon)?;
        if self.snapshot_stride == Some(0) {
            return Err(domain("snapshot_stride must be positive"));
        }
        let q = self.initial_table()?;
        if !q.is_finite() {
            return Err(domain("initial Q-table must be finite"));
        }
        Ok(())
    }

    pub fn initial_table(&self) -> Result<QTable> {
        match &self.q_init {
            QInit::Table(q) => Ok(*q),
            QInit::Preset(name) => preset(name, &self.payoff, self.gamma),
        }
    }

    pub fn stride(&self) -> u64 {
        self.snapshot_stride
            .unwrap_or(if self.n_iter <= 10_000 { 1 } else { 10 })
    }
}

/// What happened in one round. `s` is player 1's state; player 2 saw `s.swap()`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: u64,
    pub s: State,
    pub a1: Action,
    pub a2: Action,
    pub r1: f64,
    pub r2: f64,
    pub explored1: bool,
    pub explored2: bool,
    /// Largest absolute change of any entry in this round.
    pub max_change: f64,
    /// Greedy policy of the post-update table.
    pub policy: PolicyName,
}

impl StepLog {
    pub fn explored(&self) -> bool {
        self.explored1 || self.explored2
    }
}

/// One round of self-play learning from the previous joint action `prev`.
///
/// Player 1 acts at `(a¹_{t−1}, a²_{t−1})`, player 2 at the swapped state, both
/// ε-greedily from `q`; then `q[s_t][a¹_t]` moves toward
/// `r(a¹_t, a²_t) + γ max_a q[(a¹_t, a²_t)][a]`.
pub fn step(
    q: &QTable,
    prev: (Action, Action),
    cfg: &RunConfig,
    rng: &mut RandomStream,
) -> Result<(QTable, (Action, Action), StepLog)> {
    let s1 = next_state(prev.0, prev.1);
    let s2 = s1.swap();
    let d1 = epsilon_greedy_draw(q, s1, cfg.epsilon, rng)?;
    let d2 = epsilon_greedy_draw(q, s2, cfg.epsilon, rng)?;
    let (a1, a2) = (d1.action, d2.action);
    let r1 = cfg.payoff.reward(a1, a2);
    let r2 = cfg.payoff.reward(a2, a1);

    let target1 = r1 + cfg.gamma * q.max(next_state(a1, a2));
    let mut next = *q;
    next.set(s1, a1, q.get(s1, a1) + cfg.alpha * (target1 - q.get(s1, a1)));
    if cfg.update_mode == UpdateMode::BothPerspectives && (s2, a2) != (s1, a1) {
        let target2 = r2 + cfg.gamma * q.max(next_state(a2, a1));
        next.set(s2, a2, q.get(s2, a2) + cfg.alpha * (target2 - q.get(s2, a2)));
    }
    if !next.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite Q-value after update (alpha = {}, gamma = {})",
            cfg.alpha, cfg.gamma
        )));
    }
    let log = StepLog {
        t: 0,
        s: s1,
        a1,
        a2,
        r1,
        r2,
        explored1: d1.explored,
        explored2: d2.explored,
        max_change: next.max_abs_diff(q),
        policy: classify(&next),
    };
    Ok((next, (a1, a2), log))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: u64,
    pub q: QTable,
}

/// Full record of one run. Step `t` (1-based) is `steps[t - 1]`; the table
/// after step `t` is `Q^t`, with `Q^0` the initial table.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub config: RunConfig,
    pub q0: QTable,
    pub initial_policy: PolicyName,
    pub steps: Vec<StepLog>,
    pub snapshots: Vec<Snapshot>,
    pub stride: u64,
    /// First step whose table is lose-shift, for runs starting in always-defect
    /// and before any Pavlov step.
    pub t1: Option<u64>,
    /// First step (0 for the initial table) whose table is Pavlov.
    pub t2: Option<u64>,
    pub final_q: QTable,
    pub final_policy: PolicyName,
    /// Most frequent policy over the last 100 tables.
    pub final_mode_policy: PolicyName,
    /// Lose-shift was reached and always-defect came back afterwards.
    pub oscillation: bool,
}

/// Serializable digest of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_policy: PolicyName,
    pub final_mode_policy: PolicyName,
    pub t1: Option<u64>,
    pub t2: Option<u64>,
    pub oscillation: bool,
    pub exploratory_steps: u64,
    pub final_q: QTable,
    pub seed: u64,
    pub config: RunConfig,
}

impl TrajectoryRecord {
    pub fn n_steps(&self) -> u64 {
        self.steps.len() as u64
    }

    /// Greedy policy of `Q^t`.
    pub fn policy_at(&self, t: u64) -> PolicyName {
        if t == 0 {
            self.initial_policy
        } else {
            self.steps[(t - 1) as usize].policy
        }
    }

    /// `Q^t` if it was snapshotted.
    pub fn q_at(&self, t: u64) -> Option<&QTable> {
        self.snapshots
            .binary_search_by_key(&t, |s| s.t)
            .ok()
            .map(|i| &self.snapshots[i].q)
    }

    /// Every table `Q^0 ..= Q^n`; requires a stride of 1.
    pub fn tables(&self) -> Result<Vec<QTable>> {
        if self.stride != 1 {
            return Err(Error::Precondition(format!(
                "per-step tables need snapshot_stride = 1, run used {}",
                self.stride
            )));
        }
        Ok(self.snapshots.iter().map(|s| s.q).collect())
    }

    /// Rounds in `1..=t` in which at least one player explored.
    pub fn exploratory_steps_until(&self, t: u64) -> u64 {
        self.steps.iter().take(t as usize).filter(|s| s.explored()).count() as u64
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            final_policy: self.final_policy,
            final_mode_policy: self.final_mode_policy,
            t1: self.t1,
            t2: self.t2,
            oscillation: self.oscillation,
            exploratory_steps: self.exploratory_steps_until(self.n_steps()),
            final_q: self.final_q,
            seed: self.config.seed,
            config: self.config.clone(),
        }
    }
}

/// Runs `cfg.n_iter` rounds from `cfg.s0` with the stream seeded by `cfg.seed`.
pub fn run(cfg: &RunConfig) -> Result<TrajectoryRecord> {
    run_with_stream(cfg, RandomStream::new(cfg.seed))
}

/// As [`run`], drawing from an explicitly supplied stream.
pub fn run_with_stream(cfg: &RunConfig, mut rng: RandomStream) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let q0 = cfg.initial_table()?;
    let stride = cfg.stride();
    let initial_policy = classify(&q0);

    let mut q = q0;
    let mut prev = (cfg.s0.own_prev, cfg.s0.opp_prev);
    let mut steps = Vec::with_capacity(cfg.n_iter as usize);
    let mut snapshots = vec![Snapshot { t: 0, q: q0 }];
    for t in 1..=cfg.n_iter {
        let (next, joint, mut log) = step(&q, prev, cfg, &mut rng)?;
        log.t = t;
        q = next;
        prev = joint;
        steps.push(log);
        if t % stride == 0 || t == cfg.n_iter {
            snapshots.push(Snapshot { t, q });
        }
    }

    let policies: Vec<PolicyName> = std::iter::once(initial_policy)
        .chain(steps.iter().map(|s| s.policy))
        .collect();
    let t2 = policies.iter().position(|p| *p == PolicyName::Pavlov).map(|i| i as u64);
    let t1 = if initial_policy == PolicyName::AlwaysDefect {
        let horizon = t2.map_or(policies.len(), |t| t as usize);
        policies[..horizon]
            .iter()
            .position(|p| *p == PolicyName::LoseShift)
            .map(|i| i as u64)
    } else {
        None
    };
    let oscillation = policies
        .iter()
        .position(|p| *p == PolicyName::LoseShift)
        .is_some_and(|i| policies[i..].contains(&PolicyName::AlwaysDefect));
    let final_policy = *policies.last().expect("at least the initial policy");
    let tail = &policies[policies.len().saturating_sub(100)..];
    let final_mode_policy = mode(tail).unwrap_or(final_policy);

    Ok(TrajectoryRecord {
        config: cfg.clone(),
        q0,
        initial_policy,
        steps,
        snapshots,
        stride,
        t1,
        t2,
        final_q: q,
        final_policy,
        final_mode_policy,
        oscillation,
    })
}

/// Most frequent element; ties go to the smallest.
fn mode(xs: &[PolicyName]) -> Option<PolicyName> {
    let mut counts: BTreeMap<PolicyName, usize> = BTreeMap::new();
    for x in xs {
        *counts.entry(*x).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(p, _)| p)
}

/// Monte-Carlo estimate of the probability that a run ends cooperative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoopEstimate {
    pub estimate: f64,
    pub ci95: f64,
    pub n_runs: u64,
    pub oscillation_frac: f64,
    /// Final-policy counts; grim trigger and other profiles appear here.
    pub breakdown: BTreeMap<PolicyName, u64>,
    /// Mean `t2` over runs that reached Pavlov.
    pub mean_t2: Option<f64>,
}

/// Runs `n_runs` trajectories on streams derived from `cfg.seed` by run index
/// and counts those whose final policy is cooperative.
pub fn cooperation_probability(cfg: &RunConfig, n_runs: u64, jobs: Option<usize>) -> Result<CoopEstimate> {
    if n_runs == 0 {
        return Err(domain("n_runs must be at least 1"));
    }
    cfg.validate()?;
    let root = RandomStream::new(cfg.seed);
    let mut lean = cfg.clone();
    lean.snapshot_stride = Some(lean.n_iter.max(1));
    let outcomes: Vec<(PolicyName, bool, Option<u64>)> = in_pool(jobs, || {
        (0..n_runs)
            .into_par_iter()
            .map(|j| {
                let rec = run_with_stream(&lean, root.derive(j))?;
                Ok((rec.final_policy, rec.oscillation, rec.t2))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let n = n_runs as f64;
    let coop = outcomes.iter().filter(|o| is_cooperative(o.0)).count() as f64;
    let osc = outcomes.iter().filter(|o| o.1).count() as f64;
    let mut breakdown = BTreeMap::new();
    for o in &outcomes {
        *breakdown.entry(o.0).or_insert(0) += 1;
    }
    let t2s: Vec<f64> = outcomes.iter().filter_map(|o| o.2).map(|t| t as f64).collect();
    let p = coop / n;
    Ok(CoopEstimate {
        estimate: p,
        ci95: 1.96 * (p * (1.0 - p) / n).sqrt(),
        n_runs,
        oscillation_frac: osc / n,
        breakdown,
        mean_t2: (!t2s.is_empty()).then(|| t2s.iter().sum::<f64>() / t2s.len() as f64),
    })
}

/// Runs `f` on a dedicated pool of `jobs` workers (`None`: one per core).
pub fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Precondition(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Fixed-width float formatting used by every CSV writer: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const TRAJECTORY_HEADER: &str =
    "t,s,a1,a2,r1,r2,q_dd_c,q_dd_d,q_cc_c,q_cc_d,q_cd_c,q_cd_d,q_dc_c,q_dc_d,policy";

/// One row per snapshot. The `t = 0` row holds the initial table and `s0`,
/// with empty action and reward fields.
pub fn write_trajectory_csv<W: Write>(rec: &TrajectoryRecord, mut w: W) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for snap in &rec.snapshots {
        let q: Vec<String> = snap.q.entries().iter().map(|v| fmt_f64(*v)).collect();
        let q = q.join(",");
        if snap.t == 0 {
            writeln!(w, "0,{},,,,,{},{}", rec.config.s0, q, rec.initial_policy)?;
        } else {
            let s = &rec.steps[(snap.t - 1) as usize];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.t,
                s.s,
                s.a1,
                s.a2,
                fmt_f64(s.r1),
                fmt_f64(s.r2),
                q,
                s.policy
            )?;
        }
    }
    Ok(())
}

pub const GAP_HEADER: &str = "t,gap_dd,gap_cc,gap_cd,gap_dc";

/// `Q[s][D] − Q[s][C]` per state for every snapshot.
pub fn write_gap_csv<W: Write>(rec: &TrajectoryRecord, mut w: W) -> io::Result<()> {
    writeln!(w, "{GAP_HEADER}")?;
    for snap in &rec.snapshots {
        let gaps: Vec<String> = State::ALL.iter().map(|s| fmt_f64(snap.q.defect_gap(*s))).collect();
        writeln!(w, "{},{}", snap.t, gaps.join(","))?;
    }
    Ok(())
}
