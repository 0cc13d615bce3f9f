//! The shared Q-table, ε-greedy action selection and classification of greedy
//! policies into the named memory-one strategies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::game::{Action, State};
use crate::rng::RandomStream;

/// Eight action values, one per (state, action) pair.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct QTable {
    q: [[f64; 2]; 4],
}

impl QTable {
    pub fn zeros() -> QTable {
        QTable::default()
    }

    /// Builds a table from `(q_c, q_d)` pairs in state order DD, CC, CD, DC.
    pub fn from_pairs(pairs: [(f64, f64); 4]) -> QTable {
        let mut t = QTable::zeros();
        for (s, (qc, qd)) in State::ALL.into_iter().zip(pairs) {
            t.set(s, Action::C, qc);
            t.set(s, Action::D, qd);
        }
        t
    }

    /// Table whose greedy policy is `profile`: 1 on the greedy action, 0 elsewhere.
    pub fn indicator(greedy: &[Action; 4]) -> QTable {
        let mut t = QTable::zeros();
        for s in State::ALL {
            t.set(s, greedy[s.index()], 1.0);
        }
        t
    }

    pub fn get(&self, s: State, a: Action) -> f64 {
        self.q[s.index()][a.index()]
    }

    pub fn set(&mut self, s: State, a: Action, v: f64) {
        self.q[s.index()][a.index()] = v;
    }

    pub fn max(&self, s: State) -> f64 {
        let [d, c] = self.q[s.index()];
        d.max(c)
    }

    /// Greedy action in `s`; exact ties go to D.
    pub fn greedy(&self, s: State) -> Action {
        if self.get(s, Action::C) > self.get(s, Action::D) {
            Action::C
        } else {
            Action::D
        }
    }

    /// `Q[s][D] - Q[s][C]`, the quantity plotted per state in the trajectory figures.
    pub fn defect_gap(&self, s: State) -> f64 {
        self.get(s, Action::D) - self.get(s, Action::C)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().flatten().all(|v| v.is_finite())
    }

    /// Entries in CSV order: dd_c, dd_d, cc_c, cc_d, cd_c, cd_d, dc_c, dc_d.
    pub fn entries(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (i, s) in State::ALL.into_iter().enumerate() {
            out[2 * i] = self.get(s, Action::C);
            out[2 * i + 1] = self.get(s, Action::D);
        }
        out
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn greedy_profile(&self) -> [Action; 4] {
        State::ALL.map(|s| self.greedy(s))
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "D")]
    d: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QTableRepr {
    #[serde(rename = "DD")]
    dd: EntryRepr,
    #[serde(rename = "CC")]
    cc: EntryRepr,
    #[serde(rename = "CD")]
    cd: EntryRepr,
    #[serde(rename = "DC")]
    dc: EntryRepr,
}

impl Serialize for QTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let e = |st: State| EntryRepr {
            c: self.get(st, Action::C),
            d: self.get(st, Action::D),
        };
        QTableRepr {
            dd: e(State::DD),
            cc: e(State::CC),
            cd: e(State::CD),
            dc: e(State::DC),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = QTableRepr::deserialize(d)?;
        let t = QTable::from_pairs([(r.dd.c, r.dd.d), (r.cc.c, r.cc.d), (r.cd.c, r.cd.d), (r.dc.c, r.dc.d)]);
        if !t.is_finite() {
            return Err(serde::de::Error::custom("Q-table entries must be finite"));
        }
        Ok(t)
    }
}

/// Named memory-one strategies. `Other` carries the 4-bit cooperate mask over
/// state order DD, CC, CD, DC (most significant bit first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyName {
    AlwaysDefect,
    LoseShift,
    GrimTrigger,
    Pavlov,
    Other(u8),
}

impl PolicyName {
    pub fn from_profile(greedy: &[Action; 4]) -> PolicyName {
        match mask_of(greedy) {
            0b0000 => PolicyName::AlwaysDefect,
            0b1000 => PolicyName::LoseShift,
            0b0100 => PolicyName::GrimTrigger,
            0b1100 => PolicyName::Pavlov,
            m => PolicyName::Other(m),
        }
    }

    /// The greedy action per state, in order DD, CC, CD, DC.
    pub fn profile(self) -> [Action; 4] {
        let m = match self {
            PolicyName::AlwaysDefect => 0b0000,
            PolicyName::LoseShift => 0b1000,
            PolicyName::GrimTrigger => 0b0100,
            PolicyName::Pavlov => 0b1100,
            PolicyName::Other(m) => m,
        };
        profile_of_mask(m)
    }

    pub fn mask(self) -> u8 {
        mask_of(&self.profile())
    }
}

fn mask_of(greedy: &[Action; 4]) -> u8 {
    greedy
        .iter()
        .fold(0u8, |acc, a| (acc << 1) | u8::from(*a == Action::C))
}

fn profile_of_mask(m: u8) -> [Action; 4] {
    std::array::from_fn(|i| if m >> (3 - i) & 1 == 1 { Action::C } else { Action::D })
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyName::AlwaysDefect => write!(f, "always_defect"),
            PolicyName::LoseShift => write!(f, "lose_shift"),
            PolicyName::GrimTrigger => write!(f, "grim_trigger"),
            PolicyName::Pavlov => write!(f, "pavlov"),
            PolicyName::Other(m) => write!(f, "other:{m:04b}"),
        }
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always_defect" => Ok(PolicyName::AlwaysDefect),
            "lose_shift" => Ok(PolicyName::LoseShift),
            "grim_trigger" => Ok(PolicyName::GrimTrigger),
            "pavlov" => Ok(PolicyName::Pavlov),
            // not one of the four named rows but handy on the command line
            "tit_for_tat" => Ok(PolicyName::from_profile(&TIT_FOR_TAT)),
            other => {
                let bits = other
                    .strip_prefix("other:")
                    .filter(|b| b.len() == 4)
                    .ok_or_else(|| domain(format!("unknown policy name {s:?}")))?;
                let m = u8::from_str_radix(bits, 2).map_err(|_| domain(format!("bad policy mask {bits:?}")))?;
                Ok(PolicyName::from_profile(&profile_of_mask(m)))
            }
        }
    }
}

impl Serialize for PolicyName {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PolicyName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tit-for-tat copies the opponent's previous move.
pub const TIT_FOR_TAT: [Action; 4] = [Action::D, Action::C, Action::D, Action::C];

/// A deterministic memory-one policy played ε-greedily.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyProfile {
    pub greedy_action: [Action; 4],
    pub epsilon: f64,
}

impl PolicyProfile {
    pub fn new(greedy_action: [Action; 4], epsilon: f64) -> Result<PolicyProfile> {
        check_epsilon(epsilon)?;
        Ok(PolicyProfile { greedy_action, epsilon })
    }

    pub fn named(name: PolicyName, epsilon: f64) -> Result<PolicyProfile> {
        PolicyProfile::new(name.profile(), epsilon)
    }

    /// All 16 deterministic profiles, in mask order 0000..1111.
    pub fn all_deterministic(epsilon: f64) -> Result<Vec<PolicyProfile>> {
        (0u8..16).map(|m| PolicyProfile::new(profile_of_mask(m), epsilon)).collect()
    }

    pub fn action(&self, s: State) -> Action {
        self.greedy_action[s.index()]
    }

    /// Probability of playing `a` in `s`.
    pub fn prob(&self, s: State, a: Action) -> f64 {
        if self.action(s) == a {
            1.0 - self.epsilon
        } else {
            self.epsilon
        }
    }

    pub fn name(&self) -> PolicyName {
        PolicyName::from_profile(&self.greedy_action)
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(domain(format!("epsilon must lie in [0, 1/2], got {epsilon}")));
    }
    Ok(())
}

/// One ε-greedy draw: the chosen action and whether the exploratory branch fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub action: Action,
    pub explored: bool,
}

/// Samples an action: argmax with probability `1 - ε`, the other action with
/// probability `ε`. Always consumes exactly one uniform from `rng`, so runs
/// with different ε stay aligned draw-for-draw.
pub fn epsilon_greedy_draw(q: &QTable, s: State, epsilon: f64, rng: &mut RandomStream) -> Result<Draw> {
    check_epsilon(epsilon)?;
    let greedy = q.greedy(s);
    let explored = rng.uniform() < epsilon;
    let action = if explored { greedy.other() } else { greedy };
    Ok(Draw { action, explored })
}

pub fn epsilon_greedy(q: &QTable, s: State, epsilon: f64, rng: &mut RandomStream) -> Result<Action> {
    epsilon_greedy_draw(q, s, epsilon, rng).map(|d| d.action)
}

/// Name of the greedy policy of `q`.
pub fn classify(q: &QTable) -> PolicyName {
    PolicyName::from_profile(&q.greedy_profile())
}

/// The two outcomes counted as cooperation: Pavlov and lose-shift.
pub fn is_cooperative(name: PolicyName) -> bool {
    matches!(name, PolicyName::Pavlov | PolicyName::LoseShift)
}
