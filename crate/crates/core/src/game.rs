//! Actions, one-step-memory states and the symmetric 2×2 payoff structure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};

/// A stage-game move. The derived order puts `D` before `C`; ties are broken
/// toward `D` everywhere in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    D,
    C,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::D, Action::C];

    /// Index used by [`crate::QTable`] storage: D = 0, C = 1.
    pub fn index(self) -> usize {
        match self {
            Action::D => 0,
            Action::C => 1,
        }
    }

    pub fn other(self) -> Action {
        match self {
            Action::D => Action::C,
            Action::C => Action::D,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Action::D => 'D',
            Action::C => 'C',
        }
    }

    fn from_char(c: char) -> Option<Action> {
        match c {
            'C' => Some(Action::C),
            'D' => Some(Action::D),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (chars.next().and_then(Action::from_char), chars.next()) {
            (Some(a), None) => Ok(a),
            _ => Err(domain(format!("unknown action {s:?}, expected \"C\" or \"D\""))),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The joint action of the previous round, seen from the acting player:
/// own previous action first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct State {
    pub own_prev: Action,
    pub opp_prev: Action,
}

impl State {
    pub const DD: State = State::new(Action::D, Action::D);
    pub const CC: State = State::new(Action::C, Action::C);
    pub const CD: State = State::new(Action::C, Action::D);
    pub const DC: State = State::new(Action::D, Action::C);

    /// Canonical iteration order, also the storage order of [`crate::QTable`].
    pub const ALL: [State; 4] = [State::DD, State::CC, State::CD, State::DC];

    pub const fn new(own_prev: Action, opp_prev: Action) -> State {
        State { own_prev, opp_prev }
    }

    /// The same joint action viewed by the other player.
    pub fn swap(self) -> State {
        State::new(self.opp_prev, self.own_prev)
    }

    pub fn index(self) -> usize {
        match (self.own_prev, self.opp_prev) {
            (Action::D, Action::D) => 0,
            (Action::C, Action::C) => 1,
            (Action::C, Action::D) => 2,
            (Action::D, Action::C) => 3,
        }
    }

    pub fn from_index(i: usize) -> State {
        State::ALL[i]
    }

    /// Lower-case two-letter label, e.g. `dd`; used for CSV column names.
    pub fn label_lower(self) -> String {
        self.to_string().to_lowercase()
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.own_prev, self.opp_prev)
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().collect();
        match chars.as_slice() {
            [a, b] => match (Action::from_char(*a), Action::from_char(*b)) {
                (Some(a), Some(b)) => Ok(State::new(a, b)),
                _ => Err(domain(format!("unknown state {s:?}"))),
            },
            _ => Err(domain(format!("unknown state {s:?}, expected one of CC, CD, DC, DD"))),
        }
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// State reached after the joint action `(a1, a2)`, from player 1's side.
/// Player 2 perceives `next_state(a1, a2).swap()`.
pub fn next_state(a1: Action, a2: Action) -> State {
    State::new(a1, a2)
}

/// Rewards of a symmetric prisoner's dilemma. `r_xy` is what a player earns
/// playing `x` against `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PayoffMatrix {
    r_cc: f64,
    r_cd: f64,
    r_dc: f64,
    r_dd: f64,
    g: Option<f64>,
}

impl PayoffMatrix {
    /// Builds a matrix from explicit rewards, rejecting anything that is not a
    /// prisoner's dilemma (`r_dc > r_cc > r_dd > r_cd`, `2 r_cc > r_cd + r_dc`).
    pub fn new(r_cc: f64, r_cd: f64, r_dc: f64, r_dd: f64) -> Result<PayoffMatrix> {
        let m = PayoffMatrix {
            r_cc,
            r_cd,
            r_dc,
            r_dd,
            g: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// The one-parameter family `r_cc = 2g, r_cd = g, r_dc = 2 + g, r_dd = 2`.
    pub fn from_g(g: f64) -> Result<PayoffMatrix> {
        if !g.is_finite() {
            return Err(domain(format!("g must be finite, got {g}")));
        }
        if g <= 1.0 {
            return Err(domain(format!("g must be > 1 (lower bound violated), got {g}")));
        }
        if g >= 2.0 {
            return Err(domain(format!("g must be < 2 (upper bound violated), got {g}")));
        }
        let m = PayoffMatrix {
            r_cc: 2.0 * g,
            r_cd: g,
            r_dc: 2.0 + g,
            r_dd: 2.0,
            g: Some(g),
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.r_cc, self.r_cd, self.r_dc, self.r_dd];
        if all.iter().any(|r| !r.is_finite()) {
            return Err(domain("rewards must be finite"));
        }
        if !(self.r_dc > self.r_cc && self.r_cc > self.r_dd && self.r_dd > self.r_cd) {
            return Err(domain(format!(
                "dilemma ordering r_dc > r_cc > r_dd > r_cd violated by ({}, {}, {}, {})",
                self.r_dc, self.r_cc, self.r_dd, self.r_cd
            )));
        }
        if 2.0 * self.r_cc <= self.r_cd + self.r_dc {
            return Err(domain(format!(
                "efficiency condition 2 r_cc > r_cd + r_dc violated: {} <= {}",
                2.0 * self.r_cc,
                self.r_cd + self.r_dc
            )));
        }
        Ok(())
    }

    pub fn r_cc(&self) -> f64 {
        self.r_cc
    }
    pub fn r_cd(&self) -> f64 {
        self.r_cd
    }
    pub fn r_dc(&self) -> f64 {
        self.r_dc
    }
    pub fn r_dd(&self) -> f64 {
        self.r_dd
    }
    pub fn g(&self) -> Option<f64> {
        self.g
    }

    /// Reward of the player choosing `a1` against `a2`. Player 2's reward for
    /// the same round is `reward(a2, a1)`.
    pub fn reward(&self, a1: Action, a2: Action) -> f64 {
        match (a1, a2) {
            (Action::C, Action::C) => self.r_cc,
            (Action::C, Action::D) => self.r_cd,
            (Action::D, Action::C) => self.r_dc,
            (Action::D, Action::D) => self.r_dd,
        }
    }

    pub fn r_max(&self) -> f64 {
        self.r_dc
    }

    pub fn r_min(&self) -> f64 {
        self.r_cd
    }

    /// Spread between the largest and smallest stage reward; exactly 2 for
    /// g-parameterised matrices.
    pub fn delta_r(&self) -> f64 {
        match self.g {
            Some(_) => 2.0,
            None => self.r_dc - self.r_cd,
        }
    }
}

impl Default for PayoffMatrix {
    fn default() -> Self {
        PayoffMatrix::from_g(1.8).expect("g = 1.8 is a valid parameter")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum PayoffRepr {
    G { g: f64 },
    Explicit { r_cc: f64, r_cd: f64, r_dc: f64, r_dd: f64 },
}

impl Serialize for PayoffMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.g {
            Some(g) => PayoffRepr::G { g },
            None => PayoffRepr::Explicit {
                r_cc: self.r_cc,
                r_cd: self.r_cd,
                r_dc: self.r_dc,
                r_dd: self.r_dd,
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PayoffMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PayoffRepr::deserialize(d)? {
            PayoffRepr::G { g } => PayoffMatrix::from_g(g),
            PayoffRepr::Explicit { r_cc, r_cd, r_dc, r_dd } => PayoffMatrix::new(r_cc, r_cd, r_dc, r_dd),
        }
        .map_err(serde::de::Error::custom)
    }
}
