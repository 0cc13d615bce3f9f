//! Experiment specifications: one JSON document per experiment, tagged by
//! `kind`, that pins every parameter together with the seed.

use anyhow::{bail, Context, Result};
use ipd_core::engine::{QInit, PRESET_DEFAULT, PRESET_SCALED};
use ipd_core::sweep::SweepSpec;
use ipd_core::{PayoffMatrix, RunConfig};
use ipd_dqn::DqnConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Trajectory,
    Sweep,
    Fixedpoint,
    Verify,
    Rate,
    Dqn,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Trajectory => "trajectory",
            Kind::Sweep => "sweep",
            Kind::Fixedpoint => "fixedpoint",
            Kind::Verify => "verify",
            Kind::Rate => "rate",
            Kind::Dqn => "dqn",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Trajectory(TrajectorySpec),
    Sweep(SweepCommandSpec),
    Fixedpoint(FixedPointSpec),
    Verify(VerifySpec),
    Rate(RateSpec),
    Dqn(DqnSpec),
}

/// One run, plus optional per-step gap statistics over a batch of seeds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    pub config: RunConfig,
    pub batch_runs: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GSweepSpec {
    pub gs: Vec<f64>,
    pub base: RunConfig,
}

impl Default for GSweepSpec {
    fn default() -> Self {
        GSweepSpec {
            gs: vec![1.75, 1.8, 1.85, 1.9],
            base: RunConfig {
                q_init: QInit::Preset(PRESET_SCALED.into()),
                ..RunConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepCommandSpec {
    pub grid: SweepSpec,
    pub g_sweep: Option<GSweepSpec>,
}

impl Default for SweepCommandSpec {
    fn default() -> Self {
        SweepCommandSpec {
            grid: SweepSpec::default(),
            g_sweep: Some(GSweepSpec::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointSpec {
    pub payoff: PayoffMatrix,
    pub gamma: f64,
    pub epsilons: Vec<f64>,
    /// Step size for the lose-shift eigen-analysis.
    pub alpha: f64,
}

impl Default for FixedPointSpec {
    fn default() -> Self {
        FixedPointSpec {
            payoff: PayoffMatrix::default(),
            gamma: 0.6,
            epsilons: vec![0.0, 0.01, 0.05, 0.1, 0.2],
            alpha: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateSpec {
    pub alphas: Vec<f64>,
    pub base: RunConfig,
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec {
            alphas: vec![0.2, 0.1, 0.05, 0.02, 0.01, 0.005],
            base: RunConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnSpec {
    pub config: DqnConfig,
    /// Replicates use seeds `config.seed, config.seed + 1, ...`.
    pub n_seeds: u64,
}

impl Default for DqnSpec {
    fn default() -> Self {
        DqnSpec {
            config: DqnConfig::default(),
            n_seeds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySpec {
    pub payoff: PayoffMatrix,
    pub gamma: f64,
    /// Step size of the greedy-dynamics checks.
    pub alpha: f64,
    pub q_init: QInit,
    pub seed: u64,
    pub n_runs: u64,
    pub n_iter: u64,
    /// Exploration rate of the unconditional step-size check.
    pub step_check_epsilon: f64,
    pub conditional_alpha: f64,
    pub conditional_epsilon: f64,
    pub conditional_pass_fraction: f64,
    pub rate_alphas: Vec<f64>,
    pub event_epsilons: Vec<f64>,
    pub event_max_horizon: u64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            payoff: PayoffMatrix::default(),
            gamma: 0.6,
            alpha: 0.1,
            q_init: QInit::Preset(PRESET_DEFAULT.into()),
            seed: 0,
            n_runs: 100,
            n_iter: 2000,
            step_check_epsilon: 0.1,
            conditional_alpha: 0.01,
            conditional_epsilon: 0.01,
            conditional_pass_fraction: 0.95,
            rate_alphas: vec![0.2, 0.1, 0.05, 0.02],
            event_epsilons: vec![0.01, 0.05, 0.1, 0.25, 0.5],
            event_max_horizon: 30,
        }
    }
}

impl ExperimentSpec {
    pub fn default_for(kind: Kind) -> ExperimentSpec {
        match kind {
            Kind::Trajectory => ExperimentSpec::Trajectory(TrajectorySpec::default()),
            Kind::Sweep => ExperimentSpec::Sweep(SweepCommandSpec::default()),
            Kind::Fixedpoint => ExperimentSpec::Fixedpoint(FixedPointSpec::default()),
            Kind::Verify => ExperimentSpec::Verify(VerifySpec::default()),
            Kind::Rate => ExperimentSpec::Rate(RateSpec::default()),
            Kind::Dqn => ExperimentSpec::Dqn(DqnSpec::default()),
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            ExperimentSpec::Trajectory(_) => Kind::Trajectory,
            ExperimentSpec::Sweep(_) => Kind::Sweep,
            ExperimentSpec::Fixedpoint(_) => Kind::Fixedpoint,
            ExperimentSpec::Verify(_) => Kind::Verify,
            ExperimentSpec::Rate(_) => Kind::Rate,
            ExperimentSpec::Dqn(_) => Kind::Dqn,
        }
    }

    /// Parses a spec document. A missing `kind` is filled in from `expected`;
    /// a different one is rejected.
    pub fn from_json(text: &str, expected: Kind) -> Result<ExperimentSpec> {
        let mut value: serde_json::Value = serde_json::from_str(text).context("spec is not valid JSON")?;
        let obj = value
            .as_object_mut()
            .context("spec must be a JSON object")?;
        match obj.get("kind").and_then(|k| k.as_str()) {
            None => {
                obj.insert("kind".into(), expected.as_str().into());
            }
            Some(k) if k == expected.as_str() => {}
            Some(k) => bail!("spec kind {k:?} does not match subcommand {:?}", expected.as_str()),
        }
        let spec: ExperimentSpec = serde_json::from_value(value).context("invalid spec")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentSpec::Trajectory(s) => s.config.validate()?,
            ExperimentSpec::Sweep(s) => {
                s.grid.base.validate()?;
                if let Some(g) = &s.g_sweep {
                    g.base.validate()?;
                }
            }
            ExperimentSpec::Fixedpoint(s) => {
                if !(s.gamma > 0.0 && s.gamma < 1.0) {
                    bail!("gamma must lie in (0, 1), got {}", s.gamma);
                }
            }
            ExperimentSpec::Verify(s) => {
                if !(s.gamma > 0.0 && s.gamma < 1.0) {
                    bail!("gamma must lie in (0, 1), got {}", s.gamma);
                }
                if s.n_runs == 0 {
                    bail!("n_runs must be positive");
                }
            }
            ExperimentSpec::Rate(s) => s.base.validate()?,
            ExperimentSpec::Dqn(s) => {
                s.config.validate()?;
                if s.n_seeds == 0 {
                    bail!("n_seeds must be positive");
                }
            }
        }
        Ok(())
    }

    /// Replaces every seed in the spec.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentSpec::Trajectory(s) => s.config.seed = seed,
            ExperimentSpec::Sweep(s) => {
                s.grid.base.seed = seed;
                if let Some(g) = &mut s.g_sweep {
                    g.base.seed = seed;
                }
            }
            ExperimentSpec::Fixedpoint(_) => {}
            ExperimentSpec::Verify(s) => s.seed = seed,
            ExperimentSpec::Rate(s) => s.base.seed = seed,
            ExperimentSpec::Dqn(s) => s.config.seed = seed,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("specs serialize");
        text.push('\n');
        text
    }
}
