//! Monte-Carlo grids over (α, ε, g, γ), the incentive-to-cooperate sweep and
//! averaged Q-gap series across seeds.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{self, fmt_f64, in_pool, run_with_stream, CoopEstimate, RunConfig};
use crate::error::{domain, Result};
use crate::game::{PayoffMatrix, State};
use crate::policy::PolicyName;
use crate::rng::RandomStream;

/// Grid definition. Every cell reuses `base.seed`, so cells share their random
/// streams run by run and a one-cell grid reproduces
/// [`engine::cooperation_probability`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub gs: Vec<f64>,
    pub gammas: Vec<f64>,
    pub n_runs: u64,
    pub n_iter: u64,
    pub base: RunConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            alphas: vec![0.01, 0.05, 0.1, 0.15, 0.2],
            epsilons: vec![0.01, 0.05, 0.1, 0.15, 0.2],
            gs: vec![1.8],
            gammas: vec![0.6],
            n_runs: 100,
            n_iter: 2000,
            base: RunConfig::default(),
        }
    }
}

/// Statistics of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub alpha: f64,
    pub epsilon: f64,
    pub g: f64,
    pub gamma: f64,
    pub n_runs: u64,
    pub n_iters: u64,
    pub coop_prob: f64,
    pub ci95: f64,
    pub oscillation_frac: f64,
    pub breakdown: BTreeMap<PolicyName, u64>,
    pub mean_t2: Option<f64>,
}

impl SweepResult {
    fn from_estimate(cfg: &RunConfig, g: f64, est: CoopEstimate) -> SweepResult {
        SweepResult {
            alpha: cfg.alpha,
            epsilon: cfg.epsilon,
            g,
            gamma: cfg.gamma,
            n_runs: est.n_runs,
            n_iters: cfg.n_iter,
            coop_prob: est.estimate,
            ci95: est.ci95,
            oscillation_frac: est.oscillation_frac,
            breakdown: est.breakdown,
            mean_t2: est.mean_t2,
        }
    }
}

fn cell_configs(spec: &SweepSpec) -> Result<Vec<(RunConfig, f64)>> {
    if spec.alphas.is_empty() || spec.epsilons.is_empty() || spec.gs.is_empty() || spec.gammas.is_empty() {
        return Err(domain("every sweep axis needs at least one value"));
    }
    let mut out = Vec::new();
    for &g in &spec.gs {
        for &gamma in &spec.gammas {
            for &alpha in &spec.alphas {
                for &epsilon in &spec.epsilons {
                    let mut cfg = spec.base.clone();
                    cfg.payoff = PayoffMatrix::from_g(g)?;
                    cfg.gamma = gamma;
                    cfg.alpha = alpha;
                    cfg.epsilon = epsilon;
                    cfg.n_iter = spec.n_iter;
                    cfg.validate()?;
                    out.push((cfg, g));
                }
            }
        }
    }
    Ok(out)
}

/// Cooperation probability for every cell, in axis order g, γ, α, ε.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<Vec<SweepResult>> {
    let cells = cell_configs(spec)?;
    cells
        .iter()
        .map(|(cfg, g)| {
            let est = engine::cooperation_probability(cfg, spec.n_runs, jobs)?;
            Ok(SweepResult::from_estimate(cfg, *g, est))
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "alpha,epsilon,g,gamma,n_runs,n_iters,coop_prob,ci95,oscillation_frac";

pub fn write_sweep_csv<W: Write>(rows: &[SweepResult], mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.alpha),
            fmt_f64(r.epsilon),
            fmt_f64(r.g),
            fmt_f64(r.gamma),
            r.n_runs,
            r.n_iters,
            fmt_f64(r.coop_prob),
            fmt_f64(r.ci95),
            fmt_f64(r.oscillation_frac)
        )?;
    }
    Ok(())
}

/// Phase-change times of the greedy dynamics for one value of g.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GSweepRow {
    pub g: f64,
    pub t1: Option<u64>,
    pub t2: Option<u64>,
    pub final_policy: PolicyName,
}

/// Runs `base` with ε = 0 for each g. Use a parameter-aware initial table
/// (e.g. `optimistic-scaled`) so every g starts inside the brackets.
pub fn g_sweep(gs: &[f64], base: &RunConfig) -> Result<Vec<GSweepRow>> {
    gs.iter()
        .map(|&g| {
            let mut cfg = base.clone();
            cfg.payoff = PayoffMatrix::from_g(g)?;
            cfg.epsilon = 0.0;
            cfg.snapshot_stride = Some(cfg.n_iter.max(1));
            let rec = engine::run(&cfg)?;
            Ok(GSweepRow {
                g,
                t1: rec.t1,
                t2: rec.t2,
                final_policy: rec.final_policy,
            })
        })
        .collect()
}

pub const G_SWEEP_HEADER: &str = "g,t1,t2,final_policy";

pub fn write_g_sweep_csv<W: Write>(rows: &[GSweepRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{G_SWEEP_HEADER}")?;
    let opt = |t: Option<u64>| t.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(w, "{},{},{},{}", fmt_f64(r.g), opt(r.t1), opt(r.t2), r.final_policy)?;
    }
    Ok(())
}

/// Mean and standard deviation across runs of `Q[s][D] − Q[s][C]`, per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub t: u64,
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

/// Averages the per-state Q-gap series of `n_runs` runs on streams derived
/// from `cfg.seed`. Uses the run's snapshot stride.
pub fn gap_statistics(cfg: &RunConfig, n_runs: u64, jobs: Option<usize>) -> Result<Vec<GapStats>> {
    if n_runs == 0 {
        return Err(domain("n_runs must be at least 1"));
    }
    let root = RandomStream::new(cfg.seed);
    let series: Vec<Vec<(u64, [f64; 4])>> = in_pool(jobs, || {
        (0..n_runs)
            .into_par_iter()
            .map(|j| {
                let rec = run_with_stream(cfg, root.derive(j))?;
                Ok(rec
                    .snapshots
                    .iter()
                    .map(|s| (s.t, State::ALL.map(|st| s.q.defect_gap(st))))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let n = n_runs as f64;
    let len = series[0].len();
    Ok((0..len)
        .map(|i| {
            let t = series[0][i].0;
            let mut mean = [0.0; 4];
            let mut sq = [0.0; 4];
            for run in &series {
                for s in 0..4 {
                    mean[s] += run[i].1[s] / n;
                }
            }
            for run in &series {
                for s in 0..4 {
                    sq[s] += (run[i].1[s] - mean[s]).powi(2) / n;
                }
            }
            GapStats {
                t,
                mean,
                std: sq.map(f64::sqrt),
            }
        })
        .collect())
}

pub const GAP_STATS_HEADER: &str =
    "t,mean_gap_dd,mean_gap_cc,mean_gap_cd,mean_gap_dc,std_gap_dd,std_gap_cc,std_gap_cd,std_gap_dc";

pub fn write_gap_stats_csv<W: Write>(rows: &[GapStats], mut w: W) -> io::Result<()> {
    writeln!(w, "{GAP_STATS_HEADER}")?;
    for r in rows {
        let vals: Vec<String> = r.mean.iter().chain(&r.std).map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{},{}", r.t, vals.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{QInit, PRESET_SCALED};

    #[test]
    fn single_cell_matches_cooperation_probability() {
        let mut spec = SweepSpec {
            alphas: vec![0.1],
            epsilons: vec![0.05],
            n_runs: 20,
            n_iter: 500,
            ..SweepSpec::default()
        };
        spec.base.seed = 3;
        let rows = run_sweep(&spec, Some(2)).unwrap();
        assert_eq!(rows.len(), 1);
        let mut cfg = spec.base.clone();
        cfg.alpha = 0.1;
        cfg.epsilon = 0.05;
        cfg.n_iter = 500;
        let est = engine::cooperation_probability(&cfg, 20, Some(3)).unwrap();
        assert_eq!(rows[0].coop_prob, est.estimate);
        assert_eq!(rows[0].breakdown, est.breakdown);
    }

    #[test]
    fn parallel_equals_serial() {
        let spec = SweepSpec {
            alphas: vec![0.1, 0.2],
            epsilons: vec![0.05, 0.1],
            n_runs: 16,
            n_iter: 300,
            ..SweepSpec::default()
        };
        let a = run_sweep(&spec, Some(1)).unwrap();
        let b = run_sweep(&spec, Some(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn faster_cooperation_with_larger_g() {
        let mut base = RunConfig::default();
        base.q_init = QInit::Preset(PRESET_SCALED.into());
        let rows = g_sweep(&[1.75, 1.8, 1.85, 1.9], &base).unwrap();
        let t2: Vec<u64> = rows.iter().map(|r| r.t2.unwrap()).collect();
        assert!(t2.windows(2).all(|w| w[1] <= w[0]), "{t2:?}");
    }

    #[test]
    fn empty_axis_rejected() {
        let spec = SweepSpec {
            gs: vec![],
            ..SweepSpec::default()
        };
        assert!(run_sweep(&spec, None).is_err());
    }

    #[test]
    fn gap_statistics_deterministic_case_has_zero_spread() {
        let mut cfg = RunConfig::default();
        cfg.n_iter = 200;
        let stats = gap_statistics(&cfg, 5, Some(2)).unwrap();
        assert_eq!(stats.len(), 201);
        assert!(stats.iter().all(|s| s.std.iter().all(|v| *v == 0.0)));
    }
}
