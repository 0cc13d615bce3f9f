//! Runs one experiment spec and writes its data files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ipd_core::engine::{self, cooperation_probability, fmt_f64, in_pool, write_gap_csv, write_trajectory_csv};
use ipd_core::equilibria::{
    pavlov_epsilon_threshold, pavlov_gamma_threshold, phase2_eigen, prop1_closed_form, prop2_closed_form,
    profile_sweep, EigenReport, PavlovClosedForm, ProfileReport,
};
use ipd_core::sweep::{gap_statistics, g_sweep, run_sweep, write_g_sweep_csv, write_gap_stats_csv, write_sweep_csv};
use ipd_core::theory::rate_scaling;
use ipd_core::{PayoffMatrix, QTable};
use ipd_dqn::{selfplay_train, write_log_csv, DqnConfig, TrainReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spec::{DqnSpec, ExperimentSpec, FixedPointSpec, RateSpec, SweepCommandSpec, TrajectorySpec, VerifySpec};
use crate::verify::{verify, VerifyReport};

/// Files written by one command and whether its checks passed.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub success: bool,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Writer<'a>> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Writer { dir, files: Vec::new() })
    }

    fn file(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).context("serialising output")?;
        text.push('\n');
        self.file(name, |w| w.write_all(text.as_bytes()))
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        self.file(name, |w| w.write_all(text.as_bytes()))
    }
}

/// Writes `spec.json` (the resolved spec) and the command's outputs into `out`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path, jobs: Option<usize>) -> Result<Outcome> {
    spec.validate()?;
    let mut w = Writer::new(out)?;
    w.text("spec.json", &spec.to_json())?;
    let success = match spec {
        ExperimentSpec::Trajectory(s) => trajectory(s, jobs, &mut w)?,
        ExperimentSpec::Sweep(s) => sweep(s, jobs, &mut w)?,
        ExperimentSpec::Fixedpoint(s) => fixedpoint(s, &mut w)?,
        ExperimentSpec::Verify(s) => verify_cmd(s, jobs, &mut w)?,
        ExperimentSpec::Rate(s) => rate(s, &mut w)?,
        ExperimentSpec::Dqn(s) => dqn(s, jobs, &mut w)?,
    };
    Ok(Outcome {
        files: w.files,
        success,
    })
}

fn trajectory(spec: &TrajectorySpec, jobs: Option<usize>, w: &mut Writer) -> Result<bool> {
    let rec = engine::run(&spec.config)?;
    w.file("trajectory.csv", |f| write_trajectory_csv(&rec, f))?;
    w.file("gaps.csv", |f| write_gap_csv(&rec, f))?;
    w.json("summary.json", &rec.summary())?;
    if let Some(n) = spec.batch_runs {
        let stats = gap_statistics(&spec.config, n, jobs)?;
        w.file("gap_stats.csv", |f| write_gap_stats_csv(&stats, f))?;
        w.json("batch_summary.json", &cooperation_probability(&spec.config, n, jobs)?)?;
    }
    Ok(true)
}

fn sweep(spec: &SweepCommandSpec, jobs: Option<usize>, w: &mut Writer) -> Result<bool> {
    let rows = run_sweep(&spec.grid, jobs)?;
    w.file("sweep.csv", |f| write_sweep_csv(&rows, f))?;
    w.json("sweep.json", &rows)?;
    if let Some(g) = &spec.g_sweep {
        let rows = g_sweep(&g.gs, &g.base)?;
        w.file("g_sweep.csv", |f| write_g_sweep_csv(&rows, f))?;
    }
    Ok(true)
}

#[derive(Serialize, Deserialize)]
struct EpsilonBlock {
    epsilon: f64,
    always_defect_closed_form: QTable,
    pavlov_closed_form: PavlovClosedForm,
    profiles: Vec<ProfileReport>,
}

#[derive(Serialize, Deserialize)]
struct FixedPointReport {
    payoff: PayoffMatrix,
    gamma: f64,
    pavlov_gamma_threshold: f64,
    pavlov_epsilon_threshold: Option<f64>,
    lose_shift_eigen: EigenReport,
    blocks: Vec<EpsilonBlock>,
}

const FIXEDPOINT_HEADER: &str = "epsilon,profile,residual,is_consistent,is_spe,\
q_dd_c,q_dd_d,q_cc_c,q_cc_d,q_cd_c,q_cd_d,q_dc_c,q_dc_d";

fn fixedpoint(spec: &FixedPointSpec, w: &mut Writer) -> Result<bool> {
    let m = &spec.payoff;
    let blocks = spec
        .epsilons
        .iter()
        .map(|&eps| {
            Ok(EpsilonBlock {
                epsilon: eps,
                always_defect_closed_form: prop1_closed_form(m, spec.gamma, eps)?,
                pavlov_closed_form: prop2_closed_form(m, spec.gamma, eps)?,
                profiles: profile_sweep(m, spec.gamma, eps)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = FixedPointReport {
        payoff: *m,
        gamma: spec.gamma,
        pavlov_gamma_threshold: pavlov_gamma_threshold(m),
        pavlov_epsilon_threshold: pavlov_epsilon_threshold(m, spec.gamma)?,
        lose_shift_eigen: phase2_eigen(spec.alpha, spec.gamma)?,
        blocks,
    };
    w.file("fixedpoint.csv", |f| {
        writeln!(f, "{FIXEDPOINT_HEADER}")?;
        for b in &report.blocks {
            for p in &b.profiles {
                let spe = p.is_spe.map(|v| v.to_string()).unwrap_or_default();
                let q: Vec<String> = p.q_star.entries().iter().map(|v| fmt_f64(*v)).collect();
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    fmt_f64(b.epsilon),
                    p.profile,
                    fmt_f64(p.residual),
                    p.is_consistent,
                    spe,
                    q.join(",")
                )?;
            }
        }
        Ok(())
    })?;
    w.json("fixedpoint.json", &report)?;
    Ok(true)
}

fn verify_cmd(spec: &VerifySpec, jobs: Option<usize>, w: &mut Writer) -> Result<bool> {
    let report: VerifyReport = verify(spec, jobs)?;
    w.json("verify.json", &report)?;
    Ok(report.passed)
}

const RATE_HEADER: &str = "alpha,t1,t2,t1_pred,alpha_t1,alpha_t2,alpha_t1_limit";

fn rate(spec: &RateSpec, w: &mut Writer) -> Result<bool> {
    let rows = rate_scaling(&spec.alphas, &spec.base)?;
    let opt_u = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    w.file("rate.csv", |f| {
        writeln!(f, "{RATE_HEADER}")?;
        for r in &rows {
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                fmt_f64(r.alpha),
                opt_u(r.t1),
                opt_u(r.t2),
                r.t1_pred,
                opt_f(r.alpha_t1),
                opt_f(r.alpha_t2),
                fmt_f64(r.alpha_t1_limit)
            )?;
        }
        Ok(())
    })?;
    w.json("rate.json", &rows)?;
    Ok(rows.iter().all(|r| r.t1 == Some(r.t1_pred)))
}

#[derive(Serialize, Deserialize)]
struct DqnSeedSummary {
    seed: u64,
    pretrain_policy: ipd_core::PolicyName,
    pretrain_last_policy: ipd_core::PolicyName,
    final_policy: ipd_core::PolicyName,
    pavlov_pattern: bool,
    final_values: [[f64; 2]; 4],
}

#[derive(Serialize, Deserialize)]
struct DqnSummary {
    config: DqnConfig,
    n_seeds: u64,
    n_pretrain_always_defect: u64,
    n_pavlov_pattern: u64,
    seeds: Vec<DqnSeedSummary>,
}

fn dqn(spec: &DqnSpec, jobs: Option<usize>, w: &mut Writer) -> Result<bool> {
    let reports: Vec<TrainReport> = in_pool(jobs, || {
        (0..spec.n_seeds)
            .into_par_iter()
            .map(|k| {
                selfplay_train(&DqnConfig {
                    seed: spec.config.seed + k,
                    ..spec.config.clone()
                })
            })
            .collect::<ipd_dqn::Result<Vec<_>>>()
    })??;
    for r in &reports {
        w.file(&format!("dqn_seed_{}.csv", r.seed), |f| write_log_csv(&r.log, f))?;
    }
    let seeds: Vec<DqnSeedSummary> = reports
        .iter()
        .map(|r| DqnSeedSummary {
            seed: r.seed,
            pretrain_policy: r.pretrain_policy,
            pretrain_last_policy: r.pretrain_last_policy,
            final_policy: r.final_policy,
            pavlov_pattern: r.is_pavlov_pattern(),
            final_values: r.final_values,
        })
        .collect();
    let count = |f: &dyn Fn(&DqnSeedSummary) -> bool| seeds.iter().filter(|s| f(s)).count() as u64;
    let summary = DqnSummary {
        config: spec.config.clone(),
        n_seeds: spec.n_seeds,
        n_pretrain_always_defect: count(&|s| s.pretrain_policy == ipd_core::PolicyName::AlwaysDefect),
        n_pavlov_pattern: count(&|s| s.pavlov_pattern),
        seeds,
    };
    w.json("dqn.json", &summary)?;
    Ok(true)
}
