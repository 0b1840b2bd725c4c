//! Replicated experiment plans.
//!
//! Each cell runs `R` independent pipelines: simulate a real-world log,
//! debias it, and evaluate the requested estimators, optionally again on
//! every truncation `T'` of a horizon grid. Replication `r` of a cell with
//! seed `s` uses `derive_seed(s, r)` as its root, so results do not depend on
//! scheduling or on the number of workers.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{BootstrapKind, BootstrapSpec};
use crate::debias::debias;
use crate::distributions::RewardDistribution;
use crate::estimators::{evaluate, EstimatorKind};
use crate::io::{csv_bytes, write_atomic, write_json, IoError};
use crate::policies::{ConfigError, PolicySpec};
use crate::rng::{derive_path, derive_seed};
use crate::simulator::{run_experiment, summarize, BanditLog};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cell `{cell}`: {source}")]
    Config {
        cell: String,
        #[source]
        source: ConfigError,
    },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Mean, EstimatorKind::Ipw, EstimatorKind::Aipw]
}

/// One experimental condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub name: String,
    pub policy: PolicySpec,
    pub arms: Vec<RewardDistribution>,
    #[serde(rename = "K")]
    pub arm_count: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    /// Omit to skip bias correction.
    #[serde(default)]
    pub bootstrap: Option<BootstrapSpec>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Explicit cell seed; otherwise derived from the plan seed and the cell
    /// position.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Truncation horizons `T'`; `T` itself is always evaluated.
    #[serde(default)]
    pub horizon_grid: Vec<usize>,
}

impl Cell {
    fn validate(&self) -> Result<(), HarnessError> {
        let config = |msg: String| HarnessError::Config {
            cell: self.name.clone(),
            source: ConfigError(msg),
        };
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(HarnessError::Plan(format!(
                "cell name `{}` is not a valid directory name",
                self.name
            )));
        }
        if self.arms.len() != self.arm_count {
            return Err(config(format!(
                "K = {} but {} arms were given",
                self.arm_count,
                self.arms.len()
            )));
        }
        if self.replications == 0 {
            return Err(config("R must be at least 1".into()));
        }
        self.policy
            .validate(self.arm_count, self.horizon)
            .map_err(|source| HarnessError::Config {
                cell: self.name.clone(),
                source,
            })?;
        if let Some(b) = &self.bootstrap {
            b.validate().map_err(|e| config(e.to_string()))?;
        }
        if self.horizon_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config("horizon grid must be strictly increasing".into()));
        }
        if let Some(&bad) = self
            .horizon_grid
            .iter()
            .find(|&&h| h < self.arm_count || h > self.horizon)
        {
            return Err(config(format!(
                "horizon {bad} is outside [K, T] = [{}, {}]",
                self.arm_count, self.horizon
            )));
        }
        Ok(())
    }

    /// The evaluation horizons, ending with `T`.
    pub fn horizons(&self) -> Vec<usize> {
        let mut h: Vec<usize> = self
            .horizon_grid
            .iter()
            .copied()
            .filter(|&h| h < self.horizon)
            .collect();
        h.push(self.horizon);
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub cells: Vec<Cell>,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let plan: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Plan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut names = std::collections::HashSet::new();
        for cell in &self.cells {
            cell.validate()?;
            if !names.insert(&cell.name) {
                return Err(HarnessError::Plan(format!(
                    "duplicate cell name `{}`",
                    cell.name
                )));
            }
        }
        Ok(())
    }
}

/// Per-replication, per-horizon, per-arm outcome. `arm` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub horizon: usize,
    pub arm: usize,
    pub count: usize,
    pub raw_mean: Option<f64>,
    pub estimated_bias: Option<f64>,
    pub corrected_mean: Option<f64>,
    pub ipw: Option<f64>,
    pub aipw: Option<f64>,
    pub error: Option<String>,
}

/// Replication mean of an estimator with its standard error and the error
/// against the true arm mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub n: usize,
    pub mean: f64,
    /// Sample SD over `sqrt(n)`; 0 when `n = 1`.
    pub se: f64,
    pub bias: f64,
    pub mse: f64,
}

impl EstimatorStats {
    pub fn from_values(values: &[f64], truth: f64) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let se = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0) / nf).sqrt()
        } else {
            0.0
        };
        Some(Self {
            n,
            mean,
            se,
            bias: mean - truth,
            mse: values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / nf,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: usize,
    pub true_mean: f64,
    pub raw: Option<EstimatorStats>,
    /// Replication mean of the bootstrap bias estimate (its `bias` field is
    /// measured against 0).
    pub estimated_bias: Option<EstimatorStats>,
    pub corrected: Option<EstimatorStats>,
    pub ipw: Option<EstimatorStats>,
    pub aipw: Option<EstimatorStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub horizon: usize,
    pub arm: usize,
    pub estimator: String,
    pub n: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub name: String,
    pub seed: u64,
    #[serde(rename = "K")]
    pub arm_count: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    pub policy: PolicySpec,
    pub bootstrap: Option<BootstrapSpec>,
    /// Statistics at the full horizon `T`.
    pub arms: Vec<ArmResult>,
    pub mse: Vec<MseRow>,
    /// Replication-horizon pairs with at least one error, by message.
    pub failures: BTreeMap<String, usize>,
    #[serde(skip)]
    pub records: Vec<ReplicationRecord>,
}

const SUBSTREAM_LOG: u64 = 0;
const SUBSTREAM_DEBIAS: u64 = 1;
const SUBSTREAM_PROPENSITY: u64 = 2;

/// Debias and estimate on one (possibly truncated) log.
fn analyse(cell: &Cell, log: &BanditLog, root: u64, replication: usize) -> Vec<ReplicationRecord> {
    let horizon = log.horizon();
    let summary = summarize(log);
    let mut records: Vec<ReplicationRecord> = summary
        .arms
        .iter()
        .enumerate()
        .map(|(k, s)| ReplicationRecord {
            replication,
            horizon,
            arm: k + 1,
            count: s.count,
            raw_mean: s.mean,
            estimated_bias: None,
            corrected_mean: None,
            ipw: None,
            aipw: None,
            error: None,
        })
        .collect();
    let mut errors = Vec::new();
    if let Some(spec) = &cell.bootstrap {
        match debias(
            log,
            spec,
            derive_path(root, &[SUBSTREAM_DEBIAS, horizon as u64]),
        ) {
            Ok(report) => {
                for (rec, arm) in records.iter_mut().zip(&report.arms) {
                    rec.estimated_bias = arm.estimated_bias;
                    rec.corrected_mean = arm.corrected_mean;
                    if arm.b_effective == 0 {
                        rec.error = Some(format!(
                            "arm {} was not pulled in any bootstrap replay",
                            arm.arm
                        ));
                    }
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let weighted: Vec<EstimatorKind> = cell
        .estimators
        .iter()
        .copied()
        .filter(|e| *e != EstimatorKind::Mean)
        .collect();
    if !weighted.is_empty() && log.policy().is_randomized() {
        match evaluate(
            log,
            &weighted,
            Some(derive_path(root, &[SUBSTREAM_PROPENSITY, horizon as u64])),
        ) {
            Ok(set) => {
                for (rec, est) in records.iter_mut().zip(&set.arms) {
                    rec.ipw = est.ipw;
                    rec.aipw = est.aipw;
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    if !errors.is_empty() {
        let msg = errors.join("; ");
        for rec in &mut records {
            rec.error = Some(match rec.error.take() {
                Some(own) => format!("{msg}; {own}"),
                None => msg.clone(),
            });
        }
    }
    records
}

fn replicate(
    cell: &Cell,
    cell_seed: u64,
    replication: usize,
) -> Result<Vec<ReplicationRecord>, ConfigError> {
    let root = derive_seed(cell_seed, replication as u64);
    let log = run_experiment(
        cell.arm_count,
        cell.horizon,
        &cell.policy,
        &cell.arms,
        derive_path(root, &[SUBSTREAM_LOG]),
    )?;
    let mut out = Vec::new();
    for h in cell.horizons() {
        let view = if h == cell.horizon {
            log.clone()
        } else {
            log.truncate(h)?
        };
        out.extend(analyse(cell, &view, root, replication));
    }
    Ok(out)
}

fn stats_of(
    records: &[&ReplicationRecord],
    truth: f64,
    pick: impl Fn(&ReplicationRecord) -> Option<f64>,
) -> Option<EstimatorStats> {
    let values: Vec<f64> = records.iter().filter_map(|r| pick(r)).collect();
    EstimatorStats::from_values(&values, truth)
}

fn aggregate(cell: &Cell, seed: u64, records: Vec<ReplicationRecord>) -> CellResult {
    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if let Some(e) = &r.error {
            if seen.insert((r.replication, r.horizon, e.clone())) {
                *failures.entry(e.clone()).or_default() += 1;
            }
        }
    }
    let mut mse = Vec::new();
    let mut arms = Vec::new();
    for h in cell.horizons() {
        for (k, dist) in cell.arms.iter().enumerate() {
            let truth = dist.mean();
            let rows: Vec<&ReplicationRecord> = records
                .iter()
                .filter(|r| r.horizon == h && r.arm == k + 1)
                .collect();
            let raw = stats_of(&rows, truth, |r| r.raw_mean);
            let corrected = stats_of(&rows, truth, |r| r.corrected_mean);
            let ipw = stats_of(&rows, truth, |r| r.ipw);
            let aipw = stats_of(&rows, truth, |r| r.aipw);
            for (name, s) in [
                ("mean", &raw),
                ("corrected", &corrected),
                ("ipw", &ipw),
                ("aipw", &aipw),
            ] {
                if let Some(s) = s {
                    mse.push(MseRow {
                        horizon: h,
                        arm: k + 1,
                        estimator: name.to_string(),
                        n: s.n,
                        mse: s.mse,
                    });
                }
            }
            if h == cell.horizon {
                arms.push(ArmResult {
                    arm: k + 1,
                    true_mean: truth,
                    raw,
                    estimated_bias: stats_of(&rows, 0.0, |r| r.estimated_bias),
                    corrected,
                    ipw,
                    aipw,
                });
            }
        }
    }
    CellResult {
        name: cell.name.clone(),
        seed,
        arm_count: cell.arm_count,
        horizon: cell.horizon,
        replications: cell.replications,
        policy: cell.policy.clone(),
        bootstrap: cell.bootstrap,
        arms,
        mse,
        failures,
        records,
    }
}

/// The seed used for cell `index` of a plan run with master seed `seed`.
pub fn cell_seed(cell: &Cell, index: usize, seed: u64) -> u64 {
    cell.seed.unwrap_or_else(|| derive_seed(seed, index as u64))
}

/// Runs every cell, parallel across (cell, replication).
pub fn run_plan(plan: &ExperimentPlan, seed: u64) -> Result<Vec<CellResult>, HarnessError> {
    plan.validate()?;
    let seeds: Vec<u64> = plan
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| cell_seed(c, i, seed))
        .collect();
    let tasks: Vec<(usize, usize)> = plan
        .cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..c.replications).map(move |r| (i, r)))
        .collect();
    let outcomes: Vec<Vec<ReplicationRecord>> = tasks
        .par_iter()
        .map(|&(i, r)| replicate(&plan.cells[i], seeds[i], r))
        .collect::<Result<_, ConfigError>>()
        .map_err(|source| HarnessError::Config {
            cell: "plan".into(),
            source,
        })?;
    let mut grouped: Vec<Vec<ReplicationRecord>> = vec![Vec::new(); plan.cells.len()];
    for (&(i, _), recs) in tasks.iter().zip(outcomes) {
        grouped[i].extend(recs);
    }
    Ok(plan
        .cells
        .iter()
        .zip(grouped)
        .enumerate()
        .map(|(i, (cell, records))| aggregate(cell, seeds[i], records))
        .collect())
}

/// MSE per horizon, arm and estimator for every cell.
pub fn mse_curves(
    plan: &ExperimentPlan,
    seed: u64,
) -> Result<Vec<(String, Vec<MseRow>)>, HarnessError> {
    Ok(run_plan(plan, seed)?
        .into_iter()
        .map(|c| (c.name, c.mse))
        .collect())
}

/// Writes `<dir>/<cell>/summary.json`, `replications.csv` and `mse.csv`.
pub fn write_results(dir: &Path, results: &[CellResult]) -> Result<(), HarnessError> {
    for cell in results {
        let base = dir.join(&cell.name);
        write_json(&base.join("summary.json"), cell)?;
        write_atomic(&base.join("replications.csv"), &csv_bytes(&cell.records)?)?;
        write_atomic(&base.join("mse.csv"), &csv_bytes(&cell.mse)?)?;
    }
    Ok(())
}

fn gaussian(mean: f64, sd: f64) -> RewardDistribution {
    RewardDistribution::gaussian(mean, sd * sd).expect("valid constant")
}

fn bernoulli(p: f64) -> RewardDistribution {
    RewardDistribution::bernoulli(p).expect("valid constant")
}

fn standard_policies() -> [(&'static str, PolicySpec); 4] {
    [
        ("etc", PolicySpec::Etc { m: 10 }),
        ("ucb", PolicySpec::Ucb),
        ("ts", PolicySpec::thompson()),
        ("eg", PolicySpec::Eg { epsilon: 0.05 }),
    ]
}

/// Two arms, `T = 100`: {ETC, UCB, TS, EG} × {N(1,1)/N(1.5,1), Bern(0.3)/Bern(0.6)}.
pub fn two_arm_plan(replications: usize, replays: usize) -> ExperimentPlan {
    let rewards = [
        ("normal", vec![gaussian(1.0, 1.0), gaussian(1.5, 1.0)]),
        ("bernoulli", vec![bernoulli(0.3), bernoulli(0.6)]),
    ];
    let mut cells = Vec::new();
    for (pname, policy) in standard_policies() {
        for (rname, arms) in &rewards {
            cells.push(Cell {
                name: format!("{pname}_{rname}"),
                policy: policy.clone(),
                arms: arms.clone(),
                arm_count: 2,
                horizon: 100,
                replications,
                bootstrap: Some(BootstrapSpec {
                    kind: BootstrapKind::MultiplierGaussian,
                    replays,
                }),
                estimators: default_estimators(),
                seed: None,
                horizon_grid: Vec::new(),
            });
        }
    }
    ExperimentPlan { cells }
}

/// Four arms, `T = 100`, with both bootstrap flavours. The two flavours of a
/// condition share a seed and so see the same real-world logs.
pub fn four_arm_plan(replications: usize, replays: usize, seed: u64) -> ExperimentPlan {
    let rewards = [
        (
            "normal",
            vec![
                gaussian(2.0, 2.0),
                gaussian(2.5, 1.0),
                gaussian(3.0, 2.0),
                gaussian(3.5, 1.0),
            ],
        ),
        (
            "bernoulli",
            vec![
                bernoulli(0.4),
                bernoulli(0.5),
                bernoulli(0.7),
                bernoulli(0.8),
            ],
        ),
    ];
    let mut cells = Vec::new();
    let mut condition = 0u64;
    for (pname, policy) in standard_policies() {
        for (rname, arms) in &rewards {
            let cell_seed = derive_seed(seed, condition);
            condition += 1;
            for kind in [BootstrapKind::MultiplierGaussian, BootstrapKind::Efron] {
                cells.push(Cell {
                    name: format!("{pname}_{rname}_k4_{}", kind.label()),
                    policy: policy.clone(),
                    arms: arms.clone(),
                    arm_count: 4,
                    horizon: 100,
                    replications,
                    bootstrap: Some(BootstrapSpec { kind, replays }),
                    estimators: default_estimators(),
                    seed: Some(cell_seed),
                    horizon_grid: Vec::new(),
                });
            }
        }
    }
    ExperimentPlan { cells }
}

/// TS and EG on the two-arm conditions, evaluated on a horizon grid.
pub fn mse_plan(replications: usize, replays: usize, grid: Vec<usize>) -> ExperimentPlan {
    let mut plan = two_arm_plan(replications, replays);
    plan.cells.retain(|c| c.policy.is_randomized());
    for c in &mut plan.cells {
        c.horizon_grid = grid.clone();
    }
    plan
}
