//! Sample-mean, IPW and AIPW estimates of the arm means.
//!
//! With conditional propensities `e_t(k)` recomputed by replaying the policy
//! on the log,
//!
//! * IPW: `(1/T) Σ_t 1{a_t = k} r_t / e_t(k)`
//! * AIPW: `(1/T) Σ_t [m̂_t(k) + 1{a_t = k}(r_t − m̂_t(k))/e_t(k)]`, where
//!   `m̂_t(k)` is the running mean of arm `k` before round `t` (0 before its
//!   first pull).

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policies::{PolicySpec, PolicyState};
use crate::rng::{RngStream, PROPENSITY_STREAM};
use crate::simulator::{summarize, BanditLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("round {t} chose arm {arm} with propensity 0; inverse weighting is undefined")]
    DivisionHazard { t: usize, arm: usize },
    #[error("Thompson sampling with more than two arms needs a seed for its propensities")]
    MissingSeed,
    #[error("propensity trace has {found} rounds but the log has {expected}")]
    TraceLength { expected: usize, found: usize },
    #[error("unknown estimator `{0}` (expected mean, ipw or aipw)")]
    UnknownEstimator(String),
}

/// `e_t(k)` for every round `t` (outer) and arm `k` (inner).
pub type PropensityTrace = Vec<Vec<f64>>;

/// Replays the logged policy and records its selection probabilities before
/// each round. `None` for deterministic policies. `seed` drives the Monte
/// Carlo propensities of Thompson sampling with `K > 2` and is ignored
/// otherwise.
pub fn propensity_trace(
    log: &BanditLog,
    seed: Option<u64>,
) -> Result<Option<PropensityTrace>, EstimatorError> {
    let policy = log.policy();
    if !policy.is_randomized() {
        return Ok(None);
    }
    let needs_seed = matches!(policy, PolicySpec::Ts { .. }) && log.arms() > 2;
    let seed = match (needs_seed, seed) {
        (true, None) => return Err(EstimatorError::MissingSeed),
        (_, s) => s.unwrap_or(0),
    };
    let mut rng = RngStream::new(seed, PROPENSITY_STREAM);
    let mut state = PolicyState::new(log.arms());
    let mut trace = Vec::with_capacity(log.horizon());
    for (&a, &r) in log.actions().iter().zip(log.rewards()) {
        trace.push(
            policy
                .propensities(&state, &mut rng)
                .expect("randomized policy"),
        );
        state.update(a, r);
    }
    Ok(Some(trace))
}

/// Running plug-in means `m̂_t(k)` from rounds before `t`; 0 before the first
/// pull of `k`.
pub fn running_means(log: &BanditLog) -> Vec<Vec<f64>> {
    let mut state = PolicyState::new(log.arms());
    let mut out = Vec::with_capacity(log.horizon());
    for (&a, &r) in log.actions().iter().zip(log.rewards()) {
        out.push(
            (0..log.arms())
                .map(|k| {
                    if state.count(k) == 0 {
                        0.0
                    } else {
                        state.mean(k)
                    }
                })
                .collect(),
        );
        state.update(a, r);
    }
    out
}

fn check_trace(log: &BanditLog, rows: usize) -> Result<(), EstimatorError> {
    if rows != log.horizon() {
        return Err(EstimatorError::TraceLength {
            expected: log.horizon(),
            found: rows,
        });
    }
    Ok(())
}

fn chosen_propensity(propensities: &[Vec<f64>], t: usize, a: usize) -> Result<f64, EstimatorError> {
    let e = propensities[t][a];
    if e > 0.0 {
        Ok(e)
    } else {
        Err(EstimatorError::DivisionHazard {
            t: t + 1,
            arm: a + 1,
        })
    }
}

pub fn ipw_estimate(
    log: &BanditLog,
    propensities: &[Vec<f64>],
) -> Result<Vec<f64>, EstimatorError> {
    check_trace(log, propensities.len())?;
    let mut sums = vec![0.0; log.arms()];
    for (t, (&a, &r)) in log.actions().iter().zip(log.rewards()).enumerate() {
        sums[a] += r / chosen_propensity(propensities, t, a)?;
    }
    let n = log.horizon() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

pub fn aipw_estimate(
    log: &BanditLog,
    propensities: &[Vec<f64>],
    plug_in: &[Vec<f64>],
) -> Result<Vec<f64>, EstimatorError> {
    check_trace(log, propensities.len())?;
    check_trace(log, plug_in.len())?;
    let mut sums = vec![0.0; log.arms()];
    for (t, (&a, &r)) in log.actions().iter().zip(log.rewards()).enumerate() {
        for (k, sum) in sums.iter_mut().enumerate() {
            *sum += plug_in[t][k];
        }
        let e = chosen_propensity(propensities, t, a)?;
        sums[a] += (r - plug_in[t][a]) / e;
    }
    let n = log.horizon() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mean,
    Ipw,
    Aipw,
}

impl FromStr for EstimatorKind {
    type Err = EstimatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mean" => Ok(EstimatorKind::Mean),
            "ipw" => Ok(EstimatorKind::Ipw),
            "aipw" => Ok(EstimatorKind::Aipw),
            other => Err(EstimatorError::UnknownEstimator(other.to_string())),
        }
    }
}

/// Parses a comma-separated list such as `mean,ipw,aipw`.
pub fn parse_estimators(list: &str) -> Result<Vec<EstimatorKind>, EstimatorError> {
    let mut out: Vec<EstimatorKind> = Vec::new();
    for kind in list.split(',').map(str::parse) {
        let kind = kind?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

/// Estimates for one arm; `arm` is 1-based. Missing entries were either not
/// requested or are undefined for the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub arm: usize,
    pub sample_mean: Option<f64>,
    pub ipw: Option<f64>,
    pub aipw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub arms: Vec<ArmEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propensities: Option<PropensityTrace>,
}

/// Computes the requested estimators. IPW and AIPW are left empty for
/// deterministic policies.
pub fn evaluate(
    log: &BanditLog,
    estimators: &[EstimatorKind],
    seed: Option<u64>,
) -> Result<EstimateSet, EstimatorError> {
    let wants_weighting = estimators.iter().any(|e| *e != EstimatorKind::Mean);
    let trace = if wants_weighting {
        propensity_trace(log, seed)?
    } else {
        None
    };
    let ipw = match &trace {
        Some(tr) if estimators.contains(&EstimatorKind::Ipw) => Some(ipw_estimate(log, tr)?),
        _ => None,
    };
    let aipw = match &trace {
        Some(tr) if estimators.contains(&EstimatorKind::Aipw) => {
            Some(aipw_estimate(log, tr, &running_means(log))?)
        }
        _ => None,
    };
    let summary = summarize(log);
    let want_mean = estimators.contains(&EstimatorKind::Mean);
    let arms = (0..log.arms())
        .map(|k| ArmEstimate {
            arm: k + 1,
            sample_mean: if want_mean {
                summary.arms[k].mean
            } else {
                None
            },
            ipw: ipw.as_ref().map(|v| v[k]),
            aipw: aipw.as_ref().map(|v| v[k]),
        })
        .collect();
    Ok(EstimateSet {
        arms,
        propensities: trace,
    })
}
