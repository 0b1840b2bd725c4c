//! Bandit policies as resumable state machines.
//!
//! A [`PolicySpec`] is the immutable description of an algorithm; a
//! [`PolicyState`] holds the sufficient statistics of the history observed so
//! far. Ties in every argmax go to the lowest arm index.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::rng::RngStream;

/// Posterior draws used for the Thompson-sampling propensity when `K > 2`.
pub const TS_PROPENSITY_DRAWS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

fn default_prior_variance() -> f64 {
    1.0
}

fn default_likelihood_variance() -> f64 {
    1.0
}

/// One of the four supported allocation rules.
///
/// Serialized with a `name` tag: `{"name":"etc","m":10}`, `{"name":"ucb"}`,
/// `{"name":"ts","prior_mean":0.0,"prior_variance":1.0,"likelihood_variance":1.0}`,
/// `{"name":"eg","epsilon":0.05}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicySpec {
    /// Explore-then-commit: `m` sequential pulls per arm, then the best arm.
    Etc { m: usize },
    /// `argmax μ̂_k(t) + sqrt(ln t / N_k(t))`; unpulled arms first.
    Ucb,
    /// Gaussian-prior Thompson sampling with known likelihood variance.
    Ts {
        #[serde(default)]
        prior_mean: f64,
        #[serde(default = "default_prior_variance")]
        prior_variance: f64,
        #[serde(default = "default_likelihood_variance")]
        likelihood_variance: f64,
    },
    /// ε-greedy; unpulled arms count as having an infinite mean.
    Eg { epsilon: f64 },
}

impl PolicySpec {
    pub fn thompson() -> Self {
        PolicySpec::Ts {
            prior_mean: 0.0,
            prior_variance: 1.0,
            likelihood_variance: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Etc { .. } => "etc",
            PolicySpec::Ucb => "ucb",
            PolicySpec::Ts { .. } => "ts",
            PolicySpec::Eg { .. } => "eg",
        }
    }

    /// Checks the spec against an experiment shape.
    pub fn validate(&self, arms: usize, horizon: usize) -> Result<(), ConfigError> {
        if arms == 0 {
            return Err(ConfigError("K must be at least 1".into()));
        }
        match *self {
            PolicySpec::Etc { m } => {
                if m == 0 {
                    return Err(ConfigError("etc: m must be positive".into()));
                }
                if m * arms > horizon {
                    return Err(ConfigError(format!(
                        "etc: exploration length m*K = {} exceeds T = {horizon}",
                        m * arms
                    )));
                }
            }
            PolicySpec::Ucb => {}
            PolicySpec::Ts {
                prior_mean,
                prior_variance,
                likelihood_variance,
            } => {
                // negated comparisons so that NaN is rejected too
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !prior_mean.is_finite()
                    || !(prior_variance > 0.0)
                    || !(likelihood_variance > 0.0)
                {
                    return Err(ConfigError(
                        "ts: prior mean must be finite and both variances positive".into(),
                    ));
                }
            }
            PolicySpec::Eg { epsilon } => {
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err(ConfigError(format!(
                        "eg: epsilon must lie in [0, 1], got {epsilon}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether the rule randomizes internally (and so has propensities).
    pub fn is_randomized(&self) -> bool {
        matches!(self, PolicySpec::Ts { .. } | PolicySpec::Eg { .. })
    }

    /// Gaussian posterior `(mean, variance)` of arm `k` under TS.
    /// Panics for non-TS specs.
    pub fn posterior(&self, state: &PolicyState, k: usize) -> (f64, f64) {
        let PolicySpec::Ts {
            prior_mean,
            prior_variance,
            likelihood_variance,
        } = *self
        else {
            panic!("posterior queried on a non-TS policy");
        };
        let precision = 1.0 / prior_variance + state.counts[k] as f64 / likelihood_variance;
        let mean = (prior_mean / prior_variance + state.sums[k] / likelihood_variance) / precision;
        (mean, 1.0 / precision)
    }

    /// Chooses the arm for round `state.round()`.
    pub fn select_arm(&self, state: &PolicyState, rng: &mut RngStream) -> usize {
        let arms = state.arms();
        match *self {
            PolicySpec::Etc { m } => etc_arm(m, state),
            PolicySpec::Ucb => {
                if let Some(k) = state.counts.iter().position(|&n| n == 0) {
                    return k;
                }
                let log_t = (state.round() as f64).ln();
                argmax((0..arms).map(|k| state.mean(k) + (log_t / state.counts[k] as f64).sqrt()))
            }
            PolicySpec::Ts { .. } => argmax((0..arms).map(|k| {
                let (mean, var) = self.posterior(state, k);
                mean + var.sqrt() * rng.standard_normal()
            })),
            PolicySpec::Eg { epsilon } => {
                if rng.uniform() < epsilon {
                    rng.below(arms)
                } else {
                    greedy_arm(state)
                }
            }
        }
    }

    /// Conditional selection probabilities of every arm for the next round,
    /// or `None` for deterministic rules. `rng` is only consumed by the
    /// Monte Carlo TS path (`K > 2`).
    pub fn propensities(&self, state: &PolicyState, rng: &mut RngStream) -> Option<Vec<f64>> {
        let arms = state.arms();
        match *self {
            PolicySpec::Etc { .. } | PolicySpec::Ucb => None,
            PolicySpec::Eg { epsilon } => {
                let greedy = greedy_arm(state);
                Some(
                    (0..arms)
                        .map(|k| {
                            epsilon / arms as f64 + if k == greedy { 1.0 - epsilon } else { 0.0 }
                        })
                        .collect(),
                )
            }
            PolicySpec::Ts { .. } if arms == 1 => Some(vec![1.0]),
            PolicySpec::Ts { .. } if arms == 2 => {
                let (m1, v1) = self.posterior(state, 0);
                let (m2, v2) = self.posterior(state, 1);
                let z = (m1 - m2) / (v1 + v2).sqrt();
                Some(vec![normal_cdf(z), normal_cdf(-z)])
            }
            PolicySpec::Ts { .. } => {
                let moments: Vec<(f64, f64)> =
                    (0..arms).map(|k| self.posterior(state, k)).collect();
                let mut wins = vec![0usize; arms];
                for _ in 0..TS_PROPENSITY_DRAWS {
                    let k = argmax(
                        moments
                            .iter()
                            .map(|&(m, v)| m + v.sqrt() * rng.standard_normal()),
                    );
                    wins[k] += 1;
                }
                Some(
                    wins.into_iter()
                        .map(|w| w as f64 / TS_PROPENSITY_DRAWS as f64)
                        .collect(),
                )
            }
        }
    }

    pub fn propensity(&self, state: &PolicyState, arm: usize, rng: &mut RngStream) -> Option<f64> {
        self.propensities(state, rng).map(|p| p[arm])
    }
}

fn etc_arm(m: usize, state: &PolicyState) -> usize {
    let arms = state.arms();
    let t = state.round();
    if t <= m * arms {
        return (t - 1) / m;
    }
    // After the first exploitation pull the committed arm is the only one
    // whose count exceeds m.
    if let Some(k) = state.counts.iter().position(|&n| n > m) {
        return k;
    }
    argmax((0..arms).map(|k| state.mean(k)))
}

fn greedy_arm(state: &PolicyState) -> usize {
    if let Some(k) = state.counts.iter().position(|&n| n == 0) {
        return k;
    }
    argmax((0..state.arms()).map(|k| state.mean(k)))
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    best
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Per-arm sufficient statistics of the history.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    counts: Vec<usize>,
    sums: Vec<f64>,
    sums_sq: Vec<f64>,
}

impl PolicyState {
    pub fn new(arms: usize) -> Self {
        Self {
            counts: vec![0; arms],
            sums: vec![0.0; arms],
            sums_sq: vec![0.0; arms],
        }
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    /// The 1-based index of the next round.
    pub fn round(&self) -> usize {
        self.counts.iter().sum::<usize>() + 1
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts[k]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Running mean of arm `k`; NaN before its first pull.
    pub fn mean(&self, k: usize) -> f64 {
        self.sums[k] / self.counts[k] as f64
    }

    pub fn sum_of_squares(&self, k: usize) -> f64 {
        self.sums_sq[k]
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.sums_sq[arm] += reward * reward;
    }
}
