//! One bandit experiment: the engine shared by the real and bootstrap worlds.

use serde::{Deserialize, Serialize};

use crate::distributions::RewardDistribution;
use crate::policies::{ConfigError, PolicySpec, PolicyState};
use crate::rng::{RngStream, POLICY_STREAM, REWARD_STREAM};

/// Which world a log was generated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum World {
    Real,
    Bootstrap,
}

/// Anything that can hand out rewards arm by arm.
pub trait RewardSource: Sync {
    fn arm_count(&self) -> usize;
    fn draw(&self, arm: usize, rng: &mut RngStream) -> f64;
}

impl RewardSource for [RewardDistribution] {
    fn arm_count(&self) -> usize {
        self.len()
    }

    fn draw(&self, arm: usize, rng: &mut RngStream) -> f64 {
        self[arm].sample(rng)
    }
}

/// Actions and rewards of one experiment. Arms are 0-based in memory and
/// 1-based in every file format.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditLog {
    arms: usize,
    horizon: usize,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    policy: PolicySpec,
    seed: Option<u64>,
    world: World,
}

impl BanditLog {
    pub fn new(
        arms: usize,
        horizon: usize,
        actions: Vec<usize>,
        rewards: Vec<f64>,
        policy: PolicySpec,
        seed: Option<u64>,
        world: World,
    ) -> Result<Self, ConfigError> {
        if actions.len() != horizon || rewards.len() != horizon {
            return Err(ConfigError(format!(
                "log has {} actions and {} rewards but T = {horizon}",
                actions.len(),
                rewards.len()
            )));
        }
        if let Some(t) = actions.iter().position(|&a| a >= arms) {
            return Err(ConfigError(format!(
                "action at t = {} is outside 1..={arms}",
                t + 1
            )));
        }
        if let Some(t) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(ConfigError(format!(
                "reward at t = {} is not finite",
                t + 1
            )));
        }
        policy.validate(arms, horizon)?;
        Ok(Self {
            arms,
            horizon,
            actions,
            rewards,
            policy,
            seed,
            world,
        })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn policy(&self) -> &PolicySpec {
        &self.policy
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn world(&self) -> World {
        self.world
    }

    /// Observed rewards of one arm, in round order.
    pub fn arm_rewards(&self, arm: usize) -> Vec<f64> {
        self.actions
            .iter()
            .zip(&self.rewards)
            .filter(|(&a, _)| a == arm)
            .map(|(_, &r)| r)
            .collect()
    }

    /// The first `horizon` rounds as a log of their own.
    pub fn truncate(&self, horizon: usize) -> Result<Self, ConfigError> {
        if horizon > self.horizon {
            return Err(ConfigError(format!(
                "cannot truncate a T = {} log to {horizon} rounds",
                self.horizon
            )));
        }
        Self::new(
            self.arms,
            horizon,
            self.actions[..horizon].to_vec(),
            self.rewards[..horizon].to_vec(),
            self.policy.clone(),
            self.seed,
            self.world,
        )
    }
}

/// Count, mean and MLE variance of one arm. `mean` is `None` for an arm
/// that was never pulled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arms: Vec<ArmStats>,
}

impl ArmSummary {
    /// Arms with zero pulls.
    pub fn unpulled(&self) -> Vec<usize> {
        self.arms
            .iter()
            .enumerate()
            .filter(|(_, s)| s.count == 0)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn total_count(&self) -> usize {
        self.arms.iter().map(|s| s.count).sum()
    }
}

/// Per-arm counts, sample means and MLE (divide-by-n) variances.
pub fn summarize(log: &BanditLog) -> ArmSummary {
    let arms = (0..log.arms())
        .map(|k| {
            let xs = log.arm_rewards(k);
            if xs.is_empty() {
                return ArmStats {
                    count: 0,
                    mean: None,
                    variance: 0.0,
                };
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let variance = if xs.len() == 1 {
                0.0
            } else {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
            };
            ArmStats {
                count: xs.len(),
                mean: Some(mean),
                variance,
            }
        })
        .collect();
    ArmSummary { arms }
}

/// Runs `horizon` rounds, reporting each `(arm, reward)` to `observe`, and
/// returns the final policy state. Rewards and policy coins use disjoint
/// substreams of `seed`.
pub(crate) fn drive<S: RewardSource + ?Sized>(
    horizon: usize,
    policy: &PolicySpec,
    source: &S,
    seed: u64,
    mut observe: impl FnMut(usize, f64),
) -> PolicyState {
    let mut reward_rng = RngStream::new(seed, REWARD_STREAM);
    let mut policy_rng = RngStream::new(seed, POLICY_STREAM);
    let mut state = PolicyState::new(source.arm_count());
    for _ in 0..horizon {
        let arm = policy.select_arm(&state, &mut policy_rng);
        let reward = source.draw(arm, &mut reward_rng);
        state.update(arm, reward);
        observe(arm, reward);
    }
    state
}

/// Simulates one experiment against an arbitrary reward source.
pub fn simulate<S: RewardSource + ?Sized>(
    horizon: usize,
    policy: &PolicySpec,
    source: &S,
    seed: u64,
    world: World,
) -> Result<BanditLog, ConfigError> {
    let arms = source.arm_count();
    policy.validate(arms, horizon)?;
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    drive(horizon, policy, source, seed, |a, r| {
        actions.push(a);
        rewards.push(r);
    });
    BanditLog::new(
        arms,
        horizon,
        actions,
        rewards,
        policy.clone(),
        Some(seed),
        world,
    )
}

/// Simulates one real-world experiment with `K = arms.len()`.
pub fn run_experiment(
    arm_count: usize,
    horizon: usize,
    policy: &PolicySpec,
    arms: &[RewardDistribution],
    seed: u64,
) -> Result<BanditLog, ConfigError> {
    if arms.len() != arm_count {
        return Err(ConfigError(format!(
            "K = {arm_count} but {} arm distributions were given",
            arms.len()
        )));
    }
    simulate(horizon, policy, arms, seed, World::Real)
}
