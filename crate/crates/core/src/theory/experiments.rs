//! Monte Carlo checks of the decay-rate results.
//!
//! Both experiments simulate ETC in the real world, plug the observed
//! summaries into the closed forms, and compare with the truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::etc::{log_bias_ratio, EtcGaussianParams};
use super::large_deviations::legendre_fenchel;
use super::{quantile, TheoryError};
use crate::distributions::RewardDistribution;
use crate::policies::PolicySpec;
use crate::rng::derive_path;
use crate::simulator::{run_experiment, summarize};

/// Empirical distribution of a ratio that should approach a limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub used: usize,
    pub excluded: usize,
    /// 5%, 25%, 50%, 75% and 95% quantiles.
    pub quantiles: [f64; 5],
    /// Median of `|ratio − 1|`.
    pub median_abs_deviation: f64,
    /// Share of ratios with `|ratio − 1| < 0.1`.
    pub within_tenth: f64,
}

impl RatioSummary {
    fn from_ratios(mut ratios: Vec<f64>, excluded: usize) -> Self {
        ratios.sort_by(f64::total_cmp);
        let mut dev: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
        dev.sort_by(f64::total_cmp);
        let n = ratios.len();
        Self {
            used: n,
            excluded,
            quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&ratios, q)),
            median_abs_deviation: quantile(&dev, 0.5),
            within_tenth: dev.iter().filter(|&&d| d < 0.1).count() as f64 / n.max(1) as f64,
        }
    }

    pub fn median(&self) -> f64 {
        self.quantiles[2]
    }
}

/// `g_k(hat)/g_k(true)` at one exploration length, per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugInRateRow {
    pub m: usize,
    pub horizon: usize,
    pub arms: [RatioSummary; 2],
}

/// For each `m`, simulates ETC with `T = horizon_multiple · m` on the Gaussian
/// arms of `truth` and summarises `g_k(μ̂, σ̂²)/g_k(μ, σ²)`. Replications with
/// a zero sample variance are excluded and counted.
pub fn plug_in_rate_experiment(
    truth: &EtcGaussianParams,
    m_grid: &[usize],
    horizon_multiple: usize,
    replications: usize,
    seed: u64,
) -> Result<Vec<PlugInRateRow>, TheoryError> {
    if horizon_multiple <= 2 {
        return Err(TheoryError::InvalidParams(
            "the horizon multiple must exceed 2 so that T > 2m".into(),
        ));
    }
    let arms = [
        RewardDistribution::gaussian(truth.mu[0], truth.var[0])
            .map_err(|e| TheoryError::InvalidParams(e.to_string()))?,
        RewardDistribution::gaussian(truth.mu[1], truth.var[1])
            .map_err(|e| TheoryError::InvalidParams(e.to_string()))?,
    ];
    m_grid
        .iter()
        .map(|&m| {
            let horizon = horizon_multiple * m;
            let reference = EtcGaussianParams::new(truth.mu, truth.var, m, horizon)?;
            let policy = PolicySpec::Etc { m };
            let outcomes: Vec<Option<[f64; 2]>> = (0..replications as u64)
                .into_par_iter()
                .map(|r| {
                    let log = run_experiment(
                        2,
                        horizon,
                        &policy,
                        &arms,
                        derive_path(seed, &[m as u64, r]),
                    )?;
                    let s = summarize(&log);
                    let var = [s.arms[0].variance, s.arms[1].variance];
                    if var.contains(&0.0) {
                        return Ok(None);
                    }
                    let mu = [
                        s.arms[0].mean.expect("pulled"),
                        s.arms[1].mean.expect("pulled"),
                    ];
                    let hat = EtcGaussianParams {
                        mu,
                        var,
                        m,
                        horizon,
                    };
                    Ok(Some([
                        log_bias_ratio(&hat, &reference, 0)?,
                        log_bias_ratio(&hat, &reference, 1)?,
                    ]))
                })
                .collect::<Result<_, TheoryError>>()?;
            let excluded = outcomes.iter().filter(|o| o.is_none()).count();
            let kept: Vec<[f64; 2]> = outcomes.into_iter().flatten().collect();
            let arms = [0, 1]
                .map(|k| RatioSummary::from_ratios(kept.iter().map(|r| r[k]).collect(), excluded));
            Ok(PlugInRateRow { m, horizon, arms })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRateRow {
    pub m: usize,
    pub horizon: usize,
    pub ratio: RatioSummary,
}

/// Bootstrap-world against real-world decay rate of the arm-1 bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRateReport {
    /// `Λ*(μ₂)` of the true arm-1 law.
    pub rate: f64,
    /// `(μ₁ − μ₂)²/(2σ₁²) / Λ*(μ₂)`, the limit of the ratio.
    pub limit: f64,
    /// `a²/σ₁²`.
    pub bound: f64,
    pub rows: Vec<BootstrapRateRow>,
    /// Set when even the lower quartile at the largest `m` exceeds the bound.
    pub bound_violated: bool,
}

/// For each `m`, simulates ETC (`T = horizon_multiple · m`) with arm 2
/// paying `μ₂` deterministically and summarises
/// `Λ̂*/Λ* = ((μ̂₁ − μ₂)²/(2σ̂₁²)) / Λ*(μ₂)`.
pub fn bootstrap_rate_check(
    d: &RewardDistribution,
    mu2: f64,
    m_grid: &[usize],
    horizon_multiple: usize,
    replications: usize,
    seed: u64,
) -> Result<BootstrapRateReport, TheoryError> {
    if horizon_multiple < 2 {
        return Err(TheoryError::InvalidParams(
            "the horizon multiple must be at least 2".into(),
        ));
    }
    let (rate, _) = legendre_fenchel(d, mu2)?;
    if rate == 0.0 {
        return Err(TheoryError::OutOfRange(format!(
            "threshold {mu2} equals the mean"
        )));
    }
    let sigma2 = d.variance();
    let gap = d.mean() - mu2;
    let arms = [
        d.clone(),
        RewardDistribution::gaussian(mu2, 0.0)
            .map_err(|e| TheoryError::InvalidParams(e.to_string()))?,
    ];
    let rows = m_grid
        .iter()
        .map(|&m| {
            let horizon = horizon_multiple * m;
            let policy = PolicySpec::Etc { m };
            let outcomes: Vec<Option<f64>> = (0..replications as u64)
                .into_par_iter()
                .map(|r| {
                    let log = run_experiment(
                        2,
                        horizon,
                        &policy,
                        &arms,
                        derive_path(seed, &[m as u64, r]),
                    )?;
                    let s = &summarize(&log).arms[0];
                    if s.variance == 0.0 {
                        return Ok(None);
                    }
                    let diff = s.mean.expect("pulled") - mu2;
                    Ok(Some(diff * diff / (2.0 * s.variance) / rate))
                })
                .collect::<Result<_, TheoryError>>()?;
            let excluded = outcomes.iter().filter(|o| o.is_none()).count();
            Ok(BootstrapRateRow {
                m,
                horizon,
                ratio: RatioSummary::from_ratios(
                    outcomes.into_iter().flatten().collect(),
                    excluded,
                ),
            })
        })
        .collect::<Result<Vec<_>, TheoryError>>()?;
    let bound = d.variance_proxy() / sigma2;
    let bound_violated = rows.last().is_some_and(|r| r.ratio.quantiles[1] > bound);
    Ok(BootstrapRateReport {
        rate,
        limit: gap * gap / (2.0 * sigma2) / rate,
        bound,
        rows,
        bound_violated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_summary_statistics() {
        let s = RatioSummary::from_ratios(vec![1.05, 0.8, 1.0, 1.2, 0.95], 2);
        assert_eq!(s.used, 5);
        assert_eq!(s.excluded, 2);
        assert_eq!(s.median(), 1.0);
        assert!((s.median_abs_deviation - 0.05).abs() < 1e-12);
        assert!((s.within_tenth - 0.6).abs() < 1e-12);
    }

    #[test]
    fn plug_in_rate_is_reproducible_and_counts_replications() {
        let truth = EtcGaussianParams::new([0.0, 2.0], [1.0, 1.0], 10, 40).unwrap();
        let a = plug_in_rate_experiment(&truth, &[10, 20], 4, 50, 5).unwrap();
        let b = plug_in_rate_experiment(&truth, &[10, 20], 4, 50, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1].horizon, 80);
        for row in &a {
            for arm in &row.arms {
                assert_eq!(arm.used + arm.excluded, 50);
            }
        }
    }

    #[test]
    fn plug_in_rate_excludes_single_pull_arms() {
        let truth = EtcGaussianParams::new([0.0, 2.0], [1.0, 1.0], 1, 4).unwrap();
        let rows = plug_in_rate_experiment(&truth, &[1], 4, 20, 6).unwrap();
        // the uncommitted arm always has one observation
        assert_eq!(rows[0].arms[0].excluded, 20);
    }

    #[test]
    fn bootstrap_rate_gaussian_limits() {
        let d = RewardDistribution::gaussian(1.0, 1.0).unwrap();
        let report = bootstrap_rate_check(&d, 1.5, &[200], 4, 200, 7).unwrap();
        assert!((report.limit - 1.0).abs() < 1e-9);
        assert!((report.bound - 1.0).abs() < 1e-12);
        assert!((report.rows[0].ratio.median() - 1.0).abs() < 0.2);
    }

    #[test]
    fn bootstrap_rate_bernoulli_limits() {
        let d = RewardDistribution::bernoulli(0.3).unwrap();
        let report = bootstrap_rate_check(&d, 0.6, &[100], 4, 50, 8).unwrap();
        assert!((report.limit - 0.09 / 0.42 / report.rate).abs() < 1e-12);
        assert!((report.limit - 1.116).abs() < 1e-3);
        assert!((report.bound - 0.25 / 0.21).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_rate_rejects_degenerate_law() {
        let d = RewardDistribution::gaussian(1.0, 0.0).unwrap();
        assert!(matches!(
            bootstrap_rate_check(&d, 1.5, &[10], 4, 10, 1),
            Err(TheoryError::OutOfRange(_))
        ));
    }
}
