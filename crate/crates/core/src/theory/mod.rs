//! Exact and asymptotic oracles for the explore-then-commit bias.
//!
//! [`etc`] holds the bias identity (exact enumeration or quadrature) and the
//! two-arm Gaussian closed form; [`large_deviations`] holds the
//! Legendre-Fenchel transform and the Bahadur-Rao constants behind the
//! exponential decay of the bias; [`experiments`] runs the Monte Carlo checks
//! of the decay-rate results.

use thiserror::Error;

use crate::policies::ConfigError;

pub mod etc;
pub mod experiments;
pub mod large_deviations;
pub mod quadrature;

pub use etc::{
    etc_bias_gaussian, etc_bias_general, etc_bias_monte_carlo, log_bias_g, log_bias_ratio,
    sample_mean_law, EtcGaussianParams, McEstimate, MeanLaw,
};
pub use experiments::{
    bootstrap_rate_check, plug_in_rate_experiment, BootstrapRateReport, BootstrapRateRow,
    PlugInRateRow, RatioSummary,
};
pub use large_deviations::{
    bahadur_rao_constants, detect_lattice, etc_bias_asymptotic, exact_tail, legendre_fenchel,
    LDProfile, Lattice, TailMoments,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("{0} lies outside the interior of the tilted-mean range")]
    OutOfRange(String),
    #[error("the ETC bias is exactly zero here, so its logarithm is undefined")]
    LogOfZero,
    #[error("root finding did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("exact enumeration unavailable: {0}; use the Monte Carlo estimate instead")]
    Enumeration(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Share of the horizon spent exploiting, `(T − mK)/(m + T − mK)`.
pub fn exploitation_factor(m: usize, horizon: usize, arms: usize) -> f64 {
    let tail = (horizon - m * arms) as f64;
    tail / (m as f64 + tail)
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn exploitation_share() {
        assert_eq!(exploitation_factor(10, 100, 2), 80.0 / 90.0);
        assert_eq!(exploitation_factor(10, 20, 2), 0.0);
        assert_eq!(exploitation_factor(10, 100, 4), 60.0 / 70.0);
    }
}
