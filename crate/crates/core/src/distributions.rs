//! Reward laws: sampling, moments and log-moment-generating functions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
}

/// The parametric family of a reward law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Law {
    Gaussian { mean: f64, variance: f64 },
    Bernoulli { p: f64 },
    FiniteDiscrete { support: Vec<f64>, probs: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    #[serde(flatten)]
    law: Law,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variance_proxy: Option<f64>,
}

/// A validated reward law, optionally annotated with a sub-Gaussian
/// variance proxy `a²`.
///
/// Serialized as a tagged record, e.g.
/// `{"type":"gaussian","mean":1.0,"variance":1.0}` or
/// `{"type":"bernoulli","p":0.3,"variance_proxy":0.25}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct RewardDistribution {
    law: Law,
    variance_proxy: Option<f64>,
}

impl TryFrom<RawDistribution> for RewardDistribution {
    type Error = DistributionError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        let d = Self::from_law(raw.law)?;
        match raw.variance_proxy {
            Some(a2) => d.with_variance_proxy(a2),
            None => Ok(d),
        }
    }
}

impl From<RewardDistribution> for RawDistribution {
    fn from(d: RewardDistribution) -> Self {
        RawDistribution {
            law: d.law,
            variance_proxy: d.variance_proxy,
        }
    }
}

fn invalid(msg: impl Into<String>) -> DistributionError {
    DistributionError::InvalidParameter(msg.into())
}

impl RewardDistribution {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self, DistributionError> {
        Self::from_law(Law::Gaussian { mean, variance })
    }

    pub fn bernoulli(p: f64) -> Result<Self, DistributionError> {
        Self::from_law(Law::Bernoulli { p })
    }

    pub fn finite_discrete(support: Vec<f64>, probs: Vec<f64>) -> Result<Self, DistributionError> {
        Self::from_law(Law::FiniteDiscrete { support, probs })
    }

    pub fn from_law(law: Law) -> Result<Self, DistributionError> {
        match &law {
            Law::Gaussian { mean, variance } => {
                if !mean.is_finite() {
                    return Err(invalid("gaussian mean must be finite"));
                }
                if !(variance.is_finite() && *variance >= 0.0) {
                    return Err(invalid(format!(
                        "gaussian variance must be >= 0, got {variance}"
                    )));
                }
            }
            Law::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(invalid(format!("bernoulli p must lie in [0, 1], got {p}")));
                }
            }
            Law::FiniteDiscrete { support, probs } => {
                if support.is_empty() {
                    return Err(invalid("finite discrete support is empty"));
                }
                if support.len() != probs.len() {
                    return Err(invalid("support and probs differ in length"));
                }
                if support.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("support points must be finite"));
                }
                if support.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("support must be strictly increasing"));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(invalid("probabilities must be non-negative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("probabilities sum to {total}, not 1")));
                }
            }
        }
        Ok(Self {
            law,
            variance_proxy: None,
        })
    }

    /// Attaches a variance proxy; it must dominate the variance.
    pub fn with_variance_proxy(mut self, a2: f64) -> Result<Self, DistributionError> {
        if !(a2.is_finite() && a2 >= 0.0) || a2 < self.variance() * (1.0 - 1e-12) {
            return Err(invalid(format!(
                "variance proxy {a2} must be finite and at least the variance {}",
                self.variance()
            )));
        }
        self.variance_proxy = Some(a2);
        Ok(self)
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    /// Support points carrying positive mass, with their probabilities.
    /// `None` for the Gaussian family.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match &self.law {
            Law::Gaussian { .. } => None,
            Law::Bernoulli { p } => Some(
                [(0.0, 1.0 - p), (1.0, *p)]
                    .into_iter()
                    .filter(|&(_, q)| q > 0.0)
                    .collect(),
            ),
            Law::FiniteDiscrete { support, probs } => Some(
                support
                    .iter()
                    .zip(probs)
                    .filter(|(_, &q)| q > 0.0)
                    .map(|(&x, &q)| (x, q))
                    .collect(),
            ),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.law {
            Law::Gaussian { mean, .. } => *mean,
            Law::Bernoulli { p } => *p,
            Law::FiniteDiscrete { support, probs } => {
                support.iter().zip(probs).map(|(x, p)| x * p).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.law {
            Law::Gaussian { variance, .. } => *variance,
            Law::Bernoulli { p } => p * (1.0 - p),
            Law::FiniteDiscrete { support, probs } => {
                let mu = self.mean();
                support
                    .iter()
                    .zip(probs)
                    .map(|(x, p)| p * (x - mu).powi(2))
                    .sum()
            }
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self.atoms() {
            None => self.variance() == 0.0,
            Some(atoms) => atoms.len() == 1,
        }
    }

    /// Closed hull of the support; infinite for a non-degenerate Gaussian.
    pub fn support_bounds(&self) -> (f64, f64) {
        match self.atoms() {
            None if self.variance() == 0.0 => (self.mean(), self.mean()),
            None => (f64::NEG_INFINITY, f64::INFINITY),
            Some(atoms) => (atoms[0].0, atoms[atoms.len() - 1].0),
        }
    }

    /// The annotated `a²`, or the default: `σ²` for Gaussian laws and the
    /// Hoeffding proxy `(u − l)²/4` for bounded laws on `[l, u]`.
    pub fn variance_proxy(&self) -> f64 {
        if let Some(a2) = self.variance_proxy {
            return a2;
        }
        match &self.law {
            Law::Gaussian { variance, .. } => *variance,
            _ => {
                let (l, u) = self.support_bounds();
                (u - l).powi(2) / 4.0
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match &self.law {
            Law::Gaussian { mean, variance } => mean + variance.sqrt() * rng.standard_normal(),
            Law::Bernoulli { p } => {
                if rng.uniform() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Law::FiniteDiscrete { support, probs } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (x, p) in support.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *x;
                    }
                }
                // u landed in the rounding gap above the cumulative sum
                let last = probs
                    .iter()
                    .rposition(|&p| p > 0.0)
                    .unwrap_or(support.len() - 1);
                support[last]
            }
        }
    }

    /// `η(h) = log E[exp(hX)]`.
    pub fn log_mgf(&self, h: f64) -> f64 {
        if h == 0.0 {
            return 0.0;
        }
        match &self.law {
            Law::Gaussian { mean, variance } => mean * h + 0.5 * variance * h * h,
            _ => {
                let atoms = self.atoms().expect("discrete law has atoms");
                log_sum_exp(atoms.iter().map(|&(x, p)| p.ln() + h * x))
            }
        }
    }

    /// `(η'(h), η''(h))`: mean and variance of the exponentially tilted law.
    pub fn log_mgf_derivatives(&self, h: f64) -> (f64, f64) {
        match &self.law {
            Law::Gaussian { mean, variance } => (mean + variance * h, *variance),
            _ => {
                let atoms = self.atoms().expect("discrete law has atoms");
                let eta = self.log_mgf(h);
                let weights: Vec<f64> = atoms
                    .iter()
                    .map(|&(x, p)| (p.ln() + h * x - eta).exp())
                    .collect();
                let first: f64 = atoms.iter().zip(&weights).map(|(&(x, _), w)| w * x).sum();
                let second: f64 = atoms
                    .iter()
                    .zip(&weights)
                    .map(|(&(x, _), w)| w * (x - first).powi(2))
                    .sum();
                (first, second)
            }
        }
    }
}

/// Max-shifted `log Σ exp(t_i)`.
pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_variants() -> Vec<RewardDistribution> {
        vec![
            RewardDistribution::gaussian(1.0, 1.0).unwrap(),
            RewardDistribution::gaussian(-0.5, 2.5).unwrap(),
            RewardDistribution::bernoulli(0.3).unwrap(),
            RewardDistribution::finite_discrete(vec![-1.0, 0.5, 2.0], vec![0.2, 0.5, 0.3]).unwrap(),
        ]
    }

    #[test]
    fn degenerate_draws_are_exact() {
        let mut rng = RngStream::new(3, 0);
        let g = RewardDistribution::gaussian(5.0, 0.0).unwrap();
        let b = RewardDistribution::bernoulli(1.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(g.sample(&mut rng), 5.0);
            assert_eq!(b.sample(&mut rng), 1.0);
        }
    }

    #[test]
    fn moments_match_monte_carlo() {
        let n = 1_000_000;
        for d in all_variants() {
            let mut rng = RngStream::new(11, 0);
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let fourth = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
            let se_mean = (d.variance() / n as f64).sqrt();
            let se_var = ((fourth - var * var) / n as f64).sqrt();
            assert!(
                (mean - d.mean()).abs() < 4.0 * se_mean,
                "{d:?}: mean {mean}"
            );
            assert!(
                (var - d.variance()).abs() < 4.0 * se_var,
                "{d:?}: var {var}"
            );
        }
    }

    #[test]
    fn gaussian_unit_sample_mean_within_clt_bound() {
        let d = RewardDistribution::gaussian(1.0, 1.0).unwrap();
        let mut rng = RngStream::new(2024, 0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.004);
    }

    #[test]
    fn sampling_is_deterministic() {
        for d in all_variants() {
            let mut a = RngStream::new(77, 0);
            let mut b = RngStream::new(77, 0);
            for _ in 0..500 {
                assert_eq!(d.sample(&mut a).to_bits(), d.sample(&mut b).to_bits());
            }
        }
    }

    #[test]
    fn log_mgf_closed_forms() {
        let g = RewardDistribution::gaussian(1.3, 0.7).unwrap();
        for h in [-2.0, -0.3, 0.0, 0.8, 3.0] {
            assert!((g.log_mgf(h) - (1.3 * h + 0.35 * h * h)).abs() < 1e-14);
        }
        for d in all_variants() {
            assert_eq!(d.log_mgf(0.0), 0.0);
        }
        let b = RewardDistribution::bernoulli(0.3).unwrap();
        let h = 3.5f64.ln();
        assert!((b.log_mgf(h) - 1.75f64.ln()).abs() < 1e-14);
        assert!((b.log_mgf(h) - 0.559616).abs() < 1e-6);
    }

    #[test]
    fn bernoulli_log_mgf_matches_monte_carlo() {
        let b = RewardDistribution::bernoulli(0.3).unwrap();
        let h = 3.5f64.ln();
        let mut rng = RngStream::new(8, 0);
        let n = 1_000_000;
        let vals: Vec<f64> = (0..n).map(|_| (h * b.sample(&mut rng)).exp()).collect();
        let m = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((m - 1.75).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn derivative_examples() {
        let g = RewardDistribution::gaussian(1.0, 1.0).unwrap();
        assert_eq!(g.log_mgf_derivatives(0.7), (1.7, 1.0));
        let b = RewardDistribution::bernoulli(0.3).unwrap();
        let (d1, d2) = b.log_mgf_derivatives(3.5f64.ln());
        assert!((d1 - 0.6).abs() < 1e-12);
        assert!((d2 - 0.24).abs() < 1e-12);
        for d in all_variants() {
            let (m, v) = d.log_mgf_derivatives(0.0);
            assert!((m - d.mean()).abs() < 1e-12);
            assert!((v - d.variance()).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_second_derivative_is_zero() {
        let d = RewardDistribution::finite_discrete(vec![2.0], vec![1.0]).unwrap();
        assert_eq!(d.log_mgf_derivatives(1.5).1, 0.0);
        assert!(d.is_degenerate());
    }

    #[test]
    fn large_tilts_do_not_overflow() {
        let d = RewardDistribution::finite_discrete(vec![0.0, 10.0], vec![0.5, 0.5]).unwrap();
        let eta = d.log_mgf(500.0);
        assert!((eta - (5000.0 + 0.5f64.ln())).abs() < 1e-9);
        let (d1, _) = d.log_mgf_derivatives(500.0);
        assert!((d1 - 10.0).abs() < 1e-9);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(RewardDistribution::gaussian(0.0, -1.0).is_err());
        assert!(RewardDistribution::bernoulli(1.2).is_err());
        assert!(RewardDistribution::finite_discrete(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(RewardDistribution::finite_discrete(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(RewardDistribution::finite_discrete(vec![], vec![]).is_err());
        assert!(RewardDistribution::bernoulli(0.3)
            .unwrap()
            .with_variance_proxy(0.1)
            .is_err());
    }

    #[test]
    fn variance_proxy_defaults() {
        assert_eq!(
            RewardDistribution::bernoulli(0.3).unwrap().variance_proxy(),
            0.25
        );
        assert_eq!(
            RewardDistribution::gaussian(0.0, 2.0)
                .unwrap()
                .variance_proxy(),
            2.0
        );
        let d = RewardDistribution::finite_discrete(vec![-1.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(d.variance_proxy(), 4.0);
    }

    #[test]
    fn json_round_trip() {
        let d: RewardDistribution =
            serde_json::from_str(r#"{"type":"gaussian","mean":1.0,"variance":1.0}"#).unwrap();
        assert_eq!(d, RewardDistribution::gaussian(1.0, 1.0).unwrap());
        let b: RewardDistribution =
            serde_json::from_str(r#"{"type":"bernoulli","p":0.3,"variance_proxy":0.25}"#).unwrap();
        assert_eq!(b.variance_proxy(), 0.25);
        let back: RewardDistribution =
            serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back, b);
        assert!(
            serde_json::from_str::<RewardDistribution>(r#"{"type":"bernoulli","p":2.0}"#).is_err()
        );
    }

    proptest! {
        #[test]
        fn log_mgf_is_convex(h1 in -5.0f64..5.0, h2 in -5.0f64..5.0, lam in 0.01f64..0.99) {
            for d in all_variants() {
                let mid = d.log_mgf(lam * h1 + (1.0 - lam) * h2);
                let chord = lam * d.log_mgf(h1) + (1.0 - lam) * d.log_mgf(h2);
                prop_assert!(mid <= chord + 1e-10);
            }
        }

        #[test]
        fn first_derivative_matches_finite_differences(h in -5.0f64..5.0) {
            let step = 1e-5;
            for d in all_variants() {
                let fd = (d.log_mgf(h + step) - d.log_mgf(h - step)) / (2.0 * step);
                let (exact, _) = d.log_mgf_derivatives(h);
                prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{:?} h={} fd={} exact={}", d, h, fd, exact);
            }
        }
    }
}
