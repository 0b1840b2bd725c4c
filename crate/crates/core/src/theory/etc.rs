//! Explore-then-commit bias: the exact identity and the two-arm Gaussian
//! closed form.
//!
//! With two arms explored `m` times each, arm 1 is committed when
//! `X̄₁ ≥ X̄₂` (ties go to the lower index) and arm 2 when `X̄₂ > X̄₁`. The
//! bias of arm `k` is `((T − 2m)/(T − m)) · E[(μ_k − X̄_k) 1{k committed}]`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::large_deviations::detect_lattice;
use super::quadrature::integrate;
use super::{exploitation_factor, TheoryError};
use crate::distributions::RewardDistribution;
use crate::policies::{normal_cdf, PolicySpec};
use crate::rng::derive_seed;
use crate::simulator::{run_experiment, summarize};

/// Largest number of atoms an enumerated sample-mean law may have.
pub const ENUMERATION_CAP: usize = 10_000_000;

const QUADRATURE_TOL: f64 = 1e-10;

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Two Gaussian arms explored `m` times each over a horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtcGaussianParams {
    pub mu: [f64; 2],
    pub var: [f64; 2],
    pub m: usize,
    pub horizon: usize,
}

impl EtcGaussianParams {
    pub fn new(mu: [f64; 2], var: [f64; 2], m: usize, horizon: usize) -> Result<Self, TheoryError> {
        let p = Self {
            mu,
            var,
            m,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    /// Zero variances are allowed as long as the pair is not fully degenerate.
    pub fn validate(&self) -> Result<(), TheoryError> {
        if !self.mu.iter().all(|x| x.is_finite()) {
            return Err(TheoryError::InvalidParams("means must be finite".into()));
        }
        if !self.var.iter().all(|v| v.is_finite() && *v >= 0.0) || self.var[0] + self.var[1] <= 0.0
        {
            return Err(TheoryError::InvalidParams(format!(
                "variances must be non-negative with a positive sum, got {:?}",
                self.var
            )));
        }
        if self.m == 0 || self.horizon < 2 * self.m {
            return Err(TheoryError::InvalidParams(format!(
                "need m ≥ 1 and T ≥ 2m, got m = {}, T = {}",
                self.m, self.horizon
            )));
        }
        Ok(())
    }

    fn pooled_variance(&self) -> f64 {
        self.var[0] + self.var[1]
    }
}

/// `−((T−2m)/(T−m)) · σ_k²/sqrt(2π(σ₁²+σ₂²)m) · exp(−m(μ₁−μ₂)²/(2(σ₁²+σ₂²)))`.
/// `arm` is 0 or 1.
pub fn etc_bias_gaussian(p: &EtcGaussianParams, arm: usize) -> f64 {
    let m = p.m as f64;
    let s2 = p.pooled_variance();
    let gap = p.mu[0] - p.mu[1];
    -exploitation_factor(p.m, p.horizon, 2) * p.var[arm] / (2.0 * PI * s2 * m).sqrt()
        * (-m * gap * gap / (2.0 * s2)).exp()
}

/// `g_k = log |bias_k|`, evaluated in log space so it stays finite when the
/// bias itself underflows.
pub fn log_bias_g(p: &EtcGaussianParams, arm: usize) -> Result<f64, TheoryError> {
    if p.horizon == 2 * p.m || p.var[arm] == 0.0 {
        return Err(TheoryError::LogOfZero);
    }
    let m = p.m as f64;
    let s2 = p.pooled_variance();
    let gap = p.mu[0] - p.mu[1];
    Ok(
        exploitation_factor(p.m, p.horizon, 2).ln() + p.var[arm].ln()
            - 0.5 * (2.0 * PI * s2 * m).ln()
            - m * gap * gap / (2.0 * s2),
    )
}

/// `g_k(estimate) / g_k(truth)`.
pub fn log_bias_ratio(
    estimate: &EtcGaussianParams,
    truth: &EtcGaussianParams,
    arm: usize,
) -> Result<f64, TheoryError> {
    Ok(log_bias_g(estimate, arm)? / log_bias_g(truth, arm)?)
}

/// Law of the mean of `m` i.i.d. draws.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanLaw {
    /// `(value, probability)` pairs in increasing order of value.
    Atoms(Vec<(f64, f64)>),
    Normal {
        mean: f64,
        sd: f64,
    },
}

/// Exact law of `X̄_m`: normal for Gaussian arms, enumerated on the lattice
/// for discrete ones.
pub fn sample_mean_law(d: &RewardDistribution, m: usize) -> Result<MeanLaw, TheoryError> {
    let Some(atoms) = d.atoms() else {
        let sd = (d.variance() / m as f64).sqrt();
        return Ok(if sd == 0.0 {
            MeanLaw::Atoms(vec![(d.mean(), 1.0)])
        } else {
            MeanLaw::Normal { mean: d.mean(), sd }
        });
    };
    if atoms.len() == 1 {
        return Ok(MeanLaw::Atoms(vec![(atoms[0].0, 1.0)]));
    }
    let lattice = detect_lattice(d).ok_or_else(|| {
        TheoryError::Enumeration("the support is not on a detectable lattice".into())
    })?;
    let width = *lattice.steps.last().expect("at least two atoms") as usize;
    let size = width
        .checked_mul(m)
        .and_then(|s| s.checked_add(1))
        .filter(|&s| s <= ENUMERATION_CAP)
        .ok_or_else(|| {
            TheoryError::Enumeration(format!("more than {ENUMERATION_CAP} sample-mean atoms"))
        })?;
    let mut pmf = vec![0.0; size];
    pmf[0] = 1.0;
    let mut filled = 0;
    for _ in 0..m {
        for j in (0..=filled).rev() {
            let mass = pmf[j];
            pmf[j] = 0.0;
            if mass == 0.0 {
                continue;
            }
            for (&step, &(_, p)) in lattice.steps.iter().zip(&atoms) {
                pmf[j + step as usize] += mass * p;
            }
        }
        filled += width;
    }
    let mf = m as f64;
    Ok(MeanLaw::Atoms(
        pmf.into_iter()
            .enumerate()
            .map(|(j, p)| (lattice.origin + lattice.span * j as f64 / mf, p))
            .collect(),
    ))
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// `(P(Y ≤ x), P(Y > x))` when `inclusive`, else `(P(Y < x), P(Y ≥ x))`, for
/// the opposing arm's mean law. Values within rounding distance count as
/// ties. Both halves are returned so that neither is formed by cancellation.
fn opposing_split(
    law: &MeanLaw,
    cumulative: &[f64],
    tails: &[f64],
    x: f64,
    inclusive: bool,
) -> (f64, f64) {
    match law {
        MeanLaw::Normal { mean, sd } => (normal_cdf((x - mean) / sd), normal_cdf((mean - x) / sd)),
        MeanLaw::Atoms(atoms) => {
            let idx = if inclusive {
                atoms.partition_point(|&(y, _)| y < x || same_value(y, x))
            } else {
                atoms.partition_point(|&(y, _)| y < x && !same_value(y, x))
            };
            let below = if idx == 0 { 0.0 } else { cumulative[idx - 1] };
            (below, tails.get(idx).copied().unwrap_or(0.0))
        }
    }
}

/// Exact ETC bias of arm `arm` (0 or 1) for two arbitrary supported laws.
///
/// Discrete arms are enumerated exactly; Gaussian-against-Gaussian uses
/// adaptive quadrature over ±10 pooled standard deviations; a Gaussian arm
/// against a discrete one integrates piecewise in closed form.
pub fn etc_bias_general(
    arms: &[RewardDistribution; 2],
    m: usize,
    horizon: usize,
    arm: usize,
) -> Result<f64, TheoryError> {
    if m == 0 || horizon < 2 * m {
        return Err(TheoryError::InvalidParams(format!(
            "need m ≥ 1 and T ≥ 2m, got m = {m}, T = {horizon}"
        )));
    }
    if arm > 1 {
        return Err(TheoryError::InvalidParams(format!(
            "arm index {arm} out of range for two arms"
        )));
    }
    let factor = exploitation_factor(m, horizon, 2);
    if factor == 0.0 {
        return Ok(0.0);
    }
    let own = sample_mean_law(&arms[arm], m)?;
    let other = sample_mean_law(&arms[1 - arm], m)?;
    let mu = arms[arm].mean();
    // arm 1 wins ties
    let inclusive = arm == 0;
    let (cumulative, tails): (Vec<f64>, Vec<f64>) = match &other {
        MeanLaw::Atoms(atoms) => {
            let running = |acc: &mut f64, p: f64| {
                *acc += p;
                Some(*acc)
            };
            let up = atoms
                .iter()
                .scan(0.0, |acc, &(_, p)| running(acc, p))
                .collect();
            let mut down: Vec<f64> = atoms
                .iter()
                .rev()
                .scan(0.0, |acc, &(_, p)| running(acc, p))
                .collect();
            down.reverse();
            (up, down)
        }
        MeanLaw::Normal { .. } => (Vec::new(), Vec::new()),
    };
    let expectation = match (&own, &other) {
        (MeanLaw::Atoms(atoms), _) => {
            let split: Vec<(f64, f64)> = atoms
                .iter()
                .map(|&(x, _)| opposing_split(&other, &cumulative, &tails, x, inclusive))
                .collect();
            let commit_mass: f64 = atoms
                .iter()
                .zip(&split)
                .map(|(&(_, p), &(w, _))| p * w)
                .sum();
            // Σ p (μ − x) = 0, so the sum over the losing event is the same
            // number with the opposite sign; use whichever side is smaller.
            if commit_mass <= 0.5 {
                atoms
                    .iter()
                    .zip(&split)
                    .map(|(&(x, p), &(w, _))| p * (mu - x) * w)
                    .sum()
            } else {
                -atoms
                    .iter()
                    .zip(&split)
                    .map(|(&(x, p), &(_, w))| p * (mu - x) * w)
                    .sum::<f64>()
            }
        }
        (MeanLaw::Normal { mean, sd }, MeanLaw::Normal { mean: om, sd: osd }) => {
            let pooled = (sd * sd + osd * osd).sqrt();
            let integrand = |x: f64| {
                let z = (x - mean) / sd;
                (mean - x) * std_normal_pdf(z) / sd * normal_cdf((x - om) / osd)
            };
            // split at every own standard deviation so no piece misses the bulk
            let (lo, hi) = (mean - 10.0 * pooled, mean + 10.0 * pooled);
            let mut cuts = vec![lo];
            cuts.extend(
                (-10..=10)
                    .map(|j| mean + j as f64 * sd)
                    .filter(|&c| c > lo && c < hi),
            );
            cuts.push(hi);
            let tol = QUADRATURE_TOL / (cuts.len() - 1) as f64;
            cuts.windows(2)
                .map(|w| integrate(integrand, w[0], w[1], tol))
                .sum()
        }
        (MeanLaw::Normal { mean, sd }, MeanLaw::Atoms(atoms)) => {
            // ∫_a^b (μ − x) φ_s(x − μ) dx = s (φ(z_b) − φ(z_a)); the weight is
            // constant between consecutive opposing atoms.
            let phi_at = |y: f64| std_normal_pdf((y - mean) / sd);
            let mut total = 0.0;
            for (j, &(y, _)) in atoms.iter().enumerate() {
                let next = atoms.get(j + 1).map_or(0.0, |&(z, _)| phi_at(z));
                total += cumulative[j] * sd * (next - phi_at(y));
            }
            total
        }
    };
    Ok(factor * expectation)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

/// Simulated ETC bias `E[μ̂_k] − μ_k` for every arm, the fallback when exact
/// enumeration is unavailable.
pub fn etc_bias_monte_carlo(
    arms: &[RewardDistribution],
    m: usize,
    horizon: usize,
    replications: usize,
    seed: u64,
) -> Result<Vec<McEstimate>, TheoryError> {
    let policy = PolicySpec::Etc { m };
    policy.validate(arms.len(), horizon)?;
    if replications < 2 {
        return Err(TheoryError::InvalidParams(
            "at least two replications are needed".into(),
        ));
    }
    let errors: Vec<Vec<f64>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let log = run_experiment(arms.len(), horizon, &policy, arms, derive_seed(seed, r))?;
            Ok(summarize(&log)
                .arms
                .iter()
                .zip(arms)
                .map(|(s, d)| s.mean.expect("ETC pulls every arm") - d.mean())
                .collect())
        })
        .collect::<Result<_, TheoryError>>()?;
    Ok((0..arms.len())
        .map(|k| McEstimate::from_samples(&errors.iter().map(|e| e[k]).collect::<Vec<_>>()))
        .collect())
}
