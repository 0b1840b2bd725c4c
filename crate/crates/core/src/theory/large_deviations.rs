//! Legendre-Fenchel transforms and Bahadur-Rao constants.
//!
//! For arm 1 with log-MGF `η` and a threshold `μ₂`, the tilt `ζ` solves
//! `η'(ζ) = μ₂` and the rate is `Λ*(μ₂) = ζμ₂ − η(ζ)`. The probability that the
//! `m`-sample mean crosses `μ₂` behaves like
//! `c₀ e^{−mΛ*} / sqrt(2π m η''(ζ))`, with `c₀` depending on whether the law
//! lives on a lattice.

use serde::{Deserialize, Serialize};

use super::etc::{sample_mean_law, MeanLaw};
use super::{exploitation_factor, TheoryError};
use crate::distributions::RewardDistribution;
use crate::policies::normal_cdf;

const MAX_ITERATIONS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-10;
const MAX_DENOMINATOR: u128 = 1_000_000;
const MAX_COMMON_DENOMINATOR: u128 = 1_000_000_000_000;

/// Arithmetic progression `origin + span·j` carrying every atom of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: f64,
    pub span: f64,
    /// Lattice index `j` of each atom, in support order.
    pub steps: Vec<u64>,
}

impl Lattice {
    /// Whether `x` is a point of the `m`-sample-mean lattice
    /// `origin + (span/m)·j`.
    pub fn mean_lattice_contains(&self, x: f64, m: usize) -> bool {
        let j = (x - self.origin) * m as f64 / self.span;
        (j - j.round()).abs() <= 1e-9 * j.abs().max(1.0)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Best continued-fraction approximation `p/q` of `v > 0` with `q ≤ max_den`,
/// accepted only if it reproduces `v` to rounding accuracy.
fn rationalize(v: f64, max_den: u128) -> Option<(u128, u128)> {
    let tol = 1e-13 * v.max(1.0);
    let (mut h0, mut h1) = (0u128, 1u128);
    let (mut k0, mut k1) = (1u128, 0u128);
    let mut x = v;
    for _ in 0..64 {
        if !(x.is_finite() && x < 1e15) {
            return None;
        }
        let a = x.floor() as u128;
        let (h, k) = (a * h1 + h0, a * k1 + k0);
        if k > max_den {
            return None;
        }
        if (h as f64 / k as f64 - v).abs() <= tol {
            return Some((h, k));
        }
        (h0, h1, k0, k1) = (h1, h, k1, k);
        x = 1.0 / (x - a as f64);
    }
    None
}

/// The coarsest lattice containing the support, found from a rational
/// representation (denominators up to 10⁶) of the support differences
/// relative to the smallest one. `None` for Gaussian and degenerate laws, or
/// when no such representation exists.
pub fn detect_lattice(d: &RewardDistribution) -> Option<Lattice> {
    let atoms = d.atoms()?;
    if atoms.len() < 2 {
        return None;
    }
    let origin = atoms[0].0;
    let base = atoms[1].0 - origin;
    let fractions: Vec<(u128, u128)> = atoms[1..]
        .iter()
        .map(|&(x, _)| rationalize((x - origin) / base, MAX_DENOMINATOR))
        .collect::<Option<_>>()?;
    let mut common = 1u128;
    for &(_, q) in &fractions {
        common = common / gcd(common, q) * q;
        if common > MAX_COMMON_DENOMINATOR {
            return None;
        }
    }
    let numerators: Vec<u128> = fractions.iter().map(|&(p, q)| p * (common / q)).collect();
    let g = numerators.iter().fold(0u128, |acc, &n| gcd(acc, n));
    let mut steps = vec![0u64];
    steps.extend(numerators.iter().map(|&n| (n / g) as u64));
    Some(Lattice {
        origin,
        span: base * g as f64 / common as f64,
        steps,
    })
}

/// `(Λ*(x), ζ)` with `η'(ζ) = x`, by safeguarded Newton on a bracket grown
/// geometrically from `[−1, 1]`.
pub fn legendre_fenchel(d: &RewardDistribution, x: f64) -> Result<(f64, f64), TheoryError> {
    let (l, u) = d.support_bounds();
    if d.is_degenerate() || !x.is_finite() || x <= l || x >= u {
        return Err(TheoryError::OutOfRange(format!("x = {x}")));
    }
    if x == d.mean() {
        return Ok((0.0, 0.0));
    }
    let slope = |h: f64| d.log_mgf_derivatives(h).0;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut expansions = 0;
    loop {
        let below = slope(lo) > x;
        let above = slope(hi) < x;
        if !below && !above {
            break;
        }
        if below {
            lo *= 2.0;
        }
        if above {
            hi *= 2.0;
        }
        expansions += 1;
        if expansions > MAX_ITERATIONS {
            return Err(TheoryError::NonConvergence {
                iterations: expansions,
            });
        }
    }
    let mut h = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let (first, second) = d.log_mgf_derivatives(h);
        let f = first - x;
        residual = f.abs();
        // polish well past the contract tolerance; Newton makes this cheap
        if residual <= 1e-14 * x.abs().max(1.0) {
            break;
        }
        if f < 0.0 {
            lo = h;
        } else {
            hi = h;
        }
        let newton = h - f / second;
        let next = if second > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == h {
            break;
        }
        h = next;
    }
    if residual > RESIDUAL_TOL {
        return Err(TheoryError::NonConvergence {
            iterations: MAX_ITERATIONS,
        });
    }
    Ok(((h * x - d.log_mgf(h)).max(0.0), h))
}

/// Large-deviation profile of arm 1's sample mean at the threshold `μ₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LDProfile {
    pub distribution: RewardDistribution,
    pub mean: f64,
    pub threshold: f64,
    pub zeta: f64,
    pub rate: f64,
    pub tilted_variance: f64,
    pub lattice: Option<Lattice>,
    /// Discrete law whose lattice could not be identified; the non-lattice
    /// constants are reported instead.
    pub lattice_undetected: bool,
    pub c0: f64,
    pub c1: f64,
    pub c_star: f64,
}

impl LDProfile {
    /// `e^{−mΛ*} / sqrt(2π m η''(ζ))`.
    pub fn prefactor(&self, m: usize) -> f64 {
        let m = m as f64;
        (-m * self.rate).exp() / (2.0 * std::f64::consts::PI * m * self.tilted_variance).sqrt()
    }

    /// Leading-order approximation of the crossing probability
    /// `P(X̄_m ≥ μ₂)` (or `≤` when `μ₂` is below the mean).
    pub fn tail_approximation(&self, m: usize) -> f64 {
        self.c0 * self.prefactor(m)
    }

    /// `J_m = −ζ² sqrt(2π m η''(ζ)) · m · e^{mΛ*}`, the normaliser of the
    /// tail expectation `E[(μ₂ − X̄_m) 1{X̄_m ≥ μ₂}]`.
    pub fn tail_expectation_scale(&self, m: usize) -> f64 {
        let mf = m as f64;
        -self.zeta * self.zeta * mf / self.prefactor(m)
    }

    /// Stated limit of `J_m · E[(μ₂ − X̄_m) 1{X̄_m ≥ μ₂}]`: `ζd e^{−ζd}/(1 − e^{−ζd})`
    /// for a lattice law with span `d`, 1 otherwise.
    pub fn tail_expectation_limit(&self) -> f64 {
        match &self.lattice {
            Some(l) => {
                let zd = self.zeta * l.span;
                zd * (-zd).exp() / (1.0 - (-zd).exp())
            }
            None => 1.0,
        }
    }

    /// Whether `μ₂` is a point of the `m`-sample-mean lattice; `None` for
    /// non-lattice laws.
    pub fn threshold_on_mean_lattice(&self, m: usize) -> Option<bool> {
        self.lattice
            .as_ref()
            .map(|l| l.mean_lattice_contains(self.threshold, m))
    }
}

/// Tilt, rate and Bahadur-Rao constants for `d` at the threshold `μ₂`.
pub fn bahadur_rao_constants(d: &RewardDistribution, mu2: f64) -> Result<LDProfile, TheoryError> {
    let mean = d.mean();
    if mu2 == mean {
        return Err(TheoryError::OutOfRange(format!(
            "threshold {mu2} equals the mean, so the crossing is not a rare event"
        )));
    }
    let (rate, zeta) = legendre_fenchel(d, mu2)?;
    let tilted_variance = d.log_mgf_derivatives(zeta).1;
    let lattice = detect_lattice(d);
    let lattice_undetected = lattice.is_none() && d.atoms().is_some();
    let z = zeta.abs();
    let (c0, c1) = match &lattice {
        Some(l) => {
            let decay = (-z * l.span).exp();
            (
                l.span / (1.0 - decay),
                -l.span * decay / ((1.0 - decay) * z),
            )
        }
        None => (1.0 / z, -1.0 / (zeta * zeta)),
    };
    Ok(LDProfile {
        distribution: d.clone(),
        mean,
        threshold: mu2,
        zeta,
        rate,
        tilted_variance,
        lattice,
        lattice_undetected,
        c0,
        c1,
        c_star: c0 * (mean - mu2).abs(),
    })
}

/// Leading-order ETC bias of arm 1 when arm 2 always pays `μ₂`:
/// `((T − 2m)/(T − m)) · e^{−mΛ*}/sqrt(2π m η''(ζ)) · (−c★)`.
pub fn etc_bias_asymptotic(
    d: &RewardDistribution,
    mu2: f64,
    m: usize,
    horizon: usize,
) -> Result<f64, TheoryError> {
    if m == 0 || horizon < 2 * m {
        return Err(TheoryError::InvalidParams(format!(
            "need m ≥ 1 and T ≥ 2m, got m = {m}, T = {horizon}"
        )));
    }
    let profile = bahadur_rao_constants(d, mu2)?;
    Ok(-exploitation_factor(m, horizon, 2) * profile.prefactor(m) * profile.c_star)
}

/// Exact upper-tail moments of the `m`-sample mean `X̄_m` at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMoments {
    /// `P(X̄_m ≥ μ₂)`.
    pub probability: f64,
    /// `E[(μ₂ − X̄_m) 1{X̄_m ≥ μ₂}]`, which is never positive.
    pub expectation: f64,
}

/// Tail moments by lattice enumeration, or in closed form for Gaussian laws.
/// Atoms within `1e-12` (relative) of `μ₂` count as reaching it.
pub fn exact_tail(d: &RewardDistribution, mu2: f64, m: usize) -> Result<TailMoments, TheoryError> {
    if m == 0 || !mu2.is_finite() {
        return Err(TheoryError::InvalidParams(format!(
            "need m ≥ 1 and a finite threshold, got m = {m}, μ₂ = {mu2}"
        )));
    }
    Ok(match sample_mean_law(d, m)? {
        MeanLaw::Atoms(atoms) => {
            let tol = 1e-12 * (1.0 + mu2.abs());
            let (mut probability, mut expectation) = (0.0, 0.0);
            for (x, p) in atoms.into_iter().filter(|&(x, _)| x >= mu2 - tol) {
                probability += p;
                expectation += p * (mu2 - x);
            }
            TailMoments {
                probability,
                expectation,
            }
        }
        MeanLaw::Normal { mean, sd } => {
            let z = (mu2 - mean) / sd;
            let upper = normal_cdf(-z);
            let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            TailMoments {
                probability: upper,
                expectation: (mu2 - mean) * upper - sd * density,
            }
        }
    })
}
