//! Poisson concentration bounds for linear statistics `Rᵀ(Y − Ax*)`.
//!
//! With `b = ‖R‖∞`, `v = Σ R_ℓ² (Ax*)_ℓ` and tail parameter `θ`:
//!
//! * two-sided Bernstein: `|Rᵀ(Y − Ax*)| ≥ √(2vθ) + bθ/3` with prob. ≤ `2e^{−θ}`;
//! * variance envelope: `v ≥ (√(b²θ/2) + √(5b²θ/6 + R₂ᵀY))²` with prob. ≤ `e^{−θ}`;
//! * observable bound: the Bernstein bound with `v` replaced by the envelope,
//!   exceeded with prob. ≤ `3e^{−θ}`.

use rayon::prelude::*;

use crate::error::{check_len, invalid, Result};
use crate::model::poisson_draw;
use crate::rng::{trial_stream, Domain};

fn check_inputs(values: &[f64], theta: f64) -> Result<()> {
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("concentration inputs must be finite and non-negative"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta must be positive"));
    }
    Ok(())
}

/// `√(2vθ) + bθ/3`.
pub fn bernstein_bound(v: f64, b: f64, theta: f64) -> Result<f64> {
    check_inputs(&[v, b], theta)?;
    Ok((2.0 * v * theta).sqrt() + b * theta / 3.0)
}

/// `(√(b²θ/2) + √(5b²θ/6 + R₂ᵀY))²`, a high-probability upper bound on `v`.
pub fn variance_envelope(b: f64, r2y: f64, theta: f64) -> Result<f64> {
    check_inputs(&[b, r2y], theta)?;
    Ok(envelope_root(b, r2y, theta).powi(2))
}

fn envelope_root(b: f64, r2y: f64, theta: f64) -> f64 {
    let b2 = b * b;
    (b2 * theta / 2.0).sqrt() + (5.0 * b2 * theta / 6.0 + r2y).sqrt()
}

/// Fully observable deviation bound
/// `(√(b²θ/2) + √(5b²θ/6 + R₂ᵀY))·√(2θ) + bθ/3`.
pub fn empirical_deviation_bound(b: f64, r2y: f64, theta: f64) -> Result<f64> {
    check_inputs(&[b, r2y], theta)?;
    Ok(envelope_root(b, r2y, theta) * (2.0 * theta).sqrt() + b * theta / 3.0)
}

/// Empirical failure frequencies of the three bounds for a fixed direction.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCoverage {
    pub n_trials: usize,
    pub theta: f64,
    /// `|Rᵀ(Y−Ax*)|` above the Bernstein bound with the true variance.
    pub bernstein_failure_rate: f64,
    /// `|Rᵀ(Y−Ax*)|` above the observable bound.
    pub empirical_failure_rate: f64,
    /// True variance above the envelope.
    pub envelope_failure_rate: f64,
}

impl TailCoverage {
    /// `2e^{−θ}`, the nominal Bernstein failure probability.
    pub fn bernstein_nominal(&self) -> f64 {
        2.0 * (-self.theta).exp()
    }

    /// `3e^{−θ}`.
    pub fn empirical_nominal(&self) -> f64 {
        3.0 * (-self.theta).exp()
    }

    pub fn envelope_nominal(&self) -> f64 {
        (-self.theta).exp()
    }

    /// Binomial standard error of a frequency with success probability `rate`.
    pub fn std_error(&self, rate: f64) -> f64 {
        (rate * (1.0 - rate) / self.n_trials as f64).sqrt()
    }

    pub fn report(&self) -> String {
        let line = |name: &str, rate: f64, nominal: f64| {
            format!(
                "{name:<22} failure_rate={rate:.6e} nominal={nominal:.6e} limit={:.6e}\n",
                nominal + 3.0 * self.std_error(nominal)
            )
        };
        let mut out = format!("trials={} theta={}\n", self.n_trials, self.theta);
        out += &line("bernstein(two-sided)", self.bernstein_failure_rate, self.bernstein_nominal());
        out += &line("observable", self.empirical_failure_rate, self.empirical_nominal());
        out += &line("variance-envelope", self.envelope_failure_rate, self.envelope_nominal());
        out
    }
}

/// Draws `Y ~ Poisson(intensity)` `n_trials` times and counts how often each
/// bound fails. Trial `i` uses stream `i` of `seed`, so the result does not
/// depend on thread scheduling.
pub fn tail_coverage_test(
    r: &[f64],
    intensity: &[f64],
    theta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<TailCoverage> {
    check_len(r.len(), intensity.len())?;
    check_inputs(intensity, theta)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(invalid("direction must be finite"));
    }
    if n_trials == 0 {
        return Err(invalid("n_trials must be at least 1"));
    }
    let b = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let r2: Vec<f64> = r.iter().map(|v| v * v).collect();
    let v: f64 = r2.iter().zip(intensity).map(|(a, l)| a * l).sum();
    let mean: f64 = r.iter().zip(intensity).map(|(a, l)| a * l).sum();
    let bern = bernstein_bound(v, b, theta)?;

    let (f_bern, f_emp, f_env) = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_stream(seed, Domain::Concentration, 0, t as u64);
            let mut ry = 0.0;
            let mut r2y = 0.0;
            for ((ri, r2i), &lam) in r.iter().zip(&r2).zip(intensity) {
                let y = poisson_draw(lam, &mut rng) as f64;
                ry += ri * y;
                r2y += r2i * y;
            }
            let dev = (ry - mean).abs();
            let emp = envelope_root(b, r2y, theta) * (2.0 * theta).sqrt() + b * theta / 3.0;
            let env = envelope_root(b, r2y, theta).powi(2);
            ((dev >= bern) as usize, (dev >= emp) as usize, (v >= env) as usize)
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let n = n_trials as f64;
    Ok(TailCoverage {
        n_trials,
        theta,
        bernstein_failure_rate: f_bern as f64 / n,
        empirical_failure_rate: f_emp as f64 / n,
        envelope_failure_rate: f_env as f64 / n,
    })
}
