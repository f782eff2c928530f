//! Poisson random convolution on the circle `{0, …, p−1}`.
//!
//! `m` parents fall uniformly on the circle; `ℕ(u)` counts the parents at
//! `u`, and the sensing matrix is the circulant `A_{ℓ,k} = ℕ(ℓ − k)`.
//! Everything stays circulant: only the length-`p` generator is stored.
//!
//! Weight formulas take the tail parameter `θ`; the default `θ = 2 log p`
//! gives the usual expressions (every `log p` below stands for `θ/2`).

use rand::Rng;

use crate::error::{check_len, invalid, Result};
use crate::model::{circular_correlation, LinearOperator, SurrogatePair};
use crate::solver::{WeightKind, WeightVector};

/// Smallest value an oracle weight may take.
pub const ORACLE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionInstance {
    p: usize,
    m: u64,
    counts: Vec<u64>,
    parents: Option<Vec<usize>>,
}

impl ConvolutionInstance {
    /// Instance from tabulated counts `ℕ(0..p)`.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(invalid("the circle needs p >= 2"));
        }
        let m: u64 = counts.iter().sum();
        if m == 0 {
            return Err(invalid("at least one parent is required"));
        }
        Ok(Self { p: counts.len(), m, counts, parents: None })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn parents(&self) -> Option<&[usize]> {
        self.parents.as_deref()
    }

    /// `(m − 1)/p`, the centring applied to the counts in every weight.
    fn centre(&self) -> f64 {
        (self.m as f64 - 1.0) / self.p as f64
    }

    /// Poisson intensity `A x` (a cyclic convolution of `ℕ` with `x`).
    pub fn intensity(&self, x: &[f64]) -> Result<Vec<f64>> {
        operator_a(self).apply(x)
    }
}

/// Draws `m` parents uniformly on `{0, …, p−1}`.
pub fn sample_parents<R: Rng + ?Sized>(p: usize, m: u64, rng: &mut R) -> Result<ConvolutionInstance> {
    if p < 2 || m < 1 {
        return Err(invalid(format!("need p >= 2 and m >= 1, got p = {p}, m = {m}")));
    }
    let parents: Vec<usize> = (0..m).map(|_| rng.random_range(0..p)).collect();
    let mut counts = vec![0u64; p];
    for &u in &parents {
        counts[u] += 1;
    }
    Ok(ConvolutionInstance { p, m, counts, parents: Some(parents) })
}

/// The circulant `A` with generator `ℕ`.
pub fn operator_a(inst: &ConvolutionInstance) -> LinearOperator {
    LinearOperator::Circulant(inst.counts.iter().map(|&c| c as f64).collect())
}

/// `Ã = A/√m − ((√m − 1)/p)𝟙𝟙ᵀ` (kept circulant) and
/// `Ỹ_k = Y_k/√m − ((√m − 1)/p)·Ȳ` with `Ȳ = ‖Y‖₁/m`.
pub fn surrogate_convolution(inst: &ConvolutionInstance, y: &[f64]) -> Result<SurrogatePair> {
    let sm = (inst.m as f64).sqrt();
    let shift = (sm - 1.0) / inst.p as f64;
    let generator = inst.counts.iter().map(|&c| c as f64 / sm - shift).collect();
    SurrogatePair::new(LinearOperator::Circulant(generator), surrogate_observations(inst, y)?)
}

/// The `Ỹ` map on its own; applied to `Ax*` it returns exactly `Ãx*`.
pub fn surrogate_observations(inst: &ConvolutionInstance, y: &[f64]) -> Result<Vec<f64>> {
    check_len(inst.p, y.len())?;
    let m = inst.m as f64;
    let sm = m.sqrt();
    let shift = (sm - 1.0) / inst.p as f64 * (y.iter().sum::<f64>() / m);
    Ok(y.iter().map(|&v| v / sm - shift).collect())
}

/// `θ = 2 log p`.
pub fn default_theta(p: usize) -> f64 {
    2.0 * (p as f64).ln()
}

/// `B = max_u |ℕ(u) − (m−1)/p| / m`.
pub fn b_sup(inst: &ConvolutionInstance) -> f64 {
    let c = inst.centre();
    inst.counts.iter().map(|&n| (n as f64 - c).abs()).fold(0.0, f64::max) / inst.m as f64
}

/// `w(ℓ) = Σ_u (ℕ(u) − (m−1)/p)² ℕ(u+ℓ) / m²` for every lag `ℓ`.
pub fn lag_weights(inst: &ConvolutionInstance) -> Vec<f64> {
    let m2 = (inst.m as f64).powi(2);
    let c = inst.centre();
    let centred: Vec<f64> = inst.counts.iter().map(|&n| (n as f64 - c).powi(2) / m2).collect();
    let counts: Vec<f64> = inst.counts.iter().map(|&n| n as f64).collect();
    circular_correlation(&centred, &counts)
}

/// `v̂_k = Σ_ℓ (ℕ(ℓ−k) − (m−1)/p)² Y_ℓ / m²`, a cyclic correlation.
pub fn v_hat(inst: &ConvolutionInstance, y: &[f64]) -> Result<Vec<f64>> {
    check_len(inst.p, y.len())?;
    let m2 = (inst.m as f64).powi(2);
    let c = inst.centre();
    let centred: Vec<f64> = inst.counts.iter().map(|&n| (n as f64 - c).powi(2) / m2).collect();
    Ok(circular_correlation(&centred, y))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta must be positive"));
    }
    Ok(())
}

/// `d = √(4W log p)·(√(Ȳ + 5 log p/(3m)) + √(log p/m)) + 2B log p/3`.
pub fn constant_weight_convolution(inst: &ConvolutionInstance, y: &[f64], theta: f64) -> Result<WeightVector> {
    check_len(inst.p, y.len())?;
    check_theta(theta)?;
    let lp = theta / 2.0;
    let m = inst.m as f64;
    let w = lag_weights(inst).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let y_bar = y.iter().sum::<f64>() / m;
    let b = b_sup(inst);
    let d = (4.0 * w * lp).sqrt() * ((y_bar + 5.0 * lp / (3.0 * m)).sqrt() + (lp / m).sqrt()) + 2.0 * b * lp / 3.0;
    WeightVector::constant(d, inst.p)
}

/// `d_k = √(4 log p)·(√(v̂_k + 5B² log p/3) + √(B² log p)) + 2B log p/3`.
pub fn nonconstant_weights_convolution(inst: &ConvolutionInstance, y: &[f64], theta: f64) -> Result<WeightVector> {
    check_theta(theta)?;
    let lp = theta / 2.0;
    let b = b_sup(inst);
    let b2 = b * b;
    let tail = 2.0 * b * lp / 3.0;
    let d = v_hat(inst, y)?
        .into_iter()
        .map(|v| (4.0 * lp).sqrt() * ((v + 5.0 * b2 * lp / 3.0).sqrt() + (b2 * lp).sqrt()) + tail)
        .collect();
    WeightVector::new(d, WeightKind::Nonconstant)
}

/// `d_k = |(Ãᵀ(Ỹ − Ãx*))_k|`, floored at [`ORACLE_FLOOR`]. Needs the truth,
/// so only available in simulation.
pub fn oracle_weights(surrogate: &SurrogatePair, x_star: &[f64]) -> Result<WeightVector> {
    let dev = surrogate.correlation_residual(x_star)?;
    WeightVector::new(dev.into_iter().map(|v| v.abs().max(ORACLE_FLOOR)).collect(), WeightKind::Oracle)
}

/// The degenerate U-statistic `𝕌(d)` for every lag, straight from the counts:
/// `𝕌(d) = Σ_u ℕ(u)ℕ(u+d) − m(m−1)/p` for `d ≠ 0` and
/// `𝕌(0) = Σ_u ℕ(u)² − m − m(m−1)/p`.
pub fn u_statistic(inst: &ConvolutionInstance) -> Vec<f64> {
    let m = inst.m as f64;
    let counts: Vec<f64> = inst.counts.iter().map(|&n| n as f64).collect();
    let base = m * (m - 1.0) / inst.p as f64;
    let mut u: Vec<f64> = circular_correlation(&counts, &counts).into_iter().map(|v| v - base).collect();
    u[0] -= m;
    u
}
