//! Checks of the design and weight assumptions on concrete instances, and the
//! error bounds they imply.

use std::fmt::Write as _;

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::bernoulli::{sample_bernoulli_matrix, surrogate_bernoulli};
use crate::convolution::{sample_parents, surrogate_convolution, u_statistic, ConvolutionInstance};
use crate::error::{check_len, invalid, Error, Result};
use crate::model::{LinearOperator, SurrogatePair};
use crate::rng::{trial_stream, Domain};
use crate::solver::WeightVector;

/// Largest `p` for which a dense Gram matrix is formed.
pub const DENSE_GRAM_GUARD: usize = 4096;
/// Largest `p` accepted by [`ustat_check`].
pub const USTAT_GUARD: usize = 2048;
/// Largest number of supports enumerated by [`rip_lower_bruteforce`].
pub const RIP_ENUMERATION_GUARD: f64 = 1e6;

/// `ξ̂ = max_{k,ℓ} |(ÃᵀÃ − I)_{kℓ}|`. A circulant operator needs one row only.
pub fn gram_deviation(a_tilde: &LinearOperator) -> Result<f64> {
    match a_tilde {
        LinearOperator::Circulant(c) => {
            let g = crate::model::circular_correlation(c, c);
            Ok(g.iter().enumerate().map(|(j, v)| (v - (j == 0) as u8 as f64).abs()).fold(0.0, f64::max))
        }
        LinearOperator::Dense(a) => {
            if a.ncols() > DENSE_GRAM_GUARD {
                return Err(Error::GuardExceeded(format!(
                    "dense Gram with p = {} exceeds {DENSE_GRAM_GUARD}",
                    a.ncols()
                )));
            }
            let g = a.transpose() * a;
            let mut xi = 0.0f64;
            for k in 0..g.nrows() {
                for l in 0..g.ncols() {
                    xi = xi.max((g[(k, l)] - (k == l) as u8 as f64).abs());
                }
            }
            Ok(xi)
        }
    }
}

/// `C(p, s)` in floating point.
fn binomial(p: usize, s: usize) -> f64 {
    let s = s.min(p - s);
    (0..s).fold(1.0, |acc, i| acc * (p - i) as f64 / (i + 1) as f64)
}

fn min_eigenvalue(g: &DMatrix<f64>, support: &[usize]) -> f64 {
    let sub = DMatrix::from_fn(support.len(), support.len(), |i, j| g[(support[i], support[j])]);
    SymmetricEigen::new(sub).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `1 − δ̂_{s,0}`: the smallest eigenvalue of `G̃_J` over all `|J| = s`,
/// clamped at 0.
pub fn rip_lower_bruteforce(a_tilde: &LinearOperator, s: usize) -> Result<f64> {
    let p = a_tilde.ncols();
    if s == 0 || s > p {
        return Err(invalid(format!("support size must lie in 1..={p}, got {s}")));
    }
    let count = binomial(p, s);
    if count > RIP_ENUMERATION_GUARD {
        return Err(Error::GuardExceeded(format!("C({p}, {s}) = {count:.3e} supports")));
    }
    if p > DENSE_GRAM_GUARD {
        return Err(Error::GuardExceeded(format!("dense Gram with p = {p}")));
    }
    let g = a_tilde.gram().materialize();
    // supports are grouped by their smallest index
    let lower = (0..=p - s)
        .into_par_iter()
        .map(|first| {
            let mut support = vec![first; s];
            (first + 1..p)
                .combinations(s - 1)
                .map(|rest| {
                    support[1..].copy_from_slice(&rest);
                    min_eigenvalue(&g, &support)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(lower.max(0.0))
}

/// `δ_{s,c₀} = (1 + 2c₀)ξs`, with the flag `s(1 + 2c₀) < 1/ξ`.
pub fn re_constant_from_xi(xi: f64, s: usize, c0: f64) -> Result<(f64, bool)> {
    if !(xi >= 0.0 && c0 >= 0.0 && xi.is_finite() && c0.is_finite()) {
        return Err(invalid("xi and c0 must be finite and non-negative"));
    }
    let delta = (1.0 + 2.0 * c0) * xi * s as f64;
    Ok((delta, delta < 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightCover {
    pub pass: bool,
    /// Coordinate attaining the smallest margin.
    pub worst_index: usize,
    /// `min_k (d_k − |(Ãᵀ(Ỹ − Ãx*))_k|)`.
    pub margin: f64,
}

/// Whether `|Ãᵀ(Ỹ − Ãx*)|_k ≤ d_k` for every `k`.
pub fn weights_cover(surrogate: &SurrogatePair, x_star: &[f64], w: &WeightVector) -> Result<WeightCover> {
    check_len(surrogate.p(), w.len())?;
    let dev = surrogate.correlation_residual(x_star)?;
    let (worst_index, margin) = dev
        .iter()
        .zip(w.values())
        .map(|(e, d)| d - e.abs())
        .enumerate()
        .fold((0, f64::INFINITY), |best, (k, m)| if m < best.1 { (k, m) } else { best });
    Ok(WeightCover { pass: margin >= 0.0, worst_index, margin })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportCondition {
    pub pass: bool,
    /// `ξ·(2γ/(1 − δ_{s,0}))·√(s·Σ_{k∈S*} d_k²)`.
    pub lhs: f64,
    /// `(γ/2 − 1)·min_{k∉S*} d_k`.
    pub rhs: f64,
}

impl SupportCondition {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn check_gamma_delta(gamma: f64, delta_s0: f64) -> Result<()> {
    if !(gamma > 2.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must exceed 2, got {gamma}")));
    }
    if !(0.0..1.0).contains(&delta_s0) {
        return Err(invalid(format!("delta must lie in [0, 1), got {delta_s0}")));
    }
    Ok(())
}

fn check_support(p: usize, support: &[usize]) -> Result<()> {
    if support.iter().any(|&k| k >= p) {
        return Err(invalid("support index out of range"));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("support must be strictly increasing"));
    }
    Ok(())
}

fn on_support_sq(d: &WeightVector, support: &[usize]) -> f64 {
    support.iter().map(|&k| d.values()[k].powi(2)).sum()
}

/// The screening condition under which `supp(x̂) ⊆ S*`.
pub fn support_condition_check(
    xi: f64,
    gamma: f64,
    delta_s0: f64,
    d: &WeightVector,
    support: &[usize],
) -> Result<SupportCondition> {
    check_gamma_delta(gamma, delta_s0)?;
    if !(xi >= 0.0) {
        return Err(invalid("xi must be non-negative"));
    }
    let p = d.len();
    check_support(p, support)?;
    if support.len() == p {
        return Err(invalid("support covers every coordinate; no off-support weight"));
    }
    let mut off = 0;
    let mut min_off = f64::INFINITY;
    for (k, &dk) in d.values().iter().enumerate() {
        if off < support.len() && support[off] == k {
            off += 1;
        } else {
            min_off = min_off.min(dk);
        }
    }
    let s = support.len() as f64;
    let lhs = xi * (2.0 * gamma / (1.0 - delta_s0)) * (s * on_support_sq(d, support)).sqrt();
    let rhs = (gamma / 2.0 - 1.0) * min_off;
    Ok(SupportCondition { pass: lhs < rhs, lhs, rhs })
}

/// Error bounds for an `s`-sparse target once the support condition holds,
/// plus the least-squares oracle bound written in terms of the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBounds {
    /// `(2γ/(1 − δ_{s,0}))·√(Σ_{S*} d_k²)`.
    pub l2: f64,
    /// `l2·√s`.
    pub l1: f64,
    /// `γ·d_max`.
    pub linf: f64,
    /// `√(Σ_{S*} d_k²)/(1 − δ_{s,0})`, which dominates the oracle
    /// least-squares error whenever the weights cover the noise.
    pub ls_oracle_l2: f64,
}

pub fn theoretical_bounds(gamma: f64, delta_s0: f64, d: &WeightVector, support: &[usize]) -> Result<SparseBounds> {
    check_gamma_delta(gamma, delta_s0)?;
    check_support(d.len(), support)?;
    let root = on_support_sq(d, support).sqrt();
    let l2 = 2.0 * gamma / (1.0 - delta_s0) * root;
    Ok(SparseBounds {
        l2,
        l1: l2 * (support.len() as f64).sqrt(),
        linf: gamma * d.d_max(),
        ls_oracle_l2: root / (1.0 - delta_s0),
    })
}

/// Bounds that need no support condition, for an exactly `s`-sparse target.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralBounds {
    /// `2√2γ(1 + 2ρ)/(1 − δ_{2s,2ρ})·√(Σ_{S*} d_k²)`.
    pub l2: f64,
    pub l1: f64,
    /// `8γ²/(1 − δ_{s,2ρ})·Σ_{S*} d_k²`, a bound on `‖Ã(x̂ − x*)‖₂²`.
    pub prediction: f64,
}

pub fn general_bounds(
    gamma: f64,
    delta_2s_2rho: f64,
    delta_s_2rho: f64,
    d: &WeightVector,
    support: &[usize],
) -> Result<GeneralBounds> {
    check_gamma_delta(gamma, delta_2s_2rho)?;
    check_gamma_delta(gamma, delta_s_2rho)?;
    check_support(d.len(), support)?;
    let rho = d.rho(gamma);
    let sq = on_support_sq(d, support);
    let l2 = 2.0 * 2f64.sqrt() * gamma * (1.0 + 2.0 * rho) / (1.0 - delta_2s_2rho) * sq.sqrt();
    Ok(GeneralBounds {
        l2,
        l1: l2 * (support.len() as f64).sqrt(),
        prediction: 8.0 * gamma * gamma / (1.0 - delta_s_2rho) * sq,
    })
}

/// `min_{k∈S*} |x*_k| − γ·d_max`; positive values give exact support
/// recovery when the screening condition also holds. The source states the
/// threshold with an unnamed constant, read here as `γ`.
pub fn exact_support_margin(x_star: &[f64], gamma: f64, d: &WeightVector) -> Result<f64> {
    check_len(d.len(), x_star.len())?;
    let min_abs = x_star.iter().filter(|v| **v != 0.0).map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    Ok(min_abs - gamma * d.d_max())
}

/// Largest `|m·(G̃ − I)_{kℓ} − 𝕌(k − ℓ)|` with `G̃` formed densely.
pub fn ustat_check(inst: &ConvolutionInstance) -> Result<f64> {
    let p = inst.p();
    if p > USTAT_GUARD {
        return Err(Error::GuardExceeded(format!("p = {p} exceeds {USTAT_GUARD}")));
    }
    let a = surrogate_convolution(inst, &vec![0.0; p])?.a_tilde.materialize();
    let g = a.transpose() * &a;
    let u = u_statistic(inst);
    let m = inst.m() as f64;
    let mut worst = 0.0f64;
    for k in 0..p {
        for l in 0..p {
            let lhs = m * (g[(k, l)] - (k == l) as u8 as f64);
            worst = worst.max((lhs - u[(k + p - l) % p]).abs());
        }
    }
    Ok(worst)
}

/// Monte Carlo estimate of `E(G̃)` compared against the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct GramExpectation {
    pub n_draws: usize,
    /// `max_{kℓ} |mean(G̃)_{kℓ} − I_{kℓ}|`.
    pub max_abs_deviation: f64,
    /// Standard error of the entry attaining `max_abs_deviation`.
    pub std_error: f64,
    /// `max_{kℓ} |mean − I|/se`; entries with zero spread count as 0 when
    /// their deviation is below `1e-12`.
    pub max_z: f64,
    /// Same statistic restricted to the diagonal.
    pub max_z_diagonal: f64,
}

fn gram_expectation(draws: Vec<DMatrix<f64>>) -> GramExpectation {
    let n_draws = draws.len();
    let p = draws[0].nrows();
    let mut sum = DMatrix::<f64>::zeros(p, p);
    let mut sum_sq = DMatrix::<f64>::zeros(p, p);
    for g in &draws {
        sum += g;
        sum_sq += g.component_mul(g);
    }
    let nd = n_draws as f64;
    let mut out = GramExpectation { n_draws, max_abs_deviation: 0.0, std_error: 0.0, max_z: 0.0, max_z_diagonal: 0.0 };
    for k in 0..p {
        for l in 0..p {
            let mean = sum[(k, l)] / nd;
            let var = ((sum_sq[(k, l)] / nd - mean * mean) * nd / (nd - 1.0).max(1.0)).max(0.0);
            let se = (var / nd).sqrt();
            let dev = (mean - (k == l) as u8 as f64).abs();
            // entries constant across draws (up to rounding) must be exact
            let z = if se > 1e-12 {
                dev / se
            } else if dev < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            if dev > out.max_abs_deviation {
                out.max_abs_deviation = dev;
                out.std_error = se;
            }
            out.max_z = out.max_z.max(z);
            if k == l {
                out.max_z_diagonal = out.max_z_diagonal.max(z);
            }
        }
    }
    out
}

fn check_draws(n_draws: usize) -> Result<()> {
    if n_draws < 2 {
        return Err(invalid("at least two draws are needed"));
    }
    Ok(())
}

/// Averages `G̃` over `n_draws` Bernoulli designs. Draw `i` uses stream `i`.
pub fn bernoulli_gram_expectation_check(
    n: usize,
    p: usize,
    q: f64,
    n_draws: usize,
    seed: u64,
) -> Result<GramExpectation> {
    check_draws(n_draws)?;
    let draws = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_stream(seed, Domain::Diagnostics, 1, i as u64);
            let inst = sample_bernoulli_matrix(n, p, q, &mut rng)?;
            Ok(surrogate_bernoulli(&inst, &vec![0.0; n])?.a_tilde.gram().materialize())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(gram_expectation(draws))
}

/// Averages `G̃` over `n_draws` convolution designs.
pub fn convolution_gram_expectation_check(p: usize, m: u64, n_draws: usize, seed: u64) -> Result<GramExpectation> {
    check_draws(n_draws)?;
    let draws = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_stream(seed, Domain::Diagnostics, 2, i as u64);
            let inst = sample_parents(p, m, &mut rng)?;
            Ok(surrogate_convolution(&inst, &vec![0.0; p])?.a_tilde.gram().materialize())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(gram_expectation(draws))
}

/// Assumption checks and bounds for one simulated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub p: usize,
    pub s: usize,
    pub gamma: f64,
    pub theta_used: f64,
    pub xi_hat: f64,
    /// `1 − δ̂_{s,0}` by enumeration, when small enough to enumerate.
    pub rip_lower: Option<f64>,
    /// `sξ̂`, when below 1.
    pub re_bound: Option<f64>,
    /// `δ_{s,0}` used by the support condition and the bounds.
    pub delta_s0: Option<f64>,
    pub weights_cover: WeightCover,
    pub support_cond: Option<SupportCondition>,
    pub sparse: Option<SparseBounds>,
    pub general: Option<GeneralBounds>,
    pub exact_support_margin: f64,
}

/// Builds the full report. `δ_{s,0}` is the enumerated value when available,
/// otherwise `sξ̂`; the general bounds use `δ = (1 + 4ρ)ξ̂·2s` and
/// `(1 + 4ρ)ξ̂·s`.
pub fn assumption_report(
    surrogate: &SurrogatePair,
    x_star: &[f64],
    w: &WeightVector,
    gamma: f64,
    theta: f64,
) -> Result<AssumptionReport> {
    let p = surrogate.p();
    check_len(p, x_star.len())?;
    let support: Vec<usize> = (0..p).filter(|&k| x_star[k] != 0.0).collect();
    let s = support.len();
    let xi_hat = gram_deviation(&surrogate.a_tilde)?;
    let rip_lower = if s > 0 && s <= p && binomial(p, s) <= RIP_ENUMERATION_GUARD && p <= DENSE_GRAM_GUARD {
        Some(rip_lower_bruteforce(&surrogate.a_tilde, s)?)
    } else {
        None
    };
    let (re, re_valid) = re_constant_from_xi(xi_hat, s, 0.0)?;
    let re_bound = re_valid.then_some(re);
    let delta_s0 = match rip_lower {
        Some(r) if r > 0.0 => Some((1.0 - r).max(0.0)),
        _ => re_bound,
    };
    let cover = weights_cover(surrogate, x_star, w)?;
    let mut support_cond = None;
    let mut sparse = None;
    let mut general = None;
    if gamma > 2.0 {
        if let Some(delta) = delta_s0 {
            if s < p {
                support_cond = Some(support_condition_check(xi_hat, gamma, delta, w, &support)?);
            }
            sparse = Some(theoretical_bounds(gamma, delta, w, &support)?);
        }
        let c0 = 2.0 * w.rho(gamma);
        let (d2s, v2s) = re_constant_from_xi(xi_hat, 2 * s, c0)?;
        let (ds, vs) = re_constant_from_xi(xi_hat, s, c0)?;
        if v2s && vs {
            general = Some(general_bounds(gamma, d2s, ds, w, &support)?);
        }
    }
    Ok(AssumptionReport {
        p,
        s,
        gamma,
        theta_used: theta,
        xi_hat,
        rip_lower,
        re_bound,
        delta_s0,
        weights_cover: cover,
        support_cond,
        sparse,
        general,
        exact_support_margin: exact_support_margin(x_star, gamma, w)?,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".to_string(), |x| format!("{x:.10e}"))
}

impl AssumptionReport {
    /// `key = value` lines, one per field.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("p".into(), self.p.to_string()),
            ("s".into(), self.s.to_string()),
            ("gamma".into(), format!("{}", self.gamma)),
            ("theta_used".into(), format!("{:.10e}", self.theta_used)),
            ("xi_hat".into(), format!("{:.10e}", self.xi_hat)),
            ("rip_lower".into(), opt(self.rip_lower)),
            ("re_bound".into(), opt(self.re_bound)),
            ("delta_s0".into(), opt(self.delta_s0)),
            ("weights_cover".into(), self.weights_cover.pass.to_string()),
            ("weights_worst_index".into(), self.weights_cover.worst_index.to_string()),
            ("weights_margin".into(), format!("{:.10e}", self.weights_cover.margin)),
        ];
        match &self.support_cond {
            Some(c) => {
                kv.push(("support_cond".into(), c.pass.to_string()));
                kv.push(("support_cond_lhs".into(), format!("{:.10e}", c.lhs)));
                kv.push(("support_cond_rhs".into(), format!("{:.10e}", c.rhs)));
                kv.push(("support_cond_slack".into(), format!("{:.10e}", c.slack())));
            }
            None => kv.push(("support_cond".into(), "na".into())),
        }
        kv.push(("bound_l2_sparse".into(), opt(self.sparse.as_ref().map(|b| b.l2))));
        kv.push(("bound_l1_sparse".into(), opt(self.sparse.as_ref().map(|b| b.l1))));
        kv.push(("bound_linf".into(), opt(self.sparse.as_ref().map(|b| b.linf))));
        kv.push(("bound_l2_ls_oracle".into(), opt(self.sparse.as_ref().map(|b| b.ls_oracle_l2))));
        kv.push(("bound_l2_general".into(), opt(self.general.as_ref().map(|b| b.l2))));
        kv.push(("bound_l1_general".into(), opt(self.general.as_ref().map(|b| b.l1))));
        kv.push(("bound_prediction".into(), opt(self.general.as_ref().map(|b| b.prediction))));
        let ratio = match (&self.general, &self.sparse) {
            (Some(g), Some(s)) if s.l2 > 0.0 => Some(g.l2 / s.l2),
            _ => None,
        };
        kv.push(("bound_l2_ratio_general_over_sparse".into(), opt(ratio)));
        kv.push(("exact_support_margin".into(), format!("{:.10e}", self.exact_support_margin)));
        kv.push(("exact_support_caveat".into(), "threshold_uses_gamma".into()));
        kv
    }

    /// Human-readable summary followed by the key-value block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "assumption report (p={}, s={}, gamma={})", self.p, self.s, self.gamma);
        let _ = writeln!(out, "  gram deviation xi_hat      {:.6e}", self.xi_hat);
        let _ = writeln!(out, "  weights cover the noise    {}", yes_no(self.weights_cover.pass));
        if let Some(c) = &self.support_cond {
            let _ = writeln!(out, "  support condition          {} (slack {:.4e})", yes_no(c.pass), c.slack());
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "[report]");
        for (k, v) in self.key_values() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}
