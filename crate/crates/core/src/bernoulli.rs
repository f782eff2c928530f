//! Photon-limited compressive imaging: a Bernoulli(q) sensing matrix, its
//! recentred surrogate and the two data-driven weight families.
//!
//! All weight formulas are written in terms of the tail parameter `θ`; the
//! default `θ = 3 log p` reproduces the usual `log p` expressions (every
//! `log p` below stands for `θ/3`).

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_len, invalid, Error, Result};
use crate::model::{LinearOperator, SurrogatePair};
use crate::solver::{WeightKind, WeightVector};

/// Default budget for the exact `W` maximisation, in `n·p²` units.
pub const DEFAULT_MAX_EXACT_W: f64 = 1e11;

/// A realised binary sensing matrix, stored as packed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliInstance {
    n: usize,
    p: usize,
    q: f64,
    columns: Vec<Vec<u64>>,
    column_sums: Vec<u64>,
}

impl BernoulliInstance {
    /// Builds an instance from row-major 0/1 entries.
    pub fn from_rows(q: f64, rows: &[Vec<u8>]) -> Result<Self> {
        check_q(q)?;
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if n == 0 || p == 0 {
            return Err(invalid("empty sensing matrix"));
        }
        let words = n.div_ceil(64);
        let mut columns = vec![vec![0u64; words]; p];
        for (l, row) in rows.iter().enumerate() {
            check_len(p, row.len())?;
            for (k, &a) in row.iter().enumerate() {
                match a {
                    0 => {}
                    1 => columns[k][l / 64] |= 1 << (l % 64),
                    _ => return Err(invalid("sensing entries must be 0 or 1")),
                }
            }
        }
        let column_sums = columns.iter().map(|c| popcount(c)).collect();
        Ok(Self { n, p, q, columns, column_sums })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn entry(&self, row: usize, col: usize) -> u8 {
        ((self.columns[col][row / 64] >> (row % 64)) & 1) as u8
    }

    /// `Σ_ℓ a_{ℓ,k}` for every column.
    pub fn column_sums(&self) -> &[u64] {
        &self.column_sums
    }

    /// `Σ_ℓ a_{ℓ,u} a_{ℓ,k}`.
    pub fn cooccurrence(&self, u: usize, k: usize) -> u64 {
        self.columns[u].iter().zip(&self.columns[k]).map(|(a, b)| (a & b).count_ones() as u64).sum()
    }

    /// `Aᵀ y`.
    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, y.len())?;
        Ok(self
            .columns
            .iter()
            .map(|col| {
                let mut acc = 0.0;
                for (w, &bits) in col.iter().enumerate() {
                    let mut b = bits;
                    while b != 0 {
                        acc += y[w * 64 + b.trailing_zeros() as usize];
                        b &= b - 1;
                    }
                }
                acc
            })
            .collect())
    }

    /// Poisson intensity `A x`.
    pub fn intensity(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.p, x.len())?;
        let mut out = vec![0.0; self.n];
        for (col, &xk) in self.columns.iter().zip(x) {
            if xk == 0.0 {
                continue;
            }
            for (w, &bits) in col.iter().enumerate() {
                let mut b = bits;
                while b != 0 {
                    out[w * 64 + b.trailing_zeros() as usize] += xk;
                    b &= b - 1;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.p, |l, k| self.entry(l, k) as f64)
    }

    /// Rows as strings of `0`/`1`, used by the instance file format.
    pub fn row_strings(&self) -> Vec<String> {
        (0..self.n).map(|l| (0..self.p).map(|k| if self.entry(l, k) == 1 { '1' } else { '0' }).collect()).collect()
    }
}

fn popcount(words: &[u64]) -> u64 {
    words.iter().map(|w| w.count_ones() as u64).sum()
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("q must lie in (0, 1), got {q}")));
    }
    Ok(())
}

/// iid Bernoulli(q) entries, drawn column by column.
pub fn sample_bernoulli_matrix<R: Rng + ?Sized>(n: usize, p: usize, q: f64, rng: &mut R) -> Result<BernoulliInstance> {
    check_q(q)?;
    if n == 0 || p == 0 {
        return Err(invalid("n and p must be at least 1"));
    }
    let words = n.div_ceil(64);
    let mut columns = Vec::with_capacity(p);
    for _ in 0..p {
        let mut col = vec![0u64; words];
        for l in 0..n {
            if rng.random::<f64>() < q {
                col[l / 64] |= 1 << (l % 64);
            }
        }
        columns.push(col);
    }
    let column_sums = columns.iter().map(|c| popcount(c)).collect();
    Ok(BernoulliInstance { n, p, q, columns, column_sums })
}

fn scale(inst: &BernoulliInstance) -> f64 {
    let (n, q) = (inst.n as f64, inst.q);
    (n * q * (1.0 - q)).sqrt()
}

/// `Ã = (A − q𝟙𝟙ᵀ)/√(nq(1−q))`, `Ỹ = (nY − (Σ Y)𝟙)/((n−1)√(nq(1−q)))`.
pub fn surrogate_bernoulli(inst: &BernoulliInstance, y: &[f64]) -> Result<SurrogatePair> {
    check_len(inst.n, y.len())?;
    if inst.n < 2 {
        return Err(invalid("the surrogate needs n >= 2"));
    }
    let s = scale(inst);
    let q = inst.q;
    let a = DMatrix::from_fn(inst.n, inst.p, |l, k| (inst.entry(l, k) as f64 - q) / s);
    SurrogatePair::new(LinearOperator::Dense(a), surrogate_observations(inst, y)?)
}

/// The `Ỹ` map on its own.
pub fn surrogate_observations(inst: &BernoulliInstance, y: &[f64]) -> Result<Vec<f64>> {
    check_len(inst.n, y.len())?;
    let n = inst.n as f64;
    let denom = (n - 1.0) * scale(inst);
    let total: f64 = y.iter().sum();
    Ok(y.iter().map(|&v| (n * v - total) / denom).collect())
}

/// `θ = 3 log p`.
pub fn default_theta(p: usize) -> f64 {
    3.0 * (p as f64).ln()
}

fn n_hat_denominator(inst: &BernoulliInstance, theta: f64) -> f64 {
    let (n, q) = (inst.n as f64, inst.q);
    n * q - (2.0 * n * q * (1.0 - q) * theta).sqrt() - q.max(1.0 - q) * theta / 3.0
}

/// Observable upper estimate `N̂` of `‖x*‖₁`.
pub fn l1_norm_estimator(inst: &BernoulliInstance, y: &[f64], theta: f64) -> Result<f64> {
    check_len(inst.n, y.len())?;
    check_theta(theta)?;
    let denom = n_hat_denominator(inst, theta);
    if !(denom > 0.0) {
        return Err(Error::RegimeViolation(format!(
            "N-hat denominator nq - sqrt(6nq(1-q)log p) - max(q,1-q)log p = {denom:.4} must be positive (requires roughly nq >= 12 max(q,1-q) log p)"
        )));
    }
    let total: f64 = y.iter().sum();
    let num = (theta / 2.0).sqrt() + (5.0 * theta / 6.0 + total).sqrt();
    Ok(num * num / denom)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta must be positive"));
    }
    Ok(())
}

/// The `c·(3log p/n + 9max(q²,(1−q)²)log²p/(n²q(1−q)))·N̂` term shared by
/// both weight families.
fn ustat_term(inst: &BernoulliInstance, theta: f64, c: f64, n_hat: f64) -> f64 {
    let (n, q) = (inst.n as f64, inst.q);
    let m = (q * q).max((1.0 - q) * (1.0 - q));
    c * (theta / n + m * theta * theta / (n * n * q * (1.0 - q))) * n_hat
}

/// `W = max_{u,k} w(u,k)` with
/// `w(u,k) = Σ_ℓ a_{ℓ,u}(n a_{ℓ,k} − Σ_ℓ' a_{ℓ',k})² / (n²(n−1)²q²(1−q)²)`.
///
/// Exact over all `p²` pairs: `O(n p²)` bit operations, the dominant cost of
/// the constant weights.
pub fn max_w(inst: &BernoulliInstance, max_ops: f64) -> Result<f64> {
    let (n, p, q) = (inst.n as f64, inst.p, inst.q);
    let ops = n * (p * p) as f64;
    if ops > max_ops {
        return Err(Error::GuardExceeded(format!("exact W needs n*p^2 = {ops:e} > {max_ops:e}")));
    }
    let norm = (n * (n - 1.0) * q * (1.0 - q)).powi(2);
    let sums = &inst.column_sums;
    let best = (0..p)
        .into_par_iter()
        .map(|u| {
            let su = sums[u] as f64;
            (0..p)
                .map(|k| {
                    let c = inst.cooccurrence(u, k) as f64;
                    let sk = sums[k] as f64;
                    // a² = a for binary entries
                    n * n * c - 2.0 * n * sk * c + sk * sk * su
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(best / norm)
}

/// Constant weight
/// `d = √(6W log p)·√N̂ + log p/((n−1)q(1−q)) + c·(…)·N̂`.
pub fn constant_weight_bernoulli(inst: &BernoulliInstance, y: &[f64], c: f64, theta: f64) -> Result<WeightVector> {
    constant_weight_bernoulli_guarded(inst, y, c, theta, DEFAULT_MAX_EXACT_W)
}

pub fn constant_weight_bernoulli_guarded(
    inst: &BernoulliInstance,
    y: &[f64],
    c: f64,
    theta: f64,
    max_exact_w: f64,
) -> Result<WeightVector> {
    check_c(c)?;
    let n_hat = l1_norm_estimator(inst, y, theta)?;
    let w = max_w(inst, max_exact_w)?;
    let (n, q) = (inst.n as f64, inst.q);
    let d = (2.0 * w * theta).sqrt() * n_hat.sqrt()
        + theta / (3.0 * (n - 1.0) * q * (1.0 - q))
        + ustat_term(inst, theta, c, n_hat);
    WeightVector::constant(d, inst.p)
}

fn check_c(c: f64) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(invalid("the weight constant c must be non-negative"));
    }
    Ok(())
}

/// `V_kᵀY` with `V_{k,ℓ} = ((n a_{ℓ,k} − Σ_ℓ' a_{ℓ',k})/(n(n−1)q(1−q)))²`.
pub fn v_dot_y(inst: &BernoulliInstance, y: &[f64]) -> Result<Vec<f64>> {
    let (n, q) = (inst.n as f64, inst.q);
    let aty = inst.adjoint(y)?;
    let total: f64 = y.iter().sum();
    let norm = (n * (n - 1.0) * q * (1.0 - q)).powi(2);
    Ok(inst
        .column_sums
        .iter()
        .zip(&aty)
        .map(|(&s, &col_y)| {
            let s = s as f64;
            ((n * n - 2.0 * n * s) * col_y + s * s * total) / norm
        })
        .collect())
}

/// Per-coordinate weights from the observable concentration bound applied to
/// each `R_k`, plus the shared `c·(…)·N̂` term.
pub fn nonconstant_weights_bernoulli(inst: &BernoulliInstance, y: &[f64], c: f64, theta: f64) -> Result<WeightVector> {
    check_c(c)?;
    let n_hat = l1_norm_estimator(inst, y, theta)?;
    let (n, q) = (inst.n as f64, inst.q);
    let b2 = 1.0 / ((n - 1.0) * q * (1.0 - q)).powi(2);
    let tail = theta / (3.0 * (n - 1.0) * q * (1.0 - q)) + ustat_term(inst, theta, c, n_hat);
    let d = v_dot_y(inst, y)?
        .into_iter()
        .map(|vy| (2.0 * theta).sqrt() * ((b2 * theta / 2.0).sqrt() + (5.0 * b2 * theta / 6.0 + vy).sqrt()) + tail)
        .collect();
    WeightVector::new(d, WeightKind::Nonconstant)
}

/// Entrywise bound on `|G̃ − I|` holding with probability ≥ `1 − 2/p`:
/// `√(6 log p((1−q)²/q + q²/(1−q))/n) + (log p/n)·max((1−q)/q, q/(1−q))`.
pub fn xi_bound(n: usize, p: usize, q: f64) -> f64 {
    let (n, lp) = (n as f64, (p as f64).ln());
    (6.0 * lp / n * ((1.0 - q).powi(2) / q + q * q / (1.0 - q))).sqrt() + lp / n * ((1.0 - q) / q).max(q / (1.0 - q))
}

/// The two pieces of `Ãᵀ(Ỹ − Ãx*)`: the Poisson part `T₁` (linear in
/// `Y − Ax*`) and the design-only degenerate U-statistic `T₂ = 𝕄x*`.
pub fn noise_decomposition(inst: &BernoulliInstance, y: &[f64], x_star: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(inst.n, y.len())?;
    check_len(inst.p, x_star.len())?;
    let (n, q) = (inst.n as f64, inst.q);
    let nq = n * q * (1.0 - q);
    let ax = inst.intensity(x_star)?;
    let noise: Vec<f64> = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
    let noise_total: f64 = noise.iter().sum();
    let at_noise = inst.adjoint(&noise)?;
    let t1 = at_noise
        .iter()
        .zip(&inst.column_sums)
        .map(|(&an, &s)| (n / (n - 1.0) * an - s as f64 * noise_total / (n - 1.0)) / nq)
        .collect();

    // Σ_ℓ Σ_{ℓ'≠ℓ} (a_{ℓk}−q)(a_{ℓ'k'}−q) = (S_k−nq)(S_k'−nq) − Σ_ℓ (a_{ℓk}−q)(a_{ℓk'}−q)
    let sums = &inst.column_sums;
    let t2 = (0..inst.p)
        .map(|k| {
            let sk = sums[k] as f64;
            let mut acc = 0.0;
            for (kp, &xk) in x_star.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                let skp = sums[kp] as f64;
                let same_row = inst.cooccurrence(k, kp) as f64 - q * sk - q * skp + n * q * q;
                acc += ((sk - n * q) * (skp - n * q) - same_row) * xk;
            }
            -acc / ((n - 1.0) * nq)
        })
        .collect();
    Ok((t1, t2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_sparse_signal, sample_poisson};
    use crate::rng::from_seed;

    #[test]
    fn q_outside_unit_interval_rejected() {
        assert!(sample_bernoulli_matrix(5, 5, 0.0, &mut from_seed(1)).is_err());
        assert!(sample_bernoulli_matrix(5, 5, 1.0, &mut from_seed(1)).is_err());
    }

    #[test]
    fn column_means_match_q() {
        let inst = sample_bernoulli_matrix(10_000, 4, 0.3, &mut from_seed(2)).unwrap();
        let tol = 3.0 * (0.3f64 * 0.7 / 10_000.0).sqrt();
        for &s in inst.column_sums() {
            assert!((s as f64 / 10_000.0 - 0.3).abs() <= tol);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_bernoulli_matrix(100, 20, 0.4, &mut from_seed(3)).unwrap();
        let b = sample_bernoulli_matrix(100, 20, 0.4, &mut from_seed(3)).unwrap();
        assert_eq!(a, b);
        let rows: Vec<Vec<u8>> = (0..100).map(|l| (0..20).map(|k| a.entry(l, k)).collect()).collect();
        assert_eq!(BernoulliInstance::from_rows(0.4, &rows).unwrap(), a);
    }

    #[test]
    fn surrogate_zero_data_and_centering() {
        let inst = sample_bernoulli_matrix(50, 10, 0.5, &mut from_seed(4)).unwrap();
        let sp = surrogate_bernoulli(&inst, &vec![0.0; 50]).unwrap();
        assert!(sp.y_tilde.iter().all(|&v| v == 0.0));
        let y: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let sp = surrogate_bernoulli(&inst, &y).unwrap();
        assert!(sp.y_tilde.iter().sum::<f64>().abs() < 1e-12);
        let one = sample_bernoulli_matrix(1, 3, 0.5, &mut from_seed(4)).unwrap();
        assert!(surrogate_bernoulli(&one, &[1.0]).is_err());
    }

    #[test]
    fn surrogate_entries_average_to_zero() {
        // E[Ã] = 0 entrywise
        let (n, p, draws) = (20, 5, 2000);
        let mut sums = vec![0.0; n * p];
        let mut sq = vec![0.0; n * p];
        let mut rng = from_seed(5);
        for _ in 0..draws {
            let inst = sample_bernoulli_matrix(n, p, 0.3, &mut rng).unwrap();
            let sp = surrogate_bernoulli(&inst, &vec![0.0; n]).unwrap();
            for l in 0..n {
                for k in 0..p {
                    let v = sp.a_tilde.entry(l, k);
                    sums[l * p + k] += v;
                    sq[l * p + k] += v * v;
                }
            }
        }
        let mut worst = 0.0f64;
        for i in 0..n * p {
            let mean = sums[i] / draws as f64;
            let var = sq[i] / draws as f64 - mean * mean;
            worst = worst.max(mean.abs() / (var / draws as f64).sqrt());
        }
        // 100 entries; the largest z-score staying under 4 is the 3-sigma rule with a union allowance
        assert!(worst <= 4.0, "worst z-score {worst}");
    }

    #[test]
    fn n_hat_by_direct_arithmetic() {
        let inst = sample_bernoulli_matrix(10_000, 100, 0.5, &mut from_seed(6)).unwrap();
        let lp = 100f64.ln();
        let n_hat = l1_norm_estimator(&inst, &vec![0.0; 10_000], default_theta(100)).unwrap();
        let denom = 10_000.0 * 0.5 - (6.0 * 10_000.0 * 0.25 * lp).sqrt() - 0.5 * lp;
        let want = ((3.0 * lp / 2.0).sqrt() + (5.0 * lp / 2.0).sqrt()).powi(2) / denom;
        assert!((n_hat - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn n_hat_regime_violation() {
        let inst = sample_bernoulli_matrix(10, 3, 0.1, &mut from_seed(7)).unwrap();
        let err = l1_norm_estimator(&inst, &vec![0.0; 10], default_theta(1_000_000)).unwrap_err();
        assert!(matches!(err, Error::RegimeViolation(_)));
        assert!(constant_weight_bernoulli(&inst, &vec![0.0; 10], 1.0, default_theta(1_000_000)).is_err());
    }

    #[test]
    fn max_w_matches_direct_sum() {
        let inst = sample_bernoulli_matrix(37, 6, 0.35, &mut from_seed(8)).unwrap();
        let (n, q) = (37.0, 0.35);
        let mut best = f64::NEG_INFINITY;
        for u in 0..6 {
            for k in 0..6 {
                let sk: f64 = (0..37).map(|l| inst.entry(l, k) as f64).sum();
                let w: f64 =
                    (0..37).map(|l| inst.entry(l, u) as f64 * (n * inst.entry(l, k) as f64 - sk).powi(2)).sum::<f64>()
                        / (n * n * (n - 1.0) * (n - 1.0) * q * q * (1.0 - q) * (1.0 - q));
                best = best.max(w);
            }
        }
        let got = max_w(&inst, DEFAULT_MAX_EXACT_W).unwrap();
        assert!((got - best).abs() <= 1e-12 * best);
        assert!(matches!(max_w(&inst, 10.0), Err(Error::GuardExceeded(_))));
    }

    #[test]
    fn v_dot_y_matches_direct_sum() {
        let inst = sample_bernoulli_matrix(29, 5, 0.6, &mut from_seed(9)).unwrap();
        let y: Vec<f64> = (0..29).map(|i| ((i * 7) % 5) as f64).collect();
        let (n, q) = (29.0, 0.6);
        let got = v_dot_y(&inst, &y).unwrap();
        for k in 0..5 {
            let sk: f64 = (0..29).map(|l| inst.entry(l, k) as f64).sum();
            let want: f64 = (0..29)
                .map(|l| ((n * inst.entry(l, k) as f64 - sk) / (n * (n - 1.0) * q * (1.0 - q))).powi(2) * y[l])
                .sum();
            assert!((got[k] - want).abs() <= 1e-12 * (1.0 + want));
        }
    }

    #[test]
    fn weights_positive_and_flat_without_data() {
        let inst = sample_bernoulli_matrix(2000, 30, 0.5, &mut from_seed(10)).unwrap();
        let y = vec![0.0; 2000];
        let theta = default_theta(30);
        let dc = constant_weight_bernoulli(&inst, &y, 1.0, theta).unwrap();
        assert!(dc.d_min() > 0.0);
        let dn = nonconstant_weights_bernoulli(&inst, &y, 1.0, theta).unwrap();
        assert!(dn.values().windows(2).all(|w| w[0] == w[1]));
        assert!(dn.d_min() > 0.0);
    }

    #[test]
    fn nonconstant_formula_direct() {
        let inst = sample_bernoulli_matrix(400, 8, 0.25, &mut from_seed(11)).unwrap();
        let y: Vec<f64> = (0..400).map(|i| (i % 3) as f64).collect();
        let p = 8f64;
        let lp = p.ln();
        let (n, q, c) = (400.0f64, 0.25f64, 1.0);
        let n_hat = l1_norm_estimator(&inst, &y, 3.0 * lp).unwrap();
        let vy = v_dot_y(&inst, &y).unwrap();
        let d = nonconstant_weights_bernoulli(&inst, &y, c, 3.0 * lp).unwrap();
        let den = (n - 1.0).powi(2) * q * q * (1.0 - q).powi(2);
        for k in 0..8 {
            let want = (6.0 * lp).sqrt() * ((3.0 * lp / (2.0 * den)).sqrt() + (5.0 * lp / (2.0 * den) + vy[k]).sqrt())
                + lp / ((n - 1.0) * q * (1.0 - q))
                + c * (3.0 * lp / n + 9.0 * (1.0 - q).powi(2) / (n * n * q * (1.0 - q)) * lp * lp) * n_hat;
            assert!((d.values()[k] - want).abs() <= 1e-12 * want);
        }
        let w = max_w(&inst, DEFAULT_MAX_EXACT_W).unwrap();
        let dc = constant_weight_bernoulli(&inst, &y, c, 3.0 * lp).unwrap();
        let want = (6.0 * w * lp).sqrt() * n_hat.sqrt()
            + lp / ((n - 1.0) * q * (1.0 - q))
            + c * (3.0 * lp / n + 9.0 * (1.0 - q).powi(2) / (n * n * q * (1.0 - q)) * lp * lp) * n_hat;
        assert!((dc.values()[0] - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn decomposition_identity() {
        for seed in 0..5 {
            let mut rng = from_seed(100 + seed);
            let (n, p) = (40, 7);
            let inst = sample_bernoulli_matrix(n, p, 0.4, &mut rng).unwrap();
            let sig = make_sparse_signal(p, 3, 10.0, &mut rng).unwrap();
            let x = sig.to_dense();
            let y = sample_poisson(&inst.intensity(&x).unwrap(), &mut rng).unwrap().to_f64();
            let sp = surrogate_bernoulli(&inst, &y).unwrap();
            let z = sp.correlation_residual(&x).unwrap();
            let (t1, t2) = noise_decomposition(&inst, &y, &x).unwrap();

            // direct double-loop form of 𝕄
            let q = 0.4;
            let nqq = (n - 1) as f64 * n as f64 * q * (1.0 - q);
            for k in 0..p {
                let mut t2_direct = 0.0;
                for kp in 0..p {
                    let mut m = 0.0;
                    for l in 0..n {
                        for lp in 0..n {
                            if l != lp {
                                m += (inst.entry(l, k) as f64 - q) * (inst.entry(lp, kp) as f64 - q);
                            }
                        }
                    }
                    t2_direct += -m / nqq * x[kp];
                }
                assert!((t2[k] - t2_direct).abs() <= 1e-10);
                assert!((t1[k] + t2[k] - z[k]).abs() <= 1e-10, "k={k}");
            }
        }
    }

    #[test]
    fn xi_bound_formula() {
        let v = xi_bound(2000, 50, 0.5);
        let lp = 50f64.ln();
        let want = (6.0 * lp / 2000.0).sqrt() + lp / 2000.0;
        assert!((v - want).abs() < 1e-15);
    }
}
