//! Weighted LASSO by cyclic coordinate descent, its optimality certificate,
//! and the least-squares refits (oracle and two-step).
//!
//! The objective carries no ½ on the quadratic term:
//!
//! ```text
//! C(x) = ‖Ỹ − Ã x‖² + γ Σ_k d_k |x_k|
//! ```
//!
//! so every coordinate threshold is `γ d_k / 2`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{check_len, invalid, Error, Result};
use crate::model::{ensure_finite, Gram, SurrogatePair};

/// Where a weight vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightKind {
    Constant,
    Nonconstant,
    Oracle,
}

impl WeightKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightKind::Constant => "constant",
            WeightKind::Nonconstant => "nonconstant",
            WeightKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "constant" => Ok(WeightKind::Constant),
            "nonconstant" => Ok(WeightKind::Nonconstant),
            "oracle" => Ok(WeightKind::Oracle),
            other => Err(invalid(format!("unknown weight kind `{other}`"))),
        }
    }
}

/// Strictly positive per-coordinate penalty weights `d_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    d: Vec<f64>,
    kind: WeightKind,
}

impl WeightVector {
    pub fn new(d: Vec<f64>, kind: WeightKind) -> Result<Self> {
        if d.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("weights must be positive and finite"));
        }
        if kind == WeightKind::Constant && d.windows(2).any(|w| w[0] != w[1]) {
            return Err(invalid("constant weights must all be equal"));
        }
        Ok(Self { d, kind })
    }

    pub fn constant(value: f64, p: usize) -> Result<Self> {
        Self::new(vec![value; p], WeightKind::Constant)
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn d_max(&self) -> f64 {
        self.d.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn d_min(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `((γ + 2)/(γ − 2)) · d_max / d_min`; only meaningful for γ > 2.
    pub fn rho(&self, gamma: f64) -> f64 {
        (gamma + 2.0) / (gamma - 2.0) * self.d_max() / self.d_min()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    /// Relative coordinate-change tolerance; the effective threshold is
    /// `tol_coord · (1 + ‖Ỹ‖∞)`.
    pub tol_coord: f64,
    pub tol_kkt: f64,
    /// Maximum number of full sweeps.
    pub max_iter: usize,
    pub support_eps: f64,
    /// Record the exact objective after every sweep (costly, for testing).
    pub record_objective: bool,
}

impl SolverConfig {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, tol_coord: 1e-9, tol_kkt: 1e-8, max_iter: 10_000, support_eps: 1e-9, record_objective: false }
    }

    /// The theory needs γ > 2; smaller values are accepted but flagged.
    pub fn gamma_in_theory_range(&self) -> bool {
        self.gamma > 2.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma must be positive"));
        }
        if !(self.tol_coord > 0.0 && self.tol_kkt > 0.0) || self.max_iter == 0 || self.support_eps < 0.0 {
            return Err(invalid("solver tolerances must be positive and max_iter >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_hat: Vec<f64>,
    /// Number of full sweeps performed.
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub converged: bool,
    /// Objective after each sweep when `record_objective` is set.
    pub objective_trace: Vec<f64>,
}

impl SolveResult {
    pub fn support(&self, eps: f64) -> Vec<usize> {
        estimated_support(&self.x_hat, eps)
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn objective(surrogate: &SurrogatePair, w: &WeightVector, gamma: f64, x: &[f64]) -> Result<f64> {
    check_len(surrogate.p(), x.len())?;
    check_len(surrogate.p(), w.len())?;
    let ax = surrogate.a_tilde.apply(x)?;
    let fit: f64 = surrogate.y_tilde.iter().zip(&ax).map(|(y, a)| (y - a).powi(2)).sum();
    let penalty: f64 = w.values().iter().zip(x).map(|(d, xk)| d * xk.abs()).sum();
    Ok(fit + gamma * penalty)
}

/// Largest violation of the first-order optimality conditions; zero exactly
/// at a global minimiser.
pub fn kkt_check(surrogate: &SurrogatePair, w: &WeightVector, gamma: f64, x: &[f64]) -> Result<f64> {
    check_len(surrogate.p(), x.len())?;
    check_len(surrogate.p(), w.len())?;
    let grad = surrogate.correlation_residual(x)?;
    Ok(kkt_from_gradient(&grad, w.values(), gamma, x))
}

fn kkt_from_gradient(grad: &[f64], d: &[f64], gamma: f64, x: &[f64]) -> f64 {
    grad.iter()
        .zip(d)
        .zip(x)
        .map(|((&g, &dk), &xk)| {
            let t = gamma * dk / 2.0;
            if xk != 0.0 {
                (g - t * xk.signum()).abs()
            } else {
                (g.abs() - t).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// A surrogate pair with its Gram matrix and `ÃᵀỸ` precomputed, so that
/// repeated solves (several γ, several weight families) share the setup.
#[derive(Debug, Clone)]
pub struct LassoProblem<'a> {
    surrogate: &'a SurrogatePair,
    gram: Gram,
    aty: Vec<f64>,
    y_inf: f64,
}

impl<'a> LassoProblem<'a> {
    pub fn new(surrogate: &'a SurrogatePair) -> Result<Self> {
        ensure_finite(&surrogate.y_tilde, "surrogate observations")?;
        let gram = surrogate.a_tilde.gram();
        for k in 0..surrogate.p() {
            let g = gram.diag(k);
            if !g.is_finite() {
                return Err(invalid("design contains non-finite values"));
            }
            if g <= 0.0 {
                return Err(Error::DegenerateColumn(k));
            }
        }
        let aty = surrogate.a_tilde.apply_adjoint(&surrogate.y_tilde)?;
        let y_inf = surrogate.y_tilde.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self { surrogate, gram, aty, y_inf })
    }

    pub fn surrogate(&self) -> &SurrogatePair {
        self.surrogate
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    /// Cyclic coordinate descent from `x0` (or zero).
    pub fn solve(&self, w: &WeightVector, cfg: &SolverConfig, x0: Option<&[f64]>) -> Result<SolveResult> {
        cfg.validate()?;
        let p = self.surrogate.p();
        check_len(p, w.len())?;
        let mut x = match x0 {
            Some(x0) => {
                check_len(p, x0.len())?;
                ensure_finite(x0, "warm start")?;
                x0.to_vec()
            }
            None => vec![0.0; p],
        };
        let thresholds: Vec<f64> = w.values().iter().map(|d| cfg.gamma * d / 2.0).collect();
        let tol_coord = cfg.tol_coord * (1.0 + self.y_inf);

        // grad = Ãᵀ(Ỹ − Ãx) = ÃᵀỸ − G x, kept up to date by rank-one corrections
        let mut grad = self.fresh_gradient(&x)?;
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        while iterations < cfg.max_iter {
            iterations += 1;
            let mut max_delta = 0.0f64;
            for k in 0..p {
                let gkk = self.gram.diag(k);
                let z = grad[k] + gkk * x[k];
                let new = soft_threshold(z, thresholds[k]) / gkk;
                let delta = new - x[k];
                if delta != 0.0 {
                    x[k] = new;
                    self.gram.sub_scaled_column(k, delta, &mut grad);
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if cfg.record_objective {
                trace.push(objective(self.surrogate, w, cfg.gamma, &x)?);
            }
            if max_delta < tol_coord {
                grad = self.fresh_gradient(&x)?;
                if kkt_from_gradient(&grad, w.values(), cfg.gamma, &x) < cfg.tol_kkt {
                    converged = true;
                    break;
                }
            }
        }
        let kkt_residual = kkt_check(self.surrogate, w, cfg.gamma, &x)?;
        let objective = objective(self.surrogate, w, cfg.gamma, &x)?;
        Ok(SolveResult {
            x_hat: x,
            iterations,
            kkt_residual,
            objective,
            converged: converged && kkt_residual <= cfg.tol_kkt,
            objective_trace: trace,
        })
    }

    fn fresh_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().all(|&v| v == 0.0) {
            return Ok(self.aty.clone());
        }
        self.surrogate.correlation_residual(x)
    }
}

/// Weighted LASSO estimate; with constant weights this is the plain LASSO.
pub fn weighted_lasso(
    surrogate: &SurrogatePair,
    w: &WeightVector,
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
) -> Result<SolveResult> {
    LassoProblem::new(surrogate)?.solve(w, cfg, x0)
}

/// Indices with `|x_k| > eps`.
pub fn estimated_support(x: &[f64], eps: f64) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| v.abs() > eps).map(|(k, _)| k).collect()
}

/// Smallest singular value must exceed this multiple of the largest.
pub const RANK_TOL: f64 = 1e-10;

/// Least squares restricted to `support`, zero-filled elsewhere.
pub fn oracle_least_squares(surrogate: &SurrogatePair, support: &[usize]) -> Result<Vec<f64>> {
    let p = surrogate.p();
    if support.is_empty() {
        return Err(invalid("least squares needs a non-empty support"));
    }
    if support.iter().any(|&k| k >= p) {
        return Err(invalid("support index out of range"));
    }
    let n = surrogate.n();
    if support.len() > n {
        return Err(Error::SingularDesign { sigma_min: 0.0, sigma_max: f64::NAN });
    }
    let a_s = surrogate.a_tilde.columns(support);
    let svd = a_s.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    if !(sigma_min > RANK_TOL * sigma_max) {
        return Err(Error::SingularDesign { sigma_min, sigma_max });
    }
    let y = DVector::from_column_slice(&surrogate.y_tilde);
    let z = svd.solve(&y, 0.0).map_err(|e| invalid(e.to_string()))?;
    let mut x = vec![0.0; p];
    for (&k, &v) in support.iter().zip(z.iter()) {
        x[k] = v;
    }
    Ok(x)
}

/// Support detection by a first-stage solve followed by a least-squares
/// refit on the detected support.
pub fn two_step(
    first_stage: &SolveResult,
    surrogate: &SurrogatePair,
    support_eps: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    ensure_finite(&first_stage.x_hat, "first-stage estimate")?;
    let support = estimated_support(&first_stage.x_hat, support_eps);
    if support.is_empty() {
        return Ok((support, vec![0.0; surrogate.p()]));
    }
    let x = oracle_least_squares(surrogate, &support)?;
    Ok((support, x))
}

/// Largest `|ã_kᵀ r|` over `support`, with `r` the least-squares residual.
pub fn normal_equation_residual(surrogate: &SurrogatePair, x: &[f64], support: &[usize]) -> Result<f64> {
    let grad = surrogate.correlation_residual(x)?;
    Ok(support.iter().map(|&k| grad[k].abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dot, LinearOperator};
    use crate::rng::from_seed;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn identity2(y: Vec<f64>) -> SurrogatePair {
        SurrogatePair::new(LinearOperator::Dense(DMatrix::identity(2, 2)), y).unwrap()
    }

    fn random_dense(seed: u64, n: usize, p: usize) -> SurrogatePair {
        let mut rng = from_seed(seed);
        let a = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        SurrogatePair::new(LinearOperator::Dense(a), y).unwrap()
    }

    fn random_weights(seed: u64, p: usize) -> WeightVector {
        let mut rng = from_seed(seed);
        WeightVector::new((0..p).map(|_| 0.05 + rng.random::<f64>()).collect(), WeightKind::Nonconstant).unwrap()
    }

    fn tight(gamma: f64) -> SolverConfig {
        SolverConfig { tol_coord: 1e-13, ..SolverConfig::new(gamma) }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 2.0), 1.0);
        assert_eq!(soft_threshold(-3.0, 2.0), -1.0);
        assert_eq!(soft_threshold(1.0, 2.0), 0.0);
    }

    #[test]
    fn objective_values() {
        let sp = identity2(vec![3.0, -1.0]);
        let w = WeightVector::constant(1.0, 2).unwrap();
        assert_eq!(objective(&sp, &w, 4.0, &[0.0, 0.0]).unwrap(), 10.0);
        assert_eq!(objective(&sp, &w, 4.0, &[1.0, 0.0]).unwrap(), 9.0);
        assert!(objective(&sp, &w, 4.0, &[1.0]).is_err());
    }

    #[test]
    fn orthonormal_example() {
        let sp = identity2(vec![3.0, -1.0]);
        let w = WeightVector::constant(1.0, 2).unwrap();
        let res = weighted_lasso(&sp, &w, &SolverConfig::new(4.0), None).unwrap();
        assert_eq!(res.x_hat, vec![1.0, 0.0]);
        assert!(res.converged);
        assert!(kkt_check(&sp, &w, 4.0, &res.x_hat).unwrap() <= 1e-12);
    }

    #[test]
    fn zero_data_single_sweep() {
        let mut sp = random_dense(1, 10, 15);
        sp.y_tilde = vec![0.0; 10];
        let w = random_weights(2, 15);
        let res = weighted_lasso(&sp, &w, &SolverConfig::new(3.0), None).unwrap();
        assert_eq!(res.x_hat, vec![0.0; 15]);
        assert_eq!(res.iterations, 1);
        assert_eq!(kkt_check(&sp, &w, 3.0, &res.x_hat).unwrap(), 0.0);
    }

    #[test]
    fn random_instance_meets_kkt() {
        let sp = random_dense(3, 20, 40);
        let w = random_weights(4, 40);
        let cfg = SolverConfig::new(0.5);
        let res = weighted_lasso(&sp, &w, &cfg, None).unwrap();
        assert!(res.converged);
        assert!(res.kkt_residual <= 1e-8);
        assert!(res.x_hat.iter().any(|&v| v != 0.0));
        let again = kkt_check(&sp, &w, 0.5, &res.x_hat).unwrap();
        assert!((again - res.kkt_residual).abs() <= 1e-10);
        let obj = objective(&sp, &w, 0.5, &res.x_hat).unwrap();
        assert!((obj - res.objective).abs() <= 1e-10);
    }

    #[test]
    fn perturbation_raises_kkt_violation() {
        let sp = random_dense(5, 30, 20);
        let w = random_weights(6, 20);
        let res = weighted_lasso(&sp, &w, &tight(0.3), None).unwrap();
        let k = res.x_hat.iter().position(|&v| v != 0.0).expect("an active coordinate");
        let mut x = res.x_hat.clone();
        x[k] += 0.1;
        let col = sp.a_tilde.column(k);
        let norm_sq = dot(&col, &col);
        let viol = kkt_check(&sp, &w, 0.3, &x).unwrap();
        assert!(viol >= 0.1 * norm_sq - 1e-8, "{viol} vs {}", 0.1 * norm_sq);
    }

    #[test]
    fn degenerate_column_is_reported() {
        let mut a = DMatrix::from_element(4, 3, 1.0);
        a.column_mut(1).fill(0.0);
        let sp = SurrogatePair::new(LinearOperator::Dense(a), vec![1.0; 4]).unwrap();
        let w = WeightVector::constant(1.0, 3).unwrap();
        assert_eq!(weighted_lasso(&sp, &w, &SolverConfig::new(3.0), None).unwrap_err(), Error::DegenerateColumn(1));
    }

    #[test]
    fn objective_descends_every_sweep() {
        let sp = random_dense(7, 25, 50);
        let w = random_weights(8, 50);
        let cfg = SolverConfig { record_objective: true, ..SolverConfig::new(0.2) };
        let res = weighted_lasso(&sp, &w, &cfg, None).unwrap();
        let mut prev = objective(&sp, &w, 0.2, &vec![0.0; 50]).unwrap();
        assert!(res.objective_trace.len() > 1);
        for &o in &res.objective_trace {
            assert!(o <= prev + 1e-12);
            prev = o;
        }
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let sp = random_dense(9, 40, 30);
        let w = random_weights(10, 30);
        let cold = weighted_lasso(&sp, &w, &tight(0.4), None).unwrap();
        let x0 = vec![0.3; 30];
        let warm = weighted_lasso(&sp, &w, &tight(0.4), Some(&x0)).unwrap();
        for (a, b) in cold.x_hat.iter().zip(&warm.x_hat) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_least_squares() {
        let sp =
            SurrogatePair::new(LinearOperator::Dense(DMatrix::identity(5, 5)), vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let x = oracle_least_squares(&sp, &[2]).unwrap();
        for (a, b) in x.iter().zip([0.0, 0.0, 3.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(oracle_least_squares(&sp, &[]).is_err());
    }

    #[test]
    fn noiseless_least_squares_interpolates() {
        let mut sp = random_dense(11, 30, 50);
        let mut x_star = vec![0.0; 50];
        for (k, v) in [(3, 1.5), (17, -2.0), (40, 0.25)] {
            x_star[k] = v;
        }
        sp.y_tilde = sp.a_tilde.apply(&x_star).unwrap();
        let x = oracle_least_squares(&sp, &[3, 17, 40]).unwrap();
        for (a, b) in x.iter().zip(&x_star) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal() {
        let sp = random_dense(12, 30, 50);
        let support = [1, 9, 22, 48];
        let x = oracle_least_squares(&sp, &support).unwrap();
        assert!(normal_equation_residual(&sp, &x, &support).unwrap() <= 1e-10);
    }

    #[test]
    fn rank_deficient_support_is_singular() {
        let mut a = DMatrix::from_fn(6, 3, |i, j| (i + j) as f64);
        let c0 = a.column(0).clone_owned();
        a.set_column(2, &(c0 * 2.0));
        let sp = SurrogatePair::new(LinearOperator::Dense(a), vec![1.0; 6]).unwrap();
        assert!(matches!(oracle_least_squares(&sp, &[0, 2]), Err(Error::SingularDesign { .. })));
        // more columns than rows
        let wide = random_dense(1, 3, 6);
        assert!(matches!(oracle_least_squares(&wide, &[0, 1, 2, 3]), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn two_step_cases() {
        let sp = random_dense(13, 30, 20);
        let zero = SolveResult {
            x_hat: vec![0.0; 20],
            iterations: 1,
            kkt_residual: 0.0,
            objective: 0.0,
            converged: true,
            objective_trace: vec![],
        };
        let (s, x) = two_step(&zero, &sp, 1e-9).unwrap();
        assert!(s.is_empty());
        assert_eq!(x, vec![0.0; 20]);

        let mut noiseless = sp.clone();
        let mut x_star = vec![0.0; 20];
        x_star[4] = 2.0;
        x_star[11] = 0.7;
        noiseless.y_tilde = noiseless.a_tilde.apply(&x_star).unwrap();
        let first = SolveResult { x_hat: x_star.iter().map(|v| v * 0.5).collect(), ..zero };
        let (s, x) = two_step(&first, &noiseless, 1e-9).unwrap();
        assert_eq!(s, vec![4, 11]);
        for (a, b) in x.iter().zip(&x_star) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn rescaled_form_matches() {
        // solve the z-problem on Ã D⁻¹ with unit weights, then map back
        let sp = random_dense(14, 30, 25);
        let w = random_weights(15, 25);
        let gamma = 0.6;
        let direct = weighted_lasso(&sp, &w, &tight(gamma), None).unwrap();
        let a = match &sp.a_tilde {
            LinearOperator::Dense(a) => a.clone(),
            _ => unreachable!(),
        };
        let scaled = DMatrix::from_fn(30, 25, |i, k| a[(i, k)] / w.values()[k]);
        let zsp = SurrogatePair::new(LinearOperator::Dense(scaled), sp.y_tilde.clone()).unwrap();
        let z = weighted_lasso(&zsp, &WeightVector::constant(1.0, 25).unwrap(), &tight(gamma), None).unwrap();
        for k in 0..25 {
            assert!((z.x_hat[k] / w.values()[k] - direct.x_hat[k]).abs() <= 1e-8);
        }
    }

    #[test]
    fn weight_kind_round_trip() {
        for k in [WeightKind::Constant, WeightKind::Nonconstant, WeightKind::Oracle] {
            assert_eq!(k.as_str().parse::<WeightKind>().unwrap(), k);
        }
        assert!("bogus".parse::<WeightKind>().is_err());
        assert!(WeightVector::new(vec![1.0, 0.0], WeightKind::Nonconstant).is_err());
        assert!(WeightVector::new(vec![1.0, 2.0], WeightKind::Constant).is_err());
        let w = WeightVector::new(vec![1.0, 4.0], WeightKind::Nonconstant).unwrap();
        assert_eq!(w.rho(6.0), 2.0 * 4.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn orthonormal_design_is_soft_thresholding(seed in any::<u64>(), p in 1usize..12, gamma in 0.1f64..6.0) {
            // orthonormal columns from a QR factorisation
            let mut rng = from_seed(seed);
            let n = p + 3;
            let m = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
            let q = m.qr().q();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
            let sp = SurrogatePair::new(LinearOperator::Dense(q), y).unwrap();
            let w = random_weights(seed ^ 1, p);
            let res = weighted_lasso(&sp, &w, &tight(gamma), None).unwrap();
            let aty = sp.a_tilde.apply_adjoint(&sp.y_tilde).unwrap();
            for k in 0..p {
                let want = soft_threshold(aty[k], gamma * w.values()[k] / 2.0);
                prop_assert!((res.x_hat[k] - want).abs() <= 1e-10);
            }
        }

        #[test]
        fn penalty_product_equivariance(seed in any::<u64>(), c in 0.2f64..5.0) {
            let sp = random_dense(seed, 15, 20);
            let w = random_weights(seed ^ 7, 20);
            let gamma = 0.4;
            let scaled_w = WeightVector::new(w.values().iter().map(|d| d * c).collect(), WeightKind::Nonconstant).unwrap();
            let a = weighted_lasso(&sp, &scaled_w, &tight(gamma), None).unwrap();
            let b = weighted_lasso(&sp, &w, &tight(gamma * c), None).unwrap();
            for (u, v) in a.x_hat.iter().zip(&b.x_hat) {
                prop_assert!((u - v).abs() <= 1e-10);
            }
        }

        #[test]
        fn converged_results_certify(seed in any::<u64>(), gamma in 0.05f64..3.0) {
            let sp = random_dense(seed, 12, 18);
            let w = random_weights(seed ^ 3, 18);
            let res = weighted_lasso(&sp, &w, &SolverConfig::new(gamma), None).unwrap();
            prop_assert!(res.converged);
            prop_assert!(res.kkt_residual <= 1e-8);
        }
    }
}
