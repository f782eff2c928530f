//! Ground-truth signals, Poisson sampling and the linear operators shared by
//! both sensing models.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{check_len, invalid, Error, Result};

/// Non-negative `s`-sparse ground truth with a fixed ℓ1 mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    p: usize,
    support: Vec<usize>,
    values: Vec<f64>,
    target_l1: f64,
}

impl SparseSignal {
    /// Builds a signal from explicit parts, checking every invariant.
    pub fn new(p: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(invalid("support and values differ in length"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("support must be strictly increasing"));
        }
        if support.last().is_some_and(|&k| k >= p) {
            return Err(invalid("support index out of range"));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("signal values must be positive and finite"));
        }
        let target_l1 = values.iter().sum();
        Ok(Self { p, support, values, target_l1 })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn target_l1(&self) -> f64 {
        self.target_l1
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Dense length-`p` vector.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.p];
        for (&k, &v) in self.support.iter().zip(&self.values) {
            x[k] = v;
        }
        x
    }
}

/// Draws a uniformly placed support of size `s` carrying the offset
/// exponential series `exp(-j/s) + 0.2`, rescaled to total mass `target_l1`.
pub fn make_sparse_signal<R: Rng + ?Sized>(p: usize, s: usize, target_l1: f64, rng: &mut R) -> Result<SparseSignal> {
    if s > p {
        return Err(invalid(format!("sparsity {s} exceeds dimension {p}")));
    }
    if s == 0 {
        if target_l1 != 0.0 {
            return Err(invalid("an empty support requires target_l1 = 0"));
        }
        return Ok(SparseSignal { p, support: Vec::new(), values: Vec::new(), target_l1: 0.0 });
    }
    if !(target_l1 > 0.0 && target_l1.is_finite()) {
        return Err(invalid("target_l1 must be positive and finite"));
    }
    let drawn = rand::seq::index::sample(rng, p, s).into_vec();
    let raw: Vec<f64> = (0..s).map(|j| (-(j as f64) / s as f64).exp() + 0.2).collect();
    let scale = target_l1 / raw.iter().sum::<f64>();
    let mut pairs: Vec<(usize, f64)> = drawn.into_iter().zip(raw.iter().map(|v| v * scale)).collect();
    pairs.sort_unstable_by_key(|&(k, _)| k);
    let (support, values) = pairs.into_iter().unzip();
    Ok(SparseSignal { p, support, values, target_l1 })
}

/// Poisson counts `Y`, one per measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoissonObservations {
    counts: Vec<u64>,
}

impl PoissonObservations {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Independent Poisson draws, one per intensity.
pub fn sample_poisson<R: Rng + ?Sized>(intensity: &[f64], rng: &mut R) -> Result<PoissonObservations> {
    if let Some(bad) = intensity.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(invalid(format!("intensity must be finite and non-negative, got {bad}")));
    }
    Ok(PoissonObservations::new(intensity.iter().map(|&l| poisson_draw(l, rng)).collect()))
}

/// Exact Poisson variate: multiplication-of-uniforms inversion below 10,
/// Hörmann's transformed rejection (PTRS) above.
pub fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda == 0.0 {
        return 0;
    }
    if lambda < 10.0 {
        let floor = (-lambda).exp();
        let mut prod = 1.0;
        let mut k = 0u64;
        loop {
            prod *= rng.random::<f64>();
            if prod > floor {
                k += 1;
            } else {
                return k;
            }
        }
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v = rng.random::<f64>();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -lambda + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// log Γ(x) for x ≥ 1 via the Stirling series after shifting to x ≥ 7.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 10] = [
        8.333333333333333e-02,
        -2.777777777777778e-03,
        7.936507936507937e-04,
        -5.952380952380952e-04,
        8.417508417508418e-04,
        -1.917526917526918e-03,
        6.41025641025641e-03,
        -2.955065359477124e-02,
        1.796443723688307e-01,
        -1.39243221690590e+00,
    ];
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let shift = if x < 7.0 { (7.0 - x.floor()) as i32 } else { 0 };
    let x0 = x + shift as f64;
    let x2 = 1.0 / (x0 * x0);
    let mut series = COEF[9];
    for c in COEF[..9].iter().rev() {
        series = series * x2 + c;
    }
    let mut gl = series / x0 + 0.5 * (2.0 * std::f64::consts::PI).ln() + (x0 - 0.5) * x0.ln() - x0;
    let mut xs = x0;
    for _ in 0..shift {
        xs -= 1.0;
        gl -= xs.ln();
    }
    gl
}

/// A linear map `R^p -> R^n`, either an explicit matrix or a `p x p`
/// circulant given by its generator (`entry(l, k) = c[(l - k) mod p]`).
#[derive(Debug, Clone, PartialEq)]
pub enum LinearOperator {
    Dense(DMatrix<f64>),
    Circulant(Vec<f64>),
}

impl LinearOperator {
    pub fn nrows(&self) -> usize {
        match self {
            LinearOperator::Dense(a) => a.nrows(),
            LinearOperator::Circulant(c) => c.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            LinearOperator::Dense(a) => a.ncols(),
            LinearOperator::Circulant(c) => c.len(),
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        match self {
            LinearOperator::Dense(a) => a[(row, col)],
            LinearOperator::Circulant(c) => {
                let p = c.len();
                c[(row + p - col) % p]
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ncols(), x.len())?;
        Ok(match self {
            LinearOperator::Dense(a) => {
                let mut out = vec![0.0; a.nrows()];
                for (k, &xk) in x.iter().enumerate() {
                    if xk != 0.0 {
                        for (o, &akl) in out.iter_mut().zip(a.column(k).iter()) {
                            *o += akl * xk;
                        }
                    }
                }
                out
            }
            LinearOperator::Circulant(c) => {
                // column k is c rotated down by k
                let p = c.len();
                let mut out = vec![0.0; p];
                for (k, &xk) in x.iter().enumerate() {
                    if xk != 0.0 {
                        let (head, tail) = out.split_at_mut(k);
                        for (o, &cj) in tail.iter_mut().zip(&c[..p - k]) {
                            *o += cj * xk;
                        }
                        for (o, &cj) in head.iter_mut().zip(&c[p - k..]) {
                            *o += cj * xk;
                        }
                    }
                }
                out
            }
        })
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.nrows(), y.len())?;
        Ok(match self {
            LinearOperator::Dense(a) => a.column_iter().map(|col| dot(col.as_slice(), y)).collect(),
            LinearOperator::Circulant(c) => circular_correlation(c, y),
        })
    }

    /// Column `k` as an owned vector.
    pub fn column(&self, k: usize) -> Vec<f64> {
        match self {
            LinearOperator::Dense(a) => a.column(k).iter().copied().collect(),
            LinearOperator::Circulant(c) => {
                let p = c.len();
                (0..p).map(|l| c[(l + p - k) % p]).collect()
            }
        }
    }

    /// Columns restricted to `support`, as an `n x |support|` matrix.
    pub fn columns(&self, support: &[usize]) -> DMatrix<f64> {
        let n = self.nrows();
        let mut out = DMatrix::zeros(n, support.len());
        for (j, &k) in support.iter().enumerate() {
            out.set_column(j, &nalgebra::DVector::from_vec(self.column(k)));
        }
        out
    }

    pub fn materialize(&self) -> DMatrix<f64> {
        match self {
            LinearOperator::Dense(a) => a.clone(),
            LinearOperator::Circulant(c) => {
                let p = c.len();
                DMatrix::from_fn(p, p, |l, k| c[(l + p - k) % p])
            }
        }
    }

    /// Gram matrix `AᵀA`; a circulant operator keeps a circulant Gram.
    pub fn gram(&self) -> Gram {
        match self {
            LinearOperator::Dense(a) => Gram::Dense(a.transpose() * a),
            LinearOperator::Circulant(c) => Gram::Circulant(circular_correlation(c, c)),
        }
    }
}

/// `out[k] = Σ_j a[j] · b[(j + k) mod p]`.
pub fn circular_correlation(a: &[f64], b: &[f64]) -> Vec<f64> {
    let p = a.len();
    debug_assert_eq!(p, b.len());
    let mut out = vec![0.0; p];
    for (j, &aj) in a.iter().enumerate() {
        if aj == 0.0 {
            continue;
        }
        // out[k] += aj * b[j + k] for k < p - j, wrapping afterwards
        let (left, right) = out.split_at_mut(p - j);
        for (o, &bv) in left.iter_mut().zip(&b[j..]) {
            *o += aj * bv;
        }
        for (o, &bv) in right.iter_mut().zip(&b[..j]) {
            *o += aj * bv;
        }
    }
    out
}

/// Symmetric `p x p` Gram matrix, explicit or circulant.
#[derive(Debug, Clone, PartialEq)]
pub enum Gram {
    Dense(DMatrix<f64>),
    /// `G[k][l] = g[(l - k) mod p]`, with `g` symmetric under `d -> -d`.
    Circulant(Vec<f64>),
}

impl Gram {
    pub fn dim(&self) -> usize {
        match self {
            Gram::Dense(g) => g.ncols(),
            Gram::Circulant(g) => g.len(),
        }
    }

    pub fn diag(&self, k: usize) -> f64 {
        match self {
            Gram::Dense(g) => g[(k, k)],
            Gram::Circulant(g) => g[0],
        }
    }

    pub fn entry(&self, k: usize, l: usize) -> f64 {
        match self {
            Gram::Dense(g) => g[(k, l)],
            Gram::Circulant(g) => {
                let p = g.len();
                g[(l + p - k) % p]
            }
        }
    }

    /// `v -= scale · G[:, k]`.
    pub fn sub_scaled_column(&self, k: usize, scale: f64, v: &mut [f64]) {
        match self {
            Gram::Dense(g) => {
                for (vi, &gi) in v.iter_mut().zip(g.column(k).iter()) {
                    *vi -= scale * gi;
                }
            }
            Gram::Circulant(g) => {
                let p = g.len();
                // G[i][k] = g[(k - i) mod p] = g[(i - k) mod p] by symmetry
                let (head, tail) = v.split_at_mut(k);
                for (vi, &gi) in tail.iter_mut().zip(&g[..p - k]) {
                    *vi -= scale * gi;
                }
                for (vi, &gi) in head.iter_mut().zip(&g[p - k..]) {
                    *vi -= scale * gi;
                }
            }
        }
    }

    pub fn materialize(&self) -> DMatrix<f64> {
        match self {
            Gram::Dense(g) => g.clone(),
            Gram::Circulant(_) => {
                let p = self.dim();
                DMatrix::from_fn(p, p, |k, l| self.entry(k, l))
            }
        }
    }
}

/// Recentred/rescaled design and data on which every estimator operates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogatePair {
    pub a_tilde: LinearOperator,
    pub y_tilde: Vec<f64>,
}

impl SurrogatePair {
    pub fn new(a_tilde: LinearOperator, y_tilde: Vec<f64>) -> Result<Self> {
        check_len(a_tilde.nrows(), y_tilde.len())?;
        if y_tilde.iter().any(|v| !v.is_finite()) {
            return Err(invalid("surrogate observations must be finite"));
        }
        Ok(Self { a_tilde, y_tilde })
    }

    pub fn p(&self) -> usize {
        self.a_tilde.ncols()
    }

    pub fn n(&self) -> usize {
        self.a_tilde.nrows()
    }

    /// `Ãᵀ(Ỹ − Ã x)`.
    pub fn correlation_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a_tilde.apply(x)?;
        let r: Vec<f64> = self.y_tilde.iter().zip(&ax).map(|(y, a)| y - a).collect();
        self.a_tilde.apply_adjoint(&r)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} contains non-finite values")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn empty_signal() {
        let s = make_sparse_signal(10, 0, 0.0, &mut from_seed(1)).unwrap();
        assert!(s.support().is_empty());
        assert_eq!(s.to_dense(), vec![0.0; 10]);
    }

    #[test]
    fn signal_normalization_and_full_support() {
        let s = make_sparse_signal(5000, 5, 123.4, &mut from_seed(2)).unwrap();
        assert_eq!(s.sparsity(), 5);
        assert!((s.l1_norm() - 123.4).abs() <= 1e-12 * 123.4);

        let full = make_sparse_signal(8, 8, 1.0, &mut from_seed(3)).unwrap();
        assert_eq!(full.support(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert!((full.l1_norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn signal_errors() {
        assert!(make_sparse_signal(3, 4, 1.0, &mut from_seed(1)).is_err());
        assert!(make_sparse_signal(3, 2, 0.0, &mut from_seed(1)).is_err());
        assert!(make_sparse_signal(3, 2, -1.0, &mut from_seed(1)).is_err());
    }

    #[test]
    fn signal_determinism() {
        let a = make_sparse_signal(100, 7, 10.0, &mut from_seed(9)).unwrap();
        let b = make_sparse_signal(100, 7, 10.0, &mut from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_intensity_gives_zero_counts() {
        let y = sample_poisson(&[0.0, 0.0, 0.0], &mut from_seed(1)).unwrap();
        assert_eq!(y.counts(), &[0, 0, 0]);
        assert!(sample_poisson(&[-1.0], &mut from_seed(1)).is_err());
        assert!(sample_poisson(&[f64::NAN], &mut from_seed(1)).is_err());
    }

    #[test]
    fn poisson_mean_small_rate() {
        let n = 100_000;
        let y = sample_poisson(&vec![4.0; n], &mut from_seed(11)).unwrap();
        let mean = y.total() as f64 / n as f64;
        assert!((mean - 4.0).abs() <= 3.0 * (4.0f64 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn poisson_zero_probability() {
        let n = 100_000;
        let y = sample_poisson(&vec![2.0; n], &mut from_seed(12)).unwrap();
        let p0 = y.counts().iter().filter(|&&c| c == 0).count() as f64 / n as f64;
        let exact = (-2.0f64).exp();
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((p0 - exact).abs() <= 3.0 * se, "P(Y=0) = {p0}");
    }

    #[test]
    fn poisson_rejection_branch_moments() {
        // exercises the PTRS path; variance equals mean
        for &lambda in &[10.0, 57.3, 4000.0] {
            let n = 50_000;
            let y = sample_poisson(&vec![lambda; n], &mut from_seed(13)).unwrap().to_f64();
            let mean = y.iter().sum::<f64>() / n as f64;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - lambda).abs() <= 4.0 * (lambda / n as f64).sqrt(), "mean {mean} at {lambda}");
            // Var of the sample variance ≈ (2λ² + λ)/n
            let var_se = ((2.0 * lambda * lambda + lambda) / n as f64).sqrt();
            assert!((var - lambda).abs() <= 4.0 * var_se, "var {var} at {lambda}");
        }
    }

    #[test]
    fn poisson_pmf_at_rate_twelve() {
        let lambda: f64 = 12.0;
        let n = 200_000;
        let y = sample_poisson(&vec![lambda; n], &mut from_seed(14)).unwrap();
        for k in [6u64, 12, 18] {
            let emp = y.counts().iter().filter(|&&c| c == k).count() as f64 / n as f64;
            let mut log_fact = 0.0;
            for i in 1..=k {
                log_fact += (i as f64).ln();
            }
            let exact = (k as f64 * lambda.ln() - lambda - log_fact).exp();
            let se = (exact * (1.0 - exact) / n as f64).sqrt();
            assert!((emp - exact).abs() <= 4.0 * se, "P(Y={k}) {emp} vs {exact}");
        }
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut log_fact = 0.0f64;
        for k in 1..40u32 {
            log_fact += (k as f64).ln();
            assert!((ln_gamma(k as f64 + 1.0) - log_fact).abs() < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn identity_generator_is_identity() {
        let mut c = vec![0.0; 7];
        c[0] = 1.0;
        let op = LinearOperator::Circulant(c);
        let x = random_vec(&mut from_seed(4), 7);
        assert_eq!(op.apply(&x).unwrap(), x);
        assert_eq!(op.apply_adjoint(&x).unwrap(), x);
    }

    #[test]
    fn circulant_matches_dense_materialization() {
        let mut rng = from_seed(5);
        let c = random_vec(&mut rng, 16);
        let x = random_vec(&mut rng, 16);
        let op = LinearOperator::Circulant(c.clone());
        // direct table entry(l, k) = c[(l - k) mod p]
        let dense = DMatrix::from_fn(16, 16, |l, k| c[(l + 16 - k) % 16]);
        assert_eq!(op.materialize(), dense);
        let want = &dense * nalgebra::DVector::from_vec(x.clone());
        let got = op.apply(&x).unwrap();
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() <= 1e-12);
        }
        let want_t = dense.transpose() * nalgebra::DVector::from_vec(x.clone());
        let got_t = op.apply_adjoint(&x).unwrap();
        for (g, w) in got_t.iter().zip(want_t.iter()) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn circulant_gram_is_symmetric_circulant() {
        let mut rng = from_seed(6);
        let op = LinearOperator::Circulant(random_vec(&mut rng, 11));
        let dense_gram = op.materialize().transpose() * op.materialize();
        let gram = op.gram();
        for k in 0..11 {
            let mut e = vec![0.0; 11];
            e[k] = 1.0;
            let col = op.apply_adjoint(&op.apply(&e).unwrap()).unwrap();
            for l in 0..11 {
                assert!((gram.entry(l, k) - dense_gram[(l, k)]).abs() < 1e-12);
                assert!((col[l] - dense_gram[(l, k)]).abs() < 1e-12);
                assert!((gram.entry(k, l) - gram.entry(l, k)).abs() < 1e-12);
                let lag = (l + 11 - k) % 11;
                assert!((gram.entry(k, l) - gram.entry(0, lag)).abs() < 1e-12);
            }
        }
        let mut v = vec![1.0; 11];
        gram.sub_scaled_column(3, 2.0, &mut v);
        for l in 0..11 {
            assert!((v[l] - (1.0 - 2.0 * dense_gram[(l, 3)])).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let op = LinearOperator::Dense(DMatrix::zeros(3, 4));
        assert!(op.apply(&[1.0; 3]).is_err());
        assert!(op.apply_adjoint(&[1.0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn operator_duality(seed in any::<u64>(), n in 1usize..64, p in 1usize..64, circ in any::<bool>()) {
            let mut rng = from_seed(seed);
            let op = if circ {
                LinearOperator::Circulant(random_vec(&mut rng, p))
            } else {
                LinearOperator::Dense(DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5))
            };
            let x = random_vec(&mut rng, op.ncols());
            let y = random_vec(&mut rng, op.nrows());
            let lhs = dot(&op.apply(&x).unwrap(), &y);
            let rhs = dot(&x, &op.apply_adjoint(&y).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn generated_signals_keep_their_mass(seed in any::<u64>(), p in 1usize..300, frac in 0.0f64..1.0, l1 in 1e-3f64..1e4) {
            let s = ((p as f64 * frac) as usize).max(1);
            let sig = make_sparse_signal(p, s, l1, &mut from_seed(seed)).unwrap();
            prop_assert!((sig.l1_norm() - l1).abs() <= 1e-12 * l1);
            prop_assert!(sig.support().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(sig.values().iter().all(|&v| v > 0.0));
        }
    }
}
