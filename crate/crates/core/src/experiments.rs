//! Monte Carlo comparison of the oracle least squares, the two-step LASSO and
//! the two-step weighted LASSO over a sweep of `m` (or `n`, or `p`).
//!
//! Each trial draws a signal, a design and Poisson counts from its own stream,
//! so results do not depend on the number of threads. The penalty level is
//! tuned on a separate set of trials before the reported trials are run.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bernoulli::{self, BernoulliInstance};
use crate::config::{fmt_exact, fmt_g10, fmt_list, parse_bool, parse_kv, parse_list, parse_value};
use crate::convolution::{self, ConvolutionInstance};
use crate::diagnostics::weights_cover;
use crate::error::{invalid, Error, Result};
use crate::model::{make_sparse_signal, sample_poisson, SurrogatePair};
use crate::rng::{trial_stream, Domain};
use crate::solver::{oracle_least_squares, two_step, LassoProblem, SolverConfig, WeightKind, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Bernoulli,
    Convolution,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Bernoulli => "bernoulli",
            ModelKind::Convolution => "convolution",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(ModelKind::Bernoulli),
            "convolution" => Ok(ModelKind::Convolution),
            _ => Err(invalid(format!("unknown model `{s}`"))),
        }
    }
}

/// Which grid is swept: `m` (convolution), `n` (Bernoulli) or `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    M,
    N,
    P,
}

impl Sweep {
    pub fn as_str(self) -> &'static str {
        match self {
            Sweep::M => "m",
            Sweep::N => "n",
            Sweep::P => "p",
        }
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Sweep::M),
            "n" => Ok(Sweep::N),
            "p" => Ok(Sweep::P),
            _ => Err(invalid(format!("unknown sweep `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Estimator {
    LsOracle,
    LassoTwoStep,
    WlassoTwoStep,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::LsOracle => "ls_oracle",
            Estimator::LassoTwoStep => "lasso_two_step",
            Estimator::WlassoTwoStep => "wlasso_two_step",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls_oracle" => Ok(Estimator::LsOracle),
            "lasso_two_step" => Ok(Estimator::LassoTwoStep),
            "wlasso_two_step" => Ok(Estimator::WlassoTwoStep),
            _ => Err(invalid(format!("unknown estimator `{s}`"))),
        }
    }
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub sweep: Sweep,
    pub p: usize,
    pub s: usize,
    /// Bernoulli rows; ignored by the convolution model.
    pub n: usize,
    /// Bernoulli success probability.
    pub q: f64,
    /// Number of convolution parents when `p` is swept with `c_m = 0`.
    pub m: u64,
    pub m_grid: Vec<u64>,
    pub n_grid: Vec<usize>,
    pub p_grid: Vec<usize>,
    /// `m = round(c_m·√p·log p)` in a convolution `p` sweep; 0 keeps `m` fixed.
    pub c_m: f64,
    pub trials: usize,
    pub tuning_trials: usize,
    pub gamma_grid: Vec<f64>,
    /// Accept penalty levels at or below 2.
    pub allow_small_gamma: bool,
    pub target_l1: f64,
    pub seed: u64,
    pub weight_kinds: Vec<WeightKind>,
    pub estimators: Vec<Estimator>,
    /// Tail parameter; `None` uses the model default.
    pub theta: Option<f64>,
    /// Constant in the Bernoulli weights.
    pub bernoulli_c: f64,
    /// Replace `Y` by its mean `Ax*`.
    pub noiseless: bool,
    pub support_eps: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Convolution,
            sweep: Sweep::M,
            p: 1000,
            s: 5,
            n: 1000,
            q: 0.5,
            m: 40,
            m_grid: vec![10, 20, 40, 80, 160, 320],
            n_grid: vec![250, 500, 1000, 2000],
            p_grid: vec![250, 500, 1000, 2000],
            c_m: 0.25,
            trials: 100,
            tuning_trials: 100,
            gamma_grid: vec![2.1, 2.5, 3.0, 4.0, 6.0, 8.0],
            allow_small_gamma: false,
            target_l1: 100.0,
            seed: 0,
            weight_kinds: vec![WeightKind::Nonconstant],
            estimators: vec![Estimator::LsOracle, Estimator::LassoTwoStep, Estimator::WlassoTwoStep],
            theta: None,
            bernoulli_c: 1.0,
            noiseless: false,
            support_eps: 1e-9,
        }
    }
}

const KEYS: &[&str] = &[
    "model",
    "sweep",
    "p",
    "s",
    "n",
    "q",
    "m",
    "m_grid",
    "n_grid",
    "p_grid",
    "c_m",
    "trials",
    "tuning_trials",
    "gamma_grid",
    "allow_small_gamma",
    "target_l1",
    "seed",
    "weight_kinds",
    "estimators",
    "theta",
    "bernoulli_c",
    "noiseless",
    "support_eps",
];

impl ExperimentConfig {
    /// Desk-scale `m` sweep: `p = 1000`, `s = 5`, 100 trials.
    pub fn desk_mse_vs_m() -> Self {
        ExperimentConfig::default()
    }

    /// Desk-scale `p` sweep with `m = round(0.08·√p·log p)`, which puts
    /// `m` near 48 at `p = 5000`.
    pub fn desk_mse_vs_p() -> Self {
        ExperimentConfig { sweep: Sweep::P, c_m: 0.08, ..ExperimentConfig::default() }
    }

    /// Full-scale `m` sweep: `p = 5000`, 400 trials.
    pub fn full_mse_vs_m(s: usize) -> Self {
        ExperimentConfig {
            p: 5000,
            s,
            trials: 400,
            tuning_trials: 400,
            m_grid: vec![20, 40, 80, 160, 320, 640, 1280],
            ..ExperimentConfig::default()
        }
    }

    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = value.trim().parse().map_err(config_err)?,
            "sweep" => self.sweep = value.trim().parse().map_err(config_err)?,
            "p" => self.p = parse_value(key, value)?,
            "s" => self.s = parse_value(key, value)?,
            "n" => self.n = parse_value(key, value)?,
            "q" => self.q = parse_value(key, value)?,
            "m" => self.m = parse_value(key, value)?,
            "m_grid" => self.m_grid = parse_list(key, value)?,
            "n_grid" => self.n_grid = parse_list(key, value)?,
            "p_grid" => self.p_grid = parse_list(key, value)?,
            "c_m" => self.c_m = parse_value(key, value)?,
            "trials" => self.trials = parse_value(key, value)?,
            "tuning_trials" => self.tuning_trials = parse_value(key, value)?,
            "gamma_grid" => self.gamma_grid = parse_list(key, value)?,
            "allow_small_gamma" => self.allow_small_gamma = parse_bool(key, value)?,
            "target_l1" => self.target_l1 = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "weight_kinds" => {
                self.weight_kinds = value
                    .split(',')
                    .filter(|v| !v.trim().is_empty())
                    .map(|v| v.trim().parse().map_err(config_err))
                    .collect::<Result<_>>()?
            }
            "estimators" => {
                self.estimators = value
                    .split(',')
                    .filter(|v| !v.trim().is_empty())
                    .map(|v| v.trim().parse().map_err(config_err))
                    .collect::<Result<_>>()?
            }
            "theta" => {
                self.theta = match value.trim() {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "bernoulli_c" => self.bernoulli_c = parse_value(key, value)?,
            "noiseless" => self.noiseless = parse_bool(key, value)?,
            "support_eps" => self.support_eps = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Defaults overridden by the entries of a config text.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Every key, one per line, in a form [`ExperimentConfig::from_text`]
    /// reads back to an equal config.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out += &format!("{key} = {}\n", self.value_of(key));
        }
        out
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "model" => self.model.to_string(),
            "sweep" => self.sweep.as_str().to_string(),
            "p" => self.p.to_string(),
            "s" => self.s.to_string(),
            "n" => self.n.to_string(),
            "q" => fmt_exact(self.q),
            "m" => self.m.to_string(),
            "m_grid" => fmt_list(&self.m_grid, |v| v.to_string()),
            "n_grid" => fmt_list(&self.n_grid, |v| v.to_string()),
            "p_grid" => fmt_list(&self.p_grid, |v| v.to_string()),
            "c_m" => fmt_exact(self.c_m),
            "trials" => self.trials.to_string(),
            "tuning_trials" => self.tuning_trials.to_string(),
            "gamma_grid" => fmt_list(&self.gamma_grid, |v| fmt_exact(*v)),
            "allow_small_gamma" => self.allow_small_gamma.to_string(),
            "target_l1" => fmt_exact(self.target_l1),
            "seed" => self.seed.to_string(),
            "weight_kinds" => fmt_list(&self.weight_kinds, |v| v.as_str().to_string()),
            "estimators" => fmt_list(&self.estimators, |v| v.as_str().to_string()),
            "theta" => self.theta.map_or_else(|| "auto".to_string(), fmt_exact),
            "bernoulli_c" => fmt_exact(self.bernoulli_c),
            "noiseless" => self.noiseless.to_string(),
            "support_eps" => fmt_exact(self.support_eps),
            _ => unreachable!("unknown key {key}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn increasing<T: PartialOrd>(name: &str, v: &[T]) -> Result<()> {
            if v.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("`{name}` must be strictly increasing")));
            }
            Ok(())
        }
        increasing("m_grid", &self.m_grid)?;
        increasing("n_grid", &self.n_grid)?;
        increasing("p_grid", &self.p_grid)?;
        increasing("gamma_grid", &self.gamma_grid)?;
        if self.gamma_grid.is_empty() {
            return Err(Error::Config("`gamma_grid` is empty".into()));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Config(format!("penalty level {g} is not positive")));
        }
        if !self.allow_small_gamma {
            if let Some(g) = self.gamma_grid.iter().find(|g| **g <= 2.0) {
                return Err(Error::Config(format!(
                    "penalty level {g} is not above 2; set allow_small_gamma = true to explore it"
                )));
            }
        }
        if self.trials == 0 || self.tuning_trials == 0 {
            return Err(Error::Config("`trials` and `tuning_trials` must be at least 1".into()));
        }
        match (self.model, self.sweep) {
            (ModelKind::Convolution, Sweep::N) => {
                return Err(Error::Config("the convolution model has no `n` sweep".into()))
            }
            (ModelKind::Bernoulli, Sweep::M) => {
                return Err(Error::Config("the Bernoulli model has no `m` sweep; use `sweep = n`".into()))
            }
            _ => {}
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::Config(format!("`q` must lie in (0, 1), got {}", self.q)));
        }
        if !(self.target_l1 >= 0.0 && self.target_l1.is_finite()) {
            return Err(Error::Config("`target_l1` must be finite and non-negative".into()));
        }
        if (self.s == 0) != (self.target_l1 == 0.0) {
            return Err(Error::Config("`target_l1` must be 0 exactly when `s` is 0".into()));
        }
        if let Some(t) = self.theta {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config("`theta` must be positive".into()));
            }
        }
        if !(self.c_m >= 0.0 && self.c_m.is_finite()) {
            return Err(Error::Config("`c_m` must be non-negative".into()));
        }
        if !(self.bernoulli_c > 0.0 && self.support_eps >= 0.0) {
            return Err(Error::Config("`bernoulli_c` must be positive and `support_eps` non-negative".into()));
        }
        for point in self.grid_points() {
            if self.s > point.p {
                return Err(Error::Config(format!("s = {} exceeds p = {}", self.s, point.p)));
            }
            if point.m == Some(0) || point.n.is_some_and(|n| n < 2) {
                return Err(Error::Config("need m >= 1 and n >= 2".into()));
            }
        }
        Ok(())
    }

    /// The swept design sizes, in grid order.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let conv = self.model == ModelKind::Convolution;
        let point = |p: usize, m: u64, n: usize| GridPoint { p, m: conv.then_some(m), n: (!conv).then_some(n) };
        match self.sweep {
            Sweep::M => self.m_grid.iter().map(|&m| point(self.p, m, self.n)).collect(),
            Sweep::N => self.n_grid.iter().map(|&n| point(self.p, self.m, n)).collect(),
            Sweep::P => self
                .p_grid
                .iter()
                .map(|&p| {
                    let m = if self.c_m > 0.0 { m_rule(p, self.c_m) } else { self.m };
                    point(p, m, self.n)
                })
                .collect(),
        }
    }

    fn theta_for(&self, p: usize) -> f64 {
        self.theta.unwrap_or_else(|| match self.model {
            ModelKind::Bernoulli => bernoulli::default_theta(p),
            ModelKind::Convolution => convolution::default_theta(p),
        })
    }

    /// Output rows per grid point, in print order.
    pub fn row_keys(&self) -> Vec<RowKey> {
        let mut keys = Vec::new();
        let mut est = self.estimators.clone();
        est.sort();
        est.dedup();
        for e in est {
            match e {
                Estimator::LsOracle => keys.push(RowKey { estimator: e, weight_kind: None }),
                Estimator::LassoTwoStep => keys.push(RowKey { estimator: e, weight_kind: Some(WeightKind::Constant) }),
                Estimator::WlassoTwoStep => {
                    for kind in [WeightKind::Constant, WeightKind::Nonconstant, WeightKind::Oracle] {
                        if self.weight_kinds.contains(&kind) {
                            keys.push(RowKey { estimator: e, weight_kind: Some(kind) });
                        }
                    }
                }
            }
        }
        keys
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(msg) => Error::Config(msg),
        other => other,
    }
}

/// `m = round(c_m·√p·log p)`, at least 1.
pub fn m_rule(p: usize, c_m: f64) -> u64 {
    let pf = p as f64;
    ((c_m * pf.sqrt() * pf.ln()).round() as u64).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub p: usize,
    /// Convolution parents.
    pub m: Option<u64>,
    /// Bernoulli rows.
    pub n: Option<usize>,
}

impl GridPoint {
    fn slot(&self) -> u64 {
        ((self.p as u64) << 32) | self.m.unwrap_or(0) | self.n.unwrap_or(0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowKey {
    pub estimator: Estimator,
    /// `None` for the oracle least squares.
    pub weight_kind: Option<WeightKind>,
}

/// Outcome of one estimator on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTrial {
    /// `‖x̂ − x*‖₂²/‖x*‖₁`, one per requested penalty level (one entry for
    /// the oracle least squares).
    pub nmse: Vec<f64>,
    /// Whether the weights cover the noise; `None` for the oracle.
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_index: u64,
    pub rows: Vec<(RowKey, std::result::Result<RowTrial, Error>)>,
}

enum Design {
    Bernoulli(BernoulliInstance),
    Convolution(ConvolutionInstance),
}

struct Draw {
    x_star: Vec<f64>,
    support: Vec<usize>,
    y: Vec<f64>,
    design: Design,
    surrogate: SurrogatePair,
}

fn draw(cfg: &ExperimentConfig, point: &GridPoint, domain: Domain, trial_index: u64) -> Result<Draw> {
    let mut rng = trial_stream(cfg.seed, domain, point.slot(), trial_index);
    let signal = make_sparse_signal(point.p, cfg.s, cfg.target_l1, &mut rng)?;
    let x_star = signal.to_dense();
    let (design, intensity) = match cfg.model {
        ModelKind::Convolution => {
            let inst = convolution::sample_parents(point.p, point.m.unwrap_or(cfg.m), &mut rng)?;
            let lam = inst.intensity(&x_star)?;
            (Design::Convolution(inst), lam)
        }
        ModelKind::Bernoulli => {
            let inst = bernoulli::sample_bernoulli_matrix(point.n.unwrap_or(cfg.n), point.p, cfg.q, &mut rng)?;
            let lam = inst.intensity(&x_star)?;
            (Design::Bernoulli(inst), lam)
        }
    };
    let y = if cfg.noiseless { intensity } else { sample_poisson(&intensity, &mut rng)?.to_f64() };
    let surrogate = match &design {
        Design::Convolution(inst) => convolution::surrogate_convolution(inst, &y)?,
        Design::Bernoulli(inst) => bernoulli::surrogate_bernoulli(inst, &y)?,
    };
    Ok(Draw { support: signal.support().to_vec(), x_star, y, design, surrogate })
}

fn weights(cfg: &ExperimentConfig, d: &Draw, kind: WeightKind) -> Result<WeightVector> {
    let theta = cfg.theta_for(d.x_star.len());
    match (kind, &d.design) {
        (WeightKind::Oracle, _) => convolution::oracle_weights(&d.surrogate, &d.x_star),
        (WeightKind::Constant, Design::Convolution(inst)) => {
            convolution::constant_weight_convolution(inst, &d.y, theta)
        }
        (WeightKind::Nonconstant, Design::Convolution(inst)) => {
            convolution::nonconstant_weights_convolution(inst, &d.y, theta)
        }
        (WeightKind::Constant, Design::Bernoulli(inst)) => {
            bernoulli::constant_weight_bernoulli(inst, &d.y, cfg.bernoulli_c, theta)
        }
        (WeightKind::Nonconstant, Design::Bernoulli(inst)) => {
            bernoulli::nonconstant_weights_bernoulli(inst, &d.y, cfg.bernoulli_c, theta)
        }
    }
}

/// `‖x̂ − x*‖₂²/‖x*‖₁`, or the plain squared error when `x* = 0`.
pub fn normalized_mse(x_hat: &[f64], x_star: &[f64]) -> f64 {
    let err: f64 = x_hat.iter().zip(x_star).map(|(a, b)| (a - b).powi(2)).sum();
    let l1: f64 = x_star.iter().map(|v| v.abs()).sum();
    if l1 > 0.0 {
        err / l1
    } else {
        err
    }
}

fn ls_oracle_row(d: &Draw) -> Result<RowTrial> {
    let x =
        if d.support.is_empty() { vec![0.0; d.x_star.len()] } else { oracle_least_squares(&d.surrogate, &d.support)? };
    Ok(RowTrial { nmse: vec![normalized_mse(&x, &d.x_star)], covered: None })
}

fn lasso_row(
    cfg: &ExperimentConfig,
    d: &Draw,
    problem: &LassoProblem<'_>,
    kind: WeightKind,
    gammas: &[f64],
) -> Result<RowTrial> {
    let w = weights(cfg, d, kind)?;
    let covered = weights_cover(&d.surrogate, &d.x_star, &w)?.pass;
    let mut warm: Option<Vec<f64>> = None;
    let mut nmse = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mut sc = SolverConfig::new(gamma);
        sc.support_eps = cfg.support_eps;
        let res = problem.solve(&w, &sc, warm.as_deref())?;
        if !res.converged {
            return Err(Error::GuardExceeded(format!(
                "solver did not converge at gamma = {gamma} (kkt residual {:e})",
                res.kkt_residual
            )));
        }
        let (_, x) = two_step(&res, &d.surrogate, cfg.support_eps)?;
        nmse.push(normalized_mse(&x, &d.x_star));
        warm = Some(res.x_hat);
    }
    Ok(RowTrial { nmse, covered: Some(covered) })
}

fn trial(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    keys: &[RowKey],
    gammas: &[Vec<f64>],
    domain: Domain,
    trial_index: u64,
) -> TrialResult {
    let fail_all = |e: Error| keys.iter().map(|k| (*k, Err(e.clone()))).collect();
    let rows = match draw(cfg, point, domain, trial_index) {
        Err(e) => fail_all(e),
        Ok(d) => match LassoProblem::new(&d.surrogate) {
            Err(e) => fail_all(e),
            Ok(problem) => keys
                .iter()
                .zip(gammas)
                .map(|(key, g)| {
                    let out = match key.weight_kind {
                        None => ls_oracle_row(&d),
                        Some(kind) => lasso_row(cfg, &d, &problem, kind, g),
                    };
                    (*key, out)
                })
                .collect(),
        },
    };
    TrialResult { trial_index, rows }
}

/// One evaluation trial at every penalty level of the grid.
pub fn run_trial(cfg: &ExperimentConfig, point: &GridPoint, trial_index: u64) -> Result<TrialResult> {
    cfg.validate()?;
    let keys = cfg.row_keys();
    let gammas: Vec<Vec<f64>> = keys.iter().map(|_| cfg.gamma_grid.clone()).collect();
    Ok(trial(cfg, point, &keys, &gammas, Domain::Evaluation, trial_index))
}

fn run_trials(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    keys: &[RowKey],
    gammas: &[Vec<f64>],
    domain: Domain,
    n_trials: usize,
) -> Vec<TrialResult> {
    (0..n_trials as u64).into_par_iter().map(|t| trial(cfg, point, keys, gammas, domain, t)).collect()
}

/// Sample mean and its standard error; NaN for no values.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Picks the penalty level with the fewest failed tuning trials. Among those,
/// every level whose mean nmse lies within one standard error of the lowest
/// mean counts as tied, and the smallest tied level wins.
fn select_gamma(grid: &[f64], results: &[TrialResult], row: usize) -> f64 {
    let stats: Vec<(usize, f64, f64)> = (0..grid.len())
        .map(|j| {
            let vals: Vec<f64> =
                results.iter().filter_map(|r| r.rows[row].1.as_ref().ok().map(|t| t.nmse[j])).collect();
            let failures = results.len() - vals.len();
            let (mean, se) = mean_stderr(&vals);
            (failures, if vals.is_empty() { f64::INFINITY } else { mean }, se)
        })
        .collect();
    let fewest = stats.iter().map(|s| s.0).min().unwrap_or(0);
    let best = stats.iter().filter(|s| s.0 == fewest).min_by(|a, b| a.1.total_cmp(&b.1)).copied();
    let Some((_, best_mean, best_se)) = best else {
        return grid[0];
    };
    let limit = best_mean + best_se + 1e-12 + 1e-9 * best_mean.abs();
    grid.iter().zip(&stats).find(|(_, s)| s.0 == fewest && s.1 <= limit).map(|(g, _)| *g).unwrap_or(grid[0])
}

/// Selected penalty level for every weighted row at `point`, from
/// `tuning_trials` trials drawn independently of the evaluation trials.
pub fn tune_gamma(cfg: &ExperimentConfig, point: &GridPoint) -> Result<Vec<(RowKey, f64)>> {
    if cfg.gamma_grid.is_empty() {
        return Err(invalid("empty penalty grid"));
    }
    cfg.validate()?;
    let keys: Vec<RowKey> = cfg.row_keys().into_iter().filter(|k| k.weight_kind.is_some()).collect();
    if cfg.gamma_grid.len() == 1 {
        return Ok(keys.into_iter().map(|k| (k, cfg.gamma_grid[0])).collect());
    }
    let gammas: Vec<Vec<f64>> = keys.iter().map(|_| cfg.gamma_grid.clone()).collect();
    let results = run_trials(cfg, point, &keys, &gammas, Domain::Tuning, cfg.tuning_trials);
    Ok(keys.iter().enumerate().map(|(i, k)| (*k, select_gamma(&cfg.gamma_grid, &results, i))).collect())
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub model: ModelKind,
    pub p: usize,
    pub s: usize,
    pub m: Option<u64>,
    pub n: Option<usize>,
    pub q: Option<f64>,
    pub estimator: Estimator,
    pub weight_kind: Option<WeightKind>,
    pub gamma_star: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub nmse_mean: f64,
    pub nmse_stderr: f64,
    /// Fraction of successful trials whose weights covered the noise.
    pub coverage_rate: Option<f64>,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "model,p,s,m,n,q,estimator,weight_kind,gamma_star,trials,failures,nmse_mean,nmse_stderr,coverage_rate,seed";

fn na<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map_or_else(|| "na".to_string(), f)
}

impl ExperimentRow {
    pub fn to_csv_line(&self) -> String {
        [
            self.model.to_string(),
            self.p.to_string(),
            self.s.to_string(),
            na(self.m, |v| v.to_string()),
            na(self.n, |v| v.to_string()),
            na(self.q, fmt_g10),
            self.estimator.to_string(),
            na(self.weight_kind, |v| v.as_str().to_string()),
            na(self.gamma_star, fmt_g10),
            self.trials.to_string(),
            self.failures.to_string(),
            fmt_g10(self.nmse_mean),
            fmt_g10(self.nmse_stderr),
            na(self.coverage_rate, fmt_g10),
            self.seed.to_string(),
        ]
        .join(",")
    }
}

pub fn to_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out += &r.to_csv_line();
        out.push('\n');
    }
    out
}

fn aggregate(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    key: RowKey,
    gamma: Option<f64>,
    results: &[TrialResult],
    row: usize,
) -> ExperimentRow {
    let mut values = Vec::with_capacity(results.len());
    let mut covered = 0usize;
    let mut failures = 0usize;
    for r in results {
        match &r.rows[row].1 {
            Ok(t) => {
                values.push(t.nmse[0]);
                covered += t.covered.unwrap_or(false) as usize;
            }
            Err(_) => failures += 1,
        }
    }
    let k = values.len();
    let (mean, stderr) = mean_stderr(&values);
    ExperimentRow {
        model: cfg.model,
        p: point.p,
        s: cfg.s,
        m: point.m,
        n: point.n,
        q: (cfg.model == ModelKind::Bernoulli).then_some(cfg.q),
        estimator: key.estimator,
        weight_kind: key.weight_kind,
        gamma_star: gamma,
        trials: results.len(),
        failures,
        nmse_mean: mean,
        nmse_stderr: stderr,
        coverage_rate: (key.weight_kind.is_some() && k > 0).then(|| covered as f64 / k as f64),
        seed: cfg.seed,
    }
}

/// Tunes, runs `trials` evaluation trials and aggregates one grid point.
pub fn run_point(cfg: &ExperimentConfig, point: &GridPoint) -> Result<Vec<ExperimentRow>> {
    let keys = cfg.row_keys();
    let tuned = tune_gamma(cfg, point)?;
    let gamma_of = |k: &RowKey| tuned.iter().find(|(t, _)| t == k).map(|(_, g)| *g);
    let gammas: Vec<Vec<f64>> = keys.iter().map(|k| gamma_of(k).into_iter().collect()).collect();
    let results = run_trials(cfg, point, &keys, &gammas, Domain::Evaluation, cfg.trials);
    Ok(keys.iter().enumerate().map(|(i, k)| aggregate(cfg, point, *k, gamma_of(k), &results, i)).collect())
}

/// Every grid point in order. An empty grid gives an empty table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for point in cfg.grid_points() {
        rows.extend(run_point(cfg, &point)?);
    }
    Ok(rows)
}

/// The `m` sweep (the `n` sweep for the Bernoulli model).
pub fn run_mse_vs_m(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let mut cfg = cfg.clone();
    cfg.sweep = match cfg.model {
        ModelKind::Convolution => Sweep::M,
        ModelKind::Bernoulli => Sweep::N,
    };
    run_experiment(&cfg)
}

pub fn run_mse_vs_p(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    let mut cfg = cfg.clone();
    cfg.sweep = Sweep::P;
    run_experiment(&cfg)
}

/// Runs `f` on a pool of `threads` workers; 0 lets rayon decide.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| invalid(e.to_string()))?;
    Ok(pool.install(f))
}
