//! The `wlasso` command line.
//!
//! Configuration is assembled from, in increasing precedence: the
//! `WLASSO_SEED` environment variable, the `--config` file, `--set key=value`
//! overrides, the convenience flags (`--p`, `--gamma`, ...) and `--seed`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bernoulli::{self, BernoulliInstance};
use crate::concentration::tail_coverage_test;
use crate::config::{fmt_exact, fmt_g10, fmt_list, parse_kv, parse_list, parse_override, parse_value};
use crate::convolution::{self, ConvolutionInstance};
use crate::diagnostics::assumption_report;
use crate::error::{Error, Result};
use crate::experiments::{run_experiment, to_csv, with_threads, ExperimentConfig, ModelKind};
use crate::model::{make_sparse_signal, sample_poisson, SurrogatePair};
use crate::rng::{trial_stream, Domain};
use crate::solver::{kkt_check, oracle_least_squares, two_step, LassoProblem, SolverConfig, WeightKind, WeightVector};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wlasso", version, about = "Weighted LASSO estimators for Poisson inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance (read from a file or simulated) and report errors.
    Solve(InstanceArgs),
    /// Print the weight vector(s) as CSV.
    Weights(InstanceArgs),
    /// Check the design and weight assumptions on one instance.
    Diagnose(InstanceArgs),
    /// Run a Monte Carlo sweep and write the results table.
    Experiment(CommonArgs),
    /// Empirical failure rates of the Poisson deviation bounds.
    ConcentrationTest(ConcentrationArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed for every random draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Print the effective config and exit.
    #[arg(long)]
    dump_config: bool,
    /// Sensing model: convolution or bernoulli.
    #[arg(long)]
    model: Option<String>,
    /// Signal dimension.
    #[arg(long)]
    p: Option<String>,
    /// Number of parents (convolution); also sets the m grid.
    #[arg(long)]
    m: Option<String>,
    /// Number of measurements (bernoulli); also sets the n grid.
    #[arg(long)]
    n: Option<String>,
    /// Bernoulli sensing probability.
    #[arg(long)]
    q: Option<String>,
    /// Sparsity of the simulated signal.
    #[arg(long)]
    s: Option<String>,
    /// Penalty level(s), comma separated.
    #[arg(long)]
    gamma: Option<String>,
    /// Weight kind(s): constant, nonconstant, oracle.
    #[arg(long)]
    weights: Option<String>,
    /// l1 norm of the simulated signal.
    #[arg(long)]
    target_l1: Option<String>,
    /// Tail parameter for the weights; `auto` uses the model default.
    #[arg(long)]
    theta: Option<String>,
    /// Evaluation trials per grid point.
    #[arg(long)]
    trials: Option<String>,
}

#[derive(Debug, Args)]
struct InstanceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Read the instance from this file instead of simulating it.
    #[arg(long, value_name = "PATH")]
    instance: Option<PathBuf>,
    /// Write the instance used to this file.
    #[arg(long, value_name = "PATH")]
    save_instance: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConcentrationArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of Poisson draws.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    /// Column of the sensing matrix used as the direction.
    #[arg(long, default_value_t = 0)]
    coord: usize,
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code. Messages go to stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Solve(a) | Command::Weights(a) | Command::Diagnose(a) => &a.common,
        Command::Experiment(c) => c,
        Command::ConcentrationTest(a) => &a.common,
    };
    let cfg = effective_config(common, std::env::var("WLASSO_SEED").ok().as_deref())?;
    if common.dump_config {
        return emit(common.out.as_deref(), &cfg.dump());
    }
    let threads = common.threads;
    with_threads(threads, move || match cli.command {
        Command::Solve(a) => solve(&cfg, &a),
        Command::Weights(a) => weights(&cfg, &a),
        Command::Diagnose(a) => diagnose(&cfg, &a),
        Command::Experiment(c) => experiment(&cfg, &c),
        Command::ConcentrationTest(a) => concentration(&cfg, &a),
    })?
}

fn effective_config(c: &CommonArgs, env_seed: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(s) = env_seed {
        cfg.set("seed", s)?;
    }
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (k, v) in parse_kv(&text)? {
            cfg.set(&k, &v)?;
        }
    }
    for o in &c.overrides {
        let (k, v) = parse_override(o)?;
        cfg.set(&k, &v)?;
    }
    let flags = [
        ("model", &c.model),
        ("p", &c.p),
        ("m", &c.m),
        ("n", &c.n),
        ("q", &c.q),
        ("s", &c.s),
        ("gamma_grid", &c.gamma),
        ("weight_kinds", &c.weights),
        ("target_l1", &c.target_l1),
        ("theta", &c.theta),
        ("trials", &c.trials),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    // a single `--m` or `--n` also pins the sweep grid
    if let Some(m) = &c.m {
        cfg.set("m_grid", m)?;
    }
    if let Some(n) = &c.n {
        cfg.set("n_grid", n)?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

enum Design {
    Convolution(ConvolutionInstance),
    Bernoulli(BernoulliInstance),
}

struct Instance {
    design: Design,
    y: Vec<f64>,
    x_star: Option<Vec<f64>>,
}

impl Instance {
    fn p(&self) -> usize {
        match &self.design {
            Design::Convolution(i) => i.p(),
            Design::Bernoulli(i) => i.p(),
        }
    }

    fn surrogate(&self) -> Result<SurrogatePair> {
        match &self.design {
            Design::Convolution(i) => convolution::surrogate_convolution(i, &self.y),
            Design::Bernoulli(i) => bernoulli::surrogate_bernoulli(i, &self.y),
        }
    }

    fn intensity(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.design {
            Design::Convolution(i) => i.intensity(x),
            Design::Bernoulli(i) => i.intensity(x),
        }
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        match &self.design {
            Design::Convolution(i) => {
                let _ = writeln!(out, "model = convolution");
                let _ = writeln!(out, "counts = {}", fmt_list(i.counts(), |v| v.to_string()));
            }
            Design::Bernoulli(i) => {
                let _ = writeln!(out, "model = bernoulli");
                let _ = writeln!(out, "q = {}", fmt_exact(i.q()));
                let _ = writeln!(out, "rows = {}", i.row_strings().join(","));
            }
        }
        let _ = writeln!(out, "y = {}", fmt_list(&self.y, |v| fmt_exact(*v)));
        if let Some(x) = &self.x_star {
            let _ = writeln!(out, "x_star = {}", fmt_list(x, |v| fmt_exact(*v)));
        }
        out
    }

    fn from_text(text: &str) -> Result<Instance> {
        let kv = parse_kv(text)?;
        let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let need = |key: &str| get(key).ok_or_else(|| Error::Config(format!("instance file lacks `{key}`")));
        let design = match need("model")? {
            "convolution" => {
                Design::Convolution(ConvolutionInstance::from_counts(parse_list("counts", need("counts")?)?)?)
            }
            "bernoulli" => {
                let q: f64 = parse_value("q", need("q")?)?;
                let rows = need("rows")?
                    .split(',')
                    .map(|r| {
                        r.trim()
                            .chars()
                            .map(|c| match c {
                                '0' => Ok(0u8),
                                '1' => Ok(1u8),
                                _ => Err(Error::Config(format!("row entry `{c}` is not 0 or 1"))),
                            })
                            .collect::<Result<Vec<u8>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Design::Bernoulli(BernoulliInstance::from_rows(q, &rows)?)
            }
            other => return Err(Error::Config(format!("unknown model `{other}` in instance file"))),
        };
        let y = parse_list("y", need("y")?)?;
        let x_star = get("x_star").map(|v| parse_list("x_star", v)).transpose()?;
        Ok(Instance { design, y, x_star })
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<Instance> {
    let mut rng = trial_stream(cfg.seed, Domain::Cli, 0, 0);
    let signal = make_sparse_signal(cfg.p, cfg.s, cfg.target_l1, &mut rng)?;
    let x = signal.to_dense();
    let design = match cfg.model {
        ModelKind::Convolution => Design::Convolution(convolution::sample_parents(cfg.p, cfg.m, &mut rng)?),
        ModelKind::Bernoulli => Design::Bernoulli(bernoulli::sample_bernoulli_matrix(cfg.n, cfg.p, cfg.q, &mut rng)?),
    };
    let mut inst = Instance { design, y: Vec::new(), x_star: Some(x.clone()) };
    let lam = inst.intensity(&x)?;
    inst.y = if cfg.noiseless { lam } else { sample_poisson(&lam, &mut rng)?.to_f64() };
    Ok(inst)
}

fn load_instance(cfg: &ExperimentConfig, a: &InstanceArgs) -> Result<Instance> {
    let inst = match &a.instance {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            Instance::from_text(&text)?
        }
        None => simulate(cfg)?,
    };
    if let Some(path) = &a.save_instance {
        fs::write(path, inst.to_text())?;
    }
    Ok(inst)
}

fn theta_for(cfg: &ExperimentConfig, inst: &Instance) -> f64 {
    cfg.theta.unwrap_or_else(|| match inst.design {
        Design::Convolution(_) => convolution::default_theta(inst.p()),
        Design::Bernoulli(_) => bernoulli::default_theta(inst.p()),
    })
}

fn weight_vector(
    cfg: &ExperimentConfig,
    inst: &Instance,
    sp: &SurrogatePair,
    kind: WeightKind,
) -> Result<WeightVector> {
    let theta = theta_for(cfg, inst);
    match (&inst.design, kind) {
        (_, WeightKind::Oracle) => {
            let x = inst.x_star.as_ref().ok_or_else(|| Error::InvalidArgument("oracle weights need x_star".into()))?;
            convolution::oracle_weights(sp, x)
        }
        (Design::Convolution(i), WeightKind::Constant) => convolution::constant_weight_convolution(i, &inst.y, theta),
        (Design::Convolution(i), WeightKind::Nonconstant) => {
            convolution::nonconstant_weights_convolution(i, &inst.y, theta)
        }
        (Design::Bernoulli(i), WeightKind::Constant) => {
            bernoulli::constant_weight_bernoulli(i, &inst.y, cfg.bernoulli_c, theta)
        }
        (Design::Bernoulli(i), WeightKind::Nonconstant) => {
            bernoulli::nonconstant_weights_bernoulli(i, &inst.y, cfg.bernoulli_c, theta)
        }
    }
}

fn nmse_field(x: &[f64], x_star: Option<&Vec<f64>>) -> String {
    x_star.map_or_else(|| "na".into(), |xs| fmt_g10(crate::experiments::normalized_mse(x, xs)))
}

fn solve(cfg: &ExperimentConfig, a: &InstanceArgs) -> Result<()> {
    let inst = load_instance(cfg, a)?;
    let sp = inst.surrogate()?;
    let problem = LassoProblem::new(&sp)?;
    let mut out = String::new();
    if let Some(x_star) = &inst.x_star {
        let support: Vec<usize> = (0..x_star.len()).filter(|&k| x_star[k] != 0.0).collect();
        if !support.is_empty() {
            let x = oracle_least_squares(&sp, &support)?;
            let _ = writeln!(
                out,
                "estimator=ls_oracle weight_kind=na gamma=na nmse={} support_size={}",
                nmse_field(&x, inst.x_star.as_ref()),
                support.len()
            );
        }
    }
    let mut kinds = vec![WeightKind::Constant];
    kinds.extend(cfg.weight_kinds.iter().copied().filter(|k| *k != WeightKind::Constant));
    for kind in kinds {
        let w = weight_vector(cfg, &inst, &sp, kind)?;
        let estimator = if kind == WeightKind::Constant { "lasso_two_step" } else { "wlasso_two_step" };
        for &gamma in &cfg.gamma_grid {
            let mut sc = SolverConfig::new(gamma);
            sc.support_eps = cfg.support_eps;
            let res = problem.solve(&w, &sc, None)?;
            let kkt = kkt_check(&sp, &w, gamma, &res.x_hat)?;
            let (support, x) = two_step(&res, &sp, cfg.support_eps)?;
            let _ = writeln!(
                out,
                "estimator={estimator} weight_kind={} gamma={} nmse={} nmse_first_stage={} support_size={} kkt_residual={} iterations={} converged={}",
                kind.as_str(),
                fmt_g10(gamma),
                nmse_field(&x, inst.x_star.as_ref()),
                nmse_field(&res.x_hat, inst.x_star.as_ref()),
                support.len(),
                fmt_g10(kkt),
                res.iterations,
                res.converged
            );
        }
    }
    emit(a.common.out.as_deref(), &out)
}

fn weights(cfg: &ExperimentConfig, a: &InstanceArgs) -> Result<()> {
    let inst = load_instance(cfg, a)?;
    let sp = inst.surrogate()?;
    let ws = cfg.weight_kinds.iter().map(|&k| weight_vector(cfg, &inst, &sp, k)).collect::<Result<Vec<_>>>()?;
    let mut out = String::from("k");
    for w in &ws {
        out.push(',');
        out += w.kind().as_str();
    }
    out.push('\n');
    for k in 0..inst.p() {
        out += &k.to_string();
        for w in &ws {
            out.push(',');
            out += &fmt_g10(w.values()[k]);
        }
        out.push('\n');
    }
    emit(a.common.out.as_deref(), &out)
}

fn diagnose(cfg: &ExperimentConfig, a: &InstanceArgs) -> Result<()> {
    let inst = load_instance(cfg, a)?;
    let x_star =
        inst.x_star.clone().ok_or_else(|| Error::InvalidArgument("diagnose needs x_star in the instance".into()))?;
    let sp = inst.surrogate()?;
    let kind = cfg.weight_kinds.first().copied().unwrap_or(WeightKind::Nonconstant);
    let w = weight_vector(cfg, &inst, &sp, kind)?;
    let report = assumption_report(&sp, &x_star, &w, cfg.gamma_grid[0], theta_for(cfg, &inst))?;
    let mut text = report.to_text();
    text += &format!("weight_kind = {}\n", kind.as_str());
    emit(a.common.out.as_deref(), &text)
}

fn experiment(cfg: &ExperimentConfig, c: &CommonArgs) -> Result<()> {
    let rows = run_experiment(cfg)?;
    emit(c.out.as_deref(), &to_csv(&rows))
}

fn concentration(cfg: &ExperimentConfig, a: &ConcentrationArgs) -> Result<()> {
    let mut sim_cfg = cfg.clone();
    sim_cfg.noiseless = true;
    let inst = simulate(&sim_cfg)?;
    if a.coord >= inst.p() {
        return Err(Error::Config(format!("--coord {} is out of range", a.coord)));
    }
    let mut e = vec![0.0; inst.p()];
    e[a.coord] = 1.0;
    let r = inst.intensity(&e)?;
    let theta = cfg.theta.unwrap_or(5.0);
    let cov = tail_coverage_test(&r, &inst.y, theta, a.draws, cfg.seed)?;
    emit(a.common.out.as_deref(), &cov.report())
}
