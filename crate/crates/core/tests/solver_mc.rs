use rayon::prelude::*;

use wlasso::convolution::{default_theta, nonconstant_weights_convolution, sample_parents, surrogate_convolution};
use wlasso::model::{make_sparse_signal, sample_poisson};
use wlasso::rng::{trial_stream, Domain};
use wlasso::solver::{two_step, weighted_lasso, SolverConfig};

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()
}

#[test]
fn refit_reduces_error() {
    let (p, m) = (200usize, 20u64);
    let better = (0..200u64)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = trial_stream(31, Domain::Evaluation, 1, t);
            let x = make_sparse_signal(p, 5, 100.0, &mut rng).unwrap().to_dense();
            let inst = sample_parents(p, m, &mut rng).unwrap();
            let y = sample_poisson(&inst.intensity(&x).unwrap(), &mut rng).unwrap().to_f64();
            let sp = surrogate_convolution(&inst, &y).unwrap();
            let w = nonconstant_weights_convolution(&inst, &y, default_theta(p)).unwrap();
            let first = weighted_lasso(&sp, &w, &SolverConfig::new(4.0), None).unwrap();
            let (_, refit) = two_step(&first, &sp, 1e-9).unwrap();
            sq_err(&refit, &x) <= sq_err(&first.x_hat, &x)
        })
        .count();
    assert!(better >= 160, "refit no worse in {better}/200 trials");
}
