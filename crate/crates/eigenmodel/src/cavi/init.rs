//! Per-slice two-way logistic fits used to seed the social trajectories.
//!
//! Each `(k, t)` slice is fitted independently under
//! `P(Y_ij = 1) = logistic(delta_i + delta_j)` by damped Newton iterations on
//! the ridge-penalized log-likelihood. The ridge keeps the optimum finite on
//! separated slices (empty or complete graphs).

use ndarray::{Array1, Array2};

use crate::error::Result;
use crate::linalg::{chol_solve_vec, cholesky};
use crate::model::logistic;
use crate::net::pair_index;

const RIDGE: f64 = 1e-2;
const MAX_NEWTON_ITERS: usize = 50;
const GRAD_TOL: f64 = 1e-8;

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn penalized_loglik(delta: &[f64], values: &[u8], observed: &[bool], n: usize) -> f64 {
    let mut ll = 0.0;
    for i in 1..n {
        for j in 0..i {
            let p = pair_index(i, j);
            if !observed[p] {
                continue;
            }
            let theta = delta[i] + delta[j];
            ll += f64::from(values[p]) * theta - softplus(theta);
        }
    }
    ll - 0.5 * RIDGE * delta.iter().map(|d| d * d).sum::<f64>()
}

/// Maximizes the ridge-penalized two-way logistic likelihood of one slice.
pub(crate) fn two_way_logistic(values: &[u8], observed: &[bool], n: usize) -> Result<Vec<f64>> {
    let mut delta = vec![0.0f64; n];
    let mut obj = penalized_loglik(&delta, values, observed, n);

    for _ in 0..MAX_NEWTON_ITERS {
        let mut grad = Array1::<f64>::zeros(n);
        let mut hess = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            grad[i] = -RIDGE * delta[i];
            hess[(i, i)] = RIDGE;
        }
        for i in 1..n {
            for j in 0..i {
                let p = pair_index(i, j);
                if !observed[p] {
                    continue;
                }
                let prob = logistic(delta[i] + delta[j]);
                let resid = f64::from(values[p]) - prob;
                grad[i] += resid;
                grad[j] += resid;
                let w = prob * (1.0 - prob);
                hess[(i, i)] += w;
                hess[(j, j)] += w;
                hess[(i, j)] += w;
                hess[(j, i)] += w;
            }
        }
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < GRAD_TOL {
            break;
        }
        let l = cholesky(&hess.view())?;
        let direction = chol_solve_vec(&l.view(), &grad.view());

        // Backtracking line search on the penalized objective.
        let mut step = 1.0;
        loop {
            let candidate: Vec<f64> =
                delta.iter().zip(direction.iter()).map(|(d, s)| d + step * s).collect();
            let cand_obj = penalized_loglik(&candidate, values, observed, n);
            if cand_obj >= obj || step < 1e-8 {
                delta = candidate;
                obj = cand_obj;
                break;
            }
            step *= 0.5;
        }
    }
    Ok(delta)
}
