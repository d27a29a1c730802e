//! Closed-form coordinate updates for every variational factor, plus the
//! expected log-likelihood monitor.
//!
//! Every sum over dyads ranges over *observed* dyads only; masked dyads
//! contribute nothing to any natural parameter, which is exactly the update
//! obtained by dropping them from the likelihood. Within the social and
//! latent sweeps, trajectories are refreshed in index order and later
//! updates see the freshest moments (Gauss-Seidel).

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::gssm::{kalman_smoother, GssmInput};
use crate::linalg::{spd_inverse, spd_solve, VARIANCE_FLOOR};
use crate::model::{logistic, Priors};
use crate::net::DynamicNetwork;
use crate::pg::pg_mean;

use super::posterior::{IgPosterior, VariationalPosterior};

/// Reference-layer probabilities are kept strictly inside (0, 1).
const REF_PROB_EPS: f64 = 1e-12;

/// Flattened per-node second moments `cov + mean mean'` at one time step.
struct SecondMoments {
    d: usize,
    data: Vec<f64>,
}

impl SecondMoments {
    fn new(n: usize, d: usize) -> Self {
        SecondMoments { d, data: vec![0.0; n * d * d] }
    }

    fn fill(&mut self, post: &VariationalPosterior, t: usize) {
        let d = self.d;
        for i in 0..post.n_nodes {
            let base = i * d * d;
            for g in 0..d {
                let mg = post.latent_mean[(i, t, g)];
                for h in 0..d {
                    self.data[base + g * d + h] =
                        post.latent_cov[(i, t, g, h)] + mg * post.latent_mean[(i, t, h)];
                }
            }
        }
    }

    fn at(&self, i: usize) -> &[f64] {
        &self.data[i * self.d * self.d..(i + 1) * self.d * self.d]
    }
}

/// First and second moments of one dyad's linear predictor under the current
/// posterior. `lam2` is the layer's homophily second-moment matrix, `si`/`sj`
/// the nodes' latent second moments, both row-major `d x d`.
#[allow(clippy::too_many_arguments)]
fn psi_moments(
    post: &VariationalPosterior,
    lam2: &[f64],
    si: &[f64],
    sj: &[f64],
    k: usize,
    t: usize,
    i: usize,
    j: usize,
) -> (f64, f64) {
    let d = post.dim;
    let m_i = post.social_mean[(k, i, t)];
    let m_j = post.social_mean[(k, j, t)];
    let v_i = post.social_var[(k, i, t)];
    let v_j = post.social_var[(k, j, t)];

    let mut bilinear = 0.0;
    for h in 0..d {
        bilinear +=
            post.homophily_mean[(k, h)] * post.latent_mean[(i, t, h)] * post.latent_mean[(j, t, h)];
    }
    let mean = m_i + m_j + bilinear;

    let mut hadamard = 0.0;
    for g in 0..d {
        for h in 0..d {
            hadamard += lam2[g * d + h] * si[g * d + h] * sj[g * d + h];
        }
    }
    let second = v_i + m_i * m_i + v_j + m_j * m_j
        + 2.0 * m_i * m_j
        + 2.0 * (m_i + m_j) * bilinear
        + hadamard;
    (mean, second)
}

/// Refreshes every Polya-gamma mean from the tilt `c = sqrt(E[psi^2])`.
pub fn update_omega(post: &mut VariationalPosterior, net: &DynamicNetwork) -> Result<()> {
    post.check_shape(net)?;
    let (n, k_len, t_len) = (post.n_nodes, post.n_layers, post.n_steps);
    let pairs = net.n_pairs();
    let lam2: Vec<Vec<f64>> =
        (0..k_len).map(|k| post.homophily_second_moment(k).into_raw_vec_and_offset().0).collect();
    let mut moments = SecondMoments::new(n, post.dim);
    let mut fresh = vec![0.0f64; post.omega_mean.len()];

    for t in 0..t_len {
        moments.fill(post, t);
        for k in 0..k_len {
            let observed = net.slice_observed(k, t);
            let offset = (k * t_len + t) * pairs;
            let mut p = 0;
            for i in 1..n {
                for j in 0..i {
                    let idx = p;
                    p += 1;
                    if !observed[idx] {
                        continue;
                    }
                    let (_, second) =
                        psi_moments(post, &lam2[k], moments.at(i), moments.at(j), k, t, i, j);
                    if second < -1e-9 {
                        return Err(Error::numerical(format!(
                            "negative second moment {second:.3e} at dyad \
                             (k={k}, t={t}, i={i}, j={j})"
                        )));
                    }
                    fresh[offset + idx] = pg_mean(second.max(0.0).sqrt())?;
                }
            }
        }
    }
    post.omega_mean = fresh;
    Ok(())
}

/// Expected log-likelihood of the observed dyads under the posterior:
/// `sum (y - 1/2) E[psi] - (1/2) E[omega] E[psi^2]`.
pub fn expected_loglik(post: &VariationalPosterior, net: &DynamicNetwork) -> Result<f64> {
    post.check_shape(net)?;
    let (n, k_len, t_len) = (post.n_nodes, post.n_layers, post.n_steps);
    let pairs = net.n_pairs();
    let lam2: Vec<Vec<f64>> =
        (0..k_len).map(|k| post.homophily_second_moment(k).into_raw_vec_and_offset().0).collect();
    let mut moments = SecondMoments::new(n, post.dim);
    let mut total = 0.0;

    for t in 0..t_len {
        moments.fill(post, t);
        for k in 0..k_len {
            let values = net.slice_values(k, t);
            let observed = net.slice_observed(k, t);
            let offset = (k * t_len + t) * pairs;
            let mut p = 0;
            for i in 1..n {
                for j in 0..i {
                    let idx = p;
                    p += 1;
                    if !observed[idx] {
                        continue;
                    }
                    let (mean, second) =
                        psi_moments(post, &lam2[k], moments.at(i), moments.at(j), k, t, i, j);
                    let w = post.omega_mean[offset + idx];
                    total += (f64::from(values[idx]) - 0.5) * mean - 0.5 * w * second;
                }
            }
        }
    }
    Ok(total)
}

/// Refreshes every social trajectory factor by a scalar variational Kalman
/// smoother, then the social inverse-gamma factors. Returns clamp events.
pub fn update_social(
    post: &mut VariationalPosterior,
    net: &DynamicNetwork,
    priors: &Priors,
) -> Result<u64> {
    post.check_shape(net)?;
    let (n, k_len, t_len, d) = (post.n_nodes, post.n_layers, post.n_steps, post.dim);
    let pairs = net.n_pairs();
    let prec_init = post.ig_social.init_precision();
    let prec_step = post.ig_social.step_precision();
    let mut clamps = 0u64;

    for k in 0..k_len {
        for i in 0..n {
            let mut lin = Array2::<f64>::zeros((t_len, 1));
            let mut quad = Array3::<f64>::zeros((t_len, 1, 1));
            for t in 0..t_len {
                let values = net.slice_values(k, t);
                let observed = net.slice_observed(k, t);
                let offset = (k * t_len + t) * pairs;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let p = crate::net::pair_index(i, j);
                    if !observed[p] {
                        continue;
                    }
                    let w = post.omega_mean[offset + p];
                    let mut bilinear = 0.0;
                    for h in 0..d {
                        bilinear += post.homophily_mean[(k, h)]
                            * post.latent_mean[(i, t, h)]
                            * post.latent_mean[(j, t, h)];
                    }
                    lin[(t, 0)] += f64::from(values[p]) - 0.5
                        - w * (post.social_mean[(k, j, t)] + bilinear);
                    quad[(t, 0, 0)] += w;
                }
            }
            let smoothed =
                kalman_smoother(&GssmInput { obs_lin: lin, obs_prec: quad, prec_init, prec_step })?;
            clamps += smoothed.clamp_events;
            for t in 0..t_len {
                post.social_mean[(k, i, t)] = smoothed.mean[(t, 0)];
                post.social_var[(k, i, t)] = smoothed.cov[(t, 0, 0)];
            }
            for t in 0..t_len - 1 {
                post.social_cross[(k, i, t)] = smoothed.cross_cov[(t, 0, 0)];
            }
        }
    }

    // Conjugate inverse-gamma refresh from the new moments.
    let mut init_scale = priors.social_init_scale;
    let mut step_scale = priors.social_step_scale;
    for k in 0..k_len {
        for i in 0..n {
            let m1 = post.social_mean[(k, i, 0)];
            init_scale += post.social_var[(k, i, 0)] + m1 * m1;
            for t in 1..t_len {
                let m_now = post.social_mean[(k, i, t)];
                let m_prev = post.social_mean[(k, i, t - 1)];
                step_scale += post.social_var[(k, i, t)] + m_now * m_now
                    + post.social_var[(k, i, t - 1)]
                    + m_prev * m_prev
                    - 2.0 * (post.social_cross[(k, i, t - 1)] + m_prev * m_now);
            }
        }
    }
    post.ig_social = IgPosterior {
        init_shape: priors.social_init_shape + (n * k_len) as f64,
        init_scale,
        step_shape: priors.social_step_shape + (n * k_len * (t_len - 1)) as f64,
        step_scale,
    };
    Ok(clamps)
}

/// Refreshes every latent trajectory factor by a `d`-dimensional variational
/// Kalman smoother, then the latent inverse-gamma factors.
pub fn update_latent(
    post: &mut VariationalPosterior,
    net: &DynamicNetwork,
    priors: &Priors,
) -> Result<u64> {
    post.check_shape(net)?;
    let (n, k_len, t_len, d) = (post.n_nodes, post.n_layers, post.n_steps, post.dim);
    let pairs = net.n_pairs();
    let prec_init = post.ig_latent.init_precision();
    let prec_step = post.ig_latent.step_precision();
    let lam2: Vec<Vec<f64>> =
        (0..k_len).map(|k| post.homophily_second_moment(k).into_raw_vec_and_offset().0).collect();
    let mut clamps = 0u64;

    for i in 0..n {
        let mut lin = Array2::<f64>::zeros((t_len, d));
        let mut quad = Array3::<f64>::zeros((t_len, d, d));
        for t in 0..t_len {
            for k in 0..k_len {
                let values = net.slice_values(k, t);
                let observed = net.slice_observed(k, t);
                let offset = (k * t_len + t) * pairs;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let p = crate::net::pair_index(i, j);
                    if !observed[p] {
                        continue;
                    }
                    let w = post.omega_mean[offset + p];
                    let z = f64::from(values[p]) - 0.5
                        - w * (post.social_mean[(k, i, t)] + post.social_mean[(k, j, t)]);
                    for h in 0..d {
                        lin[(t, h)] +=
                            post.homophily_mean[(k, h)] * post.latent_mean[(j, t, h)] * z;
                    }
                    for g in 0..d {
                        let mg = post.latent_mean[(j, t, g)];
                        for h in 0..d {
                            let s_j =
                                post.latent_cov[(j, t, g, h)] + mg * post.latent_mean[(j, t, h)];
                            quad[(t, g, h)] += w * lam2[k][g * d + h] * s_j;
                        }
                    }
                }
            }
        }
        let smoothed =
            kalman_smoother(&GssmInput { obs_lin: lin, obs_prec: quad, prec_init, prec_step })?;
        clamps += smoothed.clamp_events;
        for t in 0..t_len {
            for h in 0..d {
                post.latent_mean[(i, t, h)] = smoothed.mean[(t, h)];
            }
            for g in 0..d {
                for h in 0..d {
                    post.latent_cov[(i, t, g, h)] = smoothed.cov[(t, g, h)];
                }
            }
        }
        for t in 0..t_len - 1 {
            for g in 0..d {
                for h in 0..d {
                    post.latent_cross[(i, t, g, h)] = smoothed.cross_cov[(t, g, h)];
                }
            }
        }
    }

    // Conjugate inverse-gamma refresh from the new moments.
    let mut init_scale = priors.latent_init_scale;
    let mut step_scale = priors.latent_step_scale;
    for i in 0..n {
        let mut first = 0.0;
        for h in 0..d {
            first += post.latent_cov[(i, 0, h, h)]
                + post.latent_mean[(i, 0, h)] * post.latent_mean[(i, 0, h)];
        }
        init_scale += first;
        for t in 1..t_len {
            let mut term = 0.0;
            for h in 0..d {
                let m_now = post.latent_mean[(i, t, h)];
                let m_prev = post.latent_mean[(i, t - 1, h)];
                term += post.latent_cov[(i, t, h, h)] + m_now * m_now
                    + post.latent_cov[(i, t - 1, h, h)]
                    + m_prev * m_prev
                    - 2.0 * (post.latent_cross[(i, t - 1, h, h)] + m_prev * m_now);
            }
            step_scale += term;
        }
    }
    post.ig_latent = IgPosterior {
        init_shape: priors.latent_init_shape + (n * d) as f64,
        init_scale,
        step_shape: priors.latent_step_shape + (n * d * (t_len - 1)) as f64,
        step_scale,
    };
    Ok(clamps)
}

/// Refreshes the reference layer's Bernoulli homophily factors.
pub fn update_ref_homophily(
    post: &mut VariationalPosterior,
    net: &DynamicNetwork,
    rho: f64,
) -> Result<()> {
    post.check_shape(net)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must be in (0, 1), got {rho}")));
    }
    let (n, t_len, d) = (post.n_nodes, post.n_steps, post.dim);
    let pairs = net.n_pairs();
    let prior_logit = (rho / (1.0 - rho)).ln();

    for h in 0..d {
        let mut acc = 0.0;
        for t in 0..t_len {
            let values = net.slice_values(0, t);
            let observed = net.slice_observed(0, t);
            let offset = t * pairs;
            let mut p = 0;
            for i in 1..n {
                for j in 0..i {
                    let idx = p;
                    p += 1;
                    if !observed[idx] {
                        continue;
                    }
                    let w = post.omega_mean[offset + idx];
                    let z = f64::from(values[idx]) - 0.5
                        - w * (post.social_mean[(0, i, t)] + post.social_mean[(0, j, t)]);
                    let mih = post.latent_mean[(i, t, h)];
                    let mjh = post.latent_mean[(j, t, h)];
                    acc += z * mih * mjh;
                    let mut cross = 0.0;
                    for g in 0..d {
                        if g == h {
                            continue;
                        }
                        let s_i = post.latent_cov[(i, t, g, h)]
                            + post.latent_mean[(i, t, g)] * mih;
                        let s_j = post.latent_cov[(j, t, g, h)]
                            + post.latent_mean[(j, t, g)] * mjh;
                        cross += post.homophily_mean[(0, g)] * s_i * s_j;
                    }
                    acc -= w * cross;
                }
            }
        }
        let eta = prior_logit + 2.0 * acc;
        let prob = logistic(eta).clamp(REF_PROB_EPS, 1.0 - REF_PROB_EPS);
        let mean = 2.0 * prob - 1.0;
        post.ref_prob[h] = prob;
        post.homophily_mean[(0, h)] = mean;
        post.homophily_cov[(0, h, h)] = 1.0 - mean * mean;
    }
    Ok(())
}

/// Refreshes the Gaussian homophily factors of the non-reference layers by
/// conjugate Bayesian linear regression.
pub fn update_homophily(
    post: &mut VariationalPosterior,
    net: &DynamicNetwork,
    sigma2_lambda: f64,
) -> Result<u64> {
    post.check_shape(net)?;
    if !(sigma2_lambda > 0.0) {
        return Err(Error::invalid("sigma2_lambda must be strictly positive"));
    }
    let (n, k_len, t_len, d) = (post.n_nodes, post.n_layers, post.n_steps, post.dim);
    let pairs = net.n_pairs();
    let mut moments = SecondMoments::new(n, d);
    let mut clamps = 0u64;

    for k in 1..k_len {
        let mut info = Array2::<f64>::eye(d) / sigma2_lambda;
        let mut rhs = Array1::<f64>::zeros(d);
        for t in 0..t_len {
            moments.fill(post, t);
            let values = net.slice_values(k, t);
            let observed = net.slice_observed(k, t);
            let offset = (k * t_len + t) * pairs;
            let mut p = 0;
            for i in 1..n {
                for j in 0..i {
                    let idx = p;
                    p += 1;
                    if !observed[idx] {
                        continue;
                    }
                    let w = post.omega_mean[offset + idx];
                    let z = f64::from(values[idx]) - 0.5
                        - w * (post.social_mean[(k, i, t)] + post.social_mean[(k, j, t)]);
                    let s_i = moments.at(i);
                    let s_j = moments.at(j);
                    for g in 0..d {
                        for h in 0..d {
                            info[(g, h)] += w * s_i[g * d + h] * s_j[g * d + h];
                        }
                    }
                    for h in 0..d {
                        rhs[h] += z * post.latent_mean[(i, t, h)] * post.latent_mean[(j, t, h)];
                    }
                }
            }
        }
        let cov = spd_inverse(&info.view(), VARIANCE_FLOOR, &mut clamps)?;
        let mean = spd_solve(&info.view(), &rhs.view(), VARIANCE_FLOOR, &mut clamps)?;
        for g in 0..d {
            post.homophily_mean[(k, g)] = mean[g];
            for h in 0..d {
                post.homophily_cov[(k, g, h)] = cov[(g, h)];
            }
        }
    }
    Ok(clamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavi::posterior::initialize;
    use crate::model::{simulate_network, simulate_state};
    use approx::assert_abs_diff_eq;
    use ndarray::{Array4, Axis};

    /// A zeroed posterior shaped for `net` with unit reference probabilities
    /// metadata kept consistent (mean 0, var 1 diag).
    fn zero_posterior(net: &DynamicNetwork, d: usize) -> VariationalPosterior {
        let (n, k, t) = (net.n_nodes(), net.n_layers(), net.n_steps());
        let tc = t.saturating_sub(1);
        let mut hom_cov = Array3::<f64>::zeros((k, d, d));
        for layer in 0..k {
            for h in 0..d {
                hom_cov[(layer, h, h)] = if layer == 0 { 1.0 } else { 0.0 };
            }
        }
        VariationalPosterior {
            n_nodes: n,
            n_layers: k,
            n_steps: t,
            dim: d,
            latent_mean: Array3::zeros((n, t, d)),
            latent_cov: Array4::zeros((n, t, d, d)),
            latent_cross: Array4::zeros((n, tc, d, d)),
            social_mean: Array3::zeros((k, n, t)),
            social_var: Array3::zeros((k, n, t)),
            social_cross: Array3::zeros((k, n, tc)),
            homophily_mean: Array2::zeros((k, d)),
            homophily_cov: hom_cov,
            ref_prob: Array1::from_elem(d, 0.5),
            omega_mean: vec![0.0; k * t * crate::net::pair_count(n)],
            ig_latent: IgPosterior {
                init_shape: 4.1,
                init_scale: 21.0,
                step_shape: 2.0,
                step_scale: 2.0,
            },
            ig_social: IgPosterior {
                init_shape: 4.1,
                init_scale: 21.0,
                step_shape: 2.0,
                step_scale: 2.0,
            },
        }
    }

    #[test]
    fn omega_at_zero_moments_is_one_quarter() {
        let net = DynamicNetwork::empty(4, 2, 2).unwrap();
        let mut post = zero_posterior(&net, 2);
        // Zero homophily covariance: tilt is exactly zero everywhere.
        post.homophily_cov.fill(0.0);
        update_omega(&mut post, &net).unwrap();
        assert!(post.omega_mean.iter().all(|&w| w == 0.25));
    }

    #[test]
    fn omega_tilt_arithmetic() {
        // mu_delta_i = mu_delta_j = 1, everything else zero: c = 2.
        let net = DynamicNetwork::empty(2, 1, 1).unwrap();
        let mut post = zero_posterior(&net, 1);
        post.homophily_cov.fill(0.0);
        post.social_mean.fill(1.0);
        update_omega(&mut post, &net).unwrap();
        let expected = pg_mean(2.0).unwrap();
        assert_abs_diff_eq!(post.omega_mean[0], expected, epsilon = 1e-15);
    }

    #[test]
    fn omega_stays_in_range_after_update() {
        let state = simulate_state(10, 2, 3, 2, 21).unwrap();
        let net = simulate_network(&state, 22).unwrap();
        let mut post = initialize(&net, 2, &Priors::default(), 23).unwrap();
        update_omega(&mut post, &net).unwrap();
        assert!(post.omega_mean.iter().all(|&w| w > 0.0 && w <= 0.25));
    }

    #[test]
    fn social_ig_counting_formulas() {
        let net = DynamicNetwork::empty(10, 3, 5).unwrap();
        let mut post = zero_posterior(&net, 2);
        post.homophily_cov.fill(0.0);
        let mut priors = Priors::default();
        priors.social_init_shape = 4.1;
        priors.social_step_shape = 2.0;
        update_social(&mut post, &net, &priors).unwrap();
        assert_abs_diff_eq!(post.ig_social.init_shape, 34.1, epsilon = 1e-12);
        assert_abs_diff_eq!(post.ig_social.step_shape, 122.0, epsilon = 1e-12);
        assert!(post.ig_social.init_scale > 0.0 && post.ig_social.step_scale > 0.0);
    }

    #[test]
    fn latent_ig_counting_formulas() {
        let net = DynamicNetwork::empty(50, 1, 2).unwrap();
        let mut post = zero_posterior(&net, 2);
        post.homophily_cov.fill(0.0);
        let priors = Priors::default();
        update_latent(&mut post, &net, &priors).unwrap();
        assert_abs_diff_eq!(post.ig_latent.init_shape, 104.1, epsilon = 1e-12);
        assert_abs_diff_eq!(post.ig_latent.step_shape, 2.0 + 100.0, epsilon = 1e-12);
    }

    #[test]
    fn masked_network_gives_zero_latent_means() {
        let state = simulate_state(6, 2, 3, 2, 31).unwrap();
        let net = simulate_network(&state, 32).unwrap();
        let mut masked = net.clone();
        masked.mask_all_dyads();
        let mut post = initialize(&net, 2, &Priors::default(), 33).unwrap();
        update_latent(&mut post, &masked, &Priors::default()).unwrap();
        assert!(post.latent_mean.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn loglik_zero_posterior_is_zero() {
        let net = DynamicNetwork::empty(4, 2, 2).unwrap();
        let mut post = zero_posterior(&net, 2);
        post.homophily_cov.fill(0.0);
        assert_eq!(expected_loglik(&post, &net).unwrap(), 0.0);
    }

    #[test]
    fn loglik_single_dyad_arithmetic() {
        // Y = 1, E[psi] = 2, E[omega] = 0.2, E[psi^2] = 4 -> 0.6.
        let mut net = DynamicNetwork::empty(2, 1, 1).unwrap();
        net.set_value(0, 0, 1, 0, 1).unwrap();
        let mut post = zero_posterior(&net, 1);
        post.homophily_cov.fill(0.0);
        post.social_mean.fill(1.0);
        post.omega_mean[0] = 0.2;
        assert_abs_diff_eq!(expected_loglik(&post, &net).unwrap(), 0.6, epsilon = 1e-14);
    }

    #[test]
    fn reference_update_prior_only() {
        let net = DynamicNetwork::empty(4, 1, 2).unwrap();
        let mut post = zero_posterior(&net, 2);
        update_ref_homophily(&mut post, &net, 0.5).unwrap();
        for h in 0..2 {
            assert_abs_diff_eq!(post.ref_prob[h], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(post.homophily_mean[(0, h)], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(post.homophily_cov[(0, h, h)], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn reference_update_logistic_arithmetic() {
        // One dyad, z * m_i * m_j = 5 with no cross terms: eta = 10.
        let mut net = DynamicNetwork::empty(2, 1, 1).unwrap();
        net.set_value(0, 0, 1, 0, 1).unwrap();
        let mut post = zero_posterior(&net, 1);
        let m = 10.0f64.sqrt();
        post.latent_mean[(0, 0, 0)] = m;
        post.latent_mean[(1, 0, 0)] = m;
        update_ref_homophily(&mut post, &net, 0.5).unwrap();
        let p_expected = 1.0 / (1.0 + (-10.0f64).exp());
        assert_abs_diff_eq!(post.ref_prob[0], p_expected, epsilon = 1e-12);
        assert!((post.ref_prob[0] - 0.99995).abs() < 1e-5);
        assert!((post.homophily_mean[(0, 0)] - 0.99991).abs() < 1e-5);
    }

    #[test]
    fn reference_update_saturates_with_bounded_variance() {
        let mut net = DynamicNetwork::empty(2, 1, 1).unwrap();
        net.set_value(0, 0, 1, 0, 1).unwrap();
        let mut post = zero_posterior(&net, 1);
        post.latent_mean[(0, 0, 0)] = 1e6;
        post.latent_mean[(1, 0, 0)] = 1e6;
        update_ref_homophily(&mut post, &net, 0.5).unwrap();
        assert!(post.ref_prob[0] < 1.0);
        assert!(post.homophily_cov[(0, 0, 0)] >= 0.0);
        assert!(post.homophily_cov[(0, 0, 0)] < 1e-10);
    }

    #[test]
    fn homophily_update_prior_only() {
        let net = DynamicNetwork::empty(3, 2, 2).unwrap();
        let mut post = zero_posterior(&net, 2);
        update_homophily(&mut post, &net, 10.0).unwrap();
        for h in 0..2 {
            assert_abs_diff_eq!(post.homophily_mean[(1, h)], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(post.homophily_cov[(1, h, h)], 10.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(post.homophily_cov[(1, 0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn homophily_update_scalar_regression() {
        // d = 1, one dyad: info = w * s_i * s_j + 1 = 2, rhs = z m^2 = 1.
        let mut net = DynamicNetwork::empty(2, 2, 1).unwrap();
        net.set_value(1, 0, 1, 0, 1).unwrap();
        let mut post = zero_posterior(&net, 1);
        let m = 2.0f64.sqrt();
        post.latent_mean[(0, 0, 0)] = m;
        post.latent_mean[(1, 0, 0)] = m;
        let pairs = crate::net::pair_count(2);
        post.omega_mean[pairs] = 0.25; // layer 1, t 0, only dyad
        update_homophily(&mut post, &net, 1.0).unwrap();
        assert_abs_diff_eq!(post.homophily_cov[(1, 0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(post.homophily_mean[(1, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn updates_skip_unobserved_dyads() {
        let state = simulate_state(8, 2, 3, 2, 51).unwrap();
        let net = simulate_network(&state, 52).unwrap();
        let split = net.make_holdout(0.3, 53).unwrap();
        let priors = Priors::default();
        let mut post = initialize(&split.train, 2, &priors, 54).unwrap();
        // A full sweep over the masked network must not touch held-out dyads;
        // the value accessor would error if it did.
        update_omega(&mut post, &split.train).unwrap();
        update_social(&mut post, &split.train, &priors).unwrap();
        update_latent(&mut post, &split.train, &priors).unwrap();
        update_ref_homophily(&mut post, &split.train, priors.rho).unwrap();
        update_homophily(&mut post, &split.train, priors.sigma2_lambda).unwrap();
        expected_loglik(&post, &split.train).unwrap();
        // Masked dyads keep a zero Polya-gamma mean.
        for h in &split.heldout {
            let offset = (h.k * net.n_steps() + h.t) * net.n_pairs();
            assert_eq!(post.omega_mean[offset + crate::net::pair_index(h.i, h.j)], 0.0);
        }
    }

    #[test]
    fn smoothed_covariances_stay_positive() {
        let state = simulate_state(10, 2, 4, 2, 61).unwrap();
        let net = simulate_network(&state, 62).unwrap();
        let priors = Priors::default();
        let mut post = initialize(&net, 2, &priors, 63).unwrap();
        for _ in 0..3 {
            update_omega(&mut post, &net).unwrap();
            update_social(&mut post, &net, &priors).unwrap();
            update_latent(&mut post, &net, &priors).unwrap();
            update_ref_homophily(&mut post, &net, priors.rho).unwrap();
            update_homophily(&mut post, &net, priors.sigma2_lambda).unwrap();
        }
        assert!(post.social_var.iter().all(|&v| v > 0.0));
        for i in 0..10 {
            for t in 0..4 {
                let c = post.latent_cov.index_axis(Axis(0), i);
                let c = c.index_axis(Axis(0), t);
                assert!(crate::linalg::cholesky(&c).is_ok());
            }
        }
        assert!(post.ig_social.validate().is_ok());
        assert!(post.ig_latent.validate().is_ok());
    }
}
