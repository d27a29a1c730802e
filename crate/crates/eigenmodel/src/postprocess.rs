//! Identifiable posterior summaries and posterior sampling.
//!
//! The raw posterior is only identified up to a latent-space translation
//! (absorbed by the socialities) and a signed column permutation. This
//! module centers the latent moments in closed form, summarizes the
//! translation-corrected socialities by Monte Carlo, draws whole latent
//! states from the posterior for predictive simulation, and aligns
//! estimated latent positions to a reference under the signed-permutation
//! invariance class.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cavi::VariationalPosterior;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_psd, VARIANCE_FLOOR};
use crate::model::LatentState;
use crate::rng;

/// Centered latent positions and translation-corrected socialities with 95%
/// credible bounds; the plot-ready view of a fitted posterior.
#[derive(Debug, Clone)]
pub struct IdentifiedSummary {
    /// Centered latent means, shape `(n, T, d)`.
    pub latent_mean: Array3<f64>,
    /// Centered latent covariances, shape `(n, T, d, d)`.
    pub latent_cov: Array4<f64>,
    /// Corrected sociality means, shape `(K, n, T)`.
    pub social_mean: Array3<f64>,
    /// 2.5% quantiles, shape `(K, n, T)`.
    pub social_lower: Array3<f64>,
    /// 97.5% quantiles, shape `(K, n, T)`.
    pub social_upper: Array3<f64>,
}

/// Centered latent moments: means shifted by the per-step average and
/// covariances combined accordingly.
pub fn centered_latent_moments(post: &VariationalPosterior) -> (Array3<f64>, Array4<f64>) {
    let (n, t_len, d) = (post.n_nodes, post.n_steps, post.dim);
    let nf = n as f64;
    let mut mean = post.latent_mean.clone();
    for t in 0..t_len {
        for h in 0..d {
            let avg: f64 = (0..n).map(|j| post.latent_mean[(j, t, h)]).sum::<f64>() / nf;
            for i in 0..n {
                mean[(i, t, h)] -= avg;
            }
        }
    }
    let shrink = (1.0 - 1.0 / nf) * (1.0 - 1.0 / nf);
    let spread = 1.0 / (nf * nf);
    let mut cov = Array4::<f64>::zeros((n, t_len, d, d));
    for t in 0..t_len {
        // Total covariance per step, reused for the leave-one-out sums.
        let mut total = Array2::<f64>::zeros((d, d));
        for j in 0..n {
            for g in 0..d {
                for h in 0..d {
                    total[(g, h)] += post.latent_cov[(j, t, g, h)];
                }
            }
        }
        for i in 0..n {
            for g in 0..d {
                for h in 0..d {
                    let own = post.latent_cov[(i, t, g, h)];
                    cov[(i, t, g, h)] = shrink * own + spread * (total[(g, h)] - own);
                }
            }
        }
    }
    (mean, cov)
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= m {
        sorted[m - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Monte Carlo summary (mean and 95% interval) of the translation-corrected
/// socialities. Each draw samples the latent positions from their per-step
/// marginals, the homophily vectors from their factors, the socialities from
/// their marginals, and applies the centering correction
/// `delta + (x_i - c)' Lambda c + c' Lambda c / 2` with `c` the per-step
/// latent average of that draw.
pub fn centered_social_summary(
    post: &VariationalPosterior,
    n_samples: usize,
    seed: u64,
) -> Result<(Array3<f64>, Array3<f64>, Array3<f64>)> {
    if n_samples < 100 {
        return Err(Error::invalid(format!(
            "at least 100 samples are needed for stable quantiles, got {n_samples}"
        )));
    }
    let (n, k_len, t_len, d) = (post.n_nodes, post.n_layers, post.n_steps, post.dim);

    // Cholesky factors of every latent marginal and homophily covariance.
    let mut latent_factors = Vec::with_capacity(n * t_len);
    for i in 0..n {
        for t in 0..t_len {
            let cov = post.latent_cov.index_axis(Axis(0), i);
            let cov = cov.index_axis(Axis(0), t);
            latent_factors.push(cholesky_psd(&cov)?);
        }
    }
    let mut homophily_factors = Vec::with_capacity(k_len);
    for k in 0..k_len {
        let cov = post.homophily_cov.index_axis(Axis(0), k);
        homophily_factors.push(cholesky_psd(&cov)?);
    }

    let cells = k_len * n * t_len;
    let mut samples = vec![0.0f64; cells * n_samples];
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut r = rng::stream(seed, &[0x5353]);

    let mut x = Array3::<f64>::zeros((t_len, n, d));
    let mut centers = Array2::<f64>::zeros((t_len, d));
    let mut lambdas = Array2::<f64>::zeros((k_len, d));
    let mut z = Array1::<f64>::zeros(d);

    for s in 0..n_samples {
        for t in 0..t_len {
            for h in 0..d {
                centers[(t, h)] = 0.0;
            }
            for i in 0..n {
                for h in 0..d {
                    z[h] = std_normal.sample(&mut r);
                }
                let l = &latent_factors[i * t_len + t];
                for g in 0..d {
                    let mut v = post.latent_mean[(i, t, g)];
                    for h in 0..=g {
                        v += l[(g, h)] * z[h];
                    }
                    x[(t, i, g)] = v;
                    centers[(t, g)] += v;
                }
            }
            for h in 0..d {
                centers[(t, h)] /= n as f64;
            }
        }
        for h in 0..d {
            lambdas[(0, h)] = if r.random_bool(post.ref_prob[h]) { 1.0 } else { -1.0 };
        }
        for k in 1..k_len {
            for h in 0..d {
                z[h] = std_normal.sample(&mut r);
            }
            let l = &homophily_factors[k];
            for g in 0..d {
                let mut v = post.homophily_mean[(k, g)];
                for h in 0..=g {
                    v += l[(g, h)] * z[h];
                }
                lambdas[(k, g)] = v;
            }
        }
        for k in 0..k_len {
            for t in 0..t_len {
                let mut quad = 0.0;
                for h in 0..d {
                    quad += centers[(t, h)] * lambdas[(k, h)] * centers[(t, h)];
                }
                for i in 0..n {
                    let sd = post.social_var[(k, i, t)].max(0.0).sqrt();
                    let delta = post.social_mean[(k, i, t)] + sd * std_normal.sample(&mut r);
                    let mut cross = 0.0;
                    for h in 0..d {
                        cross +=
                            (x[(t, i, h)] - centers[(t, h)]) * lambdas[(k, h)] * centers[(t, h)];
                    }
                    let cell = (k * n + i) * t_len + t;
                    samples[cell * n_samples + s] = delta + cross + 0.5 * quad;
                }
            }
        }
    }

    let mut mean = Array3::<f64>::zeros((k_len, n, t_len));
    let mut lower = Array3::<f64>::zeros((k_len, n, t_len));
    let mut upper = Array3::<f64>::zeros((k_len, n, t_len));
    for k in 0..k_len {
        for i in 0..n {
            for t in 0..t_len {
                let cell = (k * n + i) * t_len + t;
                let chunk = &mut samples[cell * n_samples..(cell + 1) * n_samples];
                let avg = chunk.iter().sum::<f64>() / n_samples as f64;
                chunk.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite samples"));
                mean[(k, i, t)] = avg;
                lower[(k, i, t)] = quantile(chunk, 0.025);
                upper[(k, i, t)] = quantile(chunk, 0.975);
            }
        }
    }
    Ok((mean, lower, upper))
}

/// Full identifiable summary: centered latent moments plus the Monte Carlo
/// sociality summary.
pub fn identified_summary(
    post: &VariationalPosterior,
    n_samples: usize,
    seed: u64,
) -> Result<IdentifiedSummary> {
    let (latent_mean, latent_cov) = centered_latent_moments(post);
    let (social_mean, social_lower, social_upper) =
        centered_social_summary(post, n_samples, seed)?;
    Ok(IdentifiedSummary { latent_mean, latent_cov, social_mean, social_lower, social_upper })
}

impl IdentifiedSummary {
    /// CSV rows `layer,step,node,mean,lower,upper` (1-based indices).
    pub fn social_csv(&self) -> String {
        let (k_len, n, t_len) = {
            let s = self.social_mean.shape();
            (s[0], s[1], s[2])
        };
        let mut out = String::from("layer,step,node,mean,lower,upper\n");
        for k in 0..k_len {
            for t in 0..t_len {
                for i in 0..n {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        k + 1,
                        t + 1,
                        i + 1,
                        self.social_mean[(k, i, t)],
                        self.social_lower[(k, i, t)],
                        self.social_upper[(k, i, t)]
                    ));
                }
            }
        }
        out
    }

    /// CSV rows `step,node,mean_<h>,lower_<h>,upper_<h>...` per latent
    /// dimension, with Gaussian 95% bounds from the centered covariances.
    pub fn latent_csv(&self) -> String {
        let (n, t_len, d) = {
            let s = self.latent_mean.shape();
            (s[0], s[1], s[2])
        };
        let z = 1.959_963_984_540_054f64;
        let mut out = String::from("step,node");
        for h in 0..d {
            out.push_str(&format!(",mean_{0},lower_{0},upper_{0}", h + 1));
        }
        out.push('\n');
        for t in 0..t_len {
            for i in 0..n {
                out.push_str(&format!("{},{}", t + 1, i + 1));
                for h in 0..d {
                    let m = self.latent_mean[(i, t, h)];
                    let sd = self.latent_cov[(i, t, h, h)].max(0.0).sqrt();
                    out.push_str(&format!(",{},{},{}", m, m - z * sd, m + z * sd));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// One joint draw of all model parameters from the posterior. Latent and
/// social trajectories are drawn forward in time through the conditionals
/// implied by the stored marginals and adjacent cross-covariances, which is
/// exact for the Markov trajectory factors. Returns the draw and the number
/// of variance clamps applied to keep conditionals well defined.
pub fn sample_state(post: &VariationalPosterior, seed: u64) -> Result<(LatentState, u64)> {
    let (n, k_len, t_len, d) = (post.n_nodes, post.n_layers, post.n_steps, post.dim);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut r = rng::stream(seed, &[0x5354]);
    let mut clamps = 0u64;

    // Latent trajectories.
    let mut latent = Array3::<f64>::zeros((t_len, n, d));
    let mut z = Array1::<f64>::zeros(d);
    let mut prev = Array1::<f64>::zeros(d);
    for i in 0..n {
        let cov0 = post.latent_cov.index_axis(Axis(0), i);
        let l0 = cholesky_psd(&cov0.index_axis(Axis(0), 0))?;
        for h in 0..d {
            z[h] = std_normal.sample(&mut r);
        }
        for g in 0..d {
            let mut v = post.latent_mean[(i, 0, g)];
            for h in 0..=g {
                v += l0[(g, h)] * z[h];
            }
            latent[(0, i, g)] = v;
            prev[g] = v;
        }
        for t in 1..t_len {
            let cov_prev =
                post.latent_cov.index_axis(Axis(0), i).index_axis(Axis(0), t - 1).to_owned();
            let prec_prev =
                crate::linalg::spd_inverse(&cov_prev.view(), VARIANCE_FLOOR, &mut clamps)?;
            let cross = post.latent_cross.index_axis(Axis(0), i);
            let cross = cross.index_axis(Axis(0), t - 1);
            // Gain G = cross' * prec_prev; conditional mean uses (x - mean).
            let mut gain = Array2::<f64>::zeros((d, d));
            for g in 0..d {
                for h in 0..d {
                    let mut v = 0.0;
                    for a in 0..d {
                        v += cross[(a, g)] * prec_prev[(a, h)];
                    }
                    gain[(g, h)] = v;
                }
            }
            let cov_now = post.latent_cov.index_axis(Axis(0), i);
            let mut cond = cov_now.index_axis(Axis(0), t).to_owned();
            for g in 0..d {
                for h in 0..d {
                    let mut v = 0.0;
                    for a in 0..d {
                        v += gain[(g, a)] * cross[(a, h)];
                    }
                    cond[(g, h)] -= v;
                }
            }
            // Guard against tiny negative diagonals from cancellation.
            for g in 0..d {
                if cond[(g, g)] < 0.0 {
                    if cond[(g, g)] < -1e-8 {
                        return Err(Error::numerical(
                            "conditional covariance is not positive semidefinite",
                        ));
                    }
                    cond[(g, g)] = 0.0;
                    clamps += 1;
                }
            }
            let l = cholesky_psd(&cond.view())?;
            for h in 0..d {
                z[h] = std_normal.sample(&mut r);
            }
            for g in 0..d {
                let mut v = post.latent_mean[(i, t, g)];
                for h in 0..d {
                    v += gain[(g, h)] * (prev[h] - post.latent_mean[(i, t - 1, h)]);
                }
                for h in 0..=g {
                    v += l[(g, h)] * z[h];
                }
                latent[(t, i, g)] = v;
            }
            for g in 0..d {
                prev[g] = latent[(t, i, g)];
            }
        }
    }

    // Social trajectories (scalar version of the same forward draw).
    let mut social = Array3::<f64>::zeros((k_len, t_len, n));
    for k in 0..k_len {
        for i in 0..n {
            let sd0 = post.social_var[(k, i, 0)].max(0.0).sqrt();
            let mut value = post.social_mean[(k, i, 0)] + sd0 * std_normal.sample(&mut r);
            social[(k, 0, i)] = value;
            for t in 1..t_len {
                let raw_var = post.social_var[(k, i, t - 1)];
                let var_prev = raw_var.max(VARIANCE_FLOOR);
                if raw_var < VARIANCE_FLOOR {
                    clamps += 1;
                }
                let cross = post.social_cross[(k, i, t - 1)];
                let gain = cross / var_prev;
                let mut cond = post.social_var[(k, i, t)] - gain * cross;
                if cond < 0.0 {
                    if cond < -1e-8 {
                        return Err(Error::numerical(
                            "conditional variance is not positive semidefinite",
                        ));
                    }
                    cond = 0.0;
                    clamps += 1;
                }
                value = post.social_mean[(k, i, t)]
                    + gain * (value - post.social_mean[(k, i, t - 1)])
                    + cond.sqrt() * std_normal.sample(&mut r);
                social[(k, t, i)] = value;
            }
        }
    }

    // Homophily coefficients.
    let mut homophily = Array2::<f64>::zeros((k_len, d));
    for h in 0..d {
        homophily[(0, h)] = if r.random_bool(post.ref_prob[h]) { 1.0 } else { -1.0 };
    }
    for k in 1..k_len {
        let cov = post.homophily_cov.index_axis(Axis(0), k);
        let l = cholesky_psd(&cov)?;
        for h in 0..d {
            z[h] = std_normal.sample(&mut r);
        }
        for g in 0..d {
            let mut v = post.homophily_mean[(k, g)];
            for h in 0..=g {
                v += l[(g, h)] * z[h];
            }
            homophily[(k, g)] = v;
        }
    }

    Ok((LatentState::new(social, latent, homophily)?, clamps))
}

/// Result of aligning an estimated embedding to a reference.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Column mapping: output column `h` is `signs[h] * est[:, perm[h]]`.
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
    pub aligned: Array2<f64>,
    /// Minimized squared Frobenius residual.
    pub residual: f64,
}

/// All permutations of `0..d` in lexicographic order.
pub(crate) fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn recurse(
        d: usize,
        depth: usize,
        current: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        if depth == d {
            out.push(current.clone());
            return;
        }
        for v in 0..d {
            if !used[v] {
                used[v] = true;
                current[depth] = v;
                recurse(d, depth + 1, current, used, out);
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..d).collect();
    let mut used = vec![false; d];
    recurse(d, 0, &mut current, &mut used, &mut out);
    out
}

/// Exhaustively minimizes `|truth - est P diag(s)|_F^2` over all column
/// permutations and sign flips. Ties keep the lexicographically first
/// `(perm, signs)` pair (signs ordered with +1 before -1).
pub fn align_signed_permutation(
    est: &ArrayView2<f64>,
    truth: &ArrayView2<f64>,
) -> Result<Alignment> {
    if est.shape() != truth.shape() {
        return Err(Error::invalid("est and truth must have matching shapes"));
    }
    let (n, d) = (est.nrows(), est.ncols());
    if d > 8 {
        return Err(Error::invalid(format!(
            "exhaustive signed-permutation search is limited to d <= 8, got {d}"
        )));
    }
    // Column inner products: dots[h][g] = truth[:, h] . est[:, g].
    let mut dots = Array2::<f64>::zeros((d, d));
    for h in 0..d {
        for g in 0..d {
            let mut v = 0.0;
            for i in 0..n {
                v += truth[(i, h)] * est[(i, g)];
            }
            dots[(h, g)] = v;
        }
    }
    let norm2 = |m: &ArrayView2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let base = norm2(truth) + norm2(est);

    let mut best: Option<(f64, Vec<usize>, u32)> = None;
    for perm in permutations(d) {
        for mask in 0..(1u32 << d) {
            let mut cross = 0.0;
            for h in 0..d {
                let sign = if mask & (1 << h) == 0 { 1.0 } else { -1.0 };
                cross += sign * dots[(h, perm[h])];
            }
            let residual = base - 2.0 * cross;
            if best.as_ref().is_none_or(|(b, _, _)| residual < *b) {
                best = Some((residual, perm.clone(), mask));
            }
        }
    }
    let (_, perm, mask) = best.expect("at least one candidate");
    let signs: Vec<i8> = (0..d).map(|h| if mask & (1 << h) == 0 { 1 } else { -1 }).collect();
    let mut aligned = Array2::<f64>::zeros((n, d));
    for h in 0..d {
        let s = f64::from(signs[h]);
        for i in 0..n {
            aligned[(i, h)] = s * est[(i, perm[h])];
        }
    }
    // Recompute the winner's residual by direct subtraction; the dot-product
    // form used during the search cancels catastrophically near zero.
    let mut residual = 0.0;
    for i in 0..n {
        for h in 0..d {
            let diff = truth[(i, h)] - aligned[(i, h)];
            residual += diff * diff;
        }
    }
    Ok(Alignment { perm, signs, aligned, residual })
}
