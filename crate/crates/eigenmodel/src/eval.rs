//! Evaluation metrics: plug-in probabilities, relative errors under the
//! model's identifiability invariances, rank-based AUC, and epidemic
//! branching factors of posterior-predictive networks.

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::cavi::VariationalPosterior;
use crate::error::{Error, Result};
use crate::model::{logistic, LatentState};
use crate::net::{pair_count, DynamicNetwork, HeldDyad};
use crate::postprocess::{
    align_signed_permutation, centered_latent_moments, centered_social_summary, permutations,
    sample_state,
};
use crate::rng;

/// Summary statistics of one estimated posterior against a known truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub latent_rel_err: f64,
    pub social_rel_err: f64,
    pub homophily_rel_err: f64,
    pub proba_rel_err: f64,
    pub auc_in: f64,
    pub auc_holdout: Option<f64>,
}

impl EvalReport {
    /// CSV rows `statistic,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("statistic,value\n");
        out.push_str(&format!("latent_rel_err,{}\n", self.latent_rel_err));
        out.push_str(&format!("social_rel_err,{}\n", self.social_rel_err));
        out.push_str(&format!("homophily_rel_err,{}\n", self.homophily_rel_err));
        out.push_str(&format!("proba_rel_err,{}\n", self.proba_rel_err));
        out.push_str(&format!("auc_in,{}\n", self.auc_in));
        if let Some(auc) = self.auc_holdout {
            out.push_str(&format!("auc_holdout,{auc}\n"));
        }
        out
    }
}

/// Plug-in connection probabilities at the posterior means for every dyad,
/// shape `(K, T, n(n-1)/2)` in pair-index order.
pub fn plug_in_probabilities(post: &VariationalPosterior) -> Array3<f64> {
    let (n, k_len, t_len, d) = (post.n_nodes, post.n_layers, post.n_steps, post.dim);
    let mut probs = Array3::<f64>::zeros((k_len, t_len, pair_count(n)));
    for k in 0..k_len {
        for t in 0..t_len {
            let mut p = 0;
            for i in 1..n {
                for j in 0..i {
                    let mut theta =
                        post.social_mean[(k, i, t)] + post.social_mean[(k, j, t)];
                    for h in 0..d {
                        theta += post.homophily_mean[(k, h)]
                            * post.latent_mean[(i, t, h)]
                            * post.latent_mean[(j, t, h)];
                    }
                    probs[(k, t, p)] = logistic(theta);
                    p += 1;
                }
            }
        }
    }
    probs
}

fn check_truth_shape(post: &VariationalPosterior, truth: &LatentState) -> Result<()> {
    if truth.n_nodes() != post.n_nodes
        || truth.n_layers() != post.n_layers
        || truth.n_steps() != post.n_steps
        || truth.dim() != post.dim
    {
        return Err(Error::invalid("truth state shape does not match the posterior"));
    }
    Ok(())
}

/// Time-averaged relative error of the centered latent positions, minimized
/// per step over signed column permutations. `truth` must be centered.
pub fn latent_relative_error(post: &VariationalPosterior, truth: &LatentState) -> Result<f64> {
    check_truth_shape(post, truth)?;
    let (n, t_len, d) = (post.n_nodes, post.n_steps, post.dim);
    for t in 0..t_len {
        for h in 0..d {
            let mean: f64 = (0..n).map(|i| truth.latent[(t, i, h)]).sum::<f64>() / n as f64;
            if mean.abs() > 1e-8 {
                return Err(Error::invalid(
                    "truth latent positions must be centered per time step",
                ));
            }
        }
    }
    let (est_mean, _) = centered_latent_moments(post);
    let mut total = 0.0;
    for t in 0..t_len {
        let mut truth_t = Array2::<f64>::zeros((n, d));
        let mut est_t = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            for h in 0..d {
                truth_t[(i, h)] = truth.latent[(t, i, h)];
                est_t[(i, h)] = est_mean[(i, t, h)];
            }
        }
        let denom: f64 = truth_t.iter().map(|v| v * v).sum();
        if denom == 0.0 {
            return Err(Error::invalid(format!("truth latent slice {t} has zero norm")));
        }
        let alignment = align_signed_permutation(&est_t.view(), &truth_t.view())?;
        total += alignment.residual / denom;
    }
    Ok(total / t_len as f64)
}

/// Relative error of the homophily coefficients, minimized over simultaneous
/// row permutations applied to every layer.
pub fn homophily_relative_error(post: &VariationalPosterior, truth: &LatentState) -> Result<f64> {
    check_truth_shape(post, truth)?;
    let (k_len, d) = (post.n_layers, post.dim);
    if d > 8 {
        return Err(Error::invalid("permutation search is limited to d <= 8"));
    }
    let denom: f64 = truth.homophily.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::invalid("truth homophily coefficients are all zero"));
    }
    let mut best = f64::INFINITY;
    for perm in permutations(d) {
        let mut err = 0.0;
        for k in 0..k_len {
            for h in 0..d {
                let diff = truth.homophily[(k, h)] - post.homophily_mean[(k, perm[h])];
                err += diff * diff;
            }
        }
        best = best.min(err);
    }
    Ok(best / denom)
}

/// Relative error of the translation-corrected social trajectories
/// (Monte Carlo means against the centered truth). No invariance applies.
pub fn social_relative_error(
    post: &VariationalPosterior,
    truth: &LatentState,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_truth_shape(post, truth)?;
    let centered = truth.center();
    let (est_mean, _, _) = centered_social_summary(post, n_samples, seed)?;
    let mut num = 0.0;
    let mut denom = 0.0;
    for k in 0..post.n_layers {
        for t in 0..post.n_steps {
            for i in 0..post.n_nodes {
                let truth_v = centered.social[(k, t, i)];
                let diff = truth_v - est_mean[(k, i, t)];
                num += diff * diff;
                denom += truth_v * truth_v;
            }
        }
    }
    if denom == 0.0 {
        return Err(Error::invalid("truth social trajectories have zero norm"));
    }
    Ok(num / denom)
}

/// Relative error of the plug-in dyad probabilities. No invariance applies.
pub fn probability_relative_error(
    post: &VariationalPosterior,
    truth: &LatentState,
) -> Result<f64> {
    check_truth_shape(post, truth)?;
    let probs = plug_in_probabilities(post);
    let (n, k_len, t_len) = (post.n_nodes, post.n_layers, post.n_steps);
    let mut num = 0.0;
    let mut denom = 0.0;
    for k in 0..k_len {
        for t in 0..t_len {
            let mut p = 0;
            for i in 1..n {
                for j in 0..i {
                    let truth_p = truth.dyad_probability(k, t, i, j)?;
                    let diff = truth_p - probs[(k, t, p)];
                    num += diff * diff;
                    denom += truth_p * truth_p;
                    p += 1;
                }
            }
        }
    }
    if denom == 0.0 {
        return Err(Error::invalid("truth probabilities have zero norm"));
    }
    Ok(num / denom)
}

/// Area under the ROC curve by the rank-sum statistic with average ranks on
/// ties: `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels must have equal length"));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("AUC needs at least one positive and one negative label"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Average ranks over tie groups, then sum the positives' ranks.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        start = end + 1;
    }
    let p = positives as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// In-sample AUC of plug-in probabilities over the observed dyads.
pub fn in_sample_auc(post: &VariationalPosterior, net: &DynamicNetwork) -> Result<f64> {
    post.check_shape(net)?;
    let probs = plug_in_probabilities(post);
    let (n, k_len, t_len) = (net.n_nodes(), net.n_layers(), net.n_steps());
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for k in 0..k_len {
        for t in 0..t_len {
            let values = net.slice_values(k, t);
            let observed = net.slice_observed(k, t);
            for p in 0..pair_count(n) {
                if observed[p] {
                    scores.push(probs[(k, t, p)]);
                    labels.push(values[p]);
                }
            }
        }
    }
    auc(&scores, &labels)
}

/// AUC of plug-in probabilities on a held-out dyad set.
pub fn holdout_auc(post: &VariationalPosterior, heldout: &[HeldDyad]) -> Result<f64> {
    let probs = plug_in_probabilities(post);
    let mut scores = Vec::with_capacity(heldout.len());
    let mut labels = Vec::with_capacity(heldout.len());
    for h in heldout {
        if h.k >= post.n_layers || h.t >= post.n_steps || h.i >= post.n_nodes {
            return Err(Error::invalid("held-out dyad outside the posterior's shape"));
        }
        scores.push(probs[(h.k, h.t, crate::net::pair_index(h.i, h.j))]);
        labels.push(h.value);
    }
    auc(&scores, &labels)
}

/// Epidemic branching factor `sum(d_i^2) / sum(d_i)` of a degree sequence.
pub fn branching_factor(degrees: &[usize]) -> Result<f64> {
    let total: usize = degrees.iter().sum();
    if total == 0 {
        return Err(Error::invalid("branching factor is undefined for an empty graph"));
    }
    let squares: f64 = degrees.iter().map(|&d| (d * d) as f64).sum();
    Ok(squares / total as f64)
}

/// Branching factor of one observed network slice.
pub fn observed_branching_factor(net: &DynamicNetwork, k: usize, t: usize) -> Result<f64> {
    branching_factor(&net.degrees(k, t)?)
}

/// Posterior-predictive branching factor samples for slice `(k, t)`.
#[derive(Debug, Clone)]
pub struct BranchingSamples {
    pub values: Vec<f64>,
    /// Draws whose sampled slice had no edges; recorded, not an error.
    pub skipped: usize,
    pub clamp_events: u64,
}

impl BranchingSamples {
    /// CSV rows `draw,kappa` (1-based draw indices; skipped draws omitted).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("draw,kappa\n");
        for (idx, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", idx + 1, v));
        }
        out
    }
}

/// Samples `n_networks` latent states from the posterior, simulates slice
/// `(k, t)` from each, and records the branching factors. Empty sampled
/// slices are skipped and counted.
pub fn branching_factor_posterior(
    post: &VariationalPosterior,
    k: usize,
    t: usize,
    n_networks: usize,
    seed: u64,
) -> Result<BranchingSamples> {
    if k >= post.n_layers || t >= post.n_steps {
        return Err(Error::invalid(format!(
            "slice (k={k}, t={t}) outside posterior shape (K={}, T={})",
            post.n_layers, post.n_steps
        )));
    }
    if n_networks == 0 {
        return Err(Error::invalid("n_networks must be at least 1"));
    }
    let n = post.n_nodes;
    let mut values = Vec::with_capacity(n_networks);
    let mut skipped = 0usize;
    let mut clamps = 0u64;
    for draw in 0..n_networks {
        let draw_seed = rng::substream(seed, &[0x4250, draw as u64]);
        let (state, c) = sample_state(post, draw_seed)?;
        clamps += c;
        let mut r = rng::stream(draw_seed, &[0x534c]);
        let mut degrees = vec![0usize; n];
        for i in 1..n {
            for j in 0..i {
                let p = state.dyad_probability(k, t, i, j)?;
                if r.random_bool(p) {
                    degrees[i] += 1;
                    degrees[j] += 1;
                }
            }
        }
        match branching_factor(&degrees) {
            Ok(kappa) => values.push(kappa),
            Err(_) => skipped += 1,
        }
    }
    Ok(BranchingSamples { values, skipped, clamp_events: clamps })
}

/// Full evaluation of a fitted posterior against a known truth state.
pub fn evaluate(
    post: &VariationalPosterior,
    net: &DynamicNetwork,
    truth: &LatentState,
    heldout: Option<&[HeldDyad]>,
    n_samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    Ok(EvalReport {
        latent_rel_err: latent_relative_error(post, truth)?,
        social_rel_err: social_relative_error(post, truth, n_samples, seed)?,
        homophily_rel_err: homophily_relative_error(post, truth)?,
        proba_rel_err: probability_relative_error(post, truth)?,
        auc_in: in_sample_auc(post, net)?,
        auc_holdout: heldout.map(|h| holdout_auc(post, h)).transpose()?,
    })
}

/// A point-mass posterior centered at a known state (all variances zero,
/// reference probabilities saturated). Plug-in quantities computed from it
/// reproduce the state exactly; useful for wiring and evaluation tests.
pub fn degenerate_posterior(state: &LatentState) -> VariationalPosterior {
    use ndarray::{Array1, Array4};
    let (n, k_len, t_len, d) =
        (state.n_nodes(), state.n_layers(), state.n_steps(), state.dim());
    let tc = t_len.saturating_sub(1);
    let mut latent_mean = Array3::<f64>::zeros((n, t_len, d));
    for i in 0..n {
        for t in 0..t_len {
            for h in 0..d {
                latent_mean[(i, t, h)] = state.latent[(t, i, h)];
            }
        }
    }
    let mut social_mean = Array3::<f64>::zeros((k_len, n, t_len));
    for k in 0..k_len {
        for i in 0..n {
            for t in 0..t_len {
                social_mean[(k, i, t)] = state.social[(k, t, i)];
            }
        }
    }
    let mut ref_prob = Array1::<f64>::zeros(d);
    for h in 0..d {
        ref_prob[h] = if state.homophily[(0, h)] > 0.0 { 1.0 - 1e-15 } else { 1e-15 };
    }
    VariationalPosterior {
        n_nodes: n,
        n_layers: k_len,
        n_steps: t_len,
        dim: d,
        latent_mean,
        latent_cov: Array4::zeros((n, t_len, d, d)),
        latent_cross: Array4::zeros((n, tc, d, d)),
        social_mean,
        social_var: Array3::zeros((k_len, n, t_len)),
        social_cross: Array3::zeros((k_len, n, tc)),
        homophily_mean: state.homophily.clone(),
        homophily_cov: Array3::zeros((k_len, d, d)),
        ref_prob,
        omega_mean: vec![0.0; k_len * t_len * pair_count(n)],
        ig_latent: crate::cavi::IgPosterior {
            init_shape: 1.0,
            init_scale: 1.0,
            step_shape: 1.0,
            step_scale: 1.0,
        },
        ig_social: crate::cavi::IgPosterior {
            init_shape: 1.0,
            init_scale: 1.0,
            step_shape: 1.0,
            step_scale: 1.0,
        },
    }
}
