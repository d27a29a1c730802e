//! The structured mean-field posterior and its initialization.
//!
//! The approximation keeps one Gaussian state space factor per social
//! trajectory `(k, i)` and per latent trajectory `i` (marginals plus adjacent
//! cross-covariances), independent Bernoulli factors on the reference-layer
//! homophily signs, Gaussians on the other layers' homophily vectors,
//! Polya-gamma factors per observed dyad (only their means are needed), and
//! inverse-gamma factors on the four state space variances.

use ndarray::{Array1, Array2, Array3, Array4};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Priors;
use crate::net::DynamicNetwork;
use crate::rng;

use super::init::two_way_logistic;

/// Inverse-gamma variational factor, stored as the doubled shape/scale
/// `(a, b)` of `IG(a/2, b/2)`, so the expected precision is `a / b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgPosterior {
    pub init_shape: f64,
    pub init_scale: f64,
    pub step_shape: f64,
    pub step_scale: f64,
}

impl IgPosterior {
    /// Expected precision of the initial state, `<1/tau^2>`.
    pub fn init_precision(&self) -> f64 {
        self.init_shape / self.init_scale
    }

    /// Expected precision of the random-walk step, `<1/sigma^2>`.
    pub fn step_precision(&self) -> f64 {
        self.step_shape / self.step_scale
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.init_shape, self.init_scale, self.step_shape, self.step_scale];
        if all.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("inverse-gamma parameters must be strictly positive"));
        }
        Ok(())
    }
}

/// All factor parameters of the structured mean-field approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub n_steps: usize,
    pub dim: usize,

    /// Latent trajectory means, shape `(n, T, d)`.
    pub latent_mean: Array3<f64>,
    /// Latent marginal covariances, shape `(n, T, d, d)`.
    pub latent_cov: Array4<f64>,
    /// Latent adjacent cross-covariances `Cov(x_t, x_{t+1})`, shape `(n, T-1, d, d)`.
    pub latent_cross: Array4<f64>,

    /// Social trajectory means, shape `(K, n, T)`.
    pub social_mean: Array3<f64>,
    /// Social marginal variances, shape `(K, n, T)`.
    pub social_var: Array3<f64>,
    /// Social adjacent cross-covariances, shape `(K, n, T-1)`.
    pub social_cross: Array3<f64>,

    /// Homophily means, shape `(K, d)`; row 0 is derived from `ref_prob`
    /// after the first reference update.
    pub homophily_mean: Array2<f64>,
    /// Homophily covariances, shape `(K, d, d)`; layer 0 is diagonal with
    /// entries `1 - mean^2`.
    pub homophily_cov: Array3<f64>,
    /// Probabilities that each reference coefficient equals +1, length `d`.
    pub ref_prob: Array1<f64>,

    /// Polya-gamma means per dyad in `(k, t, pair)` layout; entries at
    /// unobserved dyads stay 0 and are never read.
    pub omega_mean: Vec<f64>,

    pub ig_latent: IgPosterior,
    pub ig_social: IgPosterior,
}

/// Versioned on-disk wrapper for [`VariationalPosterior`].
#[derive(Serialize, Deserialize)]
struct PosteriorDoc {
    format: String,
    #[serde(flatten)]
    fields: serde_json::Value,
}

const POSTERIOR_FORMAT: &str = "eigenmodel.posterior.v1";

impl VariationalPosterior {
    /// Checks that the posterior's shape matches a network.
    pub fn check_shape(&self, net: &DynamicNetwork) -> Result<()> {
        if self.n_nodes != net.n_nodes()
            || self.n_layers != net.n_layers()
            || self.n_steps != net.n_steps()
        {
            return Err(Error::invalid(format!(
                "posterior shape (n={}, K={}, T={}) does not match network \
                 (n={}, K={}, T={})",
                self.n_nodes,
                self.n_layers,
                self.n_steps,
                net.n_nodes(),
                net.n_layers(),
                net.n_steps()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k, t, d) = (self.n_nodes, self.n_layers, self.n_steps, self.dim);
        if n < 2 || k == 0 || t == 0 || d == 0 {
            return Err(Error::invalid("posterior dimensions out of range"));
        }
        let tc = t.saturating_sub(1);
        if self.latent_mean.shape() != [n, t, d]
            || self.latent_cov.shape() != [n, t, d, d]
            || self.latent_cross.shape() != [n, tc, d, d]
            || self.social_mean.shape() != [k, n, t]
            || self.social_var.shape() != [k, n, t]
            || self.social_cross.shape() != [k, n, tc]
            || self.homophily_mean.shape() != [k, d]
            || self.homophily_cov.shape() != [k, d, d]
            || self.ref_prob.len() != d
            || self.omega_mean.len() != k * t * crate::net::pair_count(n)
        {
            return Err(Error::invalid("posterior field shapes are inconsistent"));
        }
        self.ig_latent.validate()?;
        self.ig_social.validate()?;
        if self.ref_prob.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::invalid("reference probabilities must lie in (0, 1)"));
        }
        if self.omega_mean.iter().any(|&w| !(0.0..=0.25).contains(&w)) {
            return Err(Error::invalid("Polya-gamma means must lie in [0, 1/4]"));
        }
        Ok(())
    }

    /// Second moment matrix `cov + mean mean^T` of a homophily factor.
    pub(crate) fn homophily_second_moment(&self, k: usize) -> Array2<f64> {
        let d = self.dim;
        let mut m = self.homophily_cov.index_axis(ndarray::Axis(0), k).to_owned();
        for g in 0..d {
            for h in 0..d {
                m[(g, h)] += self.homophily_mean[(k, g)] * self.homophily_mean[(k, h)];
            }
        }
        m
    }

    pub fn to_json(&self) -> String {
        let doc = PosteriorDoc {
            format: POSTERIOR_FORMAT.to_string(),
            fields: serde_json::to_value(self).expect("posterior serializes"),
        };
        serde_json::to_string(&doc).expect("posterior serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PosteriorDoc = serde_json::from_str(text)?;
        if doc.format != POSTERIOR_FORMAT {
            return Err(Error::invalid(format!(
                "unsupported posterior format tag {:?} (expected {POSTERIOR_FORMAT:?})",
                doc.format
            )));
        }
        let post: VariationalPosterior = serde_json::from_value(doc.fields)?;
        post.validate()?;
        Ok(post)
    }
}

/// Builds the starting posterior: social means from per-slice two-way
/// logistic fits (unit variances), standard-normal latent means with identity
/// covariances, reference homophily pinned at +1, broad Gaussians on the
/// other layers, Polya-gamma means at zero, and inverse-gamma factors at
/// their priors.
pub fn initialize(
    net: &DynamicNetwork,
    dim: usize,
    priors: &Priors,
    seed: u64,
) -> Result<VariationalPosterior> {
    priors.validate()?;
    if dim == 0 {
        return Err(Error::invalid("latent dimension must be at least 1"));
    }
    let (n, k_len, t_len) = (net.n_nodes(), net.n_layers(), net.n_steps());
    let tc = t_len.saturating_sub(1);

    let mut social_mean = Array3::<f64>::zeros((k_len, n, t_len));
    for k in 0..k_len {
        for t in 0..t_len {
            let delta = two_way_logistic(net.slice_values(k, t), net.slice_observed(k, t), n)?;
            for (i, &v) in delta.iter().enumerate() {
                social_mean[(k, i, t)] = v;
            }
        }
    }

    let mut latent_mean = Array3::<f64>::zeros((n, t_len, dim));
    {
        let mut r = rng::stream(seed, &[0x494c]);
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        for v in latent_mean.iter_mut() {
            *v = std_normal.sample(&mut r);
        }
    }
    let mut latent_cov = Array4::<f64>::zeros((n, t_len, dim, dim));
    let mut latent_cross = Array4::<f64>::zeros((n, tc, dim, dim));
    for i in 0..n {
        for t in 0..t_len {
            for h in 0..dim {
                latent_cov[(i, t, h, h)] = 1.0;
            }
        }
        for t in 0..tc {
            for h in 0..dim {
                latent_cross[(i, t, h, h)] = 1.0;
            }
        }
    }

    let mut homophily_mean = Array2::<f64>::zeros((k_len, dim));
    let mut homophily_cov = Array3::<f64>::zeros((k_len, dim, dim));
    for h in 0..dim {
        homophily_mean[(0, h)] = 1.0;
        // Bernoulli second moment is 1, so the variance is 1 - mean^2 = 0.
    }
    {
        let mut r = rng::stream(seed, &[0x4948]);
        let broad = Normal::new(0.0, 2.0).expect("valid normal");
        for k in 1..k_len {
            for h in 0..dim {
                homophily_mean[(k, h)] = broad.sample(&mut r);
                homophily_cov[(k, h, h)] = 10.0;
            }
        }
    }

    let post = VariationalPosterior {
        n_nodes: n,
        n_layers: k_len,
        n_steps: t_len,
        dim,
        latent_mean,
        latent_cov,
        latent_cross,
        social_mean,
        social_var: Array3::ones((k_len, n, t_len)),
        social_cross: Array3::ones((k_len, n, tc)),
        homophily_mean,
        homophily_cov,
        ref_prob: Array1::from_elem(dim, 0.5),
        omega_mean: vec![0.0; k_len * t_len * crate::net::pair_count(n)],
        ig_latent: IgPosterior {
            init_shape: priors.latent_init_shape,
            init_scale: priors.latent_init_scale,
            step_shape: priors.latent_step_shape,
            step_scale: priors.latent_step_scale,
        },
        ig_social: IgPosterior {
            init_shape: priors.social_init_shape,
            init_scale: priors.social_init_scale,
            step_shape: priors.social_step_shape,
            step_scale: priors.social_step_scale,
        },
    };
    Ok(post)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate_state;
    use crate::model::simulate_network;

    #[test]
    fn initialization_matches_documented_scheme() {
        let state = simulate_state(8, 2, 3, 2, 3).unwrap();
        let net = simulate_network(&state, 4).unwrap();
        let priors = Priors::default();
        let post = initialize(&net, 2, &priors, 9).unwrap();

        assert!(post.social_var.iter().all(|&v| v == 1.0));
        assert!(post.social_cross.iter().all(|&v| v == 1.0));
        assert!(post.omega_mean.iter().all(|&v| v == 0.0));
        assert!(post.ref_prob.iter().all(|&p| p == 0.5));
        for h in 0..2 {
            assert_eq!(post.homophily_mean[(0, h)], 1.0);
            assert_eq!(post.homophily_cov[(0, h, h)], 0.0);
        }
        for k in 1..2 {
            for h in 0..2 {
                assert_eq!(post.homophily_cov[(k, h, h)], 10.0);
            }
        }
        assert_eq!(post.ig_latent.init_shape, priors.latent_init_shape);
        assert_eq!(post.ig_social.step_scale, priors.social_step_scale);
        // Latent covariances are the identity.
        assert_eq!(post.latent_cov[(3, 1, 0, 0)], 1.0);
        assert_eq!(post.latent_cov[(3, 1, 0, 1)], 0.0);

        // Deterministic in the seed.
        let again = initialize(&net, 2, &priors, 9).unwrap();
        assert_eq!(post, again);
        let other = initialize(&net, 2, &priors, 10).unwrap();
        assert_ne!(post, other);
    }

    #[test]
    fn posterior_json_round_trip() {
        let state = simulate_state(5, 2, 2, 2, 1).unwrap();
        let net = simulate_network(&state, 2).unwrap();
        let post = initialize(&net, 2, &Priors::default(), 7).unwrap();
        let back = VariationalPosterior::from_json(&post.to_json()).unwrap();
        assert_eq!(post, back);
        assert!(VariationalPosterior::from_json("{\"format\":\"nope\"}").is_err());
    }
}
