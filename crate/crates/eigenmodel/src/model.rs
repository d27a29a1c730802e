//! The generative eigenmodel: latent parameters, log-odds, dyad
//! probabilities, and the synthetic-data protocol used in the simulation
//! studies.
//!
//! A network's log-odds decompose as
//!
//! ```text
//! logit P(Y[k,t,i,j] = 1) = social[k,t,i] + social[k,t,j]
//!                           + latent[t,i] . diag(homophily[k]) . latent[t,j]
//! ```
//!
//! with layer-and-node sociality effects, a shared time-varying latent space,
//! and per-layer diagonal homophily coefficients. Layer 0 is the reference
//! layer whose coefficients are constrained to +-1.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::DynamicNetwork;
use crate::rng;

/// Numerically stable inverse logit.
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One concrete realization of all model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    /// Sociality effects, shape `(K, T, n)`.
    pub social: Array3<f64>,
    /// Latent trajectories, shape `(T, n, d)`.
    pub latent: Array3<f64>,
    /// Homophily diagonals, shape `(K, d)`; row 0 is the reference layer.
    pub homophily: Array2<f64>,
}

/// Versioned on-disk wrapper for [`LatentState`].
#[derive(Serialize, Deserialize)]
struct LatentStateDoc {
    format: String,
    n_nodes: usize,
    n_layers: usize,
    n_steps: usize,
    dim: usize,
    social: Array3<f64>,
    latent: Array3<f64>,
    homophily: Array2<f64>,
}

const STATE_FORMAT: &str = "eigenmodel.state.v1";

impl LatentState {
    pub fn new(social: Array3<f64>, latent: Array3<f64>, homophily: Array2<f64>) -> Result<Self> {
        let state = LatentState { social, latent, homophily };
        state.validate()?;
        Ok(state)
    }

    pub fn n_layers(&self) -> usize {
        self.social.shape()[0]
    }

    pub fn n_steps(&self) -> usize {
        self.social.shape()[1]
    }

    pub fn n_nodes(&self) -> usize {
        self.social.shape()[2]
    }

    pub fn dim(&self) -> usize {
        self.latent.shape()[2]
    }

    /// Total number of free parameters: `nTK + nTd + Kd`.
    pub fn param_count(&self) -> usize {
        let (n, k, t, d) = (self.n_nodes(), self.n_layers(), self.n_steps(), self.dim());
        n * t * k + n * t * d + k * d
    }

    pub fn validate(&self) -> Result<()> {
        let (k, t, n) = {
            let s = self.social.shape();
            (s[0], s[1], s[2])
        };
        let ls = self.latent.shape();
        if ls[0] != t || ls[1] != n {
            return Err(Error::invalid(format!(
                "latent shape ({}, {}, {}) inconsistent with social shape ({k}, {t}, {n})",
                ls[0], ls[1], ls[2]
            )));
        }
        let hs = self.homophily.shape();
        if hs[0] != k || hs[1] != ls[2] {
            return Err(Error::invalid("homophily shape inconsistent with social/latent"));
        }
        if n < 2 || k == 0 || t == 0 || ls[2] == 0 {
            return Err(Error::invalid("state dimensions must satisfy n >= 2, K, T, d >= 1"));
        }
        for v in self.social.iter().chain(self.latent.iter()).chain(self.homophily.iter()) {
            if !v.is_finite() {
                return Err(Error::invalid("state contains a non-finite entry"));
            }
        }
        for h in 0..hs[1] {
            let v = self.homophily[(0, h)];
            if v != 1.0 && v != -1.0 {
                return Err(Error::invalid(format!(
                    "reference-layer homophily must be +-1, got {v} at dimension {h}"
                )));
            }
        }
        Ok(())
    }

    fn check_dyad(&self, k: usize, t: usize, i: usize, j: usize) -> Result<()> {
        if k >= self.n_layers() || t >= self.n_steps() || i >= self.n_nodes() || j >= self.n_nodes()
        {
            return Err(Error::invalid(format!(
                "index (k={k}, t={t}, i={i}, j={j}) out of range"
            )));
        }
        if i == j {
            return Err(Error::invalid("log-odds undefined for self-loops"));
        }
        Ok(())
    }

    /// Connection log-odds of dyad `(i, j)` in layer `k` at step `t`.
    pub fn log_odds(&self, k: usize, t: usize, i: usize, j: usize) -> Result<f64> {
        self.check_dyad(k, t, i, j)?;
        let mut bilinear = 0.0;
        for h in 0..self.dim() {
            bilinear += self.latent[(t, i, h)] * self.homophily[(k, h)] * self.latent[(t, j, h)];
        }
        Ok(self.social[(k, t, i)] + self.social[(k, t, j)] + bilinear)
    }

    /// Connection probability of dyad `(i, j)` in layer `k` at step `t`.
    pub fn dyad_probability(&self, k: usize, t: usize, i: usize, j: usize) -> Result<f64> {
        Ok(logistic(self.log_odds(k, t, i, j)?))
    }

    /// Per-step latent means `c_t`, shape `(T, d)`.
    fn latent_means(&self) -> Array2<f64> {
        let (t_len, n, d) = {
            let s = self.latent.shape();
            (s[0], s[1], s[2])
        };
        let mut c = Array2::<f64>::zeros((t_len, d));
        for t in 0..t_len {
            for i in 0..n {
                for h in 0..d {
                    c[(t, h)] += self.latent[(t, i, h)];
                }
            }
            for h in 0..d {
                c[(t, h)] /= n as f64;
            }
        }
        c
    }

    /// The identified parameterization: latent positions centered per step,
    /// socialities absorbing the translation so every log-odds is unchanged.
    pub fn center(&self) -> LatentState {
        let (k_len, t_len, n) = {
            let s = self.social.shape();
            (s[0], s[1], s[2])
        };
        let d = self.dim();
        let c = self.latent_means();
        let mut latent = self.latent.clone();
        for t in 0..t_len {
            for i in 0..n {
                for h in 0..d {
                    latent[(t, i, h)] -= c[(t, h)];
                }
            }
        }
        let mut social = self.social.clone();
        for k in 0..k_len {
            for t in 0..t_len {
                let mut quad = 0.0;
                for h in 0..d {
                    quad += c[(t, h)] * self.homophily[(k, h)] * c[(t, h)];
                }
                for i in 0..n {
                    let mut cross = 0.0;
                    for h in 0..d {
                        cross += latent[(t, i, h)] * self.homophily[(k, h)] * c[(t, h)];
                    }
                    social[(k, t, i)] += cross + 0.5 * quad;
                }
            }
        }
        LatentState { social, latent, homophily: self.homophily.clone() }
    }

    pub fn to_json(&self) -> String {
        let doc = LatentStateDoc {
            format: STATE_FORMAT.to_string(),
            n_nodes: self.n_nodes(),
            n_layers: self.n_layers(),
            n_steps: self.n_steps(),
            dim: self.dim(),
            social: self.social.clone(),
            latent: self.latent.clone(),
            homophily: self.homophily.clone(),
        };
        serde_json::to_string(&doc).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LatentStateDoc = serde_json::from_str(text)?;
        if doc.format != STATE_FORMAT {
            return Err(Error::invalid(format!(
                "unsupported state format tag {:?} (expected {STATE_FORMAT:?})",
                doc.format
            )));
        }
        LatentState::new(doc.social, doc.latent, doc.homophily)
    }
}

/// Fixed hyperparameters of the model's priors.
///
/// Inverse-gamma factors are parameterized as `IG(shape/2, scale/2)`, so the
/// stored shape/scale pairs update by integer counts during inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    /// `(shape, scale)` of the latent initial-variance prior.
    pub latent_init_shape: f64,
    pub latent_init_scale: f64,
    /// `(shape, scale)` of the latent step-variance prior.
    pub latent_step_shape: f64,
    pub latent_step_scale: f64,
    /// `(shape, scale)` of the sociality initial-variance prior.
    pub social_init_shape: f64,
    pub social_init_scale: f64,
    /// `(shape, scale)` of the sociality step-variance prior.
    pub social_step_shape: f64,
    pub social_step_scale: f64,
    /// Prior probability of an assortative reference dimension.
    pub rho: f64,
    /// Prior variance of non-reference homophily coefficients.
    pub sigma2_lambda: f64,
}

impl Priors {
    /// Shape/scale of a flat inverse-gamma prior with the given expectation:
    /// `shape = 2(2 + eps)`, `scale = 2(1 + eps) * expected`.
    pub fn flat_inverse_gamma(eps: f64, expected: f64) -> (f64, f64) {
        (2.0 * (2.0 + eps), 2.0 * (1.0 + eps) * expected)
    }

    pub fn validate(&self) -> Result<()> {
        let positives = [
            self.latent_init_shape,
            self.latent_init_scale,
            self.latent_step_shape,
            self.latent_step_scale,
            self.social_init_shape,
            self.social_init_scale,
            self.social_step_shape,
            self.social_step_scale,
            self.sigma2_lambda,
        ];
        if positives.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("all prior shapes/scales must be strictly positive"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must be in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }
}

impl Default for Priors {
    /// Broad defaults: flat priors with expectation 10 on both initial
    /// variances (eps = 0.05), shape/scale 2 on both step variances,
    /// rho = 1/2, and homophily prior variance 10.
    fn default() -> Self {
        let (init_shape, init_scale) = Priors::flat_inverse_gamma(0.05, 10.0);
        Priors {
            latent_init_shape: init_shape,
            latent_init_scale: init_scale,
            latent_step_shape: 2.0,
            latent_step_scale: 2.0,
            social_init_shape: init_shape,
            social_init_scale: init_scale,
            social_step_shape: 2.0,
            social_step_scale: 2.0,
            rho: 0.5,
            sigma2_lambda: 10.0,
        }
    }
}

/// Draws a ground-truth state following the synthetic-data protocol:
/// reference homophily uniform on {-1, +1}; other layers uniform on
/// `[-2, 2]^d`; socialities start uniform on `[-4, 4]` and follow a
/// variance-0.1 random walk; latent positions start `N(0, 4 I)`, follow a
/// variance-0.05 random walk, and are centered per step.
pub fn simulate_state(n: usize, k: usize, t: usize, d: usize, seed: u64) -> Result<LatentState> {
    if n < 2 || k == 0 || t == 0 || d == 0 {
        return Err(Error::invalid(format!(
            "simulation needs n >= 2, K >= 1, T >= 1, d >= 1 (got n={n}, K={k}, T={t}, d={d})"
        )));
    }
    let mut homophily = Array2::<f64>::zeros((k, d));
    {
        let mut r = rng::stream(seed, &[0x5331]);
        for h in 0..d {
            homophily[(0, h)] = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    {
        let mut r = rng::stream(seed, &[0x5332]);
        for layer in 1..k {
            for h in 0..d {
                homophily[(layer, h)] = r.random_range(-2.0..=2.0);
            }
        }
    }

    let mut social = Array3::<f64>::zeros((k, t, n));
    {
        let mut r = rng::stream(seed, &[0x5333]);
        for layer in 0..k {
            for i in 0..n {
                social[(layer, 0, i)] = r.random_range(-4.0..=4.0);
            }
        }
    }
    {
        let mut r = rng::stream(seed, &[0x5334]);
        let step = Normal::new(0.0, 0.1f64.sqrt()).expect("valid normal");
        for step_t in 1..t {
            for layer in 0..k {
                for i in 0..n {
                    social[(layer, step_t, i)] =
                        social[(layer, step_t - 1, i)] + step.sample(&mut r);
                }
            }
        }
    }

    let mut latent = Array3::<f64>::zeros((t, n, d));
    {
        let mut r = rng::stream(seed, &[0x5335]);
        let init = Normal::new(0.0, 2.0).expect("valid normal");
        for i in 0..n {
            for h in 0..d {
                latent[(0, i, h)] = init.sample(&mut r);
            }
        }
    }
    {
        let mut r = rng::stream(seed, &[0x5336]);
        let step = Normal::new(0.0, 0.05f64.sqrt()).expect("valid normal");
        for step_t in 1..t {
            for i in 0..n {
                for h in 0..d {
                    latent[(step_t, i, h)] = latent[(step_t - 1, i, h)] + step.sample(&mut r);
                }
            }
        }
    }
    // Center the latent space per time step.
    for step_t in 0..t {
        let mut mean = Array1::<f64>::zeros(d);
        for i in 0..n {
            for h in 0..d {
                mean[h] += latent[(step_t, i, h)];
            }
        }
        mean.mapv_inplace(|v| v / n as f64);
        for i in 0..n {
            for h in 0..d {
                latent[(step_t, i, h)] -= mean[h];
            }
        }
    }

    LatentState::new(social, latent, homophily)
}

/// Samples one fully observed network from a state's dyad probabilities.
pub fn simulate_network(state: &LatentState, seed: u64) -> Result<DynamicNetwork> {
    state.validate()?;
    let (n, k_len, t_len) = (state.n_nodes(), state.n_layers(), state.n_steps());
    let mut net = DynamicNetwork::empty(n, k_len, t_len)?;
    for k in 0..k_len {
        for t in 0..t_len {
            let mut r = rng::stream(seed, &[0x4e45, k as u64, t as u64]);
            for i in 1..n {
                for j in 0..i {
                    let p = state.dyad_probability(k, t, i, j)?;
                    if r.random_bool(p) {
                        net.set_value(k, t, i, j, 1)?;
                    }
                }
            }
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn small_state() -> LatentState {
        // n=2, K=1, T=1, d=2.
        LatentState::new(
            Array3::zeros((1, 1, 2)),
            Array3::zeros((1, 2, 2)),
            array![[1.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn log_odds_zero_state() {
        let s = small_state();
        assert_eq!(s.log_odds(0, 0, 0, 1).unwrap(), 0.0);
        assert_eq!(s.dyad_probability(0, 0, 0, 1).unwrap(), 0.5);
    }

    #[test]
    fn log_odds_direct_arithmetic() {
        let mut s = small_state();
        s.social[(0, 0, 0)] = 1.0;
        s.social[(0, 0, 1)] = 0.5;
        s.latent[(0, 0, 0)] = 1.0;
        s.latent[(0, 1, 0)] = 1.0;
        assert_abs_diff_eq!(s.log_odds(0, 0, 0, 1).unwrap(), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            s.log_odds(0, 0, 0, 1).unwrap(),
            s.log_odds(0, 0, 1, 0).unwrap(),
            epsilon = 0.0
        );
    }

    #[test]
    fn heterophilic_cancellation() {
        let mut s = small_state();
        s.homophily = array![[1.0, -1.0]];
        for i in 0..2 {
            s.latent[(0, i, 0)] = 1.0;
            s.latent[(0, i, 1)] = 1.0;
        }
        assert_abs_diff_eq!(s.log_odds(0, 0, 0, 1).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dyad_probability_derived_value() {
        let mut s = small_state();
        s.social[(0, 0, 0)] = 1.0;
        s.social[(0, 0, 1)] = 1.0;
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert_abs_diff_eq!(s.dyad_probability(0, 0, 0, 1).unwrap(), expected, epsilon = 1e-14);
        // Monotone increasing toward 1 in the limit.
        s.social[(0, 0, 0)] = 400.0;
        assert_eq!(s.dyad_probability(0, 0, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn invalid_indices_error() {
        let s = small_state();
        assert!(s.log_odds(0, 0, 0, 0).is_err());
        assert!(s.log_odds(1, 0, 0, 1).is_err());
        assert!(s.log_odds(0, 1, 0, 1).is_err());
        assert!(s.log_odds(0, 0, 2, 1).is_err());
    }

    #[test]
    fn simulated_state_honors_protocol() {
        let s = simulate_state(20, 3, 5, 2, 42).unwrap();
        for h in 0..2 {
            let v = s.homophily[(0, h)];
            assert!(v == 1.0 || v == -1.0);
        }
        for k in 1..3 {
            for h in 0..2 {
                assert!(s.homophily[(k, h)].abs() <= 2.0);
            }
        }
        for t in 0..5 {
            for h in 0..2 {
                let mean: f64 = (0..20).map(|i| s.latent[(t, i, h)]).sum::<f64>() / 20.0;
                assert!(mean.abs() < 1e-12);
            }
        }
        for k in 0..3 {
            for i in 0..20 {
                assert!(s.social[(k, 0, i)].abs() <= 4.0);
            }
        }
        assert_eq!(s, simulate_state(20, 3, 5, 2, 42).unwrap());
        assert_ne!(s, simulate_state(20, 3, 5, 2, 43).unwrap());
        assert_eq!(s.param_count(), 20 * 5 * 3 + 20 * 5 * 2 + 3 * 2);
    }

    #[test]
    fn simulate_state_rejects_bad_sizes() {
        assert!(simulate_state(1, 1, 1, 1, 0).is_err());
        assert!(simulate_state(2, 0, 1, 1, 0).is_err());
        assert!(simulate_state(2, 1, 0, 1, 0).is_err());
        assert!(simulate_state(2, 1, 1, 0, 0).is_err());
    }

    #[test]
    fn extreme_log_odds_give_empty_and_complete_networks() {
        let mut s = simulate_state(6, 2, 2, 2, 1).unwrap();
        s.social.fill(-25.0);
        let empty = simulate_network(&s, 5).unwrap();
        assert_eq!(empty.edge_count(), 0);
        s.social.fill(25.0);
        let complete = simulate_network(&s, 5).unwrap();
        assert_eq!(complete.edge_count(), 2 * 2 * 15);
    }

    #[test]
    fn neutral_state_density_is_binomial() {
        let s = LatentState::new(
            Array3::zeros((1, 1, 100)),
            Array3::zeros((1, 100, 2)),
            array![[1.0, 1.0]],
        )
        .unwrap();
        let net = simulate_network(&s, 99).unwrap();
        let pairs = 100 * 99 / 2;
        let density = net.edge_count() as f64 / pairs as f64;
        let se = (0.25 / pairs as f64).sqrt();
        assert!((density - 0.5).abs() <= 3.0 * se, "density {density}");
    }

    #[test]
    fn simulate_network_is_deterministic() {
        let s = simulate_state(12, 2, 3, 2, 7).unwrap();
        assert_eq!(simulate_network(&s, 3).unwrap(), simulate_network(&s, 3).unwrap());
        assert_ne!(simulate_network(&s, 3).unwrap(), simulate_network(&s, 4).unwrap());
    }

    #[test]
    fn centering_hand_example() {
        // n=2: X1=(2,0), X2=(0,0), lambda=(1,1), delta=0.
        let s = LatentState::new(
            Array3::zeros((1, 1, 2)),
            array![[[2.0, 0.0], [0.0, 0.0]]],
            array![[1.0, 1.0]],
        )
        .unwrap();
        let c = s.center();
        assert_abs_diff_eq!(c.latent[(0, 0, 0)], 1.0);
        assert_abs_diff_eq!(c.latent[(0, 1, 0)], -1.0);
        assert_abs_diff_eq!(c.social[(0, 0, 0)], 1.5);
        assert_abs_diff_eq!(c.social[(0, 0, 1)], -0.5);
    }

    #[test]
    fn centering_preserves_log_odds_and_is_idempotent() {
        let s = simulate_state(15, 3, 4, 2, 11).unwrap();
        // Perturb away from centered to make the transform non-trivial.
        let mut s = s;
        for t in 0..4 {
            for i in 0..15 {
                s.latent[(t, i, 0)] += 0.7;
                s.latent[(t, i, 1)] -= 1.3;
            }
        }
        let c = s.center();
        for k in 0..3 {
            for t in 0..4 {
                for i in 1..15 {
                    for j in 0..i {
                        let before = s.log_odds(k, t, i, j).unwrap();
                        let after = c.log_odds(k, t, i, j).unwrap();
                        assert!((before - after).abs() <= 1e-10);
                    }
                }
            }
        }
        let cc = c.center();
        for (a, b) in c.social.iter().zip(cc.social.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in c.latent.iter().zip(cc.latent.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn state_json_round_trip() {
        let s = simulate_state(8, 2, 3, 2, 5).unwrap();
        let text = s.to_json();
        let back = LatentState::from_json(&text).unwrap();
        assert_eq!(s, back);
        assert!(LatentState::from_json("{\"format\":\"other\"}").is_err());
    }

    #[test]
    fn priors_validate() {
        let p = Priors::default();
        p.validate().unwrap();
        assert_abs_diff_eq!(p.latent_init_shape, 4.1);
        assert_abs_diff_eq!(p.latent_init_scale, 21.0);
        assert_abs_diff_eq!(p.social_step_shape, 2.0);
        let mut bad = p;
        bad.rho = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = p;
        bad.latent_init_scale = 0.0;
        assert!(bad.validate().is_err());
    }
}
