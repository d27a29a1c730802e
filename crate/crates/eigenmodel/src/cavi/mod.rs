//! Coordinate ascent variational inference for the eigenmodel.
//!
//! One sweep refreshes, in order: the Polya-gamma means, every social
//! trajectory (then the social variance factors), every latent trajectory
//! (then the latent variance factors), the reference homophily signs, and
//! the remaining homophily vectors. The expected log-likelihood is evaluated
//! after each full sweep and the run stops when its successive difference
//! drops below the tolerance (or the iteration cap is hit, which is reported
//! distinctly). The objective is non-convex, so several random restarts are
//! run and the one with the highest final monitor value wins.

mod init;
mod posterior;
mod updates;

pub use posterior::{initialize, IgPosterior, VariationalPosterior};
pub use updates::{
    expected_loglik, update_homophily, update_latent, update_omega, update_ref_homophily,
    update_social,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Priors;
use crate::net::DynamicNetwork;
use crate::rng;

/// Everything `fit` needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Latent space dimension.
    pub dim: usize,
    pub priors: Priors,
    /// Convergence threshold on successive expected log-likelihoods.
    pub tol: f64,
    /// Sweep cap per restart.
    pub max_iter: usize,
    /// Number of random restarts.
    pub n_restarts: usize,
    pub seed: u64,
    /// Run restarts on the rayon pool. The winner is identical either way;
    /// restart streams are derived from `seed` by restart index.
    pub parallel_restarts: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            dim: 2,
            priors: Priors::default(),
            tol: 1e-2,
            max_iter: 1000,
            n_restarts: 10,
            seed: 0,
            parallel_restarts: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        if self.dim == 0 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be strictly positive"));
        }
        if self.max_iter == 0 || self.n_restarts == 0 {
            return Err(Error::invalid("max_iter and n_restarts must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of the winning restart.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub posterior: VariationalPosterior,
    /// Expected log-likelihood after each sweep.
    pub trace: Vec<f64>,
    /// Index of the selected restart.
    pub restart: usize,
    /// False when the sweep cap was reached before the tolerance.
    pub converged: bool,
    /// Count of variance-floor clamps applied across the winning run.
    pub clamp_events: u64,
}

struct RestartRun {
    posterior: VariationalPosterior,
    trace: Vec<f64>,
    converged: bool,
    clamp_events: u64,
}

fn run_restart(net: &DynamicNetwork, config: &FitConfig, restart: usize) -> Result<RestartRun> {
    let seed = rng::substream(config.seed, &[0x5245, restart as u64]);
    let mut post = posterior::initialize(net, config.dim, &config.priors, seed)?;
    let mut trace = Vec::new();
    let mut clamps = 0u64;
    let mut converged = false;

    for _ in 0..config.max_iter {
        updates::update_omega(&mut post, net)?;
        clamps += updates::update_social(&mut post, net, &config.priors)?;
        clamps += updates::update_latent(&mut post, net, &config.priors)?;
        updates::update_ref_homophily(&mut post, net, config.priors.rho)?;
        clamps += updates::update_homophily(&mut post, net, config.priors.sigma2_lambda)?;
        let value = updates::expected_loglik(&post, net)?;
        if !value.is_finite() {
            return Err(Error::numerical(format!(
                "expected log-likelihood became {value} in restart {restart}"
            )));
        }
        let done = trace.last().is_some_and(|prev: &f64| (value - prev).abs() < config.tol);
        trace.push(value);
        if done {
            converged = true;
            break;
        }
    }
    Ok(RestartRun { posterior: post, trace, converged, clamp_events: clamps })
}

/// Fits the model with multiple restarts and returns the restart with the
/// highest final expected log-likelihood (ties broken by lowest index).
/// A restart that fails numerically is dropped; fitting fails only when
/// every restart does.
pub fn fit(net: &DynamicNetwork, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if net.observed_count() == 0 {
        return Err(Error::invalid("network has no observed dyads"));
    }

    let outcomes: Vec<(usize, Result<RestartRun>)> = if config.parallel_restarts {
        (0..config.n_restarts)
            .into_par_iter()
            .map(|r| (r, run_restart(net, config, r)))
            .collect()
    } else {
        (0..config.n_restarts).map(|r| (r, run_restart(net, config, r))).collect()
    };

    let mut best: Option<(usize, RestartRun)> = None;
    let mut first_error: Option<Error> = None;
    for (idx, outcome) in outcomes {
        match outcome {
            Ok(run) => {
                let score = *run.trace.last().expect("at least one sweep ran");
                let better = match &best {
                    None => true,
                    Some((_, incumbent)) => {
                        score > *incumbent.trace.last().expect("non-empty trace")
                    }
                };
                if better {
                    best = Some((idx, run));
                }
            }
            Err(err) => {
                if first_error.is_none() {
                    first_error = Some(err);
                }
            }
        }
    }

    match best {
        Some((restart, run)) => Ok(FitResult {
            posterior: run.posterior,
            trace: run.trace,
            restart,
            converged: run.converged,
            clamp_events: run.clamp_events,
        }),
        None => Err(Error::numerical(format!(
            "all {} restarts failed; first error: {}",
            config.n_restarts,
            first_error.map(|e| e.to_string()).unwrap_or_else(|| "unknown".into())
        ))),
    }
}
