//! Variational Kalman filter and smoother for a Gaussian random-walk state
//! space model expressed through expected natural parameters.
//!
//! The target distribution over a trajectory `x_{1:T}` is
//!
//! ```text
//! log q(x_{1:T}) = -(p_init/2) |x_1|^2 - (p_step/2) sum_t |x_t - x_{t-1}|^2
//!                  + sum_t [ obs_lin[t] . x_t - (1/2) x_t' obs_prec[t] x_t ]
//! ```
//!
//! i.e. an identity-transition random walk whose per-step observation
//! evidence arrives already reduced to information form (a linear term and a
//! PSD quadratic term). The recursions are expressed directly on these
//! quantities, so no observation matrices are ever materialized. Backward
//! messages are carried in information form `(Psi^-1, Psi^-1 eta)` so the
//! vacuous message at the last step is representable exactly.
//!
//! One invocation covers one trajectory; calls are pure and may run
//! concurrently on independent inputs.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, VARIANCE_FLOOR};

/// Expected natural parameters of one trajectory's state space model.
#[derive(Debug, Clone)]
pub struct GssmInput {
    /// First-order observation evidence, shape `(T, d)`.
    pub obs_lin: Array2<f64>,
    /// Quadratic observation evidence (symmetric PSD), shape `(T, d, d)`.
    pub obs_prec: Array3<f64>,
    /// Expected precision of the initial state.
    pub prec_init: f64,
    /// Expected precision of the random-walk step.
    pub prec_step: f64,
}

impl GssmInput {
    pub fn n_steps(&self) -> usize {
        self.obs_lin.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.obs_lin.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let (t, d) = (self.n_steps(), self.dim());
        if t == 0 || d == 0 {
            return Err(Error::invalid("state space needs T >= 1 and d >= 1"));
        }
        if self.obs_prec.shape() != [t, d, d] {
            return Err(Error::invalid("obs_prec shape inconsistent with obs_lin"));
        }
        if !(self.prec_init > 0.0) || !(self.prec_step > 0.0) {
            return Err(Error::invalid("precisions must be strictly positive"));
        }
        Ok(())
    }
}

/// Forward-pass output: filtered moments plus the one-step predictive
/// covariances needed by the smoother.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// Filtered means, shape `(T, d)`.
    pub mean: Array2<f64>,
    /// Filtered covariances, shape `(T, d, d)`.
    pub cov: Array3<f64>,
    /// Predictive covariances `(prec_step I + cov[t]^-1)^-1`, shape `(T-1, d, d)`.
    pub predict_cov: Array3<f64>,
    /// Diagonal clamps applied during inversions.
    pub clamp_events: u64,
}

/// Smoothed marginal moments and adjacent cross-covariances.
#[derive(Debug, Clone)]
pub struct SmoothedMarginals {
    /// Smoothed means, shape `(T, d)`.
    pub mean: Array2<f64>,
    /// Smoothed covariances, shape `(T, d, d)`.
    pub cov: Array3<f64>,
    /// `Cov(x_t, x_{t+1})`, shape `(T-1, d, d)`.
    pub cross_cov: Array3<f64>,
    /// Diagonal clamps applied during inversions.
    pub clamp_events: u64,
}

fn add_scaled_identity(m: &mut Array2<f64>, s: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += s;
    }
}

/// Forward filtering recursion on expected natural parameters.
pub fn kalman_filter(input: &GssmInput) -> Result<FilterOutput> {
    input.validate()?;
    let (t_len, d) = (input.n_steps(), input.dim());
    let s = input.prec_step;
    let mut clamps = 0u64;

    let mut mean = Array2::<f64>::zeros((t_len, d));
    let mut cov = Array3::<f64>::zeros((t_len, d, d));
    let mut predict_cov = Array3::<f64>::zeros((t_len.saturating_sub(1), d, d));

    // Initial step: information prec_init I plus the first evidence block.
    let mut info = input.obs_prec.index_axis(ndarray::Axis(0), 0).to_owned();
    add_scaled_identity(&mut info, input.prec_init);
    let c0 = spd_inverse(&info.view(), VARIANCE_FLOOR, &mut clamps)?;
    let m0 = c0.dot(&input.obs_lin.row(0));
    cov.index_axis_mut(ndarray::Axis(0), 0).assign(&c0);
    mean.row_mut(0).assign(&m0);

    for t in 1..t_len {
        let prev_cov = cov.index_axis(ndarray::Axis(0), t - 1).to_owned();
        let prev_prec = spd_inverse(&prev_cov.view(), VARIANCE_FLOOR, &mut clamps)?;
        // Predictive covariance (prec_step I + prev_prec)^-1.
        let mut pred_info = prev_prec.clone();
        add_scaled_identity(&mut pred_info, s);
        let pred = spd_inverse(&pred_info.view(), VARIANCE_FLOOR, &mut clamps)?;
        predict_cov.index_axis_mut(ndarray::Axis(0), t - 1).assign(&pred);

        // Filtered covariance with the random-walk correction term.
        let mut info = input.obs_prec.index_axis(ndarray::Axis(0), t).to_owned();
        add_scaled_identity(&mut info, s);
        info.scaled_add(-s * s, &pred);
        let c = spd_inverse(&info.view(), VARIANCE_FLOOR, &mut clamps)?;

        let carried = pred.dot(&prev_prec.dot(&mean.row(t - 1)));
        let rhs: Array1<f64> = &input.obs_lin.row(t) + &(carried * s);
        let m = c.dot(&rhs);
        cov.index_axis_mut(ndarray::Axis(0), t).assign(&c);
        mean.row_mut(t).assign(&m);
    }

    Ok(FilterOutput { mean, cov, predict_cov, clamp_events: clamps })
}

/// Backward smoothing recursion: marginals and adjacent cross-covariances.
pub fn kalman_smoother(input: &GssmInput) -> Result<SmoothedMarginals> {
    let filt = kalman_filter(input)?;
    let (t_len, d) = (input.n_steps(), input.dim());
    let s = input.prec_step;
    let mut clamps = filt.clamp_events;

    let mut mean = Array2::<f64>::zeros((t_len, d));
    let mut cov = Array3::<f64>::zeros((t_len, d, d));
    let mut cross = Array3::<f64>::zeros((t_len.saturating_sub(1), d, d));

    mean.row_mut(t_len - 1).assign(&filt.mean.row(t_len - 1));
    cov.index_axis_mut(ndarray::Axis(0), t_len - 1)
        .assign(&filt.cov.index_axis(ndarray::Axis(0), t_len - 1));

    // Backward message in information form; vacuous at the last step.
    let mut back_prec = Array2::<f64>::zeros((d, d));
    let mut back_lin = Array1::<f64>::zeros(d);

    for t in (1..t_len).rev() {
        // Message through the evidence at t and the step (t-1 -> t).
        let mut msg_info = input.obs_prec.index_axis(ndarray::Axis(0), t).to_owned();
        msg_info += &back_prec;
        add_scaled_identity(&mut msg_info, s);
        let msg_cov = spd_inverse(&msg_info.view(), VARIANCE_FLOOR, &mut clamps)?;

        let lin: Array1<f64> = &input.obs_lin.row(t) + &back_lin;
        let smoothed_lin = msg_cov.dot(&lin) * s;
        let mut new_back_prec = msg_cov.clone() * (-s * s);
        add_scaled_identity(&mut new_back_prec, s);

        // Cross-covariance Cov(x_{t-1}, x_t) from the joint two-step block.
        let pred = filt.predict_cov.index_axis(ndarray::Axis(0), t - 1).to_owned();
        let mut schur = msg_info.clone();
        schur.scaled_add(-s * s, &pred);
        let schur_inv = spd_inverse(&schur.view(), VARIANCE_FLOOR, &mut clamps)?;
        cross
            .index_axis_mut(ndarray::Axis(0), t - 1)
            .assign(&(pred.dot(&schur_inv) * s));

        // Combine the filtered marginal at t-1 with the backward message.
        let filt_cov = filt.cov.index_axis(ndarray::Axis(0), t - 1).to_owned();
        let filt_prec = spd_inverse(&filt_cov.view(), VARIANCE_FLOOR, &mut clamps)?;
        let mut marg_info = filt_prec.clone();
        marg_info += &new_back_prec;
        let marg_cov = spd_inverse(&marg_info.view(), VARIANCE_FLOOR, &mut clamps)?;
        let marg_mean =
            marg_cov.dot(&(&filt_prec.dot(&filt.mean.row(t - 1)) + &smoothed_lin));
        cov.index_axis_mut(ndarray::Axis(0), t - 1).assign(&marg_cov);
        mean.row_mut(t - 1).assign(&marg_mean);

        back_prec = new_back_prec;
        back_lin = smoothed_lin;
    }

    Ok(SmoothedMarginals { mean, cov, cross_cov: cross, clamp_events: clamps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Axis};

    fn scalar_input(lin: &[f64], quad: &[f64], prec_init: f64, prec_step: f64) -> GssmInput {
        let t = lin.len();
        GssmInput {
            obs_lin: Array2::from_shape_vec((t, 1), lin.to_vec()).unwrap(),
            obs_prec: Array3::from_shape_vec((t, 1, 1), quad.to_vec()).unwrap(),
            prec_init,
            prec_step,
        }
    }

    #[test]
    fn one_step_closed_form() {
        let input = scalar_input(&[1.0], &[1.0], 1.0, 1.0);
        let filt = kalman_filter(&input).unwrap();
        assert_abs_diff_eq!(filt.cov[(0, 0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(filt.mean[(0, 0)], 0.5, epsilon = 1e-15);
        let smooth = kalman_smoother(&input).unwrap();
        assert_abs_diff_eq!(smooth.cov[(0, 0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(smooth.mean[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(smooth.cross_cov.shape()[0], 0);
    }

    #[test]
    fn zero_evidence_keeps_means_at_zero() {
        let input = scalar_input(&[0.0; 5], &[0.7, 0.1, 0.0, 2.0, 0.5], 0.8, 1.3);
        let filt = kalman_filter(&input).unwrap();
        assert!(filt.mean.iter().all(|&m| m == 0.0));
        let smooth = kalman_smoother(&input).unwrap();
        assert!(smooth.mean.iter().all(|&m| m == 0.0));
        // Random-walk correlation: adjacent cross-covariances are positive.
        for t in 0..4 {
            assert!(smooth.cross_cov[(t, 0, 0)] > 0.0);
        }
    }

    #[test]
    fn marginal_covariances_are_symmetric_positive() {
        let input = GssmInput {
            obs_lin: array![[0.3, -1.0], [0.0, 0.4], [2.0, 0.1]],
            obs_prec: Array3::from_shape_vec(
                (3, 2, 2),
                vec![1.0, 0.2, 0.2, 0.8, 0.5, 0.0, 0.0, 0.5, 2.0, -0.3, -0.3, 1.5],
            )
            .unwrap(),
            prec_init: 0.4,
            prec_step: 2.2,
        };
        let smooth = kalman_smoother(&input).unwrap();
        for t in 0..3 {
            let c = smooth.cov.index_axis(Axis(0), t);
            assert!((c[(0, 1)] - c[(1, 0)]).abs() <= 1e-12);
            // SPD check via Cholesky.
            assert!(crate::linalg::cholesky(&c).is_ok());
        }
        assert_eq!(smooth.clamp_events, 0);
    }

    #[test]
    fn stiffer_steps_flatten_the_smoothed_path() {
        let lin = [2.0, -1.0, 0.5, 3.0, -2.0, 0.0];
        let quad = [1.0; 6];
        let wobble = |prec_step: f64| -> f64 {
            let smooth = kalman_smoother(&scalar_input(&lin, &quad, 1.0, prec_step)).unwrap();
            (0..5)
                .map(|t| (smooth.mean[(t, 0)] - smooth.mean[(t + 1, 0)]).abs())
                .sum()
        };
        assert!(wobble(8.0) <= wobble(0.5) + 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let mut input = scalar_input(&[1.0], &[1.0], 1.0, 1.0);
        input.prec_init = 0.0;
        assert!(kalman_filter(&input).is_err());
        let mut input = scalar_input(&[1.0, 2.0], &[1.0, 1.0], 1.0, 1.0);
        input.obs_prec = Array3::zeros((1, 1, 1));
        assert!(kalman_filter(&input).is_err());
    }
}
