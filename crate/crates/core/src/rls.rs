//! Layer-wise recursive-least-squares optimizer.
//!
//! Every parameter matrix owns an inverse autocorrelation matrix `P` over its
//! augmented input. One step is
//!
//! ```text
//! x̄  = average augmented input of the minibatch
//! u  = P x̄,   h = λ + k_eff · x̄ᵀu
//! Θ ← Θ − (η/h) · P · ∇̃_Θ          (pre-update P)
//! P ← (P − (k_eff/h) · u uᵀ) / λ
//! ```
//!
//! with `k_eff = k · count_factor`.

use log::warn;

use crate::error::{Error, Result};
use crate::layers::{mean_of_rows, AugmentedParams};
use crate::linalg::{rank1_inverse_update_in_place, Matrix, Vector};
use crate::network::{ForwardCache, Network, ParamRole};

/// Parameter steps are skipped when `h` falls below this.
pub const H_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsHyperparams {
    /// Forgetting factor in `(0, 1]`.
    pub lambda: f64,
    /// Ratio factor.
    pub k: f64,
    /// Gradient scaling factor.
    pub eta: f64,
    /// L1 regularization factor.
    pub gamma: f64,
    /// Momentum factor in `[0, 1)`.
    pub alpha: f64,
}

impl Default for RlsHyperparams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            k: 0.1,
            eta: 1.0,
            gamma: 0.0,
            alpha: 0.0,
        }
    }
}

impl RlsHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config(format!("lambda {} not in (0, 1]", self.lambda)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::config(format!("k {} must be > 0", self.k)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("eta {} must be > 0", self.eta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma {} must be >= 0", self.gamma)));
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha {} not in [0, 1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsLayerState {
    pub p: Matrix,
    /// Velocity, same shape as the parameter matrix.
    pub omega: Matrix,
    pub count_factor: f64,
}

impl RlsLayerState {
    pub fn new(theta_shape: (usize, usize), count_factor: f64) -> Self {
        Self {
            p: Matrix::eye(theta_shape.0),
            omega: Matrix::zeros(theta_shape),
            count_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsStepTrace {
    pub x_bar: Vector,
    pub u: Vector,
    pub h: f64,
    /// True when the parameter step was skipped by the `h` guard.
    pub skipped: bool,
}

/// Number of time steps a parameter's inputs are averaged over.
pub fn count_factor(role: ParamRole, steps: usize, t0: usize) -> f64 {
    match role {
        ParamRole::FeedForward => 1.0,
        ParamRole::SequenceOutput => (steps + 1 - t0) as f64,
        ParamRole::Recurrent => steps as f64,
    }
}

/// Fresh state (`P = I`, `Ω = 0`) for every parameter matrix of `net`, for
/// sequences of length `steps` (ignored by feed-forward networks).
pub fn init_state(net: &Network, steps: usize) -> Result<Vec<RlsLayerState>> {
    let t0 = match net {
        Network::FeedForward(_) => 1,
        Network::Sequence(sq) => {
            if steps == 0 {
                return Err(Error::config("sequence length must be >= 1"));
            }
            sq.mode.t0(steps)
        }
    };
    Ok(net
        .param_info()
        .into_iter()
        .map(|info| RlsLayerState::new(info.shape, count_factor(info.role, steps, t0)))
        .collect())
}

/// Mean augmented input of parameter matrix `index` over the minibatch, the
/// spatial positions (CONV) and the contributing time steps (sequences).
pub fn average_input(cache: &ForwardCache, index: usize) -> Result<Vector> {
    mean_of_rows(cache.augmented_inputs(index)?)
}

fn check_step_args(
    theta: &AugmentedParams,
    state: &RlsLayerState,
    grad: &Matrix,
    x_bar: &Vector,
) -> Result<()> {
    let rows = theta.theta.nrows();
    if grad.dim() != theta.theta.dim() {
        return Err(Error::dim(format!(
            "gradient {:?} for parameters {:?}",
            grad.dim(),
            theta.theta.dim()
        )));
    }
    if state.p.dim() != (rows, rows) || state.omega.dim() != theta.theta.dim() {
        return Err(Error::dim(format!(
            "optimizer state P {:?}, Ω {:?} for parameters {:?}",
            state.p.dim(),
            state.omega.dim(),
            theta.theta.dim()
        )));
    }
    if x_bar.len() != rows {
        return Err(Error::dim(format!("x̄ of length {} for {rows} input rows", x_bar.len())));
    }
    Ok(())
}

/// Returns `(P x̄, h, skip)` for the current state.
fn gain(state: &RlsLayerState, x_bar: &Vector, hp: &RlsHyperparams) -> (Vector, f64, bool) {
    let u = state.p.dot(x_bar);
    let h = hp.lambda + hp.k * state.count_factor * x_bar.dot(&u);
    let skip = !(h >= H_FLOOR) || !h.is_finite();
    if skip {
        warn!("h = {h:e} below floor, skipping parameter step");
    }
    (u, h, skip)
}

fn update_p(state: &mut RlsLayerState, x_bar: &Vector, hp: &RlsHyperparams) -> Result<()> {
    let k_eff = hp.k * state.count_factor;
    rank1_inverse_update_in_place(&mut state.p, x_bar, hp.lambda, k_eff)
        .map(|_| ())
        .map_err(|e| match e {
            Error::Singular(msg) => Error::Numerical(format!("inverse autocorrelation update: {msg}")),
            other => other,
        })
}

/// Plain RLS step: parameter update with the pre-update `P`, then the rank-1
/// update of `P`.
pub fn rls_step(
    theta: &mut AugmentedParams,
    state: &mut RlsLayerState,
    grad: &Matrix,
    x_bar: &Vector,
    hp: &RlsHyperparams,
) -> Result<RlsStepTrace> {
    check_step_args(theta, state, grad, x_bar)?;
    let (u, h, skipped) = gain(state, x_bar, hp);
    if !skipped {
        let step = state.p.dot(grad);
        theta.theta.scaled_add(-(hp.eta / h), &step);
    }
    update_p(state, x_bar, hp)?;
    Ok(RlsStepTrace {
        x_bar: x_bar.clone(),
        u,
        h,
        skipped,
    })
}

/// RLS step with momentum and L1 regularization:
///
/// ```text
/// Ω ← α·Ω − (η/h)·P_{s−1}·∇̃_Θ
/// Θ ← Θ + Ω − γ·P_s·sgn(Θ)
/// ```
///
/// With `α = 0` and `γ = 0` this is bit-identical to [`rls_step`].
pub fn rls_step_improved(
    theta: &mut AugmentedParams,
    state: &mut RlsLayerState,
    grad: &Matrix,
    x_bar: &Vector,
    hp: &RlsHyperparams,
) -> Result<RlsStepTrace> {
    check_step_args(theta, state, grad, x_bar)?;
    let (u, h, skipped) = gain(state, x_bar, hp);
    let sign = (hp.gamma != 0.0).then(|| theta.theta.mapv(sgn));
    if !skipped {
        let step = state.p.dot(grad);
        if hp.alpha == 0.0 {
            state.omega = step * -(hp.eta / h);
        } else {
            state.omega.mapv_inplace(|w| w * hp.alpha);
            state.omega.scaled_add(-(hp.eta / h), &step);
        }
        theta.theta += &state.omega;
    }
    update_p(state, x_bar, hp)?;
    if let Some(sign) = sign {
        let shrink = state.p.dot(&sign);
        theta.theta.scaled_add(-hp.gamma, &shrink);
    }
    Ok(RlsStepTrace {
        x_bar: x_bar.clone(),
        u,
        h,
        skipped,
    })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
