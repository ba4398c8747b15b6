//! Reverse-mode gradients `∇̃_Θ = Σ Xᵀ ∇_Z` for every parameter matrix,
//! hand-derived per layer kind, with backpropagation through time for the
//! recurrent cells.

use ndarray::s;

use crate::error::{Error, Result};
use crate::layers::{
    accumulate_param_gradient, col2im, input_gradient, tensor_to_rows, Activation,
    AugmentedParams, MaxPool, Tensor4,
};
use crate::linalg::Matrix;
use crate::loss::{evaluate_loss, output_gradients, Target};
use crate::network::{
    Cell, CellCache, FeedForwardNet, ForwardCache, Input, Layer, LayerCache, Network,
    SequenceCache, SequenceNet,
};

/// Per-parameter-matrix gradients in [`Network::param_info`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub names: Vec<String>,
    pub grads: Vec<Matrix>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        let info = net.param_info();
        Self {
            names: info.iter().map(|p| p.name.clone()).collect(),
            grads: info.iter().map(|p| Matrix::zeros(p.shape)).collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Largest `|a − b| / max(|a|, |b|, floor)` over all entries.
    pub fn max_relative_error(&self, other: &GradientSet, floor: f64) -> f64 {
        assert_eq!(self.grads.len(), other.grads.len(), "gradient sets differ in length");
        let mut worst = 0.0f64;
        for (a, b) in self.grads.iter().zip(&other.grads) {
            assert_eq!(a.dim(), b.dim(), "gradient shapes differ");
            for (&x, &y) in a.iter().zip(b.iter()) {
                let denom = x.abs().max(y.abs()).max(floor);
                worst = worst.max((x - y).abs() / denom);
            }
        }
        worst
    }
}

enum Upstream {
    Flat(Matrix),
    Image(Tensor4),
}

pub fn backward(net: &Network, cache: &ForwardCache, target: &Target) -> Result<GradientSet> {
    let dz_out = output_gradients(cache, target)?;
    let grads = match (net, cache) {
        (Network::FeedForward(ff), ForwardCache::FeedForward(caches)) => {
            feedforward_backward(ff, caches, dz_out)?
        }
        (Network::Sequence(sq), ForwardCache::Sequence(sc)) => sequence_backward(sq, sc, dz_out)?,
        _ => return Err(Error::State("forward cache does not belong to this network".into())),
    };
    let names = net.param_info().into_iter().map(|p| p.name).collect();
    Ok(GradientSet { names, grads })
}

fn feedforward_backward(
    ff: &FeedForwardNet,
    caches: &[LayerCache],
    mut dz_out: Vec<Matrix>,
) -> Result<Vec<Matrix>> {
    if caches.len() != ff.layers.len() {
        return Err(Error::State("forward cache does not match the network layers".into()));
    }
    let n_params = ff
        .layers
        .iter()
        .filter(|l| matches!(l, Layer::Dense { .. } | Layer::Conv { .. }))
        .count();
    let mut grads: Vec<Option<Matrix>> = vec![None; n_params];
    let mut slot = n_params;
    let last = ff.layers.len() - 1;
    let mut upstream: Option<Upstream> = None;
    let state_err = || Error::State("forward cache does not match the network layers".into());

    for (idx, (layer, lc)) in ff.layers.iter().zip(caches).enumerate().rev() {
        let need_input_grad = idx > 0;
        upstream = match (layer, lc) {
            (Layer::Dense { params, activation, .. }, LayerCache::Dense { x_aug, z, y }) => {
                let dz = if idx == last {
                    dz_out.pop().ok_or_else(state_err)?
                } else {
                    let Some(Upstream::Flat(mut g)) = upstream else { return Err(state_err()) };
                    activation.scale_by_derivative(&mut g, z, y);
                    g
                };
                slot -= 1;
                grads[slot] = Some(x_aug.t().dot(&dz));
                need_input_grad.then(|| Upstream::Flat(input_gradient(&dz, params)))
            }
            (
                Layer::Conv { params, spec, activation, .. },
                LayerCache::Conv { x_aug, z, y, in_dims },
            ) => {
                let Some(Upstream::Image(mut g)) = upstream else { return Err(state_err()) };
                activation.scale_by_derivative(&mut g, z, y);
                let dz = tensor_to_rows(&g);
                slot -= 1;
                grads[slot] = Some(x_aug.t().dot(&dz));
                if need_input_grad {
                    let dcols = input_gradient(&dz, params);
                    Some(Upstream::Image(col2im(&dcols, spec, *in_dims)?))
                } else {
                    None
                }
            }
            (Layer::MaxPool(_), LayerCache::MaxPool { argmax, in_dims }) => {
                let Some(Upstream::Image(g)) = upstream else { return Err(state_err()) };
                Some(Upstream::Image(MaxPool::backward(&g, argmax, *in_dims)))
            }
            (Layer::Flatten, LayerCache::Flatten { in_dims }) => {
                let Some(Upstream::Flat(g)) = upstream else { return Err(state_err()) };
                let t = g
                    .into_shape_with_order(*in_dims)
                    .map_err(|_| state_err())?;
                Some(Upstream::Image(t))
            }
            _ => return Err(state_err()),
        };
    }
    grads.into_iter().map(|g| g.ok_or_else(state_err)).collect()
}

fn sequence_backward(
    sq: &SequenceNet,
    sc: &SequenceCache,
    dz_out: Vec<Matrix>,
) -> Result<Vec<Matrix>> {
    if sc.cells.len() != sq.cells.len() || sc.outputs.len() != dz_out.len() {
        return Err(Error::State("forward cache does not match the sequence network".into()));
    }
    let steps = sc.steps;
    let m = sc.outputs[0].x_aug.nrows();
    let top_units = sq.output.fan_in();

    let mut g_out = Matrix::zeros(sq.output.theta.dim());
    let mut dy: Vec<Matrix> = vec![Matrix::zeros((m, top_units)); steps];
    for (k, (out, dz)) in sc.outputs.iter().zip(&dz_out).enumerate() {
        accumulate_param_gradient(&mut g_out, &out.x_aug, dz);
        dy[sc.t0 - 1 + k] = input_gradient(dz, &sq.output);
    }

    let mut cell_grads = Vec::with_capacity(2 * sq.cells.len());
    for (idx, (cell, cc)) in sq.cells.iter().zip(&sc.cells).enumerate().rev() {
        let need_below = idx > 0;
        let (gw, gv, below) = match (cell, cc) {
            (Cell::Recur { w, v, activation, .. }, CellCache::Recur(st)) => {
                recur_bptt(w, v, *activation, st, &dy, need_below)
            }
            (Cell::Lstm { w, v, .. }, CellCache::Lstm(st)) => lstm_bptt(w, v, st, &dy, need_below),
            _ => return Err(Error::State("cell cache kind mismatch".into())),
        };
        cell_grads.push((gw, gv));
        dy = below;
    }
    let mut grads = Vec::with_capacity(2 * sq.cells.len() + 1);
    for (gw, gv) in cell_grads.into_iter().rev() {
        grads.push(gw);
        grads.push(gv);
    }
    grads.push(g_out);
    Ok(grads)
}

type CellGrads = (Matrix, Matrix, Vec<Matrix>);

fn recur_bptt(
    w: &AugmentedParams,
    v: &AugmentedParams,
    activation: Activation,
    steps: &[crate::layers::RecurStep],
    dy_above: &[Matrix],
    need_below: bool,
) -> CellGrads {
    let mut gw = Matrix::zeros(w.theta.dim());
    let mut gv = Matrix::zeros(v.theta.dim());
    let (m, n) = steps[0].y.dim();
    let mut below = vec![Matrix::zeros((m, w.fan_in())); if need_below { steps.len() } else { 0 }];
    let mut carry = Matrix::zeros((m, n));
    for t in (0..steps.len()).rev() {
        let st = &steps[t];
        let mut dz = &dy_above[t] + &carry;
        let z = &st.z_w + &st.z_v;
        activation.scale_by_derivative(&mut dz, &z, &st.y);
        accumulate_param_gradient(&mut gw, &st.x_w, &dz);
        accumulate_param_gradient(&mut gv, &st.x_v, &dz);
        carry = input_gradient(&dz, v);
        if need_below {
            below[t] = input_gradient(&dz, w);
        }
    }
    (gw, gv, below)
}

fn lstm_bptt(
    w: &AugmentedParams,
    v: &AugmentedParams,
    steps: &[crate::layers::LstmStep],
    dy_above: &[Matrix],
    need_below: bool,
) -> CellGrads {
    let mut gw = Matrix::zeros(w.theta.dim());
    let mut gv = Matrix::zeros(v.theta.dim());
    let (m, n) = steps[0].y.dim();
    let mut below = vec![Matrix::zeros((m, w.fan_in())); if need_below { steps.len() } else { 0 }];
    let mut dy_carry = Matrix::zeros((m, n));
    let mut dc_carry = Matrix::zeros((m, n));
    let zeros = Matrix::zeros((m, n));
    for t in (0..steps.len()).rev() {
        let st = &steps[t];
        let g = &st.gates;
        let c_prev = if t > 0 { &steps[t - 1].c } else { &zeros };
        let dy = &dy_above[t] + &dy_carry;
        let tanh_c = st.c.mapv(f64::tanh);
        let d_out = &dy * &tanh_c;
        let dc = &dy * &g.output * &tanh_c.mapv(|x| 1.0 - x * x) + &dc_carry;
        let d_in = &dc * &g.modulation;
        let d_mod = &dc * &g.input;
        let d_forget = &dc * c_prev;

        let mut dz = Matrix::zeros((m, 4 * n));
        dz.slice_mut(s![.., 0..n])
            .assign(&(&d_in * &g.input.mapv(|x| x * (1.0 - x))));
        dz.slice_mut(s![.., n..2 * n])
            .assign(&(&d_mod * &g.modulation.mapv(|x| 1.0 - x * x)));
        dz.slice_mut(s![.., 2 * n..3 * n])
            .assign(&(&d_forget * &g.forget.mapv(|x| x * (1.0 - x))));
        dz.slice_mut(s![.., 3 * n..4 * n])
            .assign(&(&d_out * &g.output.mapv(|x| x * (1.0 - x))));

        accumulate_param_gradient(&mut gw, &st.x_w, &dz);
        accumulate_param_gradient(&mut gv, &st.x_v, &dz);
        dy_carry = input_gradient(&dz, v);
        dc_carry = &dc * &g.forget;
        if need_below {
            below[t] = input_gradient(&dz, w);
        }
    }
    (gw, gv, below)
}

/// Scales every matrix by `max_norm / ‖g‖` when the global L2 norm exceeds
/// `max_norm`.
pub fn clip_gradients(mut g: GradientSet, max_norm: f64) -> GradientSet {
    let norm = g.global_norm();
    if norm > max_norm && max_norm > 0.0 {
        let scale = max_norm / norm;
        for m in &mut g.grads {
            m.mapv_inplace(|v| v * scale);
        }
    }
    g
}

pub fn loss_value(net: &Network, input: &Input, target: &Target) -> Result<f64> {
    let cache = net.forward(input)?;
    Ok(evaluate_loss(&cache, target)?.value)
}

/// Central differences `(J(θ+ε) − J(θ−ε)) / 2ε` for every scalar parameter.
pub fn finite_difference_gradient(
    net: &Network,
    input: &Input,
    target: &Target,
    eps: f64,
) -> Result<GradientSet> {
    if !(eps > 0.0) {
        return Err(Error::config(format!("finite-difference step {eps} must be > 0")));
    }
    let mut work = net.clone();
    let mut out = GradientSet::zeros_like(net);
    for (p, grad) in out.grads.iter_mut().enumerate() {
        let (rows, cols) = grad.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = work.params()[p].theta[[i, j]];
                work.params_mut()[p].theta[[i, j]] = orig + eps;
                let plus = loss_value(&work, input, target)?;
                work.params_mut()[p].theta[[i, j]] = orig - eps;
                let minus = loss_value(&work, input, target)?;
                work.params_mut()[p].theta[[i, j]] = orig;
                grad[[i, j]] = (plus - minus) / (2.0 * eps);
            }
        }
    }
    Ok(out)
}
