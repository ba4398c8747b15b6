//! Forward propagation through time for RECUR and LSTM layers.
//!
//! Both use two augmented parameter matrices: `Θ_w` on `[Y^{l-1}_t, 1]` and
//! `Θ_v` on the layer's own previous output `[Y^l_{t-1}, 1]`, with `Y^l_0 = 0`.

use ndarray::s;

use super::activation::sigmoid;
use super::{augment, Activation, AugmentedParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone)]
pub struct RecurStep {
    pub x_w: Matrix,
    pub x_v: Matrix,
    pub z_w: Matrix,
    pub z_v: Matrix,
    pub y: Matrix,
}

fn check_sequence(y_seq: &[Matrix], w: &AugmentedParams) -> Result<usize> {
    let first = y_seq
        .first()
        .ok_or_else(|| Error::dim("recurrent forward on an empty sequence"))?;
    let m = first.nrows();
    for (t, y) in y_seq.iter().enumerate() {
        if y.dim() != (m, w.fan_in()) {
            return Err(Error::dim(format!(
                "input at t={} is {:?}, expected ({m}, {})",
                t + 1,
                y.dim(),
                w.fan_in()
            )));
        }
    }
    Ok(m)
}

pub fn recur_forward(
    y_seq: &[Matrix],
    w: &AugmentedParams,
    v: &AugmentedParams,
    activation: Activation,
) -> Result<Vec<RecurStep>> {
    let m = check_sequence(y_seq, w)?;
    let n = w.outputs();
    if v.theta.dim() != (n + 1, n) {
        return Err(Error::dim(format!(
            "recurrent Θ_v is {:?}, expected ({}, {n})",
            v.theta.dim(),
            n + 1
        )));
    }
    let mut prev = Matrix::zeros((m, n));
    let mut steps = Vec::with_capacity(y_seq.len());
    for y_in in y_seq {
        let x_w = augment(y_in);
        let x_v = augment(&prev);
        let z_w = x_w.dot(&w.theta);
        let z_v = x_v.dot(&v.theta);
        let y = activation.apply(&(&z_w + &z_v));
        prev = y.clone();
        steps.push(RecurStep { x_w, x_v, z_w, z_v, y });
    }
    Ok(steps)
}

/// Gate activations, each `M×N`.
#[derive(Debug, Clone)]
pub struct LstmGates {
    pub input: Matrix,
    pub modulation: Matrix,
    pub forget: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x_w: Matrix,
    pub x_v: Matrix,
    pub z_w: Matrix,
    pub z_v: Matrix,
    pub gates: LstmGates,
    pub c: Matrix,
    pub y: Matrix,
}

/// Units of an LSTM layer whose concatenated parameter matrix has `cols` columns.
pub fn lstm_units(cols: usize) -> Result<usize> {
    if cols == 0 || cols % 4 != 0 {
        return Err(Error::config(format!(
            "LSTM parameter matrix has {cols} columns, not a positive multiple of 4"
        )));
    }
    Ok(cols / 4)
}

/// Column blocks of `Θ` are ordered input, modulation, forget, output.
/// `σ` = sigmoid for I/F/O and `g` = tanh for G and the cell output; `C_0 = 0`.
pub fn lstm_forward(
    y_seq: &[Matrix],
    w: &AugmentedParams,
    v: &AugmentedParams,
) -> Result<Vec<LstmStep>> {
    let n = lstm_units(w.outputs())?;
    let m = check_sequence(y_seq, w)?;
    if v.theta.dim() != (n + 1, 4 * n) {
        return Err(Error::dim(format!(
            "LSTM Θ_v is {:?}, expected ({}, {})",
            v.theta.dim(),
            n + 1,
            4 * n
        )));
    }
    let mut prev_y = Matrix::zeros((m, n));
    let mut prev_c = Matrix::zeros((m, n));
    let mut steps = Vec::with_capacity(y_seq.len());
    for y_in in y_seq {
        let x_w = augment(y_in);
        let x_v = augment(&prev_y);
        let z_w = x_w.dot(&w.theta);
        let z_v = x_v.dot(&v.theta);
        let pre = &z_w + &z_v;
        let block = |b: usize| pre.slice(s![.., b * n..(b + 1) * n]).to_owned();
        let gates = LstmGates {
            input: block(0).mapv(sigmoid),
            modulation: block(1).mapv(f64::tanh),
            forget: block(2).mapv(sigmoid),
            output: block(3).mapv(sigmoid),
        };
        let c = &gates.input * &gates.modulation + &gates.forget * &prev_c;
        let y = &gates.output * &c.mapv(f64::tanh);
        prev_y = y.clone();
        prev_c = c.clone();
        steps.push(LstmStep {
            x_w,
            x_v,
            z_w,
            z_v,
            gates,
            c,
            y,
        });
    }
    Ok(steps)
}
