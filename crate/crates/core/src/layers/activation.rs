use ndarray::{ArrayBase, Axis, Data, DataMut, Dimension};

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
    /// Row-wise softmax; only meaningful on an `M×N` output matrix.
    Softmax,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    /// Elementwise application. Softmax is applied along the last axis.
    pub fn apply<D: Dimension>(self, z: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
        match self {
            Activation::Identity => z.clone(),
            Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Sigmoid => z.mapv(sigmoid),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Softmax => {
                let mut y = z.clone();
                let last = Axis(y.ndim() - 1);
                for mut lane in y.lanes_mut(last) {
                    let max = lane.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    lane.mapv_inplace(|v| (v - max).exp());
                    let s = lane.sum();
                    lane.mapv_inplace(|v| v / s);
                }
                y
            }
        }
    }

    /// Multiplies `grad` in place by `f'(z)`, using the cached output `y`
    /// where that is cheaper. ReLU uses a zero subgradient at 0.
    ///
    /// Softmax has a non-diagonal Jacobian and is only ever paired with the
    /// cross-entropy loss, whose backward pass skips this call.
    pub fn scale_by_derivative<S, D>(
        self,
        grad: &mut ArrayBase<S, D>,
        z: &ndarray::Array<f64, D>,
        y: &ndarray::Array<f64, D>,
    ) where
        S: DataMut<Elem = f64>,
        D: Dimension,
    {
        match self {
            Activation::Identity => {}
            Activation::Relu => ndarray::Zip::from(grad).and(z).for_each(|g, &zv| {
                if zv <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => {
                ndarray::Zip::from(grad).and(y).for_each(|g, &yv| *g *= yv * (1.0 - yv))
            }
            Activation::Tanh => {
                ndarray::Zip::from(grad).and(y).for_each(|g, &yv| *g *= 1.0 - yv * yv)
            }
            Activation::Softmax => panic!("softmax derivative requested outside cross-entropy"),
        }
    }
}

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows<S: Data<Elem = f64>>(z: &ArrayBase<S, ndarray::Ix2>) -> Matrix {
    Activation::Softmax.apply(&z.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relu_splits_sign() {
        assert_eq!(Activation::Relu.apply(&array![[-1.0, 2.0]]), array![[0.0, 2.0]]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let y = softmax_rows(&array![[1.0, 2.0, 3.0], [1000.0, 0.0, -1000.0]]);
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-15);
        }
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
