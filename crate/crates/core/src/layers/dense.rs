use ndarray::{s, Axis};

use super::{Activation, AugmentedParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Appends the constant-1 augmentation column: `X = [Y, 1]`.
pub fn augment(y: &Matrix) -> Matrix {
    let (m, n) = y.dim();
    let mut x = Matrix::ones((m, n + 1));
    x.slice_mut(s![.., ..n]).assign(y);
    x
}

pub(crate) fn check_augmented(x_aug: &Matrix) -> Result<()> {
    let n = x_aug.ncols();
    if n == 0 {
        return Err(Error::dim("augmented input has no columns"));
    }
    if x_aug.column(n - 1).iter().any(|&v| v != 1.0) {
        return Err(Error::Input("augmentation column of X must be all ones".into()));
    }
    Ok(())
}

/// `Z = X·Θ`, `Y = f(Z)`.
pub fn fc_forward(
    x_aug: &Matrix,
    params: &AugmentedParams,
    activation: Activation,
) -> Result<(Matrix, Matrix)> {
    if x_aug.ncols() != params.theta.nrows() {
        return Err(Error::dim(format!(
            "input has {} augmented columns, Θ has {} rows",
            x_aug.ncols(),
            params.theta.nrows()
        )));
    }
    check_augmented(x_aug)?;
    let z = x_aug.dot(&params.theta);
    let y = activation.apply(&z);
    Ok((z, y))
}

/// Gradient of the loss w.r.t. the non-augmented layer input: `∇_Z · Wᵀ`.
pub(crate) fn input_gradient(dz: &Matrix, params: &AugmentedParams) -> Matrix {
    dz.dot(&params.weights().t())
}

/// `Σ_t X_tᵀ ∇_{Z_t}` accumulated into `acc`.
pub(crate) fn accumulate_param_gradient(acc: &mut Matrix, x_aug: &Matrix, dz: &Matrix) {
    ndarray::linalg::general_mat_mul(1.0, &x_aug.t(), dz, 1.0, acc);
}

/// Mean of all rows of the given matrices.
pub(crate) fn mean_of_rows<'a>(mats: impl IntoIterator<Item = &'a Matrix>) -> Result<crate::linalg::Vector> {
    let mut sum: Option<crate::linalg::Vector> = None;
    let mut rows = 0usize;
    for m in mats {
        let s = m.sum_axis(Axis(0));
        rows += m.nrows();
        sum = Some(match sum {
            None => s,
            Some(acc) => {
                if acc.len() != s.len() {
                    return Err(Error::dim("row averaging over matrices of different widths"));
                }
                acc + s
            }
        });
    }
    match sum {
        Some(s) if rows > 0 => Ok(s / rows as f64),
        _ => Err(Error::dim("row averaging over no rows")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::ParamKind;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_pass_input_through() {
        let p = AugmentedParams::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], ParamKind::Fc);
        let (z, _) = fc_forward(&augment(&array![[1.0, 2.0]]), &p, Activation::Identity).unwrap();
        assert_eq!(z, array![[1.0, 2.0]]);
    }

    #[test]
    fn relu_output() {
        let p = AugmentedParams::new(array![[-1.0, 2.0], [0.0, 0.0]], ParamKind::Fc);
        let (_, y) = fc_forward(&augment(&array![[1.0]]), &p, Activation::Relu).unwrap();
        assert_eq!(y, array![[0.0, 2.0]]);
    }

    #[test]
    fn matches_per_neuron_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = Matrix::from_shape_fn((128, 784), |_| rng.gen_range(0.0..1.0));
        let p = AugmentedParams::uniform(784, 10, ParamKind::Fc, &mut rng);
        let x = augment(&y);
        let (z, _) = fc_forward(&x, &p, Activation::Identity).unwrap();
        for m in 0..128 {
            for j in 0..10 {
                let mut acc = p.theta[[784, j]];
                for i in 0..784 {
                    acc += y[[m, i]] * p.theta[[i, j]];
                }
                assert!((z[[m, j]] - acc).abs() <= 1e-6 * acc.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_shapes_and_augmentation() {
        let p = AugmentedParams::zeros(2, 3, ParamKind::Fc);
        assert!(matches!(
            fc_forward(&Matrix::ones((1, 2)), &p, Activation::Identity),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            fc_forward(&Matrix::zeros((1, 3)), &p, Activation::Identity),
            Err(Error::Input(_))
        ));
    }
}
