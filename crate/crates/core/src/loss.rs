use std::borrow::Borrow;

use crate::error::{Error, Result};
use crate::layers::softmax_rows;
use crate::linalg::Matrix;
use crate::network::ForwardCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `(1/2M) Σ_t ‖Z_t − Z*_t‖²_F` on the output layer's linear outputs.
    MseLinear,
    /// Softmax cross-entropy averaged over the minibatch, summed over output times.
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub kind: LossKind,
}

/// Training target for one minibatch, one entry per output time.
#[derive(Debug, Clone)]
pub enum Target {
    /// Desired linear outputs `Z*`.
    Linear(Vec<Matrix>),
    /// Class labels.
    Classes(Vec<Vec<usize>>),
}

impl Target {
    pub fn kind(&self) -> LossKind {
        match self {
            Target::Linear(_) => LossKind::MseLinear,
            Target::Classes(_) => LossKind::CrossEntropy,
        }
    }
}

fn check_times(z: usize, target: usize) -> Result<()> {
    if z != target || z == 0 {
        return Err(Error::dim(format!(
            "{z} output times but {target} target times"
        )));
    }
    Ok(())
}

pub fn mse_linear_loss<Z: Borrow<Matrix>, S: Borrow<Matrix>>(z: &[Z], z_star: &[S]) -> Result<LossReport> {
    check_times(z.len(), z_star.len())?;
    let m = z[0].borrow().nrows();
    let mut total = 0.0;
    for (zt, st) in z.iter().zip(z_star) {
        let (zt, st) = (zt.borrow(), st.borrow());
        if zt.dim() != st.dim() || zt.nrows() != m {
            return Err(Error::dim(format!(
                "output {:?} vs target {:?}",
                zt.dim(),
                st.dim()
            )));
        }
        total += zt.iter().zip(st.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(LossReport {
        value: total / (2.0 * m as f64),
        kind: LossKind::MseLinear,
    })
}

/// `∇_{Z_t} = (Z_t − Z*_t)/M` for each output time.
pub fn mse_linear_backward<Z: Borrow<Matrix>, S: Borrow<Matrix>>(z: &[Z], z_star: &[S]) -> Result<Vec<Matrix>> {
    check_times(z.len(), z_star.len())?;
    z.iter()
        .zip(z_star)
        .map(|(zt, st)| {
            let (zt, st) = (zt.borrow(), st.borrow());
            if zt.dim() != st.dim() {
                return Err(Error::dim("output/target shape mismatch"));
            }
            Ok((zt - st) / zt.nrows() as f64)
        })
        .collect()
}

fn check_labels(z: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != z.nrows() {
        return Err(Error::dim(format!(
            "{} labels for {} rows",
            labels.len(),
            z.nrows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= z.ncols()) {
        return Err(Error::Input(format!(
            "label {bad} out of range for {} classes",
            z.ncols()
        )));
    }
    Ok(())
}

pub fn cross_entropy_loss<Z: Borrow<Matrix>>(logits: &[Z], labels: &[Vec<usize>]) -> Result<LossReport> {
    check_times(logits.len(), labels.len())?;
    let m = logits[0].borrow().nrows();
    let mut total = 0.0;
    for (zt, lt) in logits.iter().zip(labels) {
        let zt = zt.borrow();
        check_labels(zt, lt)?;
        for (row, &label) in zt.rows().into_iter().zip(lt) {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
    }
    Ok(LossReport {
        value: (total / m as f64).max(0.0),
        kind: LossKind::CrossEntropy,
    })
}

/// `(softmax(Z_t) − onehot)/M` for each output time.
pub fn cross_entropy_backward<Z: Borrow<Matrix>>(logits: &[Z], labels: &[Vec<usize>]) -> Result<Vec<Matrix>> {
    check_times(logits.len(), labels.len())?;
    logits
        .iter()
        .zip(labels)
        .map(|(zt, lt)| {
            let zt = zt.borrow();
            check_labels(zt, lt)?;
            let mut g = softmax_rows(zt);
            for (mut row, &label) in g.rows_mut().into_iter().zip(lt) {
                row[label] -= 1.0;
            }
            Ok(g / zt.nrows() as f64)
        })
        .collect()
}

pub fn evaluate_loss(cache: &ForwardCache, target: &Target) -> Result<LossReport> {
    let z = cache.logits();
    match target {
        Target::Linear(star) => mse_linear_loss(&z, star),
        Target::Classes(labels) => cross_entropy_loss(&z, labels),
    }
}

pub(crate) fn output_gradients(cache: &ForwardCache, target: &Target) -> Result<Vec<Matrix>> {
    let z = cache.logits();
    match target {
        Target::Linear(star) => mse_linear_backward(&z, star),
        Target::Classes(labels) => cross_entropy_backward(&z, labels),
    }
}

/// One-hot rows for labels, usable as `Z*` under an identity output layer.
pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut z = Matrix::zeros((labels.len(), classes));
    for (m, &l) in labels.iter().enumerate() {
        z[[m, l]] = 1.0;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_zero_at_target() {
        let z = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(mse_linear_loss(&[z.clone()], &[z]).unwrap().value, 0.0);
    }

    #[test]
    fn mse_hand_value() {
        let r = mse_linear_loss(&[array![[3.0, 4.0]]], &[array![[0.0, 0.0]]]).unwrap();
        assert_eq!(r.value, 12.5);
    }

    #[test]
    fn mse_invariant_to_duplicated_rows() {
        let z = array![[0.3, -1.0], [2.0, 0.5]];
        let s = array![[0.0, 1.0], [1.0, 1.0]];
        let a = mse_linear_loss(&[z.clone()], &[s.clone()]).unwrap().value;
        let z2 = ndarray::concatenate![ndarray::Axis(0), z, z];
        let s2 = ndarray::concatenate![ndarray::Axis(0), s, s];
        let b = mse_linear_loss(&[z2], &[s2]).unwrap().value;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn mse_shape_mismatch() {
        assert!(matches!(
            mse_linear_loss(&[array![[1.0]]], &[array![[1.0, 2.0]]]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn uniform_logits_give_ln_classes() {
        let r = cross_entropy_loss(&[Matrix::zeros((3, 10))], &[vec![0, 4, 9]]).unwrap();
        assert!((r.value - 10f64.ln()).abs() < 1e-12);
        assert!((r.value - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let r = cross_entropy_loss(&[array![[100.0, -100.0, -100.0]]], &[vec![0]]).unwrap();
        assert!(r.value < 1e-40);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            cross_entropy_loss(&[Matrix::zeros((1, 3))], &[vec![3]]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn xent_gradient_rows_sum_to_zero() {
        let z = array![[0.1, 2.0, -1.0], [5.0, 5.0, 5.0]];
        let g = cross_entropy_backward(&[z], &[vec![1, 2]]).unwrap();
        for row in g[0].rows() {
            assert!(row.sum().abs() < 1e-15);
        }
    }

    #[test]
    fn xent_gradient_matches_finite_differences() {
        let z = array![[0.3, -0.7, 1.1], [0.0, 0.4, -0.2]];
        let labels = vec![vec![2, 0]];
        let g = cross_entropy_backward(&[z.clone()], &labels).unwrap();
        let eps = 1e-5;
        for i in 0..2 {
            for j in 0..3 {
                let mut zp = z.clone();
                zp[[i, j]] += eps;
                let mut zm = z.clone();
                zm[[i, j]] -= eps;
                let fd = (cross_entropy_loss(&[zp], &labels).unwrap().value
                    - cross_entropy_loss(&[zm], &labels).unwrap().value)
                    / (2.0 * eps);
                assert!((fd - g[0][[i, j]]).abs() <= 1e-5 * fd.abs().max(1e-3));
            }
        }
    }
}
