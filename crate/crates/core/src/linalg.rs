//! Dense linear algebra shared by the layers and the optimizers.
//!
//! Matrices are row-major `ndarray` arrays of `f64`. The centrepiece is the
//! rank-1 (Sherman-Morrison) recursion for the inverse autocorrelation matrix
//!
//! ```text
//! u      = P x̄
//! h      = λ + k_eff · x̄ᵀ u
//! P_next = (P − (k_eff / h) · u uᵀ) / λ
//! ```
//!
//! which is the inverse of `λ·P⁻¹ + k_eff·x̄ x̄ᵀ`.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Outcome of one rank-1 inverse update.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneUpdate {
    pub p_next: Matrix,
    pub u: Vector,
    pub h: f64,
}

/// Column means of an `M×N` matrix.
pub fn mean_rows(x: &Matrix) -> Result<Vector> {
    let (m, n) = x.dim();
    if m == 0 || n == 0 {
        return Err(Error::dim(format!("mean_rows of empty {m}x{n} matrix")));
    }
    Ok(x.sum_axis(Axis(0)) / m as f64)
}

fn check_rank1_args(p: &Matrix, x_bar: &Vector, lambda: f64, k_eff: f64) -> Result<()> {
    let (r, c) = p.dim();
    if r != c {
        return Err(Error::dim(format!("P must be square, got {r}x{c}")));
    }
    if x_bar.len() != r {
        return Err(Error::dim(format!(
            "x̄ has length {} but P is {r}x{r}",
            x_bar.len()
        )));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::config(format!("forgetting factor {lambda} not in (0, 1]")));
    }
    if !(k_eff > 0.0) || !k_eff.is_finite() {
        return Err(Error::config(format!("effective ratio factor {k_eff} must be > 0")));
    }
    Ok(())
}

/// In-place variant of [`rank1_inverse_update`]; returns `(u, h)`.
///
/// `P` is re-symmetrized as `(P + Pᵀ)/2` while it is rewritten.
pub fn rank1_inverse_update_in_place(
    p: &mut Matrix,
    x_bar: &Vector,
    lambda: f64,
    k_eff: f64,
) -> Result<(Vector, f64)> {
    check_rank1_args(p, x_bar, lambda, k_eff)?;
    let u = p.dot(x_bar);
    let h = lambda + k_eff * x_bar.dot(&u);
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Singular(format!("rank-1 update denominator h = {h}")));
    }
    let c = k_eff / h;
    let inv_lambda = 1.0 / lambda;
    let n = u.len();
    for i in 0..n {
        let ui = u[i];
        let diag = (p[[i, i]] - c * ui * ui) * inv_lambda;
        p[[i, i]] = diag;
        for j in (i + 1)..n {
            let sym = 0.5 * (p[[i, j]] + p[[j, i]]);
            let v = (sym - c * ui * u[j]) * inv_lambda;
            p[[i, j]] = v;
            p[[j, i]] = v;
        }
    }
    Ok((u, h))
}

/// Sherman-Morrison update of an inverse autocorrelation matrix.
pub fn rank1_inverse_update(
    p: &Matrix,
    x_bar: &Vector,
    lambda: f64,
    k_eff: f64,
) -> Result<RankOneUpdate> {
    let mut p_next = p.clone();
    let (u, h) = rank1_inverse_update_in_place(&mut p_next, x_bar, lambda, k_eff)?;
    Ok(RankOneUpdate { p_next, u, h })
}

/// Exact inverse of `A_s = λˢ·a₀ + Σᵢ λ^{s−i}·k_eff·x̄ᵢx̄ᵢᵀ`, formed explicitly and
/// inverted with an LU factorization.
///
/// Reference path for checking chained [`rank1_inverse_update`] calls.
pub fn direct_inverse_oracle(
    x_bars: &[Vector],
    lambda: f64,
    k_eff: f64,
    a0: &Matrix,
) -> Result<Matrix> {
    let (r, c) = a0.dim();
    if r != c {
        return Err(Error::dim(format!("a₀ must be square, got {r}x{c}")));
    }
    let mut a = nalgebra::DMatrix::from_fn(r, r, |i, j| a0[[i, j]]);
    for x in x_bars {
        if x.len() != r {
            return Err(Error::dim(format!("x̄ of length {} for {r}x{r} system", x.len())));
        }
        let xv = nalgebra::DVector::from_iterator(r, x.iter().copied());
        a = a * lambda + (&xv * xv.transpose()) * k_eff;
    }
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("accumulated autocorrelation is singular".into()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("inverse has non-finite entries".into()));
    }
    Ok(Matrix::from_shape_fn((r, r), |(i, j)| inv[(i, j)]))
}

/// Largest absolute asymmetry `max |P_ij − P_ji|`.
pub fn asymmetry(p: &Matrix) -> f64 {
    let n = p.nrows().min(p.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((p[[i, j]] - p[[j, i]]).abs());
        }
    }
    worst
}

/// True when a Cholesky factorization of `p` succeeds.
pub fn is_positive_definite(p: &Matrix) -> bool {
    let n = p.nrows();
    if n != p.ncols() {
        return false;
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| p[[i, j]]);
    m.cholesky().is_some()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.dim(), b.dim(), "max_abs_diff shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn all_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> bool {
    values.into_iter().all(|v| v.is_finite())
}
