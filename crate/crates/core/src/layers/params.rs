use ndarray::s;
use rand::Rng;

use crate::linalg::Matrix;

/// Which layer family a parameter matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Fc,
    Conv,
    RecurW,
    RecurV,
    LstmW,
    LstmV,
}

/// Augmented parameter matrix `Θ = [Wᵀ, b]ᵀ`: the last row holds the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedParams {
    pub theta: Matrix,
    pub kind: ParamKind,
}

impl AugmentedParams {
    pub fn new(theta: Matrix, kind: ParamKind) -> Self {
        Self { theta, kind }
    }

    pub fn zeros(fan_in: usize, outputs: usize, kind: ParamKind) -> Self {
        Self::new(Matrix::zeros((fan_in + 1, outputs)), kind)
    }

    /// Uniform in `±1/√fan_in` for weights and bias alike.
    pub fn uniform<R: Rng + ?Sized>(
        fan_in: usize,
        outputs: usize,
        kind: ParamKind,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let theta = Matrix::from_shape_fn((fan_in + 1, outputs), |_| rng.gen_range(-bound..bound));
        Self::new(theta, kind)
    }

    /// Number of non-augmented inputs (rows minus the bias row).
    pub fn fan_in(&self) -> usize {
        self.theta.nrows() - 1
    }

    pub fn outputs(&self) -> usize {
        self.theta.ncols()
    }

    pub fn weights(&self) -> ndarray::ArrayView2<'_, f64> {
        self.theta.slice(s![..-1, ..])
    }

    pub fn bias(&self) -> ndarray::ArrayView1<'_, f64> {
        self.theta.row(self.theta.nrows() - 1)
    }
}
