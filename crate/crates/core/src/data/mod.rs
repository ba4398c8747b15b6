//! Datasets: MNIST, CIFAR-10, synthetic image and sequence tasks, and
//! pre-tokenized text files.

mod cifar;
mod mnist;
mod synth;
mod tokenized;

pub use cifar::{load_cifar10, CIFAR_RECORD_LEN};
pub use mnist::{load_mnist, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use synth::{synth_image_dataset, synth_sequence_dataset, synth_sequence_tokens, Embedding, SynthSeqConfig};
pub use tokenized::load_tokenized;

use ndarray::{Axis, Slice};

use crate::error::{Error, Result};
use crate::layers::Tensor4;
use crate::linalg::Matrix;
use crate::network::Input;

/// Sample storage for one split. Sequences are stored time-major: one
/// `N×D` matrix per time step.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Flat(Matrix),
    Image(Tensor4),
    Sequence(Vec<Matrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub features: Features,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Split,
    pub classes: usize,
}

impl Split {
    pub fn new(features: Features, labels: Vec<usize>) -> Result<Self> {
        let n = match &features {
            Features::Flat(x) => x.nrows(),
            Features::Image(x) => x.dim().0,
            Features::Sequence(xs) => {
                let n = xs.first().map_or(0, |x| x.nrows());
                if xs.iter().any(|x| x.nrows() != n) {
                    return Err(Error::dim("sequence steps disagree on sample count"));
                }
                n
            }
        };
        if n != labels.len() {
            return Err(Error::dim(format!("{n} samples but {} labels", labels.len())));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keeps the first `n` samples.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.len() {
            return;
        }
        self.labels.truncate(n);
        let keep = Slice::from(0..n);
        self.features = match &self.features {
            Features::Flat(x) => Features::Flat(x.slice_axis(Axis(0), keep).to_owned()),
            Features::Image(x) => Features::Image(x.slice_axis(Axis(0), keep).to_owned()),
            Features::Sequence(xs) => {
                Features::Sequence(xs.iter().map(|x| x.slice_axis(Axis(0), keep).to_owned()).collect())
            }
        };
    }

    /// Gathers the samples at `indices` into a network input, flattening
    /// images when `flatten` is set.
    pub fn batch(&self, indices: &[usize], flatten: bool) -> Input {
        match &self.features {
            Features::Flat(x) => Input::Flat(x.select(Axis(0), indices)),
            Features::Image(x) => {
                let b = x.select(Axis(0), indices);
                if flatten {
                    let (m, c, h, w) = b.dim();
                    let flat = b
                        .into_shape_with_order((m, c * h * w))
                        .expect("selected batch is contiguous");
                    Input::Flat(flat)
                } else {
                    Input::Image(b)
                }
            }
            Features::Sequence(xs) => Input::Sequence(xs.iter().map(|x| x.select(Axis(0), indices)).collect()),
        }
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Per-sample feature shape, without the batch dimension.
    pub fn sample_shape(&self) -> SampleShape {
        match &self.features {
            Features::Flat(x) => SampleShape::Flat(x.ncols()),
            Features::Image(x) => {
                let (_, c, h, w) = x.dim();
                SampleShape::Image(c, h, w)
            }
            Features::Sequence(xs) => SampleShape::Sequence {
                steps: xs.len(),
                dim: xs.first().map_or(0, |x| x.ncols()),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleShape {
    Flat(usize),
    Image(usize, usize, usize),
    Sequence { steps: usize, dim: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn batch_and_truncate() {
        let x = Tensor4::from_shape_fn((3, 1, 2, 2), |(m, _, h, w)| (m * 4 + h * 2 + w) as f64);
        let mut s = Split::new(Features::Image(x), vec![0, 1, 2]).unwrap();
        let Input::Flat(b) = s.batch(&[2, 0], true) else { panic!() };
        assert_eq!(b, array![[8.0, 9.0, 10.0, 11.0], [0.0, 1.0, 2.0, 3.0]]);
        assert_eq!(s.labels_of(&[2, 0]), vec![2, 0]);
        s.truncate(2);
        assert_eq!(s.len(), 2);
        assert_eq!(s.sample_shape(), SampleShape::Image(1, 2, 2));
    }

    #[test]
    fn label_count_mismatch() {
        assert!(matches!(
            Split::new(Features::Flat(Matrix::zeros((2, 3))), vec![0]),
            Err(Error::Dimension(_))
        ));
    }
}
