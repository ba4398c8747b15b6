//! Finite-difference checks of [`backward`] on toy networks of each family.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backward::{backward, finite_difference_gradient};
use crate::error::{Error, Result};
use crate::layers::{Activation, Tensor4};
use crate::linalg::Matrix;
use crate::loss::Target;
use crate::network::{Input, Network, SequenceMode};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that entries near zero are
/// compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-4;
/// Acceptance bound on the relative error.
pub const REL_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Fc,
    Conv,
    Recur,
    Lstm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Fc, Family::Conv, Family::Recur, Family::Lstm];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Fc => "fc",
            Family::Conv => "conv",
            Family::Recur => "recur",
            Family::Lstm => "lstm",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fc" | "fnn" => Ok(Family::Fc),
            "conv" | "cnn" => Ok(Family::Conv),
            "recur" | "rnn" => Ok(Family::Recur),
            "lstm" => Ok(Family::Lstm),
            _ => Err(Error::config(format!("unknown architecture family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub family: Family,
    pub seed: u64,
    pub parameters: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= REL_TOLERANCE
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Matrix {
    Matrix::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// A small random network, minibatch and target. Even seeds use the MSE
/// loss with an identity output, odd seeds softmax cross-entropy.
pub fn toy_problem(family: Family, seed: u64) -> Result<(Network, Input, Target)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xent = seed % 2 == 1;
    let out_act = if xent { Activation::Softmax } else { Activation::Identity };
    let m = 3;
    let classes = 3;
    let (net, input) = match family {
        Family::Fc => {
            let net = Network::mlp(&[5, 7, 6, classes], Activation::Relu, out_act, &mut rng)?;
            let x = uniform(&mut rng, (m, 5));
            (net, Input::Flat(x))
        }
        Family::Conv => {
            let net = Network::conv_net((2, 8, 8), &[vec![3], vec![4]], &[5], classes, out_act, &mut rng)?;
            let x = Tensor4::from_shape_fn((m, 2, 8, 8), |_| rng.gen_range(-1.0..1.0));
            (net, Input::Image(x))
        }
        Family::Recur | Family::Lstm => {
            let mode = if seed % 4 < 2 { SequenceMode::Classification } else { SequenceMode::Prediction };
            let lstm = family == Family::Lstm;
            let hidden: &[usize] = if lstm { &[3, 4] } else { &[4, 5] };
            let net = Network::stacked_recurrent(3, hidden, classes, lstm, mode, out_act, &mut rng)?;
            let steps = if lstm { 3 } else { 4 };
            let seq = (0..steps).map(|_| uniform(&mut rng, (m, 3))).collect();
            (net, Input::Sequence(seq))
        }
    };
    let times = net.forward(&input)?.logits().len();
    let target = if xent {
        Target::Classes((0..times).map(|_| (0..m).map(|_| rng.gen_range(0..classes)).collect()).collect())
    } else {
        Target::Linear((0..times).map(|_| uniform(&mut rng, (m, classes))).collect())
    };
    Ok((net, input, target))
}

pub fn gradient_check(family: Family, seed: u64) -> Result<GradCheckReport> {
    let (net, input, target) = toy_problem(family, seed)?;
    let cache = net.forward(&input)?;
    let analytic = backward(&net, &cache, &target)?;
    let numeric = finite_difference_gradient(&net, &input, &target, FD_STEP)?;
    Ok(GradCheckReport {
        family,
        seed,
        parameters: net.parameter_count(),
        max_rel_error: analytic.max_relative_error(&numeric, REL_FLOOR),
    })
}
