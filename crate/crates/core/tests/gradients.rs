use ndarray::Axis;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlsnet::backward::backward;
use rlsnet::gradcheck::{gradient_check, Family, REL_TOLERANCE};
use rlsnet::layers::{augment, conv_forward, Activation, AugmentedParams, ConvSpec, ParamKind, Tensor4};
use rlsnet::linalg::Matrix;
use rlsnet::loss::{cross_entropy_backward, Target};
use rlsnet::network::{Cell, Input, Network, SequenceMode};

#[test]
fn backward_matches_finite_differences_on_twenty_seeds() {
    for family in Family::ALL {
        for seed in 0..20 {
            let r = gradient_check(family, seed).unwrap();
            assert!(r.max_rel_error <= REL_TOLERANCE, "{family} seed {seed}: {:e}", r.max_rel_error);
        }
    }
}

/// Direct sliding-window convolution.
fn naive_conv(y: &Tensor4, theta: &Matrix, spec: &ConvSpec) -> Tensor4 {
    let (m, c, h, w) = y.dim();
    let (kh, kw, pad, stride) = (spec.kernel_h, spec.kernel_w, spec.padding as isize, spec.stride);
    let uo = (h + 2 * spec.padding - kh) / stride + 1;
    let vo = (w + 2 * spec.padding - kw) / stride + 1;
    let bias = theta.nrows() - 1;
    Tensor4::from_shape_fn((m, spec.out_channels, uo, vo), |(mi, o, u, v)| {
        let mut acc = theta[[bias, o]];
        for ci in 0..c {
            for a in 0..kh {
                for b in 0..kw {
                    let r = (u * stride + a) as isize - pad;
                    let s = (v * stride + b) as isize - pad;
                    if r >= 0 && s >= 0 && (r as usize) < h && (s as usize) < w {
                        acc += theta[[(ci * kh + a) * kw + b, o]] * y[[mi, ci, r as usize, s as usize]];
                    }
                }
            }
        }
        acc
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn conv_equals_fully_connected_on_receptive_fields(
        seed in any::<u64>(),
        m in 1usize..3,
        c in 1usize..4,
        out in 1usize..4,
        kernel in prop::sample::select(vec![1usize, 3, 5]),
        size in 5usize..9,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = ConvSpec::same(c, out, kernel);
        let params = AugmentedParams::uniform(spec.field_len(), out, ParamKind::Conv, &mut rng);
        let y = Tensor4::from_shape_fn((m, c, size, size), |_| rng.gen_range(-1.0..1.0));
        let got = conv_forward(&y, &params, &spec, Activation::Identity).unwrap();
        let expected = naive_conv(&y, &params.theta, &spec);
        let err = (&got.z - &expected).iter().fold(0.0f64, |a, d| a.max(d.abs()));
        prop_assert!(err <= 1e-12, "{err:e}");
        prop_assert!(got.x_aug.column(got.x_aug.ncols() - 1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn softmax_backward_rows_sum_to_zero(
        seed in any::<u64>(),
        m in 1usize..8,
        classes in 2usize..12,
        scale in 0.1f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Matrix::from_shape_fn((m, classes), |_| rng.gen_range(-scale..scale));
        let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..classes)).collect();
        let dz = cross_entropy_backward(&[z], &[labels]).unwrap();
        for row in dz[0].axis_iter(Axis(0)) {
            prop_assert!(row.sum().abs() <= 1e-15);
        }
    }
}

/// Loss of a one-cell tanh recurrent network whose weights are separate
/// copies per time step.
fn unrolled_loss(ws: &[Matrix], vs: &[Matrix], out: &Matrix, seq: &[Matrix], target: &Matrix) -> f64 {
    let m = seq[0].nrows();
    let mut prev = Matrix::zeros((m, vs[0].ncols()));
    for (t, x) in seq.iter().enumerate() {
        prev = (augment(x).dot(&ws[t]) + augment(&prev).dot(&vs[t])).mapv(f64::tanh);
    }
    let diff = augment(&prev).dot(out) - target;
    diff.mapv(|d| d * d).sum() / (2.0 * m as f64)
}

fn copy_gradient(
    copies: &mut [Matrix],
    loss: &dyn Fn(&[Matrix]) -> f64,
    shape: (usize, usize),
) -> Matrix {
    let eps = 1e-6;
    let mut total = Matrix::zeros(shape);
    for t in 0..copies.len() {
        for idx in ndarray::indices(shape) {
            let orig = copies[t][idx];
            copies[t][idx] = orig + eps;
            let up = loss(copies);
            copies[t][idx] = orig - eps;
            let down = loss(copies);
            copies[t][idx] = orig;
            total[idx] += (up - down) / (2.0 * eps);
        }
    }
    total
}

#[test]
fn tied_recurrent_gradient_is_sum_over_unrolled_copies() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let steps = 4;
    let net = Network::stacked_recurrent(3, &[5], 2, false, SequenceMode::Classification, Activation::Identity, &mut rng)
        .unwrap();
    let seq: Vec<Matrix> = (0..steps).map(|_| Matrix::from_shape_fn((2, 3), |_| rng.gen_range(-1.0..1.0))).collect();
    let target = Matrix::from_shape_fn((2, 2), |_| rng.gen_range(-1.0..1.0));
    let cache = net.forward(&Input::Sequence(seq.clone())).unwrap();
    let grads = backward(&net, &cache, &Target::Linear(vec![target.clone()])).unwrap();

    let Network::Sequence(sq) = &net else { unreachable!() };
    let Cell::Recur { w, v, .. } = &sq.cells[0] else { unreachable!() };
    let out = sq.output.theta.clone();
    let mut ws = vec![w.theta.clone(); steps];
    let vs = vec![v.theta.clone(); steps];
    let gw = copy_gradient(&mut ws, &|c| unrolled_loss(c, &vs, &out, &seq, &target), w.theta.dim());
    let ws = vec![w.theta.clone(); steps];
    let mut vs_mut = vs.clone();
    let gv = copy_gradient(&mut vs_mut, &|c| unrolled_loss(&ws, c, &out, &seq, &target), v.theta.dim());

    let close = |a: &Matrix, b: &Matrix| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-8);
    assert!(close(&grads.grads[0], &gw), "W gradient\n{}\nvs\n{}", grads.grads[0], gw);
    assert!(close(&grads.grads[1], &gv), "V gradient\n{}\nvs\n{}", grads.grads[1], gv);
}
