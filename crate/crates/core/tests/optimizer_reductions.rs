use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlsnet::baseline::sgd_step;
use rlsnet::harness::Trainer;
use rlsnet::layers::{Activation, AugmentedParams, ParamKind};
use rlsnet::linalg::{Matrix, Vector};
use rlsnet::loss::Target;
use rlsnet::network::{Input, Network};
use rlsnet::plan::{hybrid_assign, Assignment};
use rlsnet::rls::{rls_step, rls_step_improved, RlsHyperparams, RlsLayerState};

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Matrix {
    Matrix::from_shape_fn(shape, |_| rng.gen_range(-scale..scale))
}

fn augmented_mean(rng: &mut ChaCha8Rng, rows: usize) -> Vector {
    let mut x = Vector::from_shape_fn(rows, |_| rng.gen_range(-1.0..1.0));
    x[rows - 1] = 1.0;
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn improved_step_without_momentum_or_l1_equals_plain_step(
        seed in any::<u64>(),
        fan_in in 1usize..10,
        outputs in 1usize..6,
        steps in 1usize..20,
        lambda in 0.9f64..=1.0,
        k in 0.01f64..2.0,
        eta in 0.01f64..5.0,
        count in 1usize..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hp = RlsHyperparams { lambda, k, eta, gamma: 0.0, alpha: 0.0 };
        let theta = AugmentedParams::uniform(fan_in, outputs, ParamKind::Fc, &mut rng);
        let (mut a, mut b) = (theta.clone(), theta);
        let mut sa = RlsLayerState::new(a.theta.dim(), count as f64);
        let mut sb = sa.clone();
        for _ in 0..steps {
            let g = uniform(&mut rng, a.theta.dim(), 1.0);
            let x = augmented_mean(&mut rng, fan_in + 1);
            rls_step(&mut a, &mut sa, &g, &x, &hp).unwrap();
            rls_step_improved(&mut b, &mut sb, &g, &x, &hp).unwrap();
        }
        prop_assert_eq!(&a.theta, &b.theta);
        prop_assert_eq!(&sa.p, &sb.p);
    }

    /// With `λ = 1` and `x̄ = 0`, `h = 1` and `P` stays the identity.
    #[test]
    fn rls_with_identity_p_and_unit_h_is_sgd(
        seed in any::<u64>(),
        rows in 1usize..10,
        cols in 1usize..6,
        steps in 1usize..20,
        eta in 1e-4f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hp = RlsHyperparams { eta, ..RlsHyperparams::default() };
        let mut rls = AugmentedParams::new(uniform(&mut rng, (rows, cols), 1.0), ParamKind::Fc);
        let mut sgd = rls.theta.clone();
        let mut state = RlsLayerState::new((rows, cols), 1.0);
        let zero = Vector::zeros(rows);
        for _ in 0..steps {
            let g = uniform(&mut rng, (rows, cols), 3.0);
            let trace = rls_step(&mut rls, &mut state, &g, &zero, &hp).unwrap();
            prop_assert_eq!(trace.h, 1.0);
            sgd_step(&mut sgd, &g, eta).unwrap();
            prop_assert_eq!(&state.p, &Matrix::eye(rows));
        }
        prop_assert_eq!(&rls.theta, &sgd);
    }

    #[test]
    fn rls_step_is_a_descent_direction(
        seed in any::<u64>(),
        fan_in in 1usize..8,
        outputs in 1usize..5,
        warmup in 0usize..50,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hp = RlsHyperparams::default();
        let mut theta = AugmentedParams::uniform(fan_in, outputs, ParamKind::Fc, &mut rng);
        let mut state = RlsLayerState::new(theta.theta.dim(), 1.0);
        for _ in 0..warmup {
            let g = uniform(&mut rng, theta.theta.dim(), 1.0);
            let x = augmented_mean(&mut rng, fan_in + 1);
            rls_step(&mut theta, &mut state, &g, &x, &hp).unwrap();
        }
        let g = uniform(&mut rng, theta.theta.dim(), 1.0);
        let x = augmented_mean(&mut rng, fan_in + 1);
        let before = theta.theta.clone();
        rls_step(&mut theta, &mut state, &g, &x, &hp).unwrap();
        let delta = &theta.theta - &before;
        let inner: f64 = (&delta * &g).sum();
        prop_assert!(inner < 0.0, "⟨Δθ, g⟩ = {inner}");
    }
}

/// Per-sample recursive least squares in its usual gain form, written out
/// for a single input plus bias.
struct TextbookRls {
    w: [f64; 2],
    p: [[f64; 2]; 2],
}

impl TextbookRls {
    fn update(&mut self, x: f64, d: f64) {
        let phi = [x, 1.0];
        let pphi = [
            self.p[0][0] * phi[0] + self.p[0][1] * phi[1],
            self.p[1][0] * phi[0] + self.p[1][1] * phi[1],
        ];
        let denom = 1.0 + phi[0] * pphi[0] + phi[1] * pphi[1];
        let gain = [pphi[0] / denom, pphi[1] / denom];
        let err = d - (self.w[0] * phi[0] + self.w[1] * phi[1]);
        self.w[0] += gain[0] * err;
        self.w[1] += gain[1] * err;
        for i in 0..2 {
            for j in 0..2 {
                self.p[i][j] -= gain[i] * pphi[j];
            }
        }
    }
}

#[test]
fn single_sample_pipeline_matches_textbook_rls() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = Network::mlp(&[1, 1], Activation::Identity, Activation::Identity, &mut rng).unwrap();
    let hp = RlsHyperparams { lambda: 1.0, k: 1.0, eta: 1.0, ..RlsHyperparams::default() };
    let map = [("out".to_string(), Assignment::Rls { hp, improved: false })].into_iter().collect();
    let plan = hybrid_assign(&net, &map, 1).unwrap();
    let theta0 = net.params()[0].theta.clone();
    let mut oracle = TextbookRls { w: [theta0[[0, 0]], theta0[[1, 0]]], p: [[1.0, 0.0], [0.0, 1.0]] };
    let mut trainer = Trainer::new(net, plan, None);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let x = rng.gen_range(-1.0..1.0);
        trainer
            .step(&Input::Flat(Matrix::from_elem((1, 1), x)), &Target::Linear(vec![Matrix::from_elem((1, 1), 2.0 * x)]))
            .unwrap();
        oracle.update(x, 2.0 * x);
        let theta = &trainer.net.params()[0].theta;
        worst = worst.max((theta[[0, 0]] - oracle.w[0]).abs()).max((theta[[1, 0]] - oracle.w[1]).abs());
    }
    assert!(worst <= 1e-10, "max deviation from textbook RLS {worst:e}");
    // The identity prior on P decays like 1/n; run on until it is negligible.
    for _ in 500..20_000 {
        let x = rng.gen_range(-1.0..1.0);
        trainer
            .step(&Input::Flat(Matrix::from_elem((1, 1), x)), &Target::Linear(vec![Matrix::from_elem((1, 1), 2.0 * x)]))
            .unwrap();
    }
    let w = trainer.net.params()[0].theta[[0, 0]];
    assert!((w - 2.0).abs() <= 1e-3, "weight {w}");
}
