use ndarray::Array1;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlsnet::harness::Trainer;
use rlsnet::layers::Activation;
use rlsnet::linalg::{asymmetry, direct_inverse_oracle, is_positive_definite, max_abs_diff, rank1_inverse_update, Matrix, Vector};
use rlsnet::loss::Target;
use rlsnet::network::{Input, Network};
use rlsnet::plan::{hybrid_assign, Assignment};
use rlsnet::rls::RlsHyperparams;

fn random_inputs(seed: u64, dim: usize, steps: usize) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| {
            let mut x = Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
            x[dim - 1] = 1.0;
            x
        })
        .collect()
}

#[test]
fn chained_updates_match_direct_inverse_grid() {
    for &lambda in &[0.99, 1.0] {
        for &k_eff in &[0.1, 1.0, 10.0] {
            for (seed, dim) in [(0u64, 2usize), (1, 8), (2, 32)] {
                let xs = random_inputs(seed, dim, 200);
                let mut p = Matrix::eye(dim);
                for x in &xs {
                    p = rank1_inverse_update(&p, x, lambda, k_eff).unwrap().p_next;
                }
                let oracle = direct_inverse_oracle(&xs, lambda, k_eff, &Matrix::eye(dim)).unwrap();
                let err = max_abs_diff(&p, &oracle);
                assert!(err <= 1e-8, "λ={lambda} k={k_eff} dim={dim}: {err:e}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chained_updates_match_direct_inverse(
        seed in any::<u64>(),
        dim in 1usize..=32,
        steps in 1usize..=200,
        lambda in prop::sample::select(vec![0.99, 1.0]),
        k_eff in prop::sample::select(vec![0.1, 1.0, 10.0]),
    ) {
        let xs = random_inputs(seed, dim, steps);
        let mut p = Matrix::eye(dim);
        for x in &xs {
            let r = rank1_inverse_update(&p, x, lambda, k_eff).unwrap();
            prop_assert!(r.h >= lambda);
            p = r.p_next;
        }
        let oracle = direct_inverse_oracle(&xs, lambda, k_eff, &Matrix::eye(dim)).unwrap();
        prop_assert!(max_abs_diff(&p, &oracle) <= 1e-8);
    }

    #[test]
    fn updates_keep_p_symmetric_positive_definite(
        seed in any::<u64>(),
        dim in 1usize..=16,
        steps in 1usize..=300,
        lambda in 0.95f64..=1.0,
        k_eff in 0.01f64..=10.0,
    ) {
        let mut p = Matrix::eye(dim);
        for x in random_inputs(seed, dim, steps) {
            p = rank1_inverse_update(&p, &x, lambda, k_eff).unwrap().p_next;
        }
        prop_assert!(asymmetry(&p) <= 1e-12);
        prop_assert!(is_positive_definite(&p));
    }
}

fn train_first_layer_p(targets_seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::mlp(&[4, 6, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
    let hp = RlsHyperparams::default();
    let map = net
        .param_info()
        .into_iter()
        .map(|p| (p.name, Assignment::Rls { hp, improved: false }))
        .collect();
    let plan = hybrid_assign(&net, &map, 1).unwrap();
    let mut trainer = Trainer::new(net, plan, None);
    let mut data_rng = ChaCha8Rng::seed_from_u64(11);
    let mut target_rng = ChaCha8Rng::seed_from_u64(targets_seed);
    for _ in 0..50 {
        let x = Matrix::from_shape_fn((5, 4), |_| data_rng.gen_range(-1.0..1.0));
        let t = Matrix::from_shape_fn((5, 2), |_| target_rng.gen_range(-3.0..3.0));
        trainer.step(&Input::Flat(x), &Target::Linear(vec![t])).unwrap();
    }
    trainer.plan.rls_state(0).unwrap().p.clone()
}

#[test]
fn first_layer_p_does_not_depend_on_targets() {
    assert_eq!(train_first_layer_p(1), train_first_layer_p(2));
}
