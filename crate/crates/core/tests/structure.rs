use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlsnet::harness::Trainer;
use rlsnet::layers::{lstm_forward, Activation, AugmentedParams, ParamKind};
use rlsnet::linalg::{asymmetry, Matrix};
use rlsnet::loss::Target;
use rlsnet::network::{Input, Network, SequenceMode};
use rlsnet::plan::{hybrid_assign, Assignment};
use rlsnet::rls::{average_input, RlsHyperparams};

fn rls_plan(net: &Network, steps: usize) -> rlsnet::plan::TrainingPlan {
    let hp = RlsHyperparams { alpha: 0.5, gamma: 1e-5, ..RlsHyperparams::default() };
    let map = net
        .param_info()
        .into_iter()
        .map(|p| (p.name, Assignment::Rls { hp, improved: true }))
        .collect();
    hybrid_assign(net, &map, steps).unwrap()
}

#[test]
fn averaged_inputs_keep_augmentation_entry_at_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let conv = Network::conv_net((2, 8, 8), &[vec![3], vec![4]], &[5], 3, Activation::Identity, &mut rng).unwrap();
    let seq = Network::stacked_recurrent(3, &[4, 4], 2, true, SequenceMode::Prediction, Activation::Identity, &mut rng)
        .unwrap();
    let mlp = Network::mlp(&[6, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
    let inputs = [
        (conv, Input::Image(rlsnet::layers::Tensor4::from_shape_fn((4, 2, 8, 8), |_| rng.gen_range(-1.0..1.0)))),
        (seq, Input::Sequence((0..5).map(|_| Matrix::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0))).collect())),
        (mlp, Input::Flat(Matrix::from_shape_fn((4, 6), |_| rng.gen_range(-1.0..1.0)))),
    ];
    for (net, input) in inputs {
        let cache = net.forward(&input).unwrap();
        for i in 0..net.param_info().len() {
            for x in cache.augmented_inputs(i).unwrap() {
                assert!(x.column(x.ncols() - 1).iter().all(|&v| v == 1.0));
            }
            let xb = average_input(&cache, i).unwrap();
            assert_eq!(xb[xb.len() - 1], 1.0);
        }
    }
}

proptest! {
    #[test]
    fn lstm_outputs_are_bounded(
        seed in any::<u64>(),
        m in 1usize..4,
        n_in in 1usize..5,
        units in 1usize..5,
        steps in 1usize..6,
        scale in 0.1f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = AugmentedParams::uniform(n_in, 4 * units, ParamKind::LstmW, &mut rng);
        let mut v = AugmentedParams::uniform(units, 4 * units, ParamKind::LstmV, &mut rng);
        w.theta *= scale;
        v.theta *= scale;
        let seq: Vec<Matrix> = (0..steps).map(|_| Matrix::from_shape_fn((m, n_in), |_| rng.gen_range(-scale..scale))).collect();
        for step in lstm_forward(&seq, &w, &v).unwrap() {
            prop_assert!(step.y.iter().all(|y| y.abs() <= 1.0));
        }
    }
}

#[test]
fn p_stays_symmetric_through_live_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Network::mlp(&[8, 16, 3], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
    let plan = rls_plan(&net, 1);
    let mut trainer = Trainer::new(net, plan, Some(5.0));
    let truth = Matrix::from_shape_fn((8, 3), |_| rng.gen_range(-1.0..1.0));
    for _ in 0..1000 {
        let x = Matrix::from_shape_fn((16, 8), |_| rng.gen_range(-1.0..1.0));
        let t = x.dot(&truth).mapv(f64::sin);
        trainer.step(&Input::Flat(x), &Target::Linear(vec![t])).unwrap();
    }
    for i in 0..trainer.plan.len() {
        let p = &trainer.plan.rls_state(i).unwrap().p;
        assert!(asymmetry(p) <= 1e-10);
    }
}
