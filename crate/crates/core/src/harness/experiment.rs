use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backward::{backward, clip_gradients};
use crate::baseline::AdamConfig;
use crate::data::{
    load_cifar10, load_mnist, load_tokenized, synth_image_dataset, synth_sequence_dataset, Dataset, SampleShape,
    SynthSeqConfig,
};
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::loss::{evaluate_loss, one_hot, Target};
use crate::network::{Input, Network, SequenceMode};
use crate::plan::{hybrid_assign, Assignment, StepReport, TrainingPlan};
use crate::rls::RlsHyperparams;

use super::config::{DatasetKind, ExperimentConfig, LossMode, Model, OptimizerKind};
use super::metrics::MetricsRecord;

/// Learning rate of SGD layers when none is configured.
pub const DEFAULT_SGD_LR: f64 = 0.1;
const EVAL_BATCH: usize = 500;

/// A network together with its optimizer states.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: Network,
    pub plan: TrainingPlan,
    pub clip: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Minibatch loss before the update.
    pub loss: f64,
    pub report: StepReport,
}

impl Trainer {
    pub fn new(net: Network, plan: TrainingPlan, clip: Option<f64>) -> Self {
        Self { net, plan, clip }
    }

    /// Forward, loss, backward, optional clipping and one optimizer step.
    pub fn step(&mut self, input: &Input, target: &Target) -> Result<StepOutcome> {
        let cache = self.net.forward(input)?;
        let loss = evaluate_loss(&cache, target)?.value;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss is {loss}")));
        }
        let mut grads = backward(&self.net, &cache, target)?;
        if let Some(max) = self.clip {
            grads = clip_gradients(grads, max);
        }
        if !grads.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        let report = self.plan.step(&mut self.net, &cache, &grads)?;
        Ok(StepOutcome { loss, report })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub records: Vec<MetricsRecord>,
    pub steps: usize,
    /// Parameter steps skipped by the `h` guard, summed over matrices.
    pub skipped: usize,
    pub final_train_loss: f64,
    pub final_test_acc: f64,
}

fn default_data_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.data_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("data").join(cfg.dataset.as_str()))
}

/// Loads or generates the configured dataset and applies the sample caps.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let (train_cap, test_cap) = cfg.sample_caps();
    let mut data = match cfg.dataset {
        DatasetKind::Mnist => load_mnist(&default_data_dir(cfg))?,
        DatasetKind::Cifar10 => load_cifar10(&default_data_dir(cfg))?,
        DatasetKind::TokenizedFile => load_tokenized(&default_data_dir(cfg), cfg.seq_len, cfg.embed_dim, cfg.data_seed)?,
        DatasetKind::SynthSeq => {
            let (n_train, n_test) = (train_cap.unwrap_or(4_000), test_cap.unwrap_or(1_000));
            let all = synth_sequence_dataset(&SynthSeqConfig {
                seed: cfg.data_seed,
                n: n_train + n_test,
                steps: cfg.seq_len,
                vocab: cfg.vocab,
                embed_dim: cfg.embed_dim,
            })?;
            split_generated(all, n_train)?
        }
        DatasetKind::SynthImage => {
            let (n_train, n_test) = (train_cap.unwrap_or(2_000), test_cap.unwrap_or(500));
            let shape = if cfg.model == Model::Cnn { (3, 32, 32) } else { (1, 28, 28) };
            let all = synth_image_dataset(cfg.data_seed, n_train + n_test, shape, 10, 0.5)?;
            split_generated(all, n_train)?
        }
    };
    if let Some(n) = train_cap {
        data.train.truncate(n);
    }
    if let Some(n) = test_cap {
        data.test.truncate(n);
    }
    if data.train.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    Ok(data)
}

fn split_generated(all: crate::data::Split, n_train: usize) -> Result<Dataset> {
    let n = all.len();
    let idx: Vec<usize> = (0..n).collect();
    let classes = all.labels.iter().max().map_or(2, |&m| m + 1).max(2);
    let (tr, te) = idx.split_at(n_train.min(n));
    let part = |ids: &[usize]| {
        let features = match all.batch(ids, false) {
            Input::Flat(x) => crate::data::Features::Flat(x),
            Input::Image(x) => crate::data::Features::Image(x),
            Input::Sequence(x) => crate::data::Features::Sequence(x),
        };
        crate::data::Split::new(features, all.labels_of(ids))
    };
    Ok(Dataset {
        train: part(tr)?,
        test: part(te)?,
        classes,
    })
}

fn output_activation(loss: LossMode) -> Activation {
    match loss {
        LossMode::Mse => Activation::Identity,
        LossMode::Xent => Activation::Softmax,
    }
}

/// The configured architecture for samples of `shape`.
pub fn build_network(cfg: &ExperimentConfig, shape: SampleShape, classes: usize, rng: &mut ChaCha8Rng) -> Result<Network> {
    let out = output_activation(cfg.loss);
    match (cfg.model, shape) {
        (Model::Fnn, SampleShape::Flat(n)) => Network::mlp(&[n, cfg.scaled(512), classes], Activation::Relu, out, rng),
        (Model::Fnn, SampleShape::Image(c, h, w)) => {
            Network::mlp(&[c * h * w, cfg.scaled(512), classes], Activation::Relu, out, rng)
        }
        (Model::Cnn, SampleShape::Image(c, h, w)) => {
            let s = |n| cfg.scaled(n);
            let blocks = vec![vec![s(64), s(64)], vec![s(128), s(128)], vec![s(256)]];
            Network::conv_net((c, h, w), &blocks, &[s(1024)], classes, out, rng)
        }
        (Model::Lstm | Model::Rnn, SampleShape::Sequence { dim, .. }) => {
            let hidden = [cfg.scaled(512), cfg.scaled(512)];
            Network::stacked_recurrent(dim, &hidden, classes, cfg.model == Model::Lstm, SequenceMode::Classification, out, rng)
        }
        (m, s) => Err(Error::config(format!("model {m} cannot take samples of shape {s:?}"))),
    }
}

fn eta_for(cfg: &ExperimentConfig, name: &str, is_output: bool) -> f64 {
    let layer = name.split('.').next().unwrap_or(name);
    cfg.eta_layers
        .get(name)
        .or_else(|| cfg.eta_layers.get(layer))
        .copied()
        .unwrap_or(if is_output { 1.0 } else { cfg.eta })
}

/// Optimizer assignment for every parameter matrix of `net`.
pub fn build_assignments(cfg: &ExperimentConfig, net: &Network) -> BTreeMap<String, Assignment> {
    let adam = AdamConfig { lr: cfg.lr.unwrap_or(AdamConfig::default().lr), ..Default::default() };
    net.param_info()
        .into_iter()
        .map(|p| {
            let rls = |improved: bool| Assignment::Rls {
                hp: RlsHyperparams {
                    lambda: cfg.lambda,
                    k: cfg.k,
                    eta: eta_for(cfg, &p.name, p.is_output),
                    alpha: if cfg.optimizer.momentum() { cfg.alpha } else { 0.0 },
                    gamma: if cfg.optimizer.regularized() { cfg.gamma() } else { 0.0 },
                },
                improved,
            };
            let a = match cfg.optimizer {
                OptimizerKind::Rls => rls(false),
                OptimizerKind::RlsMomentum | OptimizerKind::RlsRegularized | OptimizerKind::RlsMomentumRegularized => {
                    rls(true)
                }
                OptimizerKind::Sgd => Assignment::Sgd { lr: cfg.lr.unwrap_or(DEFAULT_SGD_LR) },
                OptimizerKind::Adam => Assignment::Adam(adam),
                OptimizerKind::Hybrid if p.is_output => Assignment::Adam(adam),
                OptimizerKind::Hybrid => rls(false),
            };
            (p.name, a)
        })
        .collect()
}

fn target_for(cfg: &ExperimentConfig, labels: Vec<usize>, classes: usize) -> Target {
    match cfg.loss {
        LossMode::Mse => Target::Linear(vec![one_hot(&labels, classes)]),
        LossMode::Xent => Target::Classes(vec![labels]),
    }
}

/// Fraction of `split` classified correctly.
pub fn accuracy(net: &Network, split: &crate::data::Split, flatten: bool) -> Result<f64> {
    if split.is_empty() {
        return Ok(f64::NAN);
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..split.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let pred = net.predict(&split.batch(chunk, flatten))?;
        correct += pred.iter().zip(chunk).filter(|(p, &i)| **p == split.labels[i]).count();
    }
    Ok(correct as f64 / split.len() as f64)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    run_on_dataset(cfg, &data)
}

/// Runs the training loop on an already-loaded dataset. Each epoch visits a
/// fresh shuffle of the training split in minibatches (the last one may be
/// short) and appends one metrics row.
pub fn run_on_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let shape = data.train.sample_shape();
    let steps_per_sample = match shape {
        SampleShape::Sequence { steps, .. } => steps,
        _ => 1,
    };
    let flatten = cfg.model == Model::Fnn;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(2);

    let net = build_network(cfg, shape, data.classes, &mut init_rng)?;
    let plan = hybrid_assign(&net, &build_assignments(cfg, &net), steps_per_sample)?;
    let mut trainer = Trainer::new(net, plan, cfg.clip_norm());
    info!(
        "{} / {} / {}: {} parameters, {} train, {} test",
        cfg.model,
        cfg.dataset,
        cfg.optimizer,
        trainer.net.parameter_count(),
        data.train.len(),
        data.test.len()
    );

    let start = Instant::now();
    let wall = |start: &Instant| if cfg.wall_time { start.elapsed().as_millis() as u64 } else { 0 };
    let mut records = Vec::new();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut step = 0usize;
    let mut skipped = 0usize;
    let mut last_loss = f64::NAN;
    let mut last_acc = f64::NAN;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let input = data.train.batch(chunk, flatten);
            let target = target_for(cfg, data.train.labels_of(chunk), data.classes);
            let out = trainer.step(&input, &target).map_err(|e| match e {
                Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}, step {}: {msg}", step + 1)),
                other => other,
            })?;
            step += 1;
            let n_skipped = out.report.skipped.iter().filter(|&&s| s).count();
            if n_skipped > 0 {
                warn!("step {step}: {n_skipped} parameter updates skipped");
            }
            skipped += n_skipped;
            loss_sum += out.loss * chunk.len() as f64;
            if cfg.per_step {
                records.push(MetricsRecord {
                    epoch,
                    step,
                    train_loss: out.loss,
                    test_acc: f64::NAN,
                    wall_ms: wall(&start),
                });
            }
        }
        last_loss = loss_sum / data.train.len() as f64;
        last_acc = accuracy(&trainer.net, &data.test, flatten)?;
        info!("epoch {epoch}: train loss {last_loss:.6}, test accuracy {last_acc:.4}");
        records.push(MetricsRecord {
            epoch,
            step,
            train_loss: last_loss,
            test_acc: last_acc,
            wall_ms: wall(&start),
        });
    }
    Ok(ExperimentSummary {
        records,
        steps: step,
        skipped,
        final_train_loss: last_loss,
        final_test_acc: last_acc,
    })
}
