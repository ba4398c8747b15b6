use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::Tensor4;
use crate::linalg::Matrix;

use super::{Features, Split};

/// Fixed random token embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: Matrix,
}

impl Embedding {
    pub fn random(vocab: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let scale = 1.0 / (dim as f64).sqrt();
        Self {
            table: Matrix::from_shape_fn((vocab, dim), |_| rng.gen_range(-1.0..1.0) * scale * 3f64.sqrt()),
        }
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    /// Time-major embedded sequences; `None` tokens embed to zero.
    pub fn embed(&self, sequences: &[Vec<Option<usize>>], steps: usize) -> Vec<Matrix> {
        let mut out = vec![Matrix::zeros((sequences.len(), self.dim())); steps];
        for (n, seq) in sequences.iter().enumerate() {
            for (t, tok) in seq.iter().enumerate().take(steps) {
                if let Some(tok) = tok.filter(|&v| v < self.table.nrows()) {
                    out[t].row_mut(n).assign(&self.table.row(tok));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSeqConfig {
    pub seed: u64,
    pub n: usize,
    pub steps: usize,
    pub vocab: usize,
    pub embed_dim: usize,
}

/// Majority-token sequences. Tokens below `vocab/2` are "positive"; the
/// label is 1 exactly when more than half of the `T` tokens are positive.
/// Returns the raw token ids alongside the labels.
pub fn synth_sequence_tokens(cfg: &SynthSeqConfig) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    if cfg.steps < 2 {
        return Err(Error::config(format!("sequence length {} must be >= 2", cfg.steps)));
    }
    if cfg.vocab < 2 {
        return Err(Error::config(format!("vocabulary {} must be >= 2", cfg.vocab)));
    }
    let t = cfg.steps;
    let half = cfg.vocab / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seqs = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    let mut positions: Vec<usize> = (0..t).collect();
    for _ in 0..cfg.n {
        let label = rng.gen_range(0..2usize);
        // Counts strictly above (label 1) or strictly below (label 0) T/2.
        let k = if label == 1 {
            rng.gen_range(t / 2 + 1..=t)
        } else {
            rng.gen_range(0..(t + 1) / 2)
        };
        positions.shuffle(&mut rng);
        let mut seq = vec![0; t];
        for (i, &pos) in positions.iter().enumerate() {
            seq[pos] = if i < k {
                rng.gen_range(0..half)
            } else {
                rng.gen_range(half..cfg.vocab)
            };
        }
        seqs.push(seq);
        labels.push(label);
    }
    Ok((seqs, labels))
}

pub fn synth_sequence_dataset(cfg: &SynthSeqConfig) -> Result<Split> {
    if cfg.embed_dim == 0 {
        return Err(Error::config("embedding dimension must be >= 1"));
    }
    let (seqs, labels) = synth_sequence_tokens(cfg)?;
    let emb = Embedding::random(cfg.vocab, cfg.embed_dim, cfg.seed);
    let wrapped: Vec<Vec<Option<usize>>> = seqs.iter().map(|s| s.iter().map(|&t| Some(t)).collect()).collect();
    Split::new(Features::Sequence(emb.embed(&wrapped, cfg.steps)), labels)
}

/// Noisy class prototypes: each class has a fixed random image and samples
/// add uniform noise of amplitude `noise`, clamped to `[0, 1]`.
pub fn synth_image_dataset(
    seed: u64,
    n: usize,
    shape: (usize, usize, usize),
    classes: usize,
    noise: f64,
) -> Result<Split> {
    if classes < 2 {
        return Err(Error::config("synthetic images need at least 2 classes"));
    }
    let (c, h, w) = shape;
    let mut proto_rng = ChaCha8Rng::seed_from_u64(seed);
    proto_rng.set_stream(1);
    let protos = Tensor4::from_shape_fn((classes, c, h, w), |_| proto_rng.gen_range(0.0..1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let x = Tensor4::from_shape_fn((n, c, h, w), |(i, ch, y, x)| {
        (protos[[labels[i], ch, y, x]] + noise * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0)
    });
    Split::new(Features::Image(x), labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64, n: usize, steps: usize) -> SynthSeqConfig {
        SynthSeqConfig { seed, n, steps, vocab: 10, embed_dim: 6 }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(synth_sequence_dataset(&cfg(3, 50, 6)).unwrap(), synth_sequence_dataset(&cfg(3, 50, 6)).unwrap());
        assert_ne!(synth_sequence_dataset(&cfg(3, 50, 6)).unwrap(), synth_sequence_dataset(&cfg(4, 50, 6)).unwrap());
    }

    #[test]
    fn majority_rule_labels_every_sample() {
        for steps in [2, 5, 8] {
            let (seqs, labels) = synth_sequence_tokens(&cfg(1, 500, steps)).unwrap();
            for (s, &l) in seqs.iter().zip(&labels) {
                let pos = s.iter().filter(|&&t| t < 5).count();
                assert_ne!(2 * pos, steps, "tie generated");
                assert_eq!(l, usize::from(2 * pos > steps));
            }
        }
    }

    #[test]
    fn labels_balanced() {
        let (_, labels) = synth_sequence_tokens(&cfg(0, 10000, 8)).unwrap();
        let frac = labels.iter().sum::<usize>() as f64 / 1e4;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn short_sequences_rejected() {
        assert!(matches!(synth_sequence_tokens(&cfg(0, 1, 1)), Err(Error::Config(_))));
    }

    #[test]
    fn embedding_pads_with_zero() {
        let e = Embedding::random(3, 2, 0);
        let x = e.embed(&[vec![None, Some(2)]], 2);
        assert_eq!(x[0].row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(x[1].row(0), e.table.row(2));
    }

    #[test]
    fn synthetic_images_in_range() {
        let s = synth_image_dataset(1, 20, (1, 4, 4), 3, 0.3).unwrap();
        let Features::Image(x) = &s.features else { panic!() };
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(s.labels.iter().all(|&l| l < 3));
    }
}
