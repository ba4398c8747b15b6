use std::path::Path;

use crate::error::{Error, Result};

use super::{Dataset, Embedding, Features, Split};

struct Parsed {
    seqs: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

fn parse(path: &Path) -> Result<Parsed> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seqs = Vec::new();
    let mut labels = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len() as u64;
        let mut fields = line.split_whitespace();
        let Some(label) = fields.next() else { continue };
        let bad = |what: &str, tok: &str| Error::Format {
            path: path.to_path_buf(),
            offset: start,
            reason: format!("{what} {tok:?} is not a non-negative integer"),
        };
        labels.push(label.parse().map_err(|_| bad("label", label))?);
        let seq = fields
            .map(|t| t.parse().map_err(|_| bad("token", t)))
            .collect::<Result<Vec<usize>>>()?;
        seqs.push(seq);
    }
    Ok(Parsed { seqs, labels })
}

/// Keeps the last `steps` tokens and left-pads shorter sequences with
/// zero vectors.
fn to_steps(seqs: &[Vec<usize>], steps: usize) -> Vec<Vec<Option<usize>>> {
    seqs.iter()
        .map(|s| {
            let tail = &s[s.len().saturating_sub(steps)..];
            let mut v = vec![None; steps - tail.len()];
            v.extend(tail.iter().map(|&t| Some(t)));
            v
        })
        .collect()
}

/// Reads `train.txt` and `test.txt`, one `label tok tok …` line per sample
/// with integer token ids, and embeds tokens with a fixed random projection.
/// Test tokens outside the training vocabulary embed to zero.
pub fn load_tokenized(dir: &Path, steps: usize, embed_dim: usize, seed: u64) -> Result<Dataset> {
    if steps == 0 || embed_dim == 0 {
        return Err(Error::config("sequence length and embedding dimension must be >= 1"));
    }
    let train = parse(&dir.join("train.txt"))?;
    let test = parse(&dir.join("test.txt"))?;
    if train.labels.is_empty() {
        return Err(Error::Input(format!("{} has no samples", dir.join("train.txt").display())));
    }
    let vocab = train.seqs.iter().flatten().max().map_or(1, |&m| m + 1);
    let classes = train.labels.iter().chain(&test.labels).max().map_or(0, |&m| m + 1).max(2);
    let emb = Embedding::random(vocab, embed_dim, seed);
    let split = |p: Parsed| {
        Split::new(Features::Sequence(emb.embed(&to_steps(&p.seqs, steps), steps)), p.labels)
    };
    Ok(Dataset {
        train: split(train)?,
        test: split(test)?,
        classes,
    })
}
