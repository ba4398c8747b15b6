use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::sgd_step;
use crate::error::{Error, Result};
use crate::layers::{AugmentedParams, ParamKind};
use crate::linalg::Matrix;
use crate::rls::{rls_step, RlsHyperparams, RlsLayerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchLayer {
    Fc,
    Conv,
    Recur,
    Lstm,
}

impl fmt::Display for BenchLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchLayer::Fc => "fc",
            BenchLayer::Conv => "conv",
            BenchLayer::Recur => "recur",
            BenchLayer::Lstm => "lstm",
        })
    }
}

impl FromStr for BenchLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fc" => Ok(BenchLayer::Fc),
            "conv" => Ok(BenchLayer::Conv),
            "recur" => Ok(BenchLayer::Recur),
            "lstm" => Ok(BenchLayer::Lstm),
            _ => Err(Error::config(format!("unknown bench layer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub layer: BenchLayer,
    /// `N_{l−1}`, or input channels `C_{l−1}` for CONV.
    pub fan_in: usize,
    /// `N_l`, or output channels `C_l` for CONV.
    pub outputs: usize,
    pub batch: usize,
    /// Sequence length `T` for RECUR/LSTM.
    pub steps: usize,
    /// Output height and width `U = V` for CONV.
    pub spatial: usize,
    /// Kernel height and width for CONV.
    pub kernel: usize,
    pub reps: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(layer: BenchLayer) -> Self {
        let (fan_in, outputs) = match layer {
            BenchLayer::Fc => (512, 512),
            BenchLayer::Conv => (64, 64),
            BenchLayer::Recur | BenchLayer::Lstm => (128, 128),
        };
        Self {
            layer,
            fan_in,
            outputs,
            batch: 128,
            steps: 8,
            spatial: 8,
            kernel: 3,
            reps: 20,
            seed: 0,
        }
    }

    /// RLS/SGD time ratio from the leading-order operation counts.
    pub fn predicted_ratio(&self) -> f64 {
        let (n0, n1, m, t) = (self.fan_in as f64, self.outputs as f64, self.batch as f64, self.steps as f64);
        match self.layer {
            BenchLayer::Fc => 1.0 + n0 / m,
            BenchLayer::Conv => {
                let c_hat = n0 * (self.kernel * self.kernel) as f64;
                let uv = (self.spatial * self.spatial) as f64;
                1.0 + c_hat / (m * uv)
            }
            BenchLayer::Recur | BenchLayer::Lstm => 1.0 + (n0 * n0 + n1 * n1) / ((n0 + n1) * m * t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub sgd_ms: f64,
    pub rls_ms: f64,
    pub ratio: f64,
    pub predicted: f64,
}

/// One parameter matrix's per-step workload: augmented inputs and output
/// gradients for every contributing position.
struct Workload {
    x: Vec<Matrix>,
    dz: Vec<Matrix>,
    theta: AugmentedParams,
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), augmented: bool) -> Matrix {
    let mut x = Matrix::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0));
    if augmented {
        x.column_mut(shape.1 - 1).fill(1.0);
    }
    x
}

fn workloads(cfg: &BenchConfig) -> Vec<Workload> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n0, n1, m, t) = (cfg.fan_in, cfg.outputs, cfg.batch, cfg.steps);
    let mut make = |rows: usize, fan_in: usize, outs: usize, times: usize, kind: ParamKind| {
        let x = (0..times).map(|_| uniform(&mut rng, (rows, fan_in + 1), true)).collect();
        let dz = (0..times).map(|_| uniform(&mut rng, (rows, outs), false)).collect();
        let theta = AugmentedParams::uniform(fan_in, outs, kind, &mut rng);
        Workload { x, dz, theta }
    };
    match cfg.layer {
        BenchLayer::Fc => vec![make(m, n0, n1, 1, ParamKind::Fc)],
        BenchLayer::Conv => {
            let rows = m * cfg.spatial * cfg.spatial;
            vec![make(rows, n0 * cfg.kernel * cfg.kernel, n1, 1, ParamKind::Conv)]
        }
        BenchLayer::Recur => vec![
            make(m, n0, n1, t, ParamKind::RecurW),
            make(m, n1, n1, t, ParamKind::RecurV),
        ],
        BenchLayer::Lstm => vec![
            make(m, n0, 4 * n1, t, ParamKind::LstmW),
            make(m, n1, 4 * n1, t, ParamKind::LstmV),
        ],
    }
}

fn gradient(w: &Workload) -> Matrix {
    let mut g = Matrix::zeros(w.theta.theta.dim());
    for (x, dz) in w.x.iter().zip(&w.dz) {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), dz, 1.0, &mut g);
    }
    g
}

fn x_bar(w: &Workload) -> crate::linalg::Vector {
    let rows: usize = w.x.iter().map(|x| x.nrows()).sum();
    w.x.iter().fold(crate::linalg::Vector::zeros(w.x[0].ncols()), |acc, x| acc + x.sum_axis(ndarray::Axis(0)))
        / rows as f64
}

/// Times one optimizer step of a single layer: gradient assembly plus the
/// SGD or RLS parameter update. Returns the best of three rounds of `reps`
/// steps, in milliseconds per step.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.fan_in == 0 || cfg.outputs == 0 || cfg.batch == 0 || cfg.steps == 0 || cfg.spatial == 0 || cfg.reps == 0 {
        return Err(Error::config(format!("bench sizes must be >= 1: {cfg:?}")));
    }
    let mut work = workloads(cfg);
    let t_factor = match cfg.layer {
        BenchLayer::Recur | BenchLayer::Lstm => cfg.steps as f64,
        _ => 1.0,
    };
    let mut states: Vec<RlsLayerState> = work
        .iter()
        .map(|w| RlsLayerState::new(w.theta.theta.dim(), t_factor))
        .collect();
    let hp = RlsHyperparams::default();

    let sgd = |work: &mut [Workload]| -> Result<()> {
        for w in work.iter_mut() {
            let g = gradient(w);
            sgd_step(&mut w.theta.theta, &g, 1e-3)?;
        }
        Ok(())
    };
    let rls = |work: &mut [Workload], states: &mut [RlsLayerState]| -> Result<()> {
        for (w, st) in work.iter_mut().zip(states.iter_mut()) {
            let g = gradient(w);
            let xb = x_bar(w);
            rls_step(&mut w.theta, st, &g, &xb, &hp)?;
        }
        Ok(())
    };

    sgd(&mut work)?;
    rls(&mut work, &mut states)?;
    let mut best_sgd = f64::INFINITY;
    let mut best_rls = f64::INFINITY;
    for _ in 0..3 {
        let t = Instant::now();
        for _ in 0..cfg.reps {
            sgd(&mut work)?;
        }
        best_sgd = best_sgd.min(t.elapsed().as_secs_f64() * 1e3 / cfg.reps as f64);
        let t = Instant::now();
        for _ in 0..cfg.reps {
            rls(&mut work, &mut states)?;
        }
        best_rls = best_rls.min(t.elapsed().as_secs_f64() * 1e3 / cfg.reps as f64);
    }
    Ok(BenchReport {
        config: *cfg,
        sgd_ms: best_sgd,
        rls_ms: best_rls,
        ratio: best_rls / best_sgd,
        predicted: cfg.predicted_ratio(),
    })
}
