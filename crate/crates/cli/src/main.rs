use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use rlsnet::gradcheck::{gradient_check, Family, REL_TOLERANCE};
use rlsnet::harness::{emit_metrics, run_bench, run_experiment, write_metrics, BenchConfig, BenchLayer, ExperimentConfig};
use rlsnet::Error;

#[derive(Parser)]
#[command(name = "rlsnet", version, about = "Recursive-least-squares training for deep networks")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write per-epoch metrics.
    Train(TrainArgs),
    /// Compare backpropagated gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Time one RLS and one SGD step of a single layer.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fnn, cnn, lstm or rnn.
    #[arg(long)]
    model: Option<String>,
    /// mnist, cifar10, synth-seq, synth-image or tokenized-file.
    #[arg(long)]
    dataset: Option<String>,
    /// rls, rls+m, rls+r, rls+mr, sgd, adam or hybrid.
    #[arg(long)]
    optimizer: Option<String>,
    /// mse or xent.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Gradient scaling factor of the hidden layers.
    #[arg(long)]
    eta: Option<String>,
    /// Per-layer scaling factor, `NAME=F`; repeatable.
    #[arg(long, value_name = "NAME=F")]
    eta_layer: Vec<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long)]
    clip: Option<String>,
    /// Learning rate of SGD and Adam layers.
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    /// Training samples to use.
    #[arg(long)]
    subset: Option<String>,
    /// Test samples to use.
    #[arg(long)]
    test_subset: Option<String>,
    /// Use every sample of MNIST or CIFAR-10.
    #[arg(long)]
    full_data: bool,
    #[arg(long)]
    data_dir: Option<String>,
    /// Multiplier on every hidden width.
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    seq_len: Option<String>,
    #[arg(long)]
    vocab: Option<String>,
    #[arg(long)]
    embed_dim: Option<String>,
    /// Also write one row per optimizer step.
    #[arg(long)]
    per_step: bool,
    /// Write 0 in the wall_ms column.
    #[arg(long)]
    no_wall_time: bool,
    /// Metrics CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl TrainArgs {
    fn to_config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let options = [
            ("model", &self.model),
            ("dataset", &self.dataset),
            ("optimizer", &self.optimizer),
            ("loss", &self.loss),
            ("epochs", &self.epochs),
            ("batch-size", &self.batch_size),
            ("lambda", &self.lambda),
            ("k", &self.k),
            ("eta", &self.eta),
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("clip", &self.clip),
            ("lr", &self.lr),
            ("seed", &self.seed),
            ("data-seed", &self.data_seed),
            ("subset", &self.subset),
            ("test-subset", &self.test_subset),
            ("data-dir", &self.data_dir),
            ("width", &self.width),
            ("seq-len", &self.seq_len),
            ("vocab", &self.vocab),
            ("embed-dim", &self.embed_dim),
        ];
        for (key, value) in options {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for spec in &self.eta_layer {
            cfg.set("eta-layer", spec)?;
        }
        if self.full_data {
            cfg.full_data = true;
        }
        if self.per_step {
            cfg.per_step = true;
        }
        if self.no_wall_time {
            cfg.wall_time = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GradcheckArgs {
    /// fnn, cnn, rnn, lstm or all.
    #[arg(long, default_value = "all")]
    model: String,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// fc, conv, recur or lstm.
    #[arg(long)]
    layer: String,
    /// Input width, or input channels for conv.
    #[arg(long)]
    fan_in: Option<usize>,
    /// Output width, or output channels for conv.
    #[arg(long)]
    outputs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Sequence length for recur and lstm.
    #[arg(long)]
    steps: Option<usize>,
    /// Output height and width for conv.
    #[arg(long)]
    spatial: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn train(args: &TrainArgs) -> Result<(), Error> {
    let cfg = args.to_config()?;
    let summary = run_experiment(&cfg)?;
    match &args.out {
        Some(path) => {
            emit_metrics(&summary.records, path)?;
            eprintln!(
                "{} steps, final train loss {:.6}, test accuracy {:.4}, metrics in {}",
                summary.steps,
                summary.final_train_loss,
                summary.final_test_acc,
                path.display()
            );
        }
        None => write_metrics(&summary.records, std::io::stdout().lock())
            .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?,
    }
    Ok(())
}

fn gradcheck(args: &GradcheckArgs) -> Result<bool, Error> {
    let families: Vec<Family> = if args.model == "all" {
        Family::ALL.to_vec()
    } else {
        vec![args.model.parse()?]
    };
    let mut ok = true;
    for family in families {
        let mut worst = 0.0f64;
        for seed in args.seed..args.seed + args.seeds {
            let r = gradient_check(family, seed)?;
            worst = worst.max(r.max_rel_error);
        }
        let pass = worst <= REL_TOLERANCE;
        ok &= pass;
        println!(
            "{family}: seeds {}..{} max relative error {worst:.3e} ({})",
            args.seed,
            args.seed + args.seeds,
            if pass { "pass" } else { "FAIL" }
        );
    }
    Ok(ok)
}

fn bench(args: &BenchArgs) -> Result<(), Error> {
    let base = BenchConfig::new(args.layer.parse::<BenchLayer>()?);
    let cfg = BenchConfig {
        fan_in: args.fan_in.unwrap_or(base.fan_in),
        outputs: args.outputs.unwrap_or(base.outputs),
        batch: args.batch.unwrap_or(base.batch),
        steps: args.steps.unwrap_or(base.steps),
        spatial: args.spatial.unwrap_or(base.spatial),
        reps: args.reps.unwrap_or(base.reps),
        seed: args.seed,
        ..base
    };
    let r = run_bench(&cfg)?;
    println!(
        "layer={} fan_in={} outputs={} batch={} sgd_ms={:.4} rls_ms={:.4} ratio={:.3} predicted={:.3}",
        cfg.layer, cfg.fan_in, cfg.outputs, cfg.batch, r.sgd_ms, r.rls_ms, r.ratio, r.predicted
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Bench(a) => bench(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
