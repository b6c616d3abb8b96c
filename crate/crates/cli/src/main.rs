mod bench;
mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use matchkit::datagen::{generate_dataset, read_dataset, write_dataset, DataConfig, ThresholdMetric};
use matchkit::mechanisms::Mechanism;
use matchkit::metrics::wilcoxon_one_sided;
use matchkit::par::Exec;
use matchkit::train::{evaluate, optimal_sets, recovery, train_with_progress, write_loss_curve, Checkpoint, TrainConfig};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "matchkit", version, about = "Learn and verify strategy-proof two-sided matching mechanisms")]
struct Cli {
    /// Worker threads for record-level loops (defaults to all cores).
    #[arg(long, global = true, env = "MATCHKIT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a JSONL dataset of markets and example matchings.
    GenData(GenDataArgs),
    /// Train a ranking network on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint against the random serial dictatorship baseline.
    Eval(EvalArgs),
    /// Run the property oracles on random small markets.
    Verify(VerifyArgs),
    /// Measure how often checkpoints recover an optimal ranking on 3x3 markets.
    Recover(RecoverArgs),
    /// Time the matching pipeline at increasing market sizes.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MechanismArg {
    Da,
    Eh,
    Mh,
    Rsd,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Da => Mechanism::Da,
            MechanismArg::Eh => Mechanism::Eh,
            MechanismArg::Mh => Mechanism::Mh,
            MechanismArg::Rsd => Mechanism::Rsd,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DistanceArg {
    Euclidean,
    Squared,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Number of workers.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Number of firms.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Number of records.
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Mechanism that produces the example matchings.
    #[arg(long, value_enum, default_value = "da")]
    mechanism: MechanismArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Acceptability threshold on context distance.
    #[arg(long, default_value_t = 8.0)]
    t: f64,
    /// Context dimension.
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Distance compared against the threshold.
    #[arg(long, value_enum, default_value = "euclidean")]
    distance: DistanceArg,
    /// Output path; a `.gz` suffix compresses it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training dataset.
    #[arg(long)]
    data: PathBuf,
    /// Epochs (default 5, or 10 when n >= 40).
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    /// SoftSort temperature.
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    /// Attention embedding width.
    #[arg(long, default_value_t = 10)]
    d_emb: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Maximum L1 norm of the gradient.
    #[arg(long, default_value_t = 10.0)]
    clip_l1: f64,
    /// Weight of the stability regulariser.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path. The loss curve goes to `<out>.loss.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Baseline {
    Rsd,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Test dataset.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "rsd")]
    baseline: Baseline,
    /// Seed of the baseline's random rankings.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-record metrics CSV. Also writes `<out>.summary.json` and
    /// `<out>.wilcoxon.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: verify::Suite,
    /// Random markets per suite.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RecoverArgs {
    /// Checkpoint of one training run; repeat for several runs.
    #[arg(long, required = true)]
    ckpt: Vec<PathBuf>,
    /// Test dataset of 3x3 markets.
    #[arg(long)]
    data: PathBuf,
    /// Baseline seed of the first run; later runs add their index.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-record CSV. Also writes `<out>.summary.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "tsd")]
    op: bench::Op,
    /// Market sizes (n = m).
    #[arg(long, value_delimiter = ',', default_value = "20,40,80")]
    sizes: Vec<usize>,
    /// Timed repetitions per size; the median is reported.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Marks a run whose checks completed but did not all hold.
#[derive(Debug)]
struct VerificationFailed(String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Logs the resolved configuration and writes it next to `artifact`.
fn echo_config(artifact: &Path, config: &serde_json::Value) -> Result<()> {
    eprintln!("config: {config}");
    write_json(&sidecar(artifact, ".config.json"), config)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn gen_data(a: &GenDataArgs, exec: Exec) -> Result<()> {
    let cfg = DataConfig {
        n: a.n,
        m: a.m,
        count: a.count,
        mechanism: a.mechanism.into(),
        seed: a.seed,
        t: a.t,
        d: a.d,
        metric: match a.distance {
            DistanceArg::Euclidean => ThresholdMetric::Euclidean,
            DistanceArg::Squared => ThresholdMetric::SquaredEuclidean,
        },
    };
    echo_config(&a.out, &json!({ "command": "gen-data", "data": cfg }))?;
    let ds = generate_dataset(&cfg, exec)?;
    write_dataset(&a.out, &ds).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} records to {}", ds.records.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs, exec: Exec) -> Result<()> {
    let ds = read_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let cfg = TrainConfig {
        epochs: a.epochs.unwrap_or(if ds.n() >= 40 { 10 } else { 5 }),
        batch_size: a.batch_size,
        learning_rate: a.lr,
        tau: a.tau,
        d_emb: a.d_emb,
        clip_l1_max: a.clip_l1,
        lambda_stability: a.lambda,
        seed: a.seed,
        ..TrainConfig::default()
    };
    echo_config(&a.out, &json!({ "command": "train", "data": a.data, "train": cfg }))?;
    let ck = train_with_progress(&ds, &cfg, exec, |epoch, loss| eprintln!("epoch {epoch}: mean loss {loss:.6}"))?;
    ck.save(&a.out)?;
    write_loss_curve(&sidecar(&a.out, ".loss.csv"), &ck.loss_curve)?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn eval_cmd(a: &EvalArgs, exec: Exec) -> Result<()> {
    let ck = Checkpoint::load(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let ds = read_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    echo_config(
        &a.out,
        &json!({ "command": "eval", "ckpt": a.ckpt, "data": a.data, "baseline": "rsd", "seed": a.seed }),
    )?;
    let ev = evaluate(&ck.params, &ds, a.seed, exec)?;
    ev.write_rows_csv(&a.out)?;
    ev.write_comparisons_csv(&sidecar(&a.out, ".wilcoxon.csv"))?;
    write_json(&sidecar(&a.out, ".summary.json"), &ev.summary_json())?;
    for c in &ev.comparisons {
        let p = c.p_value.map_or_else(|| c.note.clone().unwrap_or_default(), |p| format!("p = {p:.4e}"));
        println!("{:<4} {}: {p}", c.metric.name(), c.alternative);
    }
    Ok(())
}

fn recover_cmd(a: &RecoverArgs, exec: Exec) -> Result<()> {
    let ds = read_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    if (ds.n(), ds.m()) != (3, 3) {
        bail!("recovery needs a 3x3 dataset, got {}x{}", ds.n(), ds.m());
    }
    echo_config(&a.out, &json!({ "command": "recover", "ckpt": a.ckpt, "data": a.data, "seed": a.seed }))?;
    let sets = optimal_sets(&ds, exec)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record([
        "run",
        "record_id",
        "optimal_set_size",
        "rankings_searched",
        "best_distance",
        "neuralsd_hit",
        "rsd_hit",
        "rsd_expected",
    ])?;
    let (mut nsd, mut rsd, mut runs) = (Vec::new(), Vec::new(), Vec::new());
    for (k, path) in a.ckpt.iter().enumerate() {
        let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
        let rep = recovery(&ck.params, &ds, &sets, a.seed + k as u64)?;
        for r in &rep.rows {
            w.write_record([
                k.to_string(),
                r.record_id.to_string(),
                r.optimal_set_size.to_string(),
                r.rankings_searched.to_string(),
                r.best_distance.to_string(),
                r.neuralsd_hit.to_string(),
                r.rsd_hit.to_string(),
                r.rsd_expected.to_string(),
            ])?;
        }
        println!("run {k}: neuralsd {:.4}, rsd {:.4} (uniform expectation {:.4})", rep.neuralsd_rate, rep.rsd_rate, rep.rsd_expected_rate);
        nsd.push(rep.neuralsd_rate);
        rsd.push(rep.rsd_rate);
        runs.push(json!({ "ckpt": path, "neuralsd_rate": rep.neuralsd_rate, "rsd_rate": rep.rsd_rate,
                          "rsd_expected_rate": rep.rsd_expected_rate }));
    }
    w.flush()?;
    let test = match wilcoxon_one_sided(&rsd, &nsd) {
        Ok(t) => {
            println!("rsd < neuralsd across {} runs: p = {:.4e}", nsd.len(), t.p_value);
            json!(t)
        }
        Err(e) => {
            println!("no test across runs: {e}");
            json!({ "note": e.to_string() })
        }
    };
    write_json(&sidecar(&a.out, ".summary.json"), &json!({ "runs": runs, "wilcoxon": test }))
}

fn configure_threads(threads: Option<usize>) -> Result<Exec> {
    match threads {
        Some(1) => Ok(Exec::Sequential),
        Some(_t) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new().num_threads(_t).build_global()?;
            Ok(Exec::available())
        }
        None => Ok(Exec::available()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = configure_threads(cli.threads)?;
    match &cli.command {
        Command::GenData(a) => gen_data(a, exec),
        Command::Train(a) => train_cmd(a, exec),
        Command::Eval(a) => eval_cmd(a, exec),
        Command::Verify(a) => {
            let failures = verify::run(a.suite, a.trials, a.seed)?;
            if failures > 0 {
                return Err(VerificationFailed(format!("{failures} suite(s) failed")).into());
            }
            Ok(())
        }
        Command::Recover(a) => recover_cmd(a, exec),
        Command::Bench(a) => bench::run(a.op, &a.sizes, a.reps, a.seed, a.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if matches!(cli.threads, Some(0)) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<VerificationFailed>() => {
            eprintln!("verification failed: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
