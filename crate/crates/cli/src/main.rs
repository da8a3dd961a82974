use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::LazyLock;

use clap::{Args, Parser, Subcommand, ValueEnum};
use novarl_core::policy::PolicyParams;
use novarl_core::toytask::{generate_dataset, read_problems, write_problems, GenerationLimits, Mode, Vocabulary};
use novarl_core::trainer::{evaluate, exploration_diagnostic, read_log, train_with, TrainConfig, TrainOptions};
use novarl_core::{rng, Error};

static CONFIG_KEYS: LazyLock<String> = LazyLock::new(|| {
    let keys = TrainConfig::default_keys();
    let width = keys.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut text = String::from("Config keys (set in the file or with --set section.key=value):\n");
    for (k, v) in keys {
        text.push_str(&format!("  {k:width$}  {v}\n"));
    }
    text
});

#[derive(Parser)]
#[command(name = "novarl", version, about = "Novelty-driven exploration for policy-gradient training on arithmetic puzzles")]
#[command(after_help = CONFIG_KEYS.as_str())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of solvable problems as JSONL.
    GenData(GenData),
    /// Train a policy; writes metrics.jsonl and step_N checkpoints.
    #[command(after_help = CONFIG_KEYS.as_str())]
    Train(Train),
    /// Evaluate a checkpoint and print pass@1, pass@k and avg@k as JSON.
    Eval(Eval),
    /// Compare predictor-loss decay across metric logs.
    Analyze(Analyze),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Countdown34,
    Countdown4,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum, default_value = "countdown34")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write this many further problems, disjoint from the first file.
    #[arg(long, requires = "test_out")]
    test_count: Option<usize>,
    #[arg(long, requires = "test_count")]
    test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    max_operand: i64,
    #[arg(long, default_value_t = 100)]
    max_target: i64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct Train {
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set policy.lr=0.001 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// run.imagine
    #[arg(long, value_enum)]
    imagine: Option<Switch>,
    /// explore.alpha
    #[arg(long)]
    alpha: Option<f64>,
    /// run.seed
    #[arg(long)]
    seed: Option<u64>,
    /// run.steps
    #[arg(long)]
    steps: Option<u64>,
    /// data.train
    #[arg(long)]
    train: Option<PathBuf>,
    /// data.test
    #[arg(long)]
    test: Option<PathBuf>,
    /// data.out_dir
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct Eval {
    /// Checkpoint directory holding policy.ckpt and config.toml.
    #[arg(long)]
    ckpt: PathBuf,
    /// Samples per problem; defaults to run.eval_k of the checkpoint config.
    #[arg(long)]
    k: Option<usize>,
    /// Problems to evaluate on; defaults to data.test of the checkpoint config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sampling seed; defaults to run.seed of the checkpoint config.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the JSON object to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Analyze {
    /// Metric logs (JSONL), at least two.
    #[arg(required = true, num_args = 2..)]
    logs: Vec<PathBuf>,
    /// Labels for the logs, in order; defaults to the parent directory name.
    #[arg(long = "label")]
    labels: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_config(args: &Train) -> Result<TrainConfig, Error> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_toml(&read(path)?)?,
        None => TrainConfig::default(),
    };
    for s in &args.sets {
        config.set(s)?;
    }
    if let Some(v) = args.imagine {
        config.run.imagine = matches!(v, Switch::On);
    }
    if let Some(v) = args.alpha {
        config.explore.alpha = v;
    }
    if let Some(v) = args.seed {
        config.run.seed = v;
    }
    if let Some(v) = args.steps {
        config.run.steps = v;
    }
    if let Some(v) = &args.train {
        config.data.train = Some(v.clone());
    }
    if let Some(v) = &args.test {
        config.data.test = Some(v.clone());
    }
    if let Some(v) = &args.out_dir {
        config.data.out_dir = Some(v.clone());
    }
    config.validate()?;
    Ok(config)
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, Error> {
    value.as_deref().ok_or_else(|| Error::Config {
        key: key.to_string(),
        reason: "required for training".to_string(),
    })
}

fn gen_data(args: &GenData) -> Result<(), Error> {
    let mode = match args.mode {
        ModeArg::Countdown34 => Mode::Countdown34,
        ModeArg::Countdown4 => Mode::Countdown4,
    };
    let limits = GenerationLimits {
        max_operand: args.max_operand,
        max_target: args.max_target,
        ..GenerationLimits::default()
    };
    let extra = args.test_count.unwrap_or(0);
    let mut problems = generate_dataset(args.seed, args.count + extra, mode, &limits)?;
    let test = problems.split_off(args.count);
    write_problems(&args.out, &problems)?;
    log::info!("wrote {} problems to {}", problems.len(), args.out.display());
    if let Some(path) = &args.test_out {
        write_problems(path, &test)?;
        log::info!("wrote {} problems to {}", test.len(), path.display());
    }
    Ok(())
}

fn train(args: &Train) -> Result<(), Error> {
    let config = resolve_config(args)?;
    if args.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let train_set = read_problems(required(&config.data.train, "data.train")?)?;
    let test_set = read_problems(required(&config.data.test, "data.test")?)?;
    log::info!(
        "training {:?} (imagine {}) on {} problems for {} steps",
        config.run.algo,
        config.run.imagine,
        train_set.len(),
        config.run.steps
    );
    let opts = TrainOptions {
        out_dir: config.data.out_dir.clone(),
        ..Default::default()
    };
    let out = train_with(&config, &train_set, &test_set, opts)?;
    if let Some(row) = out.log.iter().rev().find(|r| r.eval_accuracy.is_some()) {
        log::info!("final eval accuracy {:.4}", row.eval_accuracy.unwrap_or_default());
    }
    Ok(())
}

fn eval(args: &Eval) -> Result<(), Error> {
    let config = TrainConfig::from_toml(&read(&args.ckpt.join("config.toml"))?)?;
    let params = PolicyParams::load(&args.ckpt.join("policy.ckpt"))?;
    let k = args.k.unwrap_or(config.run.eval_k);
    if k == 0 {
        return Err(Error::Config {
            key: "k".into(),
            reason: "must be at least 1".into(),
        });
    }
    let problems = match &args.data {
        Some(p) => read_problems(p)?,
        // the same subset the trainer evaluated on
        None => {
            let mut all = read_problems(required(&config.data.test, "data.test")?)?;
            if config.run.eval_problems > 0 {
                all.truncate(config.run.eval_problems);
            }
            all
        }
    };
    let seed = args.seed.unwrap_or(config.run.seed);
    let gen = config.generation(rng::derive(seed, &[rng::tag::EVAL]));
    let metrics = evaluate(&params.compile(), &problems, &gen, k, &Vocabulary::standard());
    let text = serde_json::to_string(&metrics.to_json()).expect("metrics serialize");
    if let Some(path) = &args.out {
        write(path, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn analyze(args: &Analyze) -> Result<(), Error> {
    if !args.labels.is_empty() && args.labels.len() != args.logs.len() {
        return Err(Error::Config {
            key: "label".into(),
            reason: format!("{} labels for {} logs", args.labels.len(), args.logs.len()),
        });
    }
    let mut logs = Vec::new();
    for (i, path) in args.logs.iter().enumerate() {
        let label = args.labels.get(i).cloned().unwrap_or_else(|| {
            path.parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string())
        });
        logs.push((label, read_log(path)?));
    }
    let report = exploration_diagnostic(&logs)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = &args.out {
        write(path, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        Error::Config { .. } => 3,
        Error::NonFinite { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors exit 1 so that 2 always means a missing file
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
