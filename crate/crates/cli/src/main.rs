//! `dcdl`: dither image data, train the binary network, extract
//! decompositional and black-box rules, evaluate and visualize them.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcdl::bnn::{BnnArchitecture, BnnModel};
use dcdl::boolcore::parse_formula;
use dcdl::convrules::ConvRule;
use dcdl::datasets::{load_cifar10, load_idx, read_container, write_container, DatasetKind, DATA_DIR_ENV};
use dcdl::experiment::{
    self, draw_test, draw_train, extract_blackbox, render_rule, rule_predict, score_methods, stage_seed, train_network,
    ExperimentConfig, Stage,
};
use dcdl::extraction::{dcdl_train, BlackBoxMode, DcdlModel, LayerApprox};
use dcdl::Error;

#[derive(Parser)]
#[command(name = "dcdl", version, about = "Rule extraction from binary-activation convolutional networks")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Experiment configuration (TOML); flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use this single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of terms per extracted rule.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Parallel class x seed runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Dither a dataset split into a packed bit-plane file.
    Dither(DitherArgs),
    /// Train the binary network for one class against the rest.
    TrainNn(TrainArgs),
    /// Extract layer-wise rules from a trained network.
    ExtractDcdl(ExtractArgs),
    /// Extract one rule over whole images from network outputs or labels.
    ExtractBlackbox(BlackBoxArgs),
    /// Score a network and rule models on a balanced test sample.
    Evaluate(EvaluateArgs),
    /// Render rules as ternary term images and reduced images.
    Visualize(VisualizeArgs),
    /// Run the full comparison for every configured class and seed.
    RunExperiment,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Args)]
struct DitherArgs {
    /// Dataset below the data directory, or `synthetic` for the generator.
    #[arg(long, value_enum, conflicts_with_all = ["images", "cifar"])]
    dataset: Option<Dataset>,
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
    /// IDX image file.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// CIFAR-10 binary batch files.
    #[arg(long, num_args = 1.., conflicts_with = "images")]
    cifar: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    Mnist,
    Fashion,
    Cifar10,
    Synthetic,
}

impl From<Dataset> for DatasetKind {
    fn from(d: Dataset) -> Self {
        match d {
            Dataset::Mnist => DatasetKind::Mnist,
            Dataset::Fashion => DatasetKind::Fashion,
            Dataset::Cifar10 => DatasetKind::Cifar10,
            Dataset::Synthetic => DatasetKind::Synthetic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Standard,
    Visualization,
}

#[derive(Args)]
struct TrainArgs {
    /// Dithered training data from `dither`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    class: usize,
    #[arg(long, value_enum, default_value = "standard")]
    arch: Arch,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    class: usize,
    /// Network from `train-nn`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Learn the network's predictions.
    Prediction,
    /// Learn the true labels.
    Label,
}

#[derive(Args)]
struct BlackBoxArgs {
    #[command(flatten)]
    common: ExtractArgs,
    #[arg(long, value_enum, default_value = "prediction")]
    mode: Mode,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dithered test data from `dither`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    class: usize,
    #[arg(long)]
    model: PathBuf,
    /// Layer-wise rule model from `extract-dcdl`.
    #[arg(long)]
    dcdl: Option<PathBuf>,
    /// Image-sized rules from `extract-blackbox`.
    #[arg(long)]
    rule: Vec<PathBuf>,
}

#[derive(Args)]
struct VisualizeArgs {
    /// Rule file, rule model, bare formula file, or experiment directory.
    input: PathBuf,
    /// Window of a bare formula as HxW or HxWxC.
    #[arg(long)]
    window: Option<String>,
    #[arg(long, value_enum, default_value = "png")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Png,
    Pgm,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Png => "png",
            Format::Pgm => "pgm",
        }
    }
}

/// A failure together with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 1,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::TruncatedRecord { .. }
            | Error::InsufficientClass { .. }
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::Json(_) => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config(g: &GlobalArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
    }
    if let Some(k) = g.k {
        cfg.k = k;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if g.data_dir.is_some() {
        cfg.data_dir = g.data_dir.clone();
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(g: &GlobalArgs) -> CliResult<&Path> {
    g.out.as_deref().ok_or_else(|| usage("--out is required for this command"))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn dither(g: &GlobalArgs, a: &DitherArgs) -> CliResult<()> {
    let out = out_path(g)?;
    let set = if let (Some(images), Some(labels)) = (&a.images, &a.labels) {
        load_idx(images, labels)?
    } else if !a.cifar.is_empty() {
        load_cifar10(&a.cifar)?
    } else {
        let dataset = a.dataset.ok_or_else(|| usage("give --dataset, --images/--labels or --cifar"))?;
        let mut cfg = config(g)?;
        cfg.dataset = dataset.into();
        let (train, test) = experiment::load_raw(&cfg)?;
        match a.split {
            Split::Train => train,
            Split::Test => test,
        }
    };
    let dithered = set.dither();
    write_container(out, &dithered)?;
    println!("{} images dithered into {}", dithered.len(), out.display());
    Ok(())
}

fn train_nn(g: &GlobalArgs, a: &TrainArgs) -> CliResult<()> {
    let cfg = config(g)?;
    let out = out_path(g)?;
    let data = read_container(&a.data)?;
    let seed = cfg.seeds[0];
    let (train, holdout) = draw_train(&data, &cfg, a.class, seed)?;
    let shape = train.planes.first().ok_or_else(|| usage("no training images"))?.shape();
    let (arch, stage) = match a.arch {
        Arch::Standard => (BnnArchitecture::standard(shape)?, Stage::Network),
        Arch::Visualization => (BnnArchitecture::visualization(shape)?, Stage::VisualNetwork),
    };
    let nn = train_network(&cfg, arch, &train, &holdout, stage_seed(seed, a.class, stage))?;
    nn.save(out)?;
    let pred = nn.predict_batch(&train.planes)?;
    println!(
        "trained on {} images, training accuracy {:.4}; saved {}",
        train.len(),
        dcdl::metrics::accuracy(&pred, &train.labels)?,
        out.display()
    );
    Ok(())
}

fn extract_dcdl(g: &GlobalArgs, a: &ExtractArgs) -> CliResult<()> {
    let cfg = config(g)?;
    let out = out_path(g)?;
    let data = read_container(&a.data)?;
    let nn = BnnModel::load(&a.model)?;
    let seed = cfg.seeds[0];
    let (train, holdout) = draw_train(&data, &cfg, a.class, seed)?;
    let params = cfg.extraction_params(cfg.k, stage_seed(seed, a.class, Stage::Dcdl));
    let ex = dcdl_train(&nn, &train.planes, &holdout.planes, &params)?;
    ex.model.save(out)?;
    for f in &ex.fits {
        println!(
            "layer {} filter {}: training score {}, validation score {}",
            f.layer, f.filter, f.train_score, f.validation_score
        );
    }
    println!("saved {}", out.display());
    Ok(())
}

fn extract_bb(g: &GlobalArgs, a: &BlackBoxArgs) -> CliResult<()> {
    let cfg = config(g)?;
    let out = out_path(g)?;
    let data = read_container(&a.common.data)?;
    let nn = BnnModel::load(&a.common.model)?;
    let seed = cfg.seeds[0];
    let class = a.common.class;
    let (train, holdout) = draw_train(&data, &cfg, class, seed)?;
    let (mode, stage) = match a.mode {
        Mode::Prediction => (BlackBoxMode::NnPrediction, Stage::BlackBoxPrediction),
        Mode::Label => (BlackBoxMode::TrueLabel, Stage::BlackBoxLabel),
    };
    let rule = extract_blackbox(&cfg, &nn, mode, &train, &holdout, stage_seed(seed, class, stage))?;
    write_text(out, &rule.to_string())?;
    println!("saved {}", out.display());
    Ok(())
}

fn read_rule(path: &Path) -> CliResult<ConvRule> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    ConvRule::parse(&text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn evaluate(g: &GlobalArgs, a: &EvaluateArgs) -> CliResult<()> {
    let cfg = config(g)?;
    let data = read_container(&a.data)?;
    let nn = BnnModel::load(&a.model)?;
    let test = draw_test(&data, &cfg, a.class, cfg.seeds[0])?;
    let nn_pred = nn.predict_batch(&test.planes)?;
    let mut preds = vec![("nn".to_string(), nn_pred.clone())];
    if let Some(p) = &a.dcdl {
        preds.push(("dcdl".to_string(), DcdlModel::load(p)?.predict_batch(&test.planes)?));
    }
    for p in &a.rule {
        preds.push((stem(p), rule_predict(&read_rule(p)?, &test.planes)?));
    }
    let mut csv = String::from("method,similarity,accuracy\n");
    for s in score_methods(&preds, &nn_pred, &test.labels)? {
        csv.push_str(&format!("{},{:.6},{:.6}\n", s.method, s.similarity, s.accuracy));
    }
    print!("{csv}");
    if let Some(out) = &g.out {
        write_text(out, &csv)?;
    }
    Ok(())
}

fn parse_window(text: &str) -> CliResult<(usize, usize, usize)> {
    let parts: Vec<usize> = text
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("bad --window {text:?}; expected HxW or HxWxC")))?;
    match parts[..] {
        [h, w] if h > 0 && w > 0 => Ok((h, w, 1)),
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok((h, w, c)),
        _ => Err(usage(format!("bad --window {text:?}; expected HxW or HxWxC"))),
    }
}

/// Rules held by one file, each with the file-name prefix of its images.
fn rules_in_file(path: &Path, prefix: &str, window: Option<&str>) -> CliResult<Vec<(String, ConvRule)>> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    let named = |e: Error| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    };
    let first = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    if first.starts_with("dcdl") {
        let model = DcdlModel::parse(&text).map_err(named)?;
        let mut rules = Vec::new();
        for (li, layer) in model.layers.iter().enumerate() {
            if let LayerApprox::Conv(rs) = layer {
                for (f, r) in rs.iter().enumerate() {
                    rules.push((format!("{prefix}_layer{li}_filter{f}"), r.clone()));
                }
            }
        }
        Ok(rules)
    } else if first.starts_with("conv") {
        Ok(vec![(prefix.to_string(), ConvRule::parse(&text).map_err(named)?)])
    } else {
        let window = window.ok_or_else(|| usage(format!("{} holds a bare formula; give --window", path.display())))?;
        let (h, w, c) = parse_window(window)?;
        let formula = parse_formula(text.trim(), h * w * c).map_err(named)?;
        Ok(vec![(prefix.to_string(), ConvRule::new(formula, h, w, c, 1).map_err(named)?)])
    }
}

fn rule_files(dir: &Path) -> Vec<PathBuf> {
    walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt") && p.file_name().is_some_and(|n| n != "report.txt"))
        .collect()
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn visualize(g: &GlobalArgs, a: &VisualizeArgs) -> CliResult<()> {
    let out = out_path(g)?;
    let sources: Vec<(PathBuf, String)> = if a.input.is_dir() {
        rule_files(&a.input)
            .into_iter()
            .map(|p| {
                let parent = p.parent().map(stem).unwrap_or_default();
                let prefix = if parent.starts_with("class") { format!("{parent}_{}", stem(&p)) } else { stem(&p) };
                (p, prefix)
            })
            .collect()
    } else {
        vec![(a.input.clone(), stem(&a.input))]
    };
    let mut count = 0;
    for (path, prefix) in &sources {
        for (name, rule) in rules_in_file(path, prefix, a.window.as_deref())? {
            count += render_rule(&rule, out, &name, a.format.ext())?.len();
        }
    }
    println!("{count} images written to {}", out.display());
    Ok(())
}

fn run_experiment(g: &GlobalArgs) -> CliResult<()> {
    let cfg = config(g)?;
    let outcome = experiment::run_experiment(&cfg)?;
    print!("{}", outcome.csv);
    println!(
        "{} runs completed, {} failed; report in {}",
        outcome.runs.len(),
        outcome.failures.len(),
        cfg.out_dir.join("report.txt").display()
    );
    if outcome.runs.is_empty() {
        return Err(Failure {
            code: 3,
            message: "every run failed".into(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Dither(a) => dither(g, a),
        Command::TrainNn(a) => train_nn(g, a),
        Command::ExtractDcdl(a) => extract_dcdl(g, a),
        Command::ExtractBlackbox(a) => extract_bb(g, a),
        Command::Evaluate(a) => evaluate(g, a),
        Command::Visualize(a) => visualize(g, a),
        Command::RunExperiment => run_experiment(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
