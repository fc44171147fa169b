//! End-to-end comparison runs: for every target class and seed, draw a
//! balanced one-vs-all split, train the network, extract rules with the
//! decompositional and black-box methods, and score everything on the
//! test split.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binarize::{balance_one_vs_all, BitPlane};
use crate::bnn::{BnnArchitecture, BnnModel, Shape, TrainParams};
use crate::convrules::{reduce_visualization, term_to_image, ConvRule};
use crate::datasets::{self, split_indices, synthetic_set, DatasetKind, DitheredSet, LabeledImageSet, SplitTag, SyntheticSpec};
use crate::error::{Error, Result};
use crate::extraction::{blackbox_train, dcdl_train, BlackBoxMode, DcdlModel, ExtractionParams, LayerApprox};
use crate::metrics::{accuracy, corrected_resampled_ttest, similarity, RunScores, ALPHA};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sls::SlsParams;

/// Methods in report order.
pub const METHODS: [&str; 4] = ["nn", "dcdl", "bb_prediction", "bb_label"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassSelection {
    Named(String),
    One(usize),
    List(Vec<usize>),
}

impl ClassSelection {
    pub fn resolve(&self, class_count: usize) -> Result<Vec<usize>> {
        let classes = match self {
            ClassSelection::Named(s) if s == "all" => (0..class_count).collect(),
            ClassSelection::Named(s) => return Err(Error::Config(format!("classes = \"{s}\"; use \"all\", a number or a list"))),
            ClassSelection::One(c) => vec![*c],
            ClassSelection::List(v) => v.clone(),
        };
        if classes.is_empty() {
            return Err(Error::Config("no target classes".into()));
        }
        if let Some(c) = classes.iter().find(|&&c| c >= class_count) {
            return Err(Error::Config(format!("class {c} out of range for {class_count} classes")));
        }
        Ok(classes)
    }
}

/// Search settings shared by every extraction; `k` lives at the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlsSection {
    pub max_iteration: usize,
    pub p_g1: f64,
    pub p_g2: f64,
    pub p_s: f64,
    pub batch_size: usize,
    pub restart_after: usize,
    pub max_windows: usize,
    pub max_validation_windows: usize,
}

impl Default for SlsSection {
    fn default() -> Self {
        let s = SlsParams::default();
        let e = ExtractionParams::default();
        SlsSection {
            max_iteration: s.max_iteration,
            p_g1: s.p_g1,
            p_g2: s.p_g2,
            p_s: s.p_s,
            batch_size: s.batch_size,
            restart_after: s.restart_after,
            max_windows: e.max_windows,
            max_validation_windows: e.max_validation_windows,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub class_count: usize,
    pub width: usize,
    pub height: usize,
    pub flip: f64,
    pub prototype_seed: u64,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        SyntheticSection {
            class_count: s.class_count,
            width: s.width,
            height: s.height,
            flip: s.flip,
            prototype_seed: s.prototype_seed,
            train_count: 3000,
            test_count: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// `"all"`, one class, or a list.
    pub classes: ClassSelection,
    pub seeds: Vec<u64>,
    /// Balanced training sample per run.
    pub train_size: usize,
    /// Images split off the raw training data for early stopping and
    /// rule validation.
    pub holdout_pool: usize,
    /// Balanced sample drawn from the holdout pool.
    pub holdout_size: usize,
    /// Balanced sample of the raw test data.
    pub test_size: usize,
    pub k: usize,
    pub visualization_k: usize,
    /// Also train the single-filter visualization network per class and
    /// render its rule.
    pub visualize: bool,
    pub jobs: usize,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub sls: SlsSection,
    pub nn: TrainParams,
    pub synthetic: SyntheticSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Mnist,
            classes: ClassSelection::Named("all".into()),
            seeds: vec![0, 1, 2],
            train_size: 10_000,
            holdout_pool: 5_000,
            holdout_size: 800,
            test_size: 1_600,
            k: 40,
            visualization_k: 150,
            visualize: false,
            jobs: 1,
            data_dir: None,
            out_dir: PathBuf::from("dcdl-out"),
            sls: SlsSection::default(),
            nn: TrainParams::default(),
            synthetic: SyntheticSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn class_count(&self) -> usize {
        match self.dataset {
            DatasetKind::Synthetic => self.synthetic.class_count,
            _ => 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 || self.visualization_k == 0 {
            return bad("k must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.train_size < 2 || self.test_size < 2 {
            return bad("train and test sizes must be at least 2");
        }
        if self.holdout_size > 0 && self.holdout_pool == 0 {
            return bad("a holdout sample needs a holdout pool");
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if self.sls.max_windows == 0 {
            return bad("max_windows must be at least 1");
        }
        self.classes.resolve(self.class_count())?;
        self.sls_params(self.k).validate().map_err(|e| Error::Config(e.to_string()))?;
        self.nn.validate()?;
        if self.dataset == DatasetKind::Synthetic {
            let s = &self.synthetic;
            if s.width < 4 || s.height < 4 || !(0.0..=1.0).contains(&s.flip) {
                return bad("synthetic images need at least 4x4 pixels and a flip probability");
            }
        }
        Ok(())
    }

    pub fn sls_params(&self, k: usize) -> SlsParams {
        SlsParams {
            k,
            max_iteration: self.sls.max_iteration,
            p_g1: self.sls.p_g1,
            p_g2: self.sls.p_g2,
            p_s: self.sls.p_s,
            batch_size: self.sls.batch_size,
            restart_after: self.sls.restart_after,
            ..SlsParams::default()
        }
    }

    pub fn extraction_params(&self, k: usize, seed: u64) -> ExtractionParams {
        ExtractionParams {
            sls: self.sls_params(k).with_seed(seed),
            max_windows: self.sls.max_windows,
            max_validation_windows: self.sls.max_validation_windows,
        }
    }

    pub fn resolved_data_dir(&self) -> Result<PathBuf> {
        self.data_dir
            .clone()
            .or_else(datasets::data_dir)
            .ok_or_else(|| Error::Config(format!("no data directory: set data_dir or {}", datasets::DATA_DIR_ENV)))
    }
}

/// Dithered raw train and test data, shared read-only by all runs.
pub struct PreparedData {
    pub train: DitheredSet,
    pub test: DitheredSet,
}

/// Raw `(train, test)` images of the configured dataset.
pub fn load_raw(cfg: &ExperimentConfig) -> Result<(LabeledImageSet, LabeledImageSet)> {
    match cfg.dataset {
        DatasetKind::Synthetic => {
            let s = &cfg.synthetic;
            let spec = SyntheticSpec {
                class_count: s.class_count,
                width: s.width,
                height: s.height,
                flip: s.flip,
                prototype_seed: s.prototype_seed,
            };
            Ok((
                synthetic_set(&spec, s.train_count, derive_seed(s.prototype_seed, &[1]), SplitTag::Train)?,
                synthetic_set(&spec, s.test_count, derive_seed(s.prototype_seed, &[2]), SplitTag::Test)?,
            ))
        }
        kind => datasets::load_standard(kind, &cfg.resolved_data_dir()?),
    }
}

impl PreparedData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let (train, test) = load_raw(cfg)?;
        Ok(PreparedData {
            train: train.dither(),
            test: test.dither(),
        })
    }

    pub fn input_shape(&self) -> Result<Shape> {
        self.train
            .planes
            .first()
            .map(BitPlane::shape)
            .ok_or_else(|| Error::contract("empty training data"))
    }
}

/// Balanced planes with one-vs-all labels.
#[derive(Clone, Debug, Default)]
pub struct Sample {
    pub planes: Vec<BitPlane>,
    pub labels: Vec<bool>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }
}

fn balanced(set: &DitheredSet, pool: &[usize], class: usize, size: usize, rng: &mut crate::rng::DcdlRng) -> Result<Sample> {
    if size == 0 {
        return Ok(Sample::default());
    }
    let labels: Vec<usize> = pool.iter().map(|&i| set.labels[i]).collect();
    let picks = balance_one_vs_all(&labels, set.class_count, class, size, rng)?;
    let (planes, labels) = picks.iter().map(|&(j, is_target)| (set.planes[pool[j]].clone(), is_target)).unzip();
    Ok(Sample { planes, labels })
}

/// Seed of one pipeline stage of the run for `(class, seed)`.
pub fn stage_seed(seed: u64, class: usize, stage: Stage) -> u64 {
    derive_seed(seed, &[class as u64, stage as u64])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    TrainSample = 0,
    Network = 1,
    Dcdl = 2,
    BlackBoxPrediction = 3,
    BlackBoxLabel = 4,
    TestSample = 5,
    VisualNetwork = 6,
    VisualRules = 7,
}

/// Splits the holdout pool off the raw training data and draws the
/// balanced training and holdout samples.
pub fn draw_train(set: &DitheredSet, cfg: &ExperimentConfig, class: usize, seed: u64) -> Result<(Sample, Sample)> {
    let mut rng = rng_from_seed(stage_seed(seed, class, Stage::TrainSample));
    let (pool, hold_pool) = split_indices(set.len(), cfg.holdout_pool, &mut rng)?;
    let train = balanced(set, &pool, class, cfg.train_size, &mut rng)?;
    let holdout = balanced(set, &hold_pool, class, cfg.holdout_size, &mut rng)?;
    Ok((train, holdout))
}

pub fn draw_test(set: &DitheredSet, cfg: &ExperimentConfig, class: usize, seed: u64) -> Result<Sample> {
    let mut rng = rng_from_seed(stage_seed(seed, class, Stage::TestSample));
    let all: Vec<usize> = (0..set.len()).collect();
    balanced(set, &all, class, cfg.test_size, &mut rng)
}

pub fn train_network(cfg: &ExperimentConfig, arch: BnnArchitecture, train: &Sample, holdout: &Sample, seed: u64) -> Result<BnnModel> {
    let mut nn = BnnModel::new(arch, cfg.nn.clone(), seed);
    let report = nn.train(&train.planes, &train.labels, &holdout.planes, &holdout.labels)?;
    log::info!("network trained: {} epochs, best {}", report.epochs_run, report.best_epoch);
    Ok(nn)
}

pub fn extract_blackbox(
    cfg: &ExperimentConfig,
    nn: &BnnModel,
    mode: BlackBoxMode,
    train: &Sample,
    holdout: &Sample,
    seed: u64,
) -> Result<ConvRule> {
    let labels = mode.labels(nn, &train.planes, &train.labels)?;
    let val = mode.labels(nn, &holdout.planes, &holdout.labels)?;
    let res = blackbox_train(&train.planes, &labels, &holdout.planes, &val, &cfg.sls_params(cfg.k).with_seed(seed))?;
    let (c, h, w) = nn.arch.input;
    ConvRule::new(res.formula, h, w, c, 1)
}

/// Prediction of an image-sized rule on whole images.
pub fn rule_predict(rule: &ConvRule, planes: &[BitPlane]) -> Result<Vec<bool>> {
    planes.iter().map(|p| rule.formula.eval(p.as_instance())).collect()
}

/// Models of one run.
pub struct RunModels {
    pub nn: BnnModel,
    pub dcdl: DcdlModel,
    pub bb_prediction: ConvRule,
    pub bb_label: ConvRule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodScore {
    pub method: String,
    pub similarity: f64,
    pub accuracy: f64,
}

/// Scores every prediction list against the network and the truth.
pub fn score_methods<S: AsRef<str>>(preds: &[(S, Vec<bool>)], nn_pred: &[bool], truth: &[bool]) -> Result<Vec<MethodScore>> {
    preds
        .iter()
        .map(|(method, p)| {
            Ok(MethodScore {
                method: method.as_ref().to_string(),
                similarity: similarity(p, nn_pred)?,
                accuracy: accuracy(p, truth)?,
            })
        })
        .collect()
}

pub struct RunOutcome {
    pub class: usize,
    pub seed: u64,
    pub scores: Vec<MethodScore>,
    pub models: RunModels,
    pub n_train: usize,
    pub n_test: usize,
}

pub fn run_single(cfg: &ExperimentConfig, data: &PreparedData, class: usize, seed: u64) -> Result<RunOutcome> {
    let (train, holdout) = draw_train(&data.train, cfg, class, seed)?;
    let test = draw_test(&data.test, cfg, class, seed)?;
    let arch = BnnArchitecture::standard(data.input_shape()?)?;
    let nn = train_network(cfg, arch, &train, &holdout, stage_seed(seed, class, Stage::Network))?;
    let params = cfg.extraction_params(cfg.k, stage_seed(seed, class, Stage::Dcdl));
    let dcdl = dcdl_train(&nn, &train.planes, &holdout.planes, &params)?.model;
    log::info!("class {class} seed {seed}: decompositional rules extracted");
    let bb_prediction = extract_blackbox(
        cfg,
        &nn,
        BlackBoxMode::NnPrediction,
        &train,
        &holdout,
        stage_seed(seed, class, Stage::BlackBoxPrediction),
    )?;
    let bb_label = extract_blackbox(cfg, &nn, BlackBoxMode::TrueLabel, &train, &holdout, stage_seed(seed, class, Stage::BlackBoxLabel))?;
    log::info!("class {class} seed {seed}: black-box rules extracted");

    let nn_pred = nn.predict_batch(&test.planes)?;
    let preds = [
        ("nn", nn_pred.clone()),
        ("dcdl", dcdl.predict_batch(&test.planes)?),
        ("bb_prediction", rule_predict(&bb_prediction, &test.planes)?),
        ("bb_label", rule_predict(&bb_label, &test.planes)?),
    ];
    Ok(RunOutcome {
        class,
        seed,
        scores: score_methods(&preds, &nn_pred, &test.labels)?,
        models: RunModels {
            nn,
            dcdl,
            bb_prediction,
            bb_label,
        },
        n_train: train.len(),
        n_test: test.len(),
    })
}

pub struct ExperimentOutcome {
    pub runs: Vec<RunOutcome>,
    pub failures: Vec<(usize, u64, String)>,
    pub csv: String,
    pub report: String,
}

pub fn csv_rows(runs: &[RunOutcome]) -> String {
    let mut s = String::from("run_id,class,seed,method,similarity,accuracy\n");
    for (id, run) in runs.iter().enumerate() {
        for m in &run.scores {
            let _ = writeln!(s, "{id},{},{},{},{:.6},{:.6}", run.class, run.seed, m.method, m.similarity, m.accuracy);
        }
    }
    s
}

fn method_scores(runs: &[RunOutcome], method: &str, pick: fn(&MethodScore) -> f64) -> RunScores {
    RunScores {
        values: runs
            .iter()
            .map(|r| r.scores.iter().find(|m| m.method == method).map_or(f64::NAN, pick))
            .collect(),
        n_train: runs.first().map_or(0, |r| r.n_train),
        n_test: runs.first().map_or(0, |r| r.n_test),
    }
}

/// Pairwise p-values, row method vs column method; `*` marks p < alpha.
pub fn pvalue_table(runs: &[RunOutcome], methods: &[&str], pick: fn(&MethodScore) -> f64) -> String {
    let mut s = format!("{:<14}", "");
    for m in methods {
        let _ = write!(s, "{m:>15}");
    }
    s.push('\n');
    for a in methods {
        let _ = write!(s, "{a:<14}");
        for b in methods {
            let cell = if a == b {
                "-".to_string()
            } else {
                match corrected_resampled_ttest(&method_scores(runs, a, pick), &method_scores(runs, b, pick)) {
                    Ok(t) => format!("{:.4}{}", t.p, if t.significant(ALPHA) { "*" } else { " " }),
                    Err(_) => "n/a".to_string(),
                }
            };
            let _ = write!(s, "{cell:>15}");
        }
        s.push('\n');
    }
    s
}

pub fn render_report(cfg: &ExperimentConfig, runs: &[RunOutcome], failures: &[(usize, u64, String)]) -> String {
    // out_dir is left out so the report depends only on what shapes the results
    let mut table = toml::Table::try_from(cfg).expect("config serializes");
    table.remove("out_dir");
    let mut s = String::from("# configuration\n");
    s.push_str(&toml::to_string(&table).expect("config serializes"));
    let (n_train, n_test) = runs.first().map_or((0, 0), |r| (r.n_train, r.n_test));
    let _ = writeln!(s, "\n# runs: {} completed, {} failed; n_train = {n_train}, n_test = {n_test}\n", runs.len(), failures.len());
    for (class, seed, err) in failures {
        let _ = writeln!(s, "failed: class {class} seed {seed}: {err}");
    }
    let _ = writeln!(s, "\n# mean over runs\n{:<14}{:>12}{:>12}", "method", "similarity", "accuracy");
    for m in METHODS {
        let mean = |pick: fn(&MethodScore) -> f64| {
            let v = method_scores(runs, m, pick).values;
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        let _ = writeln!(s, "{m:<14}{:>12.4}{:>12.4}", mean(|x| x.similarity), mean(|x| x.accuracy));
    }
    let _ = writeln!(s, "\n# accuracy: corrected resampled t-test p-values (* = significant at alpha {ALPHA})");
    s.push_str(&pvalue_table(runs, &METHODS, |x| x.accuracy));
    let _ = writeln!(s, "\n# similarity to the network: corrected resampled t-test p-values");
    s.push_str(&pvalue_table(runs, &METHODS[1..], |x| x.similarity));
    s
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn save_run(dir: &Path, run: &RunOutcome) -> Result<()> {
    let d = dir.join(format!("class{}_seed{}", run.class, run.seed));
    create_dir(&d)?;
    run.models.nn.save(&d.join("nn.json"))?;
    run.models.dcdl.save(&d.join("dcdl.txt"))?;
    write(&d.join("bb_prediction.txt"), run.models.bb_prediction.to_string())?;
    write(&d.join("bb_label.txt"), run.models.bb_label.to_string())
}

/// Renders every term of a rule and its reduced image into `dir` as files
/// named `<prefix>_term<i>[_ch<c>].<ext>` and `<prefix>_reduced[_ch<c>].<ext>`;
/// `ext` is `png` or `pgm`.
pub fn render_rule(rule: &ConvRule, dir: &Path, prefix: &str, ext: &str) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    let suffix = |c: usize| if rule.fc > 1 { format!("_ch{c}") } else { String::new() };
    for (t, term) in rule.formula.terms().iter().enumerate() {
        for (c, img) in term_to_image(term, rule.fh, rule.fw, rule.fc)?.iter().enumerate() {
            let p = dir.join(format!("{prefix}_term{t}{}.{ext}", suffix(c)));
            img.save(&p)?;
            written.push(p);
        }
    }
    for (c, img) in reduce_visualization(rule).iter().enumerate() {
        let p = dir.join(format!("{prefix}_reduced{}.{ext}", suffix(c)));
        img.save(&p)?;
        written.push(p);
    }
    Ok(written)
}

/// Trains the single image-sized filter network for `class` and extracts
/// its rule with `visualization_k` terms.
pub fn visualization_rule(cfg: &ExperimentConfig, data: &PreparedData, class: usize, seed: u64) -> Result<ConvRule> {
    let (train, holdout) = draw_train(&data.train, cfg, class, seed)?;
    let arch = BnnArchitecture::visualization(data.input_shape()?)?;
    let nn = train_network(cfg, arch, &train, &holdout, stage_seed(seed, class, Stage::VisualNetwork))?;
    let params = cfg.extraction_params(cfg.visualization_k, stage_seed(seed, class, Stage::VisualRules));
    match dcdl_train(&nn, &train.planes, &holdout.planes, &params)?.model.layers.into_iter().next() {
        Some(LayerApprox::Conv(mut rules)) => Ok(rules.remove(0)),
        _ => Err(Error::contract("visualization network has no convolution")),
    }
}

/// Runs every class x seed combination, writes `results.csv`,
/// `report.txt` and the models below `out_dir`. A failing run is reported
/// and skipped; configuration and data errors abort before any run starts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = PreparedData::load(cfg)?;
    let classes = cfg.classes.resolve(data.train.class_count.max(cfg.class_count()))?;
    let jobs: Vec<(usize, u64)> = classes.iter().flat_map(|&c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunOutcome>> = pool.install(|| jobs.par_iter().map(|&(c, s)| run_single(cfg, &data, c, s)).collect());

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for ((c, s), r) in jobs.iter().zip(results) {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                log::warn!("class {c} seed {s} failed: {e}");
                failures.push((*c, *s, e.to_string()));
            }
        }
    }
    let csv = csv_rows(&runs);
    let report = render_report(cfg, &runs, &failures);
    create_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("results.csv"), &csv)?;
    write(&cfg.out_dir.join("report.txt"), &report)?;
    let models = cfg.out_dir.join("models");
    for run in &runs {
        save_run(&models, run)?;
    }
    if cfg.visualize {
        let seed = cfg.seeds[0];
        let rules: Vec<Result<ConvRule>> = pool.install(|| classes.par_iter().map(|&c| visualization_rule(cfg, &data, c, seed)).collect());
        let vis = cfg.out_dir.join("visual");
        create_dir(&vis)?;
        for (c, rule) in classes.iter().zip(rules) {
            match rule {
                Ok(rule) => {
                    write(&vis.join(format!("class{c}_rule.txt")), rule.to_string())?;
                    render_rule(&rule, &vis, &format!("class{c}"), "png")?;
                }
                Err(e) => log::warn!("visualization of class {c} failed: {e}"),
            }
        }
    }
    Ok(ExperimentOutcome {
        runs,
        failures,
        csv,
        report,
    })
}
