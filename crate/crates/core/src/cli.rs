//! Batch front end of the `mvkit` binary.
//!
//! ```text
//! mvkit <mvfs|mine|bne|mood|selftest> [--config FILE] [--seed N] [--out DIR] [--input PATH]
//! ```
//!
//! Settings resolve as flags over the JSON config file over defaults. Each
//! command writes `report.json` (schema 1, with the resolved config) and its
//! artifacts into the output directory. Reports carry no timestamps, so a
//! fixed seed gives byte-identical output.
//!
//! Exit codes: 0 success, 1 validation or input error (and failed self
//! checks), 2 convergence failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bne::{self, BneConfig, BneModel, GuidanceKernel};
use crate::dataio::synth::{
    synth_graph_corpus, synth_multiview, synth_planted_tensor, synth_sessions, GraphCorpusSpec, MultiviewRule,
    SessionSpec,
};
use crate::dataio::{self, LabelRule};
use crate::deepmood::{self, EpochMetrics, SessionDataset, TrainConfig};
use crate::error::{invalid, Error, Result};
use crate::mvfs::{self, MultiViewDataset, SelectionConfig};
use crate::numkit::kernel::KernelSpec;
use crate::numkit::metrics::{classification_metrics, ClassificationMetrics};
use crate::numkit::stiefel::feasibility_error;
use crate::numkit::svm::svm_train;
use crate::selftest::{self, CheckOutcome, Scale};
use crate::subgraph::{feature_matrix, gmsv_mine, GraphCorpus, MiningConfig, SideViewSet};
use crate::tensor::{PartiallySymmetricTensor3, Tensor3};
use crate::Matrix;

pub const REPORT_SCHEMA: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Parser, Debug)]
#[command(name = "mvkit", version, about = "Multi-view learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: CommandKind,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data synthesis, folds, subsampling and model initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "mvkit-out")]
    out: PathBuf,
    /// Input dataset; overrides the command's `input` setting.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    /// Multi-view feature selection with cross-validated accuracy.
    Mvfs,
    /// Side-view guided subgraph mining.
    Mine,
    /// Network embedding by partially symmetric factorization.
    Bne,
    /// Multi-view sequence classification.
    Mood,
    /// Oracle and property checks.
    Selftest,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Mvfs => "mvfs",
            CommandKind::Mine => "mine",
            CommandKind::Bne => "bne",
            CommandKind::Mood => "mood",
            CommandKind::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MvfsRun {
    /// Multi-view bundle directory; synthetic data when absent.
    pub input: Option<PathBuf>,
    pub selection: SelectionConfig,
    pub folds: usize,
    /// Subsample the majority class down to the minority size.
    pub balance: bool,
    pub synth_instances: usize,
    pub synth_dims: Vec<usize>,
}

impl Default for MvfsRun {
    fn default() -> Self {
        Self {
            input: None,
            selection: SelectionConfig::default(),
            folds: 3,
            balance: false,
            synth_instances: 50,
            synth_dims: vec![10, 10],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MineRun {
    /// Graph corpus directory; synthetic corpus when absent.
    pub input: Option<PathBuf>,
    /// Weighted edges below this are dropped when loading.
    pub edge_threshold: f64,
    pub mining: MiningConfig,
    pub folds: usize,
    pub balance: bool,
    /// SVM penalty of the downstream classifier.
    pub svm_c: f64,
    /// Also write `features.csv` with the pattern indicators.
    pub export_features: bool,
    pub synth_graphs: usize,
}

impl Default for MineRun {
    fn default() -> Self {
        Self {
            input: None,
            edge_threshold: 0.5,
            mining: MiningConfig::default(),
            folds: 3,
            balance: false,
            svm_c: 1.0,
            export_features: false,
            synth_graphs: 24,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BneRun {
    /// Network stack directory; when absent a synthetic stack is planted at
    /// the model rank.
    pub input: Option<PathBuf>,
    pub model: BneConfig,
    /// Kernel over side features for the guidance term.
    pub side_kernel: KernelSpec,
    pub folds: usize,
    pub synth_nodes: usize,
    pub synth_subjects: usize,
    pub synth_noise: f64,
}

impl Default for BneRun {
    fn default() -> Self {
        Self {
            input: None,
            model: BneConfig::default(),
            side_kernel: KernelSpec::Rbf,
            folds: 3,
            synth_nodes: 8,
            synth_subjects: 24,
            synth_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MoodRun {
    /// Session JSONL file; synthetic sessions when absent.
    pub input: Option<PathBuf>,
    pub label_rule: LabelRule,
    pub train: TrainConfig,
    /// One of this many stratified folds is held out for validation; 0
    /// trains on everything.
    pub validation_folds: usize,
    pub balance: bool,
    pub synth_sessions: usize,
    pub synth_dims: Vec<usize>,
}

impl Default for MoodRun {
    fn default() -> Self {
        Self {
            input: None,
            label_rule: LabelRule::Class,
            train: TrainConfig::default(),
            validation_folds: 5,
            balance: false,
            synth_sessions: 40,
            synth_dims: vec![2, 3],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SelftestRun {
    pub scale: Scale,
}

/// Configuration of every command. The top-level seed replaces the seeds
/// nested in module configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub mvfs: MvfsRun,
    pub mine: MineRun,
    pub bne: BneRun,
    pub mood: MoodRun,
    pub selftest: SelftestRun,
}

impl RunConfig {
    /// Defaults, overlaid by `file`, overlaid by the flags.
    pub fn resolve(command: CommandKind, file: Option<&Path>, seed: Option<u64>, input: Option<&Path>) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = dataio::read_to_string(path)?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.bne.model.seed = cfg.seed;
        cfg.mood.train.seed = cfg.seed;
        if let Some(p) = input {
            let slot = match command {
                CommandKind::Mvfs => &mut cfg.mvfs.input,
                CommandKind::Mine => &mut cfg.mine.input,
                CommandKind::Bne => &mut cfg.bne.input,
                CommandKind::Mood => &mut cfg.mood.input,
                CommandKind::Selftest => return invalid("selftest takes no input"),
            };
            *slot = Some(p.to_path_buf());
        }
        Ok(cfg)
    }
}

/// Result of a command that produced its outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Outputs were written but an optimizer stopped before converging.
    NotConverged,
    /// Self checks ran and at least one failed.
    ChecksFailed,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema: u32,
    command: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_report<T: Serialize>(out: &Path, command: CommandKind, cfg: &RunConfig, body: T) -> Result<()> {
    let report = Report {
        schema: REPORT_SCHEMA,
        command: command.name(),
        config: cfg,
        body,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    dataio::write_string(&out.join(REPORT_FILE), &text)
}

fn require_input(path: &Path) -> Result<()> {
    if !path.exists() {
        return invalid(format!("input not found: {}", path.display()));
    }
    Ok(())
}

fn source_name(input: &Option<PathBuf>) -> String {
    input.as_ref().map_or_else(|| "synthetic".to_string(), |p| p.display().to_string())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold index per item. Items are grouped by label; within a group they are
/// ordered by a seeded hash of their index and dealt round-robin, each group
/// starting where the previous one stopped.
pub fn stratified_folds(labels: &[f64], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > labels.len() {
        return invalid(format!("{k} folds for {} items; need 2 <= folds <= items", labels.len()));
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, y) in labels.iter().enumerate() {
        groups.entry(y.to_bits()).or_default().push(i);
    }
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for members in groups.values_mut() {
        members.sort_by_key(|&i| (splitmix(seed ^ splitmix(i as u64)), i));
        for &i in members.iter() {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

/// Indices kept after subsampling every class to the minority size,
/// ascending.
pub fn balanced_subsample(labels: &[f64], seed: u64) -> Vec<usize> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, y) in labels.iter().enumerate() {
        groups.entry(y.to_bits()).or_default().push(i);
    }
    let smallest = groups.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = groups
        .values()
        .flat_map(|g| {
            let mut picked: Vec<usize> = sample(&mut rng, g.len(), smallest).into_iter().map(|j| g[j]).collect();
            picked.sort_unstable();
            picked
        })
        .collect();
    keep.sort_unstable();
    keep
}

/// Runs `fit` for every fold on its own thread; results in fold order.
fn per_fold<T: Send>(
    folds: &[usize],
    k: usize,
    fit: impl Fn(usize, &[usize], &[usize]) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..k)
            .map(|f| {
                let fit = &fit;
                scope.spawn(move || {
                    let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
                    let test: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
                    fit(f, &train, &test)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fold worker panicked")).collect()
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, Serialize)]
struct FoldMetrics {
    fold: usize,
    train: usize,
    test: usize,
    #[serde(flatten)]
    metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, Serialize)]
struct CvSummary {
    folds: Vec<FoldMetrics>,
    mean_accuracy: f64,
    mean_precision: f64,
    mean_recall: f64,
    mean_f1: f64,
}

fn summarize(folds: Vec<FoldMetrics>) -> CvSummary {
    let n = folds.len() as f64;
    let mean = |f: fn(&ClassificationMetrics) -> f64| folds.iter().map(|m| f(&m.metrics)).sum::<f64>() / n;
    CvSummary {
        mean_accuracy: mean(|m| m.accuracy),
        mean_precision: mean(|m| m.precision),
        mean_recall: mean(|m| m.recall),
        mean_f1: mean(|m| m.f1),
        folds,
    }
}

#[derive(Serialize)]
struct ViewSelection<'a> {
    name: &'a str,
    features: usize,
    selected: &'a [usize],
    weights: &'a [f64],
    eliminated: &'a [usize],
}

#[derive(Serialize)]
struct MvfsBody<'a> {
    source: String,
    instances: usize,
    views: Vec<ViewSelection<'a>>,
    bias: f64,
    cross_validation: CvSummary,
}

pub fn cmd_mvfs(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let run = &cfg.mvfs;
    let mut ds = match &run.input {
        Some(dir) => {
            require_input(dir)?;
            dataio::load_multiview(dir)?
        }
        None => synth_multiview(cfg.seed, run.synth_instances, &run.synth_dims, MultiviewRule::default()),
    };
    if run.balance {
        ds = ds.subset(&balanced_subsample(&ds.labels, cfg.seed))?;
    }
    let state = mvfs::tmvfs_select(&ds, &run.selection)?;
    let folds = stratified_folds(&ds.labels, run.folds, cfg.seed)?;
    let cv = per_fold(&folds, run.folds, |f, train, test| {
        let tr: MultiViewDataset = ds.subset(train)?;
        let te = ds.subset(test)?;
        let st = mvfs::tmvfs_select(&tr, &run.selection)?;
        let pred = mvfs::predict(&st, &te)?;
        Ok(FoldMetrics {
            fold: f,
            train: train.len(),
            test: test.len(),
            metrics: classification_metrics(&pred, &te.labels)?,
        })
    })?;
    let cv = summarize(cv);
    println!(
        "mvfs: kept {:?} features per view, {}-fold accuracy {:.4}",
        state.selected.iter().map(Vec::len).collect::<Vec<_>>(),
        run.folds,
        cv.mean_accuracy
    );
    let views = (0..ds.n_views())
        .map(|v| ViewSelection {
            name: &ds.view_names[v],
            features: ds.views[v].nrows(),
            selected: &state.selected[v],
            weights: &state.weights[v],
            eliminated: &state.eliminated[v],
        })
        .collect();
    let body = MvfsBody {
        source: source_name(&run.input),
        instances: ds.n_instances(),
        views,
        bias: state.bias,
        cross_validation: cv,
    };
    write_report(out, CommandKind::Mvfs, cfg, body)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct PatternEntry<'a> {
    rank: usize,
    code: &'a crate::subgraph::DfsCode,
    q: f64,
    q_hat: f64,
    support: usize,
    /// One character per graph, `1` when the graph contains the pattern.
    indicator: String,
}

#[derive(Serialize)]
struct MineBody<'a> {
    source: String,
    graphs: usize,
    labeled: usize,
    patterns: Vec<PatternEntry<'a>>,
    nodes_visited: usize,
    subtrees_pruned: usize,
    cross_validation: Option<CvSummary>,
}

fn bits(f: &[bool]) -> String {
    f.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Mines on `corpus` with the test labels hidden, then fits a linear SVM on
/// the pattern indicators of the labeled training graphs.
fn mine_fold(corpus: &GraphCorpus, side: &SideViewSet, run: &MineRun, train: &[usize], test: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut hidden = corpus.clone();
    for &i in test {
        hidden.labels[i] = None;
    }
    let res = gmsv_mine(&hidden, side, &run.mining)?;
    let codes: Vec<_> = res.patterns.iter().map(|p| p.code.clone()).collect();
    let features = feature_matrix(&codes, &corpus.graphs)?;
    let row = |i: usize| -> Vec<f64> { features.iter().map(|f| if f[i] { 1.0 } else { 0.0 }).collect() };
    let x = Matrix::from_fn(train.len(), codes.len(), |r, c| if features[c][train[r]] { 1.0 } else { 0.0 });
    let y: Vec<f64> = train.iter().map(|&i| corpus.labels[i].expect("folds cover labeled graphs")).collect();
    let svm = svm_train(&x, &y, run.svm_c)?;
    let pred = test
        .iter()
        .map(|&i| if svm.decision(&row(i)) >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    let actual = test.iter().map(|&i| corpus.labels[i].expect("folds cover labeled graphs")).collect();
    Ok((pred, actual))
}

pub fn cmd_mine(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let run = &cfg.mine;
    let (mut corpus, mut side) = match &run.input {
        Some(dir) => {
            require_input(dir)?;
            dataio::load_graph_corpus(dir, run.edge_threshold)?
        }
        None => synth_graph_corpus(
            cfg.seed,
            &GraphCorpusSpec {
                graphs: run.synth_graphs,
                ..GraphCorpusSpec::small()
            },
        ),
    };
    if run.balance {
        let labeled: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.labels[i].is_some()).collect();
        let ys: Vec<f64> = labeled.iter().map(|&i| corpus.labels[i].unwrap_or(0.0)).collect();
        let mut keep: Vec<usize> = balanced_subsample(&ys, cfg.seed).into_iter().map(|j| labeled[j]).collect();
        keep.extend((0..corpus.len()).filter(|&i| corpus.labels[i].is_none()));
        keep.sort_unstable();
        corpus = corpus.subset(&keep);
        side = side.subset(&keep);
    }
    let result = gmsv_mine(&corpus, &side, &run.mining)?;

    let labeled: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.labels[i].is_some()).collect();
    let cv = if run.folds == 0 {
        None
    } else {
        let ys: Vec<f64> = labeled.iter().map(|&i| corpus.labels[i].unwrap_or(0.0)).collect();
        let folds = stratified_folds(&ys, run.folds, cfg.seed)?;
        let per = per_fold(&folds, run.folds, |f, train, test| {
            let train: Vec<usize> = train.iter().map(|&j| labeled[j]).collect();
            let test: Vec<usize> = test.iter().map(|&j| labeled[j]).collect();
            let (pred, actual) = mine_fold(&corpus, &side, run, &train, &test)?;
            Ok(FoldMetrics {
                fold: f,
                train: train.len(),
                test: test.len(),
                metrics: classification_metrics(&pred, &actual)?,
            })
        })?;
        Some(summarize(per))
    };

    if run.export_features {
        let codes: Vec<_> = result.patterns.iter().map(|p| p.code.clone()).collect();
        let features = feature_matrix(&codes, &corpus.graphs)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((0..codes.len()).map(|p| format!("p{p}")));
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("features.csv: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..corpus.len() {
            let mut rec = vec![corpus.ids[i].clone(), corpus.labels[i].map_or(String::new(), |y| format!("{y}"))];
            rec.extend(features.iter().map(|f| if f[i] { "1".to_string() } else { "0".to_string() }));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("features.csv: {e}")))?;
        dataio::write_string(&out.join("features.csv"), &String::from_utf8_lossy(&bytes))?;
    }

    println!(
        "mine: {} patterns, {} nodes visited, {} subtrees pruned{}",
        result.patterns.len(),
        result.nodes_visited,
        result.subtrees_pruned,
        cv.as_ref().map_or(String::new(), |c| format!(", {}-fold accuracy {:.4}", run.folds, c.mean_accuracy))
    );
    let patterns = result
        .patterns
        .iter()
        .enumerate()
        .map(|(rank, p)| PatternEntry {
            rank,
            code: &p.code,
            q: p.q,
            q_hat: p.q_hat,
            support: p.support,
            indicator: bits(&p.indicator),
        })
        .collect();
    let body = MineBody {
        source: source_name(&run.input),
        graphs: corpus.len(),
        labeled: labeled.len(),
        patterns,
        nodes_visited: result.nodes_visited,
        subtrees_pruned: result.subtrees_pruned,
        cross_validation: cv,
    };
    write_report(out, CommandKind::Mine, cfg, body)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct BneFold {
    fold: usize,
    train: usize,
    test: usize,
    accuracy: f64,
    converged: bool,
}

#[derive(Serialize)]
struct BneBody {
    source: String,
    nodes: usize,
    subjects: usize,
    labeled: usize,
    classes: usize,
    iterations: usize,
    converged: bool,
    explained_variation: f64,
    relative_error: f64,
    objective: f64,
    consensus_gap: f64,
    orthogonality_error: f64,
    train_accuracy: Option<f64>,
    cross_validation: Option<Vec<BneFold>>,
    mean_cv_accuracy: Option<f64>,
}

/// Subjects reordered as `order`.
fn permute_subjects(x: &PartiallySymmetricTensor3, order: &[usize]) -> Result<PartiallySymmetricTensor3> {
    let m = x.nodes();
    let t = Tensor3::from_fn([m, m, order.len()], |i, j, s| x.tensor().get(i, j, order[s]))?;
    PartiallySymmetricTensor3::new(t)
}

fn guidance_for(side: Option<&Matrix>, order: &[usize], spec: KernelSpec) -> Result<GuidanceKernel> {
    match side {
        Some(z) => {
            let rows = Matrix::from_fn(order.len(), z.ncols(), |r, c| z[(order[r], c)]);
            GuidanceKernel::from_features(&rows, spec)
        }
        None => Ok(GuidanceKernel::none(order.len())),
    }
}

/// Fits with the subjects in `labeled` first, in that order, then the rest.
fn fit_with_labels(
    x: &PartiallySymmetricTensor3,
    side: Option<&Matrix>,
    labels: &[Option<usize>],
    labeled: &[usize],
    classes: usize,
    run: &BneRun,
) -> Result<(BneModel, Vec<usize>)> {
    let mut order = labeled.to_vec();
    order.extend((0..labels.len()).filter(|i| !labeled.contains(i)));
    let xp = permute_subjects(x, &order)?;
    let guidance = guidance_for(side, &order, run.side_kernel)?;
    let ys: Vec<usize> = labeled.iter().map(|&i| labels[i].expect("labeled subject")).collect();
    let y = bne::one_hot(&ys, classes)?;
    Ok((bne::tbne_fit(&xp, &guidance, &y, &run.model)?, order))
}

pub fn cmd_bne(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let run = &cfg.bne;
    let (x, side, labels, node_names) = match &run.input {
        Some(dir) => {
            require_input(dir)?;
            let st = dataio::load_network_stack(dir)?;
            (st.tensor, st.side, st.labels, st.node_names)
        }
        None => {
            let (x, s, _) = synth_planted_tensor(cfg.seed, run.synth_nodes, run.synth_subjects, run.model.rank, run.synth_noise);
            let labels = (0..s.nrows()).map(|t| Some(usize::from(s[(t, 0)] >= 0.0))).collect();
            let names = (0..run.synth_nodes).map(|i| format!("n{i}")).collect();
            (x, None, labels, names)
        }
    };
    let n = x.subjects();
    let labeled: Vec<usize> = (0..n).filter(|&i| labels[i].is_some()).collect();
    let classes = labels.iter().flatten().max().map_or(2, |&c| (c + 1).max(2));

    let (model, order) = fit_with_labels(&x, side.as_ref(), &labels, &labeled, classes, run)?;
    let xp = permute_subjects(&x, &order)?;
    let guidance = guidance_for(side.as_ref(), &order, run.side_kernel)?;
    let ys: Vec<usize> = labeled.iter().map(|&i| labels[i].expect("labeled subject")).collect();
    let y = bne::one_hot(&ys, classes)?;
    let objective = bne::objective(&model, &xp, &guidance, &y, &run.model)?;

    let train_accuracy = if labeled.is_empty() {
        None
    } else {
        let rows: Vec<usize> = (0..labeled.len()).collect();
        let (_, pred) = bne::tbne_embed_predict(&model, &rows)?;
        Some(accuracy(&pred, &ys))
    };

    let cv = if run.folds == 0 || labeled.is_empty() {
        None
    } else {
        let yf: Vec<f64> = ys.iter().map(|&c| c as f64).collect();
        let folds = stratified_folds(&yf, run.folds, cfg.seed)?;
        Some(per_fold(&folds, run.folds, |f, train, test| {
            let train_ids: Vec<usize> = train.iter().map(|&j| labeled[j]).collect();
            let (m, order) = fit_with_labels(&x, side.as_ref(), &labels, &train_ids, classes, run)?;
            let rows: Vec<usize> = test
                .iter()
                .map(|&j| order.iter().position(|&o| o == labeled[j]).expect("every subject is ordered"))
                .collect();
            let (_, pred) = bne::tbne_embed_predict(&m, &rows)?;
            let truth: Vec<usize> = test.iter().map(|&j| ys[j]).collect();
            Ok(BneFold {
                fold: f,
                train: train.len(),
                test: test.len(),
                accuracy: accuracy(&pred, &truth),
                converged: m.converged,
            })
        })?)
    };
    let mean_cv_accuracy = cv
        .as_ref()
        .map(|folds| folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64);

    // outputs in input subject order
    let mut inverse = vec![0; n];
    for (pos, &s) in order.iter().enumerate() {
        inverse[s] = pos;
    }
    bne::write_model(&out.join("model.bin"), &model)?;
    let emb_header: Vec<String> = (0..model.s.ncols()).map(|f| format!("f{f}")).collect();
    let emb_rows = (0..n).map(|s| model.s.row(inverse[s]).iter().copied().collect());
    dataio::write_string(&out.join("embedding.csv"), &dataio::format_csv(&emb_header, emb_rows))?;
    let nf = model.node_factor();
    let node_rows = (0..nf.nrows()).map(|i| nf.row(i).iter().copied().collect());
    dataio::write_string(&out.join("node_factors.csv"), &dataio::format_csv(&emb_header, node_rows))?;

    println!(
        "bne: {} iterations, converged {}, explained variation {:.6}{}",
        model.iterations,
        model.converged,
        model.explained_variation,
        mean_cv_accuracy.map_or(String::new(), |a| format!(", {}-fold accuracy {a:.4}", run.folds))
    );
    let body = BneBody {
        source: source_name(&run.input),
        nodes: node_names.len(),
        subjects: n,
        labeled: labeled.len(),
        classes,
        iterations: model.iterations,
        converged: model.converged,
        explained_variation: model.explained_variation,
        relative_error: bne::relative_error(&model, &xp)?,
        objective,
        consensus_gap: model.consensus_gap(),
        orthogonality_error: feasibility_error(&model.s),
        train_accuracy,
        cross_validation: cv,
        mean_cv_accuracy,
    };
    write_report(out, CommandKind::Bne, cfg, body)?;
    Ok(if model.converged { Status::Ok } else { Status::NotConverged })
}

fn accuracy(pred: &[f64], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| **p == **t as f64).count();
    hits as f64 / truth.len().max(1) as f64
}

#[derive(Serialize)]
struct MoodBody<'a> {
    source: String,
    sessions: usize,
    train_sessions: usize,
    validation_sessions: usize,
    views: &'a [String],
    dims: &'a [usize],
    parameters: usize,
    best_epoch: usize,
    best: &'a EpochMetrics,
    last: &'a EpochMetrics,
}

pub fn cmd_mood(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let run = &cfg.mood;
    let tc = &run.train;
    if (run.label_rule == LabelRule::Regression) != tc.is_regression() {
        return invalid("the regression label rule requires classes = 1, and classes = 1 requires it");
    }
    let mut ds: SessionDataset = match &run.input {
        Some(path) => {
            require_input(path)?;
            dataio::load_sessions(path, tc.min_len, tc.max_len, run.label_rule)?.0
        }
        None => synth_sessions(
            cfg.seed,
            &SessionSpec {
                sessions: run.synth_sessions,
                dims: run.synth_dims.clone(),
                min_len: tc.min_len,
                max_len: tc.max_len.min(tc.min_len * 2),
            },
        ),
    };
    let labels: Vec<f64> = ds.instances.iter().map(|s| s.label).collect();
    if run.balance && !tc.is_regression() {
        ds = ds.subset(&balanced_subsample(&labels, cfg.seed));
    }
    let (train_set, valid) = if run.validation_folds == 0 {
        (ds.clone(), None)
    } else {
        let strata: Vec<f64> = if tc.is_regression() {
            vec![0.0; ds.len()]
        } else {
            ds.instances.iter().map(|s| s.label).collect()
        };
        let folds = stratified_folds(&strata, run.validation_folds, cfg.seed)?;
        let tr: Vec<usize> = (0..ds.len()).filter(|&i| folds[i] != 0).collect();
        let va: Vec<usize> = (0..ds.len()).filter(|&i| folds[i] == 0).collect();
        (ds.subset(&tr), Some(ds.subset(&va)))
    };
    let outcome = deepmood::train(&train_set, valid.as_ref(), tc)?;
    let Some(last) = outcome.history.last() else {
        return invalid("training ran for zero epochs");
    };
    let best = &outcome.history[outcome.best_epoch - 1];
    deepmood::write_checkpoint(&out.join("best.bin"), &outcome.best_model)?;
    deepmood::write_checkpoint(&out.join("final.bin"), &outcome.final_model)?;
    deepmood::write_metrics_csv(&out.join("metrics.csv"), &outcome.history)?;
    println!(
        "mood: {} epochs, best epoch {}, train metric {:.4}{}",
        outcome.history.len(),
        outcome.best_epoch,
        last.train_metric,
        best.valid_metric.map_or(String::new(), |m| format!(", best validation metric {m:.4}"))
    );
    let body = MoodBody {
        source: source_name(&run.input),
        sessions: ds.len(),
        train_sessions: train_set.len(),
        validation_sessions: valid.as_ref().map_or(0, SessionDataset::len),
        views: &ds.view_names,
        dims: &ds.dims,
        parameters: outcome.final_model.num_params(),
        best_epoch: outcome.best_epoch,
        best,
        last,
    };
    write_report(out, CommandKind::Mood, cfg, body)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct SelftestBody {
    passed: bool,
    checks: Vec<CheckOutcome>,
}

pub fn cmd_selftest(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let checks = selftest::run_all(cfg.selftest.scale);
    for c in &checks {
        println!("check {:>2} {} {}: {}", c.id, if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let passed = checks.iter().all(|c| c.passed);
    write_report(out, CommandKind::Selftest, cfg, SelftestBody { passed, checks })?;
    Ok(if passed { Status::Ok } else { Status::ChecksFailed })
}

pub fn run_command(command: CommandKind, cfg: &RunConfig, out: &Path) -> Result<Status> {
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    match command {
        CommandKind::Mvfs => cmd_mvfs(cfg, out),
        CommandKind::Mine => cmd_mine(cfg, out),
        CommandKind::Bne => cmd_bne(cfg, out),
        CommandKind::Mood => cmd_mood(cfg, out),
        CommandKind::Selftest => cmd_selftest(cfg, out),
    }
}

fn hint(e: &Error) -> Option<&'static str> {
    match e {
        Error::Degenerate(_) => Some("check that both classes are labeled and that side views vary across instances"),
        Error::Singular(_) => Some("increase a ridge penalty (gamma) or lower the rank"),
        Error::Convergence { .. } => Some("raise the iteration limit or loosen the tolerance"),
        _ => None,
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Convergence { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = RunConfig::resolve(cli.command, cli.config.as_deref(), cli.seed, cli.input.as_deref())
        .and_then(|cfg| run_command(cli.command, &cfg, &cli.out));
    match result {
        Ok(Status::Ok) => 0,
        Ok(Status::ChecksFailed) => {
            eprintln!("error: self checks failed");
            1
        }
        Ok(Status::NotConverged) => {
            eprintln!("error: optimizer stopped before converging; outputs were written to {}", cli.out.display());
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            exit_code(&e)
        }
    }
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<f64> = (0..20).map(|i| if i % 4 == 0 { 1.0 } else { -1.0 }).collect();
        let f = stratified_folds(&labels, 3, 1).unwrap();
        for k in 0..3 {
            let pos = (0..20).filter(|&i| f[i] == k && labels[i] > 0.0).count();
            let all = (0..20).filter(|&i| f[i] == k).count();
            assert!((1..=2).contains(&pos), "fold {k} has {pos} positives");
            assert!((6..=7).contains(&all));
        }
        assert_eq!(f, stratified_folds(&labels, 3, 1).unwrap());
        assert_ne!(f, stratified_folds(&labels, 3, 2).unwrap());
        assert!(stratified_folds(&labels, 1, 0).is_err());
        assert!(stratified_folds(&labels[..2], 3, 0).is_err());
    }

    #[test]
    fn balanced_subsample_keeps_minority() {
        let labels = [1.0, -1.0, -1.0, -1.0, 1.0, -1.0];
        let keep = balanced_subsample(&labels, 3);
        assert_eq!(keep.len(), 4);
        assert!(keep.contains(&0) && keep.contains(&4));
        assert!(keep.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(keep, balanced_subsample(&labels, 3));
    }

    #[test]
    fn flags_override_file_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 4, "mine": {"mining": {"k": 3}}}"#).unwrap();
        let cfg = RunConfig::resolve(CommandKind::Mine, Some(&path), None, None).unwrap();
        assert_eq!((cfg.seed, cfg.mine.mining.k, cfg.mine.mining.min_sup), (4, 3, 2));
        assert_eq!(cfg.bne.model.seed, 4);
        let cfg = RunConfig::resolve(CommandKind::Mine, Some(&path), Some(9), Some(Path::new("g"))).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mine.input.as_deref(), Some(Path::new("g")));
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"mvfs": {"folds": 3, "fold": 2}}"#).unwrap();
        let err = RunConfig::resolve(CommandKind::Mvfs, Some(&path), None, None).unwrap_err();
        assert!(err.to_string().contains("c.json"), "{err}");
    }

    #[test]
    fn missing_input_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let code = run(["mvkit", "mvfs", "--input", "no/such/bundle", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, 1);
        let cfg = RunConfig::resolve(CommandKind::Mvfs, None, None, Some(Path::new("no/such/bundle"))).unwrap();
        let err = cmd_mvfs(&cfg, dir.path()).unwrap_err();
        assert!(err.to_string().contains("no/such/bundle"));
    }
}
