//! The `nnn` command line.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on data errors. Every JSON
//! report carries the effective configuration under `"config"`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::bench::bench_bias;
use crate::diagnostics::{compare_reports, hub_report, matched_counts};
use crate::embed_io::{
    import_tsv, load_bias, load_matrix, save_bias, save_matrix, write_atomic, AttributeLabels,
    EmbeddingMatrix, GroundTruth, QueryGroups,
};
use crate::error::Error;
use crate::evaluation::{
    ablate_reference, attribute_bias, attribute_precision, default_alpha_grid, default_k_grid,
    recall_report, sweep_nnn, BootstrapConfig, EvalData,
};
use crate::normalization::{apply, compute_bias, ApplyOptions, MethodParams, NormalizationSpec, References};
use crate::ranking::RankingTable;
use crate::synthetic::{clustered_benchmark, hub_benchmark, ClusteredConfig, HubConfig};
use crate::vector_index::{
    IndexConfig, IvfParams, VectorIndex, DEFAULT_KMEANS_ITERS, DEFAULT_NPROBE,
    DEFAULT_TRAIN_POINTS_PER_CENTROID,
};

/// Environment variable capping worker threads (0 = one per core).
pub const THREADS_ENV: &str = "NNN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nnn", version, about = "Nearest-neighbor normalization for embedding retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a TSV embedding dump to EMB1.
    Convert(ConvertArgs),
    /// Compute and cache the NNN bias (BIA1).
    Bias(BiasArgs),
    /// Rank candidates for every query under a normalization method.
    Retrieve(RetrieveArgs),
    /// Recall@K with bootstrap confidence intervals.
    Eval(EvalArgs),
    /// Grid search of NNN (alpha, k) on a held-out split of the reference pool.
    Sweep(SweepArgs),
    /// Recall as the reference set is subsampled.
    Ablate(AblateArgs),
    /// Hubness report of a ranking table.
    Diagnose(DiagnoseArgs),
    /// Attribute bias and precision of a ranking table.
    BiasAttr(BiasAttrArgs),
    /// Time exhaustive versus index-backed bias computation.
    Bench(BenchArgs),
    /// Write a seeded synthetic benchmark.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Scale rows to unit L2 norm.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub normalize: bool,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct IndexArgs {
    /// Exhaustive search (the default).
    #[arg(long, conflicts_with = "nprobe")]
    pub exact: bool,
    /// Use an IVF index probing this many lists.
    #[arg(long)]
    pub nprobe: Option<usize>,
    /// IVF lists (default ceil(sqrt(rows))).
    #[arg(long)]
    pub ncentroids: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_KMEANS_ITERS)]
    pub kmeans_iters: usize,
}

impl IndexArgs {
    fn config(&self, seed: u64) -> IndexConfig {
        match self.nprobe {
            Some(_) => IndexConfig::Ivf(IvfParams {
                ncentroids: self.ncentroids,
                kmeans_iters: self.kmeans_iters,
                seed,
                train_points_per_centroid: DEFAULT_TRAIN_POINTS_PER_CENTROID,
            }),
            None => IndexConfig::Exact,
        }
    }

    fn nprobe(&self) -> usize {
        self.nprobe.unwrap_or(DEFAULT_NPROBE)
    }
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct MethodArgs {
    /// none | nnn | dn | qbnorm | dualis | dualdis
    #[arg(long, default_value = "none")]
    pub method: String,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub activation_threshold: Option<usize>,
}

impl MethodArgs {
    fn spec(&self) -> Result<NormalizationSpec, CliError> {
        NormalizationSpec::from_params(
            &self.method,
            MethodParams {
                alpha: self.alpha,
                k: self.k,
                beta1: self.beta1,
                beta2: self.beta2,
                activation_threshold: self.activation_threshold,
            },
        )
        .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BiasArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub index: IndexArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    /// Reference queries (nnn, dn, qbnorm, dualis, dualdis).
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Reference candidates (dn, dualis, dualdis).
    #[arg(long)]
    pub ref_candidates: Option<PathBuf>,
    /// Cached BIA1 bias for nnn; checked against --refs when both are given.
    #[arg(long)]
    pub bias: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 10)]
    pub depth: usize,
    #[command(flatten)]
    pub index: IndexArgs,
    /// Serve nnn through augmented embeddings and the candidate index.
    #[arg(long)]
    pub augmented: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub rankings: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    pub k_list: Vec<usize>,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Method that produced the rankings, recorded in the report.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub activation_threshold: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Ground truth for the reference queries (labels the held-out split).
    #[arg(long)]
    pub ref_truth: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long)]
    pub ref_candidates: Option<PathBuf>,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.5, 1.0])]
    pub fractions: Vec<f64>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    pub k_list: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub rankings: PathBuf,
    /// Number of candidates (alternatively pass --candidates).
    #[arg(long, required_unless_present = "candidates")]
    pub n_candidates: Option<usize>,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Rankings to compare against (e.g. the raw baseline).
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BiasAttrArgs {
    #[arg(long)]
    pub rankings: PathBuf,
    /// TSV `cand_idx<TAB>A|B<TAB>group`.
    #[arg(long)]
    pub labels: PathBuf,
    /// TSV `query_idx<TAB>group`; enables per-group means and precision.
    #[arg(long)]
    pub query_groups: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [6usize, 10])]
    pub n: Vec<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long, requires = "truth")]
    pub queries: Option<PathBuf>,
    #[arg(long, requires = "queries")]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_NPROBE)]
    pub nprobe: usize,
    #[arg(long)]
    pub ncentroids: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_KMEANS_ITERS)]
    pub kmeans_iters: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Hub,
    Clustered,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Hub)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub n_ref: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub n_candidates: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `argv` (including the program name), runs the job, and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(0) => {}
        Ok(n) => {
            // Already initialised when `run` is called twice in one process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Err(_) => log::warn!("ignoring {THREADS_ENV}={raw:?}: not a thread count"),
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Convert(a) => convert(a),
        Command::Bias(a) => bias(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Ablate(a) => ablate(a),
        Command::Diagnose(a) => diagnose(a),
        Command::BiasAttr(a) => bias_attr(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
    }
}

/// Serializes `report` with the effective configuration under `"config"`.
fn write_report(path: &Path, config: &impl Serialize, report: &impl Serialize) -> CliResult {
    let mut value = serde_json::to_value(report).map_err(Error::from)?;
    let config = serde_json::to_value(config).map_err(Error::from)?;
    match &mut value {
        Value::Object(map) => {
            map.insert("config".into(), config);
        }
        other => {
            let inner = std::mem::take(other);
            *other = serde_json::json!({ "config": config, "report": inner });
        }
    }
    let mut text = serde_json::to_string_pretty(&value).map_err(Error::from)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn read_rankings(path: &Path) -> CliResult<RankingTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(RankingTable::read_jsonl(std::io::BufReader::new(file))?)
}

fn load_opt(path: &Option<PathBuf>) -> CliResult<Option<EmbeddingMatrix>> {
    Ok(path.as_ref().map(load_matrix).transpose()?)
}

fn convert(a: ConvertArgs) -> CliResult {
    let m = import_tsv(&a.input, a.normalize)?;
    save_matrix(&m, &a.output)?;
    Ok(())
}

fn bias(a: BiasArgs) -> CliResult {
    let candidates = load_matrix(&a.candidates)?;
    let refs = Arc::new(load_matrix(&a.refs)?);
    let index = a.index.config(a.seed).build(refs.clone())?;
    let b = compute_bias(&candidates, &refs, a.alpha, a.k, &index, a.index.nprobe())?;
    save_bias(&b, &a.output)?;
    Ok(())
}

fn retrieve(a: RetrieveArgs) -> CliResult {
    let spec = a.method.spec()?;
    if a.bias.is_some() && !matches!(spec, NormalizationSpec::Nnn { .. }) {
        return Err(CliError::Usage("--bias only applies to --method nnn".into()));
    }
    let queries = load_matrix(&a.queries)?;
    let candidates = Arc::new(load_matrix(&a.candidates)?);
    let refs = load_opt(&a.refs)?;
    let ref_candidates = load_opt(&a.ref_candidates)?;
    let bias = a.bias.as_ref().map(load_bias).transpose()?;
    let index_cfg = a.index.config(a.seed);
    let index = index_cfg.build(candidates)?;
    let table = apply(
        &spec,
        &queries,
        &index,
        References {
            queries: refs.as_ref(),
            candidates: ref_candidates.as_ref(),
        },
        &ApplyOptions {
            depth: a.depth,
            nprobe: a.index.nprobe(),
            bias,
            bias_index: index_cfg,
            augmented: a.augmented,
        },
    )?;
    write_atomic(&a.output, table.to_jsonl().as_bytes())?;
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let method = match &a.method {
        Some(m) => Some(
            NormalizationSpec::from_params(
                m,
                MethodParams {
                    alpha: a.alpha,
                    k: a.k,
                    beta1: a.beta1,
                    beta2: a.beta2,
                    activation_threshold: a.activation_threshold,
                },
            )
            .map_err(|e| CliError::Usage(e.to_string()))?,
        ),
        None => None,
    };
    let table = read_rankings(&a.rankings)?;
    let truth = GroundTruth::load(&a.truth)?;
    let report = recall_report(
        &table,
        &truth,
        &a.k_list,
        &BootstrapConfig {
            resamples: a.bootstrap,
            level: a.level,
            seed: a.seed,
        },
        method,
    )?;
    write_report(&a.output, &a, &report)
}

fn sweep(a: SweepArgs) -> CliResult {
    let queries = load_matrix(&a.queries)?;
    let candidates = load_matrix(&a.candidates)?;
    let refs = load_matrix(&a.refs)?;
    let truth = GroundTruth::load(&a.truth)?;
    let ref_truth = GroundTruth::load(&a.ref_truth)?;
    truth.validate(queries.rows(), candidates.rows())?;
    ref_truth.validate(refs.rows(), candidates.rows())?;
    let alphas = a.alphas.clone().unwrap_or_else(default_alpha_grid);
    let ks = a.ks.clone().unwrap_or_else(default_k_grid);
    let result = sweep_nnn(
        EvalData {
            queries: &queries,
            candidates: &candidates,
            ref_queries: &refs,
            truth: &truth,
        },
        &ref_truth,
        &alphas,
        &ks,
        a.seed,
    )?;
    write_report(&a.output, &a, &result)
}

fn ablate(a: AblateArgs) -> CliResult {
    let spec = a.method.spec()?;
    let queries = load_matrix(&a.queries)?;
    let candidates = load_matrix(&a.candidates)?;
    let refs = load_matrix(&a.refs)?;
    let ref_candidates = load_opt(&a.ref_candidates)?;
    let truth = GroundTruth::load(&a.truth)?;
    let report = ablate_reference(
        EvalData {
            queries: &queries,
            candidates: &candidates,
            ref_queries: &refs,
            truth: &truth,
        },
        ref_candidates.as_ref(),
        &a.fractions,
        &spec,
        a.seed,
        &a.k_list,
    )?;
    write_report(&a.output, &a, &report)
}

fn diagnose(a: DiagnoseArgs) -> CliResult {
    let n = match (a.n_candidates, &a.candidates) {
        (Some(n), _) => n,
        (None, Some(p)) => load_matrix(p)?.rows(),
        (None, None) => return Err(CliError::Usage("--n-candidates or --candidates is required".into())),
    };
    let table = read_rankings(&a.rankings)?;
    let report = hub_report(&matched_counts(&table, n)?)?;
    let comparison = match &a.baseline {
        Some(p) => {
            let before = hub_report(&matched_counts(&read_rankings(p)?, n)?)?;
            Some(serde_json::json!({
                "baseline": before,
                "deltas": compare_reports(&before, &report),
            }))
        }
        None => None,
    };
    let mut value = serde_json::to_value(&report).map_err(Error::from)?;
    if let (Some(c), Value::Object(map)) = (comparison, &mut value) {
        map.insert("comparison".into(), c);
    }
    write_report(&a.output, &a, &value)
}

fn bias_attr(a: BiasAttrArgs) -> CliResult {
    let table = read_rankings(&a.rankings)?;
    let labels = AttributeLabels::load(&a.labels)?;
    let groups = a.query_groups.as_ref().map(QueryGroups::load).transpose()?;
    let mut results = Vec::with_capacity(a.n.len());
    for &n in &a.n {
        let bias = attribute_bias(&table, &labels, n, groups.as_ref())?;
        let precision = match &groups {
            Some(g) => Some(attribute_precision(&table, &labels, g, n)?),
            None => None,
        };
        results.push(serde_json::json!({
            "n": n,
            "mean_bias": bias.mean_bias,
            "per_group": bias.per_group,
            "per_query": bias.per_query,
            "precision": precision,
        }));
    }
    write_report(&a.output, &a, &serde_json::json!({ "results": results }))
}

fn bench(a: BenchArgs) -> CliResult {
    let candidates = Arc::new(load_matrix(&a.candidates)?);
    let refs = Arc::new(load_matrix(&a.refs)?);
    let eval = match (&a.queries, &a.truth) {
        (Some(q), Some(t)) => Some((load_matrix(q)?, GroundTruth::load(t)?)),
        _ => None,
    };
    let outcome = bench_bias(
        candidates,
        refs,
        a.alpha,
        a.k,
        &IvfParams {
            ncentroids: a.ncentroids,
            kmeans_iters: a.kmeans_iters,
            seed: a.seed,
            train_points_per_centroid: DEFAULT_TRAIN_POINTS_PER_CENTROID,
        },
        a.nprobe,
        eval.as_ref().map(|(q, t)| (q, t)),
    )?;
    write_report(&a.output, &a, &outcome.report)
}

fn synth(a: SynthArgs) -> CliResult {
    let bench = match a.kind {
        SynthKind::Hub => {
            let d = HubConfig::default();
            hub_benchmark(&HubConfig {
                n_regular: a.n_candidates.map_or(d.n_regular, |n| n.saturating_sub(1).max(1)),
                dim: a.dim.unwrap_or(d.dim),
                n_ref: a.n_ref.unwrap_or(d.n_ref),
                n_test: a.n_test.unwrap_or(d.n_test),
                seed: a.seed,
                ..d
            })?
        }
        SynthKind::Clustered => {
            let d = ClusteredConfig::default();
            clustered_benchmark(&ClusteredConfig {
                n_candidates: a.n_candidates.unwrap_or(d.n_candidates),
                dim: a.dim.unwrap_or(d.dim),
                n_ref: a.n_ref.unwrap_or(d.n_ref),
                n_test: a.n_test.unwrap_or(d.n_test),
                seed: a.seed,
                ..d
            })?
        }
    };
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    save_matrix(&bench.candidates, dir.join("candidates.emb"))?;
    save_matrix(&bench.ref_queries, dir.join("refs.emb"))?;
    save_matrix(&bench.ref_candidates, dir.join("ref_candidates.emb"))?;
    save_matrix(&bench.queries, dir.join("queries.emb"))?;
    bench.truth.save(dir.join("truth.tsv"))?;
    bench.ref_truth.save(dir.join("ref_truth.tsv"))?;
    Ok(())
}

/// Activation set helper exposed for scripting: candidates that are the top-1
/// of at least `threshold` reference queries.
pub fn activation_set(
    candidates: Arc<EmbeddingMatrix>,
    refs: &EmbeddingMatrix,
    threshold: usize,
) -> Result<BTreeSet<usize>, Error> {
    crate::normalization::build_activation_set(&VectorIndex::build_exact(candidates), refs, threshold, 1)
}
