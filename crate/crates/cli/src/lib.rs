//! The `reviewlens` command line: curation, training, evaluation, and a small
//! HTTP scoring endpoint.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use reviewlens::corpus::{self, Corpus, FoldPlan};
use reviewlens::embeddings::{load_glove, load_precomputed, EmbeddingTable, PrecomputedVectors};
use reviewlens::evaluation::{
    cross_validate_map, emit_report, evaluate_model, render_boxplot, EvaluationReport, FoldScores,
    ReportFormat,
};
use reviewlens::model::{fit_pipeline_with_history, inspect_coefficients, Resources};
use reviewlens::text_features::NgramRange;
use reviewlens::{ClassifierModel, ModelKind, PipelineSpec};

pub mod serve;

#[derive(Debug, Parser)]
#[command(name = "reviewlens", version, about = "Detect problem statements in peer-review comments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Curate raw tag records into a balanced corpus and a curation log.
    Ingest(IngestArgs),
    /// Krippendorff's alpha of raw tag records, before and after dropping conflicts.
    Reliability(ReliabilityArgs),
    /// Write a stratified train/validation/test split and a k-fold plan.
    Prepare(PrepareArgs),
    /// Fit a pipeline on a corpus and write the model file.
    Train(TrainArgs),
    /// Score a model file on a labeled corpus.
    Evaluate(EvaluateArgs),
    /// k-fold cross-validation report, optionally with a boxplot.
    Crossval(CrossvalArgs),
    /// Top positive and negative coefficients of a linear model.
    Inspect(InspectArgs),
    /// Label comments with a model file, as JSON Lines {id, label, score}.
    Predict(PredictArgs),
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw tag records (JSON Lines).
    #[arg(long)]
    pub input: PathBuf,
    /// Curated corpus (JSON Lines). The curation log goes to `<output>.log.json`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReliabilityArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Curated corpus (JSON Lines).
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving `split.json` and `folds.json`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "80:10:10")]
    pub ratios: String,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Options shared by the commands that fit pipelines.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long = "model-kind", visible_alias = "model")]
    pub model_kind: Option<String>,
    /// A full pipeline spec (JSON) instead of the defaults of `--model-kind`.
    #[arg(long, conflicts_with = "model_kind")]
    pub pipeline: Option<PathBuf>,
    /// Highest n-gram order of TF-IDF features.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub ngram: Option<u8>,
    /// Pretrained word vectors (GloVe text format); recurrent kinds use them
    /// instead of the seeded toy table.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Precomputed sentence vectors (JSON Lines {id, vector}).
    #[arg(long)]
    pub precomputed: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model file; neural kinds also write `<output>.history.json`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub precomputed: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Report file. With several comma-separated kinds, a directory that
    /// receives one `<kind>.json` per kind.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use this fold plan instead of drawing one from `--k` and `--seed`.
    #[arg(long)]
    pub folds: Option<PathBuf>,
    /// Also write an SVG boxplot of the f1 scores next to the report.
    #[arg(long)]
    pub boxplot: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Record wall-clock seconds per fold in the report.
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    #[arg(long = "top-k", default_value_t = 15)]
    pub top_k: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    /// JSON Lines with at least {id, text}.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub precomputed: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

/// Parses `args` and runs the command. Usage errors exit with 2, data and
/// model errors with 1.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Reliability(a) => reliability(&a),
        Command::Prepare(a) => prepare(&a),
        Command::Train(a) => train(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Crossval(a) => crossval(&a),
        Command::Inspect(a) => inspect(&a),
        Command::Predict(a) => predict(&a),
        Command::Synth(a) => synth(&a),
        Command::Serve(a) => serve::run(&a),
    }
}

/// Writes through a temporary file in the target directory, then renames it
/// over `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(path) => write_atomic(path, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn read_corpus_file(path: &Path) -> Result<Corpus> {
    corpus::read_corpus(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_records(path: &Path) -> Result<Vec<corpus::RawTagRecord>> {
    corpus::ingest(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn read_model_file(path: &Path) -> Result<ClassifierModel> {
    serde_json::from_reader(open(path)?).with_context(|| format!("reading model file {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let records = read_records(&a.input)?;
    let (curated, log) = corpus::curate(&records, a.seed)?;
    let mut buf = Vec::new();
    corpus::write_corpus(&mut buf, &curated)?;
    write_atomic(&a.output, &buf)?;
    write_atomic(&with_suffix(&a.output, ".log.json"), &json_bytes(&log)?)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub records: usize,
    pub conflicts_dropped: usize,
    pub before: Option<corpus::ReliabilityResult>,
    pub after: Option<corpus::ReliabilityResult>,
    pub alpha_before: Option<f64>,
    pub alpha_after: Option<f64>,
}

fn reliability(a: &ReliabilityArgs) -> Result<()> {
    let records = read_records(&a.input)?;
    let before = corpus::krippendorff_alpha(&corpus::reliability_table(&records)).ok();
    let (kept, conflicts_dropped) = corpus::consolidate(&records);
    let kept: std::collections::HashSet<&str> = kept.iter().map(|c| c.id.as_str()).collect();
    let surviving: Vec<corpus::RawTagRecord> =
        records.iter().filter(|r| kept.contains(r.comment_id.as_str())).cloned().collect();
    let after = corpus::krippendorff_alpha(&corpus::reliability_table(&surviving)).ok();
    let report = ReliabilityReport {
        records: records.len(),
        conflicts_dropped,
        alpha_before: before.map(|r| r.alpha),
        alpha_after: after.map(|r| r.alpha),
        before,
        after,
    };
    emit(a.output.as_deref(), &json_bytes(&report)?)
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad ratio {p:?} in {s:?}")))
        .collect::<Result<_>>()?;
    let [a, b, c] = parts[..] else { bail!("--ratios needs three parts a:b:c, got {s:?}") };
    let total = a + b + c;
    if !(total > 0.0) || [a, b, c].iter().any(|v| *v < 0.0) {
        bail!("--ratios must be non-negative with a positive sum, got {s:?}");
    }
    Ok((a / total, b / total, c / total))
}

fn prepare(a: &PrepareArgs) -> Result<()> {
    let corpus = read_corpus_file(&a.input)?;
    let ratios = parse_ratios(&a.ratios)?;
    let split = corpus::split(&corpus, ratios, a.seed)?;
    let folds = corpus::make_folds(&corpus, a.k, a.seed)?;
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    write_atomic(&a.output.join("split.json"), &json_bytes(&split)?)?;
    write_atomic(&a.output.join("folds.json"), &json_bytes(&folds)?)?;
    Ok(())
}

/// Word vectors and precomputed vectors named on the command line.
#[derive(Default)]
pub struct LoadedResources {
    pub embeddings: Option<EmbeddingTable>,
    pub precomputed: Option<PrecomputedVectors>,
}

impl LoadedResources {
    pub fn load(embeddings: Option<&Path>, precomputed: Option<&Path>) -> Result<Self> {
        Ok(LoadedResources {
            embeddings: embeddings
                .map(|p| load_glove(open(p)?).with_context(|| format!("reading {}", p.display())))
                .transpose()?,
            precomputed: precomputed
                .map(|p| load_precomputed(open(p)?).with_context(|| format!("reading {}", p.display())))
                .transpose()?,
        })
    }

    pub fn view(&self) -> Resources<'_> {
        Resources { embeddings: self.embeddings.as_ref(), precomputed: self.precomputed.as_ref() }
    }
}

fn pipeline_specs(a: &PipelineArgs) -> Result<Vec<PipelineSpec>> {
    let mut specs = match (&a.pipeline, &a.model_kind) {
        (Some(path), _) => vec![read_json::<PipelineSpec>(path)?],
        (None, Some(kinds)) => kinds
            .split(',')
            .map(|k| Ok(PipelineSpec::defaults(k.trim().parse::<ModelKind>()?)))
            .collect::<Result<Vec<_>>>()?,
        (None, None) => bail!("one of --model-kind or --pipeline is required"),
    };
    for spec in &mut specs {
        if let Some(n) = a.ngram {
            *spec = spec.clone().with_ngram(NgramRange::new(1, n as usize)?)?;
        }
        if a.embeddings.is_some() && spec.model.is_neural() && spec.model.reads_text() {
            spec.features.embeddings = Some(reviewlens::model::EmbeddingSource::Pretrained);
        }
        spec.validate()?;
    }
    Ok(specs)
}

fn train(a: &TrainArgs) -> Result<()> {
    let specs = pipeline_specs(&a.pipeline)?;
    let [spec] = &specs[..] else { bail!("train fits one model kind at a time") };
    let corpus = read_corpus_file(&a.input)?;
    let resources = LoadedResources::load(a.pipeline.embeddings.as_deref(), a.pipeline.precomputed.as_deref())?;
    let (model, history) = fit_pipeline_with_history(spec, &corpus, a.seed, resources.view())?;
    write_atomic(&a.output, &json_bytes(&model)?)?;
    if spec.model.is_neural() {
        write_atomic(&with_suffix(&a.output, ".history.json"), &json_bytes(&history)?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub model: ModelKind,
    pub count: usize,
    pub metrics: reviewlens::evaluation::Metrics,
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = read_model_file(&a.model_file)?;
    let corpus = read_corpus_file(&a.input)?;
    let resources = LoadedResources::load(None, a.precomputed.as_deref())?;
    let metrics = evaluate_model(&model, &corpus, resources.view())?;
    let summary = EvaluationSummary { model: model.kind(), count: corpus.len(), metrics };
    emit(a.output.as_deref(), &json_bytes(&summary)?)
}

/// Runs cross-validation for one pipeline, optionally timing each fold.
pub fn crossval_report(
    spec: &PipelineSpec,
    corpus: &Corpus,
    plan: &FoldPlan,
    seed: u64,
    resources: Resources<'_>,
    timing: bool,
) -> Result<EvaluationReport> {
    let results = cross_validate_map(spec, corpus, plan, seed, resources, |_, model, test| {
        let start = Instant::now();
        let m = evaluate_model(model, test, resources)?;
        Ok((m, start.elapsed().as_secs_f64()))
    })?;
    let metrics: Vec<_> = results.iter().map(|(m, _)| *m).collect();
    let mut report =
        EvaluationReport::new(spec.clone(), seed, corpus.digest(), FoldScores::from_metrics(&metrics))?;
    if timing {
        report.timing_seconds = Some(results.iter().map(|(_, t)| *t).collect());
    }
    Ok(report)
}

fn crossval(a: &CrossvalArgs) -> Result<()> {
    let specs = pipeline_specs(&a.pipeline)?;
    let corpus = read_corpus_file(&a.input)?;
    let plan = match &a.folds {
        Some(path) => read_json::<FoldPlan>(path)?,
        None => corpus::make_folds(&corpus, a.k, a.seed)?,
    };
    let resources = LoadedResources::load(a.pipeline.embeddings.as_deref(), a.pipeline.precomputed.as_deref())?;
    let format = match a.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let extension = if format == ReportFormat::Json { "json" } else { "csv" };
    let several = specs.len() > 1;
    if several {
        std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    }
    let mut summaries = Vec::new();
    for spec in &specs {
        let report = crossval_report(spec, &corpus, &plan, a.seed, resources.view(), a.timing)
            .with_context(|| format!("cross-validating {}", spec.model))?;
        let path = if several { a.output.join(format!("{}.{extension}", spec.model)) } else { a.output.clone() };
        write_atomic(&path, emit_report(&report, format)?.as_bytes())?;
        summaries.push((spec.model.to_string(), report.summary));
    }
    if a.boxplot {
        let path = if several { a.output.join("boxplot.svg") } else { a.output.with_extension("svg") };
        write_atomic(&path, render_boxplot(&summaries).as_bytes())?;
    }
    Ok(())
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let model = read_model_file(&a.model_file)?;
    let report = inspect_coefficients(&model, a.top_k)?;
    emit(a.output.as_deref(), &json_bytes(&report)?)
}

#[derive(Debug, Deserialize)]
struct PredictInput {
    id: String,
    #[serde(default)]
    text: String,
}

#[derive(Debug, Serialize)]
struct PredictOutput<'a> {
    id: &'a str,
    label: u8,
    score: f64,
}

fn predict(a: &PredictArgs) -> Result<()> {
    let model = read_model_file(&a.model_file)?;
    let resources = LoadedResources::load(None, a.precomputed.as_deref())?;
    let mut out = Vec::new();
    for (i, line) in open(&a.input)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: PredictInput = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", a.input.display(), i + 1))?;
        let p = model
            .predict_item(&item.id, &item.text, resources.view())
            .with_context(|| format!("{} line {}", a.input.display(), i + 1))?;
        serde_json::to_writer(&mut out, &PredictOutput { id: &item.id, label: p.label, score: p.score })?;
        out.push(b'\n');
    }
    emit(a.output.as_deref(), &out)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let corpus = corpus::generate_synthetic(a.n, a.noise, a.seed)?;
    let mut buf = Vec::new();
    corpus::write_corpus(&mut buf, &corpus)?;
    write_atomic(&a.output, &buf)
}

