//! Command-line front end: prune, train, predict, eval and generate.
//!
//! Every successful run writes one JSON manifest recording the resolved
//! options, the seed, SHA-256 digests of the inputs, the artifacts written
//! and the wall-clock duration.
//!
//! Exit codes: 0 success, 1 usage or internal error, 2 unreadable or
//! malformed input, 3 empty pruning result, 4 training or evaluation
//! failure, 5 vocabulary mismatch between a model and documents.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use slda::corpus::{fold_report, transform_responses};
use slda::eval::predict_corpus;
use slda::synth::{generate_synthetic, separated_topics, SyntheticSpec};
use slda::train::{fit_from, initialize};
use slda::{
    baseline_lda_regression, cross_validate, load_model, parse_corpus, prune_vocabulary, save_model,
    AlphaSetting, Corpus, EtaInit, FamilyKind, FitConfig, GlmParams, InferenceConfig, PoissonDispersion,
    PoissonLogNormalizer, ResponseFamily, ResponseTransform,
};

#[derive(Parser)]
#[command(name = "slda", version, about = "Supervised topic models with variational EM")]
struct Cli {
    /// Worker threads for the E-step and cross-validation folds.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop too-common and too-rare terms, then documents left empty.
    Prune(PruneArgs),
    /// Fit a model by variational EM.
    Train(TrainArgs),
    /// Predict responses for documents under a fitted model.
    Predict(PredictArgs),
    /// Cross-validated predictive R² and correlation.
    Eval(EvalArgs),
    /// Sample a corpus with responses from the generative model.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Documents in LDA-C format.
    #[arg(long)]
    docs: PathBuf,
    /// One response per line; `NA` marks a missing response.
    #[arg(long)]
    responses: Option<PathBuf>,
    /// One term per line, line i naming term id i.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args)]
struct PruneArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Remove terms appearing in more than this fraction of documents.
    #[arg(long, default_value_t = 0.25)]
    max_doc_frac: f64,
    /// Remove terms appearing in fewer than this many documents.
    #[arg(long, default_value_t = 5)]
    min_doc_count: usize,
    /// Output prefix; writes PREFIX.docs, PREFIX.vocab, PREFIX.report and,
    /// with responses, PREFIX.responses.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Poisson,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    None,
    Log,
}

#[derive(Clone, Copy, ValueEnum)]
enum LognormArg {
    Exact,
    Shifted,
}

#[derive(Clone, Copy, ValueEnum)]
enum DispersionArg {
    One,
    Ratio,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaInitArg {
    Grid,
    Zeros,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    family: FamilyArg,
    /// Symmetric Dirichlet parameter: `1/K` or a positive number.
    #[arg(long, default_value = "1/K")]
    alpha: String,
    /// Relative corpus-ELBO change at which EM stops.
    #[arg(long, default_value_t = 1e-4)]
    em_tol: f64,
    /// Relative document-ELBO change at which inference stops.
    #[arg(long, default_value_t = 1e-4)]
    doc_tol: f64,
    #[arg(long, default_value_t = 100)]
    em_max_iters: usize,
    #[arg(long, default_value_t = 100)]
    doc_max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TransformArg::None)]
    response_transform: TransformArg,
    #[arg(long, value_enum, default_value_t = LognormArg::Exact)]
    poisson_lognorm: LognormArg,
    #[arg(long, value_enum, default_value_t = DispersionArg::One)]
    poisson_dispersion: DispersionArg,
    #[arg(long, value_enum, default_value_t = EtaInitArg::Grid)]
    eta_init: EtaInitArg,
    /// Topics start as normalize(1 + U(0, p)) per entry.
    #[arg(long, default_value_t = 0.01)]
    beta_perturbation: f64,
    /// Re-initialize document posteriors uniformly at every EM iteration.
    #[arg(long)]
    cold_start: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    topics: usize,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// ELBO trace CSV; defaults to OUT.trace.csv.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    doc_tol: Option<f64>,
    #[arg(long, default_value_t = 100)]
    doc_max_iters: usize,
    /// Tab-separated predictions: training scale, then original scale.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    None,
    LdaRegression,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    /// One or more topic counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    topics: Vec<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed of the fold assignment; defaults to --seed.
    #[arg(long)]
    fold_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = BaselineArg::None)]
    baseline: BaselineArg,
    /// Output prefix; writes PREFIX.K<k>.csv per topic count (plus
    /// PREFIX.K<k>.baseline.csv), PREFIX.folds and PREFIX.txt with the tables.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 3)]
    topics: usize,
    #[arg(long, default_value_t = 25)]
    vocab_size: usize,
    #[arg(long, default_value_t = 500)]
    num_docs: usize,
    #[arg(long, default_value_t = 60)]
    doc_length: usize,
    /// Dirichlet parameter of the topic proportions; defaults to 1/K.
    #[arg(long)]
    alpha: Option<f64>,
    /// Topic mass spread over the whole vocabulary instead of the topic's
    /// own block of terms.
    #[arg(long, default_value_t = 0.1)]
    leak: f64,
    /// Coefficients, comma separated; defaults to K values evenly spaced on
    /// [−2, 2].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    family: FamilyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes PREFIX.docs and PREFIX.responses.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn input_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(2, format!("{}: {e}", path.display()))
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(1, format!("cannot write {}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| input_error(path, e))
}

fn digest(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| input_error(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| write_error(path, e))
}

fn write_with<F>(path: &Path, f: F) -> CmdResult
where
    F: FnOnce(&mut BufWriter<File>) -> slda::Result<()>,
{
    let file = File::create(path).map_err(|e| write_error(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out).map_err(|e| write_error(path, e))?;
    out.flush().map_err(|e| write_error(path, e))
}

/// Collects inputs and artifacts for the run manifest.
struct Manifest {
    command: &'static str,
    started: Instant,
    inputs: Map<String, Value>,
    artifacts: Vec<String>,
}

impl Manifest {
    fn new(command: &'static str) -> Self {
        Manifest {
            command,
            started: Instant::now(),
            inputs: Map::new(),
            artifacts: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> CmdResult {
        let d = digest(path)?;
        self.inputs.insert(path.display().to_string(), json!({ "sha256": d }));
        Ok(())
    }

    fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    fn finish(self, path: &Path, options: Value, seed: Option<u64>, threads: Option<usize>) -> CmdResult {
        let value = json!({
            "command": self.command,
            "argv": std::env::args().collect::<Vec<_>>(),
            "tool_version": env!("CARGO_PKG_VERSION"),
            "options": options,
            "seed": seed,
            "threads": threads,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "duration_seconds": self.started.elapsed().as_secs_f64(),
        });
        let mut text = serde_json::to_string_pretty(&value).expect("manifest serialization cannot fail");
        text.push('\n');
        write_file(path, &text)
    }
}

fn read_corpus(input: &InputArgs, manifest: &mut Manifest) -> Result<Corpus, Failure> {
    manifest.input(&input.docs)?;
    let docs = open(&input.docs)?;
    let responses = match &input.responses {
        Some(p) => {
            manifest.input(p)?;
            Some(open(p)?)
        }
        None => None,
    };
    let vocab = match &input.vocab {
        Some(p) => {
            manifest.input(p)?;
            Some(open(p)?)
        }
        None => None,
    };
    parse_corpus(docs, responses, vocab).map_err(|e| input_error(&input.docs, e))
}

fn cmd_prune(args: &PruneArgs, threads: Option<usize>) -> CmdResult {
    let mut manifest = Manifest::new("prune");
    let corpus = read_corpus(&args.input, &mut manifest)?;
    let outcome = prune_vocabulary(&corpus, args.max_doc_frac, args.min_doc_count).map_err(|e| match e {
        slda::Error::EmptyVocabulary => Failure::new(3, e.to_string()),
        other => Failure::new(1, other.to_string()),
    })?;

    let docs_path = with_suffix(&args.out, ".docs");
    write_with(&docs_path, |w| outcome.corpus.write_documents(w))?;
    manifest.artifact(&docs_path);
    let vocab_path = with_suffix(&args.out, ".vocab");
    write_with(&vocab_path, |w| outcome.corpus.vocabulary.write_to(w))?;
    manifest.artifact(&vocab_path);
    if args.input.responses.is_some() {
        let path = with_suffix(&args.out, ".responses");
        write_with(&path, |w| outcome.corpus.write_responses(w))?;
        manifest.artifact(&path);
    }
    let mut report = format!(
        "terms kept {} of {}\ndocuments kept {} of {}\n",
        outcome.kept_terms.len(),
        corpus.vocab_size(),
        outcome.corpus.num_documents(),
        corpus.num_documents()
    );
    for d in &outcome.dropped_documents {
        report.push_str(&format!("dropped document {d}\n"));
    }
    let report_path = with_suffix(&args.out, ".report");
    write_file(&report_path, &report)?;
    manifest.artifact(&report_path);

    let options = json!({
        "docs": args.input.docs,
        "responses": args.input.responses,
        "vocab": args.input.vocab,
        "max_doc_frac": args.max_doc_frac,
        "min_doc_count": args.min_doc_count,
        "out": args.out,
    });
    let path = args.manifest.clone().unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    manifest.finish(&path, options, None, threads)
}

fn family_of(model: &ModelArgs) -> ResponseFamily {
    let dispersion = match model.poisson_dispersion {
        DispersionArg::One => PoissonDispersion::FixedOne,
        DispersionArg::Ratio => PoissonDispersion::Ratio,
    };
    let lognorm = match model.poisson_lognorm {
        LognormArg::Exact => PoissonLogNormalizer::IndicatorExact,
        LognormArg::Shifted => PoissonLogNormalizer::ShiftedSum,
    };
    match model.family {
        FamilyArg::Gaussian => ResponseFamily::gaussian(),
        FamilyArg::Poisson => ResponseFamily::poisson().with_poisson_modes(dispersion, lognorm),
    }
}

fn parse_alpha(text: &str) -> Result<AlphaSetting, Failure> {
    match text.trim() {
        "1/K" | "1/k" | "one-over-k" => Ok(AlphaSetting::OneOverK),
        other => match other.parse::<f64>() {
            Ok(a) if a > 0.0 && a.is_finite() => Ok(AlphaSetting::Value(a)),
            _ => Err(Failure::new(1, format!("--alpha must be `1/K` or a positive number, got {other:?}"))),
        },
    }
}

fn fit_config(k: usize, model: &ModelArgs, threads: Option<usize>) -> Result<FitConfig, Failure> {
    let mut config = FitConfig::new(k, family_of(model));
    config.alpha = parse_alpha(&model.alpha)?;
    config.em_rel_tol = model.em_tol;
    config.em_max_iters = model.em_max_iters;
    config.inference = InferenceConfig {
        rel_tol: model.doc_tol,
        max_iters: model.doc_max_iters,
        ..InferenceConfig::default()
    };
    config.seed = model.seed;
    config.eta_init = match model.eta_init {
        EtaInitArg::Grid => EtaInit::Grid,
        EtaInitArg::Zeros => EtaInit::Zeros,
    };
    config.beta_perturbation = model.beta_perturbation;
    config.warm_start = !model.cold_start;
    config.parallel = threads != Some(1);
    config.validate().map_err(|e| Failure::new(1, e.to_string()))?;
    Ok(config)
}

fn transform_of(arg: TransformArg) -> ResponseTransform {
    match arg {
        TransformArg::None => ResponseTransform::None,
        TransformArg::Log => ResponseTransform::Log,
    }
}

fn model_options(config: &FitConfig, model: &ModelArgs) -> Value {
    let k = config.num_topics;
    json!({
        "family": match config.family.kind {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Poisson => "poisson",
        },
        "alpha": model.alpha,
        "alpha_value": config.alpha.resolve(k),
        "em_tol": config.em_rel_tol,
        "doc_tol": config.inference.rel_tol,
        "em_max_iters": config.em_max_iters,
        "doc_max_iters": config.inference.max_iters,
        "response_transform": match model.response_transform {
            TransformArg::None => "none",
            TransformArg::Log => "log",
        },
        "poisson_lognorm": config.family.poisson_lognorm,
        "poisson_dispersion": config.family.poisson_dispersion,
        "eta_init": match config.eta_init {
            EtaInit::Grid => "grid",
            EtaInit::Zeros => "zeros",
        },
        "delta_init": match config.family.kind {
            FamilyKind::Gaussian => "sample-variance",
            FamilyKind::Poisson => "one",
        },
        "beta_perturbation": config.beta_perturbation,
        "warm_start": config.warm_start,
    })
}

fn training_corpus(input: &InputArgs, transform: TransformArg, manifest: &mut Manifest) -> Result<Corpus, Failure> {
    let corpus = read_corpus(input, manifest)?;
    transform_responses(&corpus, transform_of(transform)).map_err(|e| input_error(&input.docs, e))
}

fn cmd_train(args: &TrainArgs, threads: Option<usize>) -> CmdResult {
    let mut manifest = Manifest::new("train");
    let config = fit_config(args.topics, &args.model, threads)?;
    let corpus = training_corpus(&args.input, args.model.response_transform, &mut manifest)?;
    let init = initialize(&corpus, &config).map_err(|e| Failure::new(4, format!("training failed: {e}")))?;
    let (eta_init_values, delta_init_value) = (init.glm.eta.to_vec(), init.glm.delta);
    let outcome = fit_from(&corpus, &config, init).map_err(|e| Failure::new(4, format!("training failed: {e}")))?;

    save_model(&outcome.model, &args.out).map_err(|e| write_error(&args.out, e))?;
    manifest.artifact(&args.out);
    let trace_path = args.trace.clone().unwrap_or_else(|| with_suffix(&args.out, ".trace.csv"));
    write_file(&trace_path, &outcome.trace.to_csv())?;
    manifest.artifact(&trace_path);

    let mut options = model_options(&config, &args.model);
    let extra = json!({
        "docs": args.input.docs,
        "responses": args.input.responses,
        "vocab": args.input.vocab,
        "topics": args.topics,
        "out": args.out,
        "trace": trace_path,
        "eta_init_values": eta_init_values,
        "delta_init_value": delta_init_value,
        "iterations": outcome.trace.iterations.len(),
        "converged": outcome.trace.converged,
    });
    merge(&mut options, extra);
    let path = args.manifest.clone().unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    manifest.finish(&path, options, Some(config.seed), threads)
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

fn cmd_predict(args: &PredictArgs, threads: Option<usize>) -> CmdResult {
    let mut manifest = Manifest::new("predict");
    manifest.input(&args.model)?;
    let model = load_model(&args.model).map_err(|e| input_error(&args.model, e))?;
    manifest.input(&args.docs)?;
    let corpus = parse_corpus(open(&args.docs)?, None::<BufReader<File>>, None::<BufReader<File>>)
        .map_err(|e| input_error(&args.docs, e))?;
    if corpus.vocab_size() > model.vocab_size() {
        return Err(Failure::new(
            5,
            format!(
                "vocabulary mismatch: {} uses term id {} but the model has {} terms",
                args.docs.display(),
                corpus.vocab_size() - 1,
                model.vocab_size()
            ),
        ));
    }
    let config = InferenceConfig {
        rel_tol: args.doc_tol.unwrap_or(InferenceConfig::default().rel_tol),
        max_iters: args.doc_max_iters,
        ..InferenceConfig::default()
    }
    .prediction();
    config.validate().map_err(|e| Failure::new(1, e.to_string()))?;
    let predictions = predict_corpus(&corpus, &model, &config).map_err(|e| match e.root() {
        slda::Error::VocabularyMismatch { .. } => Failure::new(5, e.to_string()),
        _ => Failure::new(4, e.to_string()),
    })?;
    let mut text = String::new();
    for p in &predictions {
        text.push_str(&format!("{}\t{}\n", p.raw, p.reported));
    }
    write_file(&args.out, &text)?;
    manifest.artifact(&args.out);
    let options = json!({
        "model": args.model,
        "docs": args.docs,
        "doc_tol": config.rel_tol,
        "doc_max_iters": config.max_iters,
        "out": args.out,
        "documents": predictions.len(),
    });
    let path = args.manifest.clone().unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    manifest.finish(&path, options, None, threads)
}

fn cmd_eval(args: &EvalArgs, threads: Option<usize>) -> CmdResult {
    let mut manifest = Manifest::new("eval");
    let corpus = training_corpus(&args.input, args.model.response_transform, &mut manifest)?;
    let fold_seed = args.fold_seed.unwrap_or(args.model.seed);
    let mut tables = String::new();
    let mut summary = Vec::new();
    for &k in &args.topics {
        let config = fit_config(k, &args.model, threads)?;
        let fail = |e: slda::Error| match e.root() {
            slda::Error::TooFewDocuments { .. } | slda::Error::InvalidArgument(_) => Failure::new(1, e.to_string()),
            _ => Failure::new(4, format!("evaluation failed for K={k}: {e}")),
        };
        let report = cross_validate(&corpus, &config, args.folds, fold_seed).map_err(fail)?;
        // The split depends only on the labels and the fold seed, not on K.
        if summary.is_empty() {
            let folds = with_suffix(&args.out, ".folds");
            write_file(&folds, &fold_report(&report.fold_assignment(corpus.num_documents())))?;
            manifest.artifact(&folds);
        }
        let csv = with_suffix(&args.out, &format!(".K{k}.csv"));
        write_file(&csv, &report.to_csv())?;
        manifest.artifact(&csv);
        tables.push_str(&format!("K = {k}, sLDA\n{}\n", report.to_table()));
        let mut entry = json!({ "topics": k, "slda_pr2": report.pooled.pr2, "slda_corr": report.pooled.corr });

        if args.baseline == BaselineArg::LdaRegression {
            let base = baseline_lda_regression(&corpus, &config, args.folds, fold_seed).map_err(fail)?;
            let csv = with_suffix(&args.out, &format!(".K{k}.baseline.csv"));
            write_file(&csv, &base.to_csv())?;
            manifest.artifact(&csv);
            tables.push_str(&format!("K = {k}, LDA + regression\n{}\n", base.to_table()));
            tables.push_str(&format!(
                "K = {k} pooled     {:>10}  {:>10}\n  pR2             {:>10.4}  {:>10.4}\n  corr            {:>10.4}  {:>10.4}\n\n",
                "sLDA", "baseline", report.pooled.pr2, base.pooled.pr2, report.pooled.corr, base.pooled.corr
            ));
            merge(&mut entry, json!({ "baseline_pr2": base.pooled.pr2, "baseline_corr": base.pooled.corr }));
        }
        summary.push(entry);
    }
    print!("{tables}");
    let table_path = with_suffix(&args.out, ".txt");
    write_file(&table_path, &tables)?;
    manifest.artifact(&table_path);

    let config = fit_config(args.topics[0], &args.model, threads)?;
    let mut options = model_options(&config, &args.model);
    merge(
        &mut options,
        json!({
            "docs": args.input.docs,
            "responses": args.input.responses,
            "vocab": args.input.vocab,
            "topics": args.topics,
            "folds": args.folds,
            "fold_seed": fold_seed,
            "baseline": match args.baseline {
                BaselineArg::None => "none",
                BaselineArg::LdaRegression => "lda-regression",
            },
            "out": args.out,
            "pooled": summary,
        }),
    );
    let path = args.manifest.clone().unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    manifest.finish(&path, options, Some(args.model.seed), threads)
}

fn cmd_generate(args: &GenerateArgs, threads: Option<usize>) -> CmdResult {
    let mut manifest = Manifest::new("generate");
    let k = args.topics;
    if k == 0 || args.vocab_size < k || !(0.0..=1.0).contains(&args.leak) {
        return Err(Failure::new(1, "need 1 <= topics <= vocab-size and leak in [0, 1]"));
    }
    let eta = match &args.eta {
        Some(v) if v.len() == k => ndarray::Array1::from(v.clone()),
        Some(v) => return Err(Failure::new(1, format!("--eta has {} values, expected {k}", v.len()))),
        None if k == 1 => ndarray::Array1::zeros(1),
        None => ndarray::Array1::linspace(-2.0, 2.0, k),
    };
    let spec = SyntheticSpec {
        alpha: args.alpha.unwrap_or(1.0 / k as f64),
        beta: separated_topics(k, args.vocab_size, args.leak),
        glm: GlmParams { eta, delta: args.delta },
        family: match args.family {
            FamilyArg::Gaussian => ResponseFamily::gaussian(),
            FamilyArg::Poisson => ResponseFamily::poisson(),
        },
        num_documents: args.num_docs,
        doc_length: args.doc_length,
    };
    let corpus = generate_synthetic(&spec, args.seed).map_err(|e| Failure::new(1, e.to_string()))?;
    let docs = with_suffix(&args.out, ".docs");
    write_with(&docs, |w| corpus.write_documents(w))?;
    manifest.artifact(&docs);
    let responses = with_suffix(&args.out, ".responses");
    write_with(&responses, |w| corpus.write_responses(w))?;
    manifest.artifact(&responses);
    let options = json!({
        "topics": k,
        "vocab_size": args.vocab_size,
        "num_docs": args.num_docs,
        "doc_length": args.doc_length,
        "alpha": spec.alpha,
        "leak": args.leak,
        "eta": spec.glm.eta.to_vec(),
        "delta": args.delta,
        "family": match args.family {
            FamilyArg::Gaussian => "gaussian",
            FamilyArg::Poisson => "poisson",
        },
        "out": args.out,
    });
    let path = args.manifest.clone().unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    manifest.finish(&path, options, Some(args.seed), threads)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Prune(a) => cmd_prune(a, cli.threads),
        Command::Train(a) => cmd_train(a, cli.threads),
        Command::Predict(a) => cmd_predict(a, cli.threads),
        Command::Eval(a) => cmd_eval(a, cli.threads),
        Command::Generate(a) => cmd_generate(a, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
