//! Command-line front end: one subcommand per pipeline stage, file artifacts
//! between stages, a JSON run manifest next to every output, and fixed exit
//! codes (0 ok, 2 invalid input/config, 3 degenerate data or non-convergence,
//! 4 internal error).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use probedet::capture::{read_pcap, write_pcap};
use probedet::cnn::{fit_encoding, saliency, to_pgm, train_cnn, CnnError, CnnModel, CnnSpec, ImageEncoding};
use probedet::dataset::{
    apply_impute, drop_uninformative, fit_impute, flow_feature_set, from_csv,
    merge_feature_sets, one_hot_encode, session_feature_set, split, temporal_feature_set, to_csv,
    DatasetError, FeatureTable, NumericImpute,
};
use probedet::ensemble::{
    fit_bagging, random_search_tune, spec_from_params, BaggingModel, BaggingSpec, EnsembleError,
    SearchSpace,
};
use probedet::eval::{self, compare, default_misuse_rules, misuse_detect, EvalError, MisuseRule};
use probedet::flow::{assemble_flows, extract_flow_features, FlowTimeouts};
use probedet::learners::{self, LearnerError, TrainedLearner};
use probedet::selection::{run_hybrid_selection, FilterConfig, GaConfig};
use probedet::synth::{gen_dataset, truth_from_csv, truth_to_csv, ScenarioConfig};
use probedet::temporal::{count_signals_windowed, WindowAnchor};

#[derive(Parser)]
#[command(name = "probedet", version, about = "pcap-to-verdict probing detection pipeline")]
struct Cli {
    /// JSON config file with stage-specific parameter blocks.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage (overrides the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic capture (capture.pcap) with ground truth (truth.csv).
    Synth,
    /// Assemble flows from a pcap and write the three feature-set CSVs.
    Extract {
        #[arg(long)]
        input: PathBuf,
    },
    /// Merge feature sets, preprocess, label from truth, and split.
    Dataset {
        #[arg(long)]
        flows: PathBuf,
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        temporal: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Hybrid filter + wrapper feature selection; writes selection.json.
    Select {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
    },
    /// Fit a model (ensemble | cnn | gnb | logreg | knn | svm | tree | forest | xtrees).
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "ensemble")]
        model: String,
        /// selection.json restricting the feature columns.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Random-search hyperparameter tuning over a config-supplied space.
    Tune {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Score a model (or a prediction file) against a labeled test CSV.
    Eval {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Anomaly model vs. misuse-rule baseline on the same test rows.
    Compare {
        /// Original capture, reprocessed for rule signals.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Optional JSON ruleset; defaults to the built-in nmap-style rules.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Input-gradient saliency map for one test row of a CNN model.
    Saliency {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 0)]
        row: usize,
        #[arg(long, default_value_t = 1)]
        target: usize,
        #[arg(long)]
        guided: bool,
    },
}

// ---------------------------------------------------------------------------
// Error-to-exit-code mapping

#[derive(Debug)]
enum CliError {
    /// Bad input or config: exit 2.
    Invalid(String),
    /// Degenerate data or a model that failed to converge: exit 3.
    Degenerate(String),
    /// Anything else: exit 4.
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Degenerate(m) | CliError::Internal(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> CliError {
        match e {
            DatasetError::AllDropped
            | DatasetError::ClassTooSmall(_)
            | DatasetError::NoObservedValues(_) => CliError::Degenerate(e.to_string()),
            DatasetError::Io(io) => CliError::Internal(io.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> CliError {
        match e {
            LearnerError::EmptyTrainingSet => CliError::Degenerate(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> CliError {
        match e {
            EvalError::OneClassOnly => CliError::Degenerate(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> CliError {
        match e {
            EnsembleError::Learner(_) | EnsembleError::Member { .. } | EnsembleError::Eval(_) => {
                CliError::Degenerate(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CnnError> for CliError {
    fn from(e: CnnError) -> CliError {
        match e {
            CnnError::Divergence { .. } => CliError::Degenerate(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Persisted model container

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelFile {
    Ensemble { model: BaggingModel, feature_names: Vec<String> },
    Learner { model: TrainedLearner },
    Cnn { model: CnnModel, encoding: ImageEncoding, feature_names: Vec<String> },
}

impl ModelFile {
    fn feature_names(&self) -> &[String] {
        match self {
            ModelFile::Ensemble { feature_names, .. } | ModelFile::Cnn { feature_names, .. } => {
                feature_names
            }
            ModelFile::Learner { model } => model.feature_names.as_deref().unwrap_or(&[]),
        }
    }

    /// Project a table onto the training schema, then matrix-ify.
    fn matrix_for(&self, t: &FeatureTable) -> Result<Vec<Vec<f64>>, CliError> {
        let names = self.feature_names();
        let projected;
        let t = if names.is_empty() {
            t
        } else {
            projected = t.select_columns(names)?;
            &projected
        };
        Ok(t.to_matrix()?)
    }

    fn predict(&self, x: &[Vec<f64>]) -> Result<(Vec<u8>, Vec<f64>), CliError> {
        let probs: Vec<[f64; 2]> = match self {
            ModelFile::Ensemble { model, .. } => model.predict_proba(x)?,
            ModelFile::Learner { model } => model.predict_proba(x)?,
            ModelFile::Cnn { model, encoding, .. } => {
                if let Some(row) = x.iter().find(|r| r.len() != encoding.d) {
                    return Err(CliError::Invalid(format!(
                        "model expects {} features, got {}",
                        encoding.d,
                        row.len()
                    )));
                }
                let images: Vec<Vec<f64>> = x.iter().map(|r| encoding.encode(r)).collect();
                model.predict_proba(&images)?
            }
        };
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let preds = scores.iter().map(|&s| (s >= 0.5) as u8).collect();
        Ok((preds, scores))
    }
}

// ---------------------------------------------------------------------------
// Helpers

struct Ctx {
    config: Option<Value>,
    config_bytes: Option<Vec<u8>>,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn section<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.config.as_ref().and_then(|c| c.get(key)) {
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Invalid(format!("config section '{key}': {e}"))),
            None => Ok(None),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn write_out(ctx: &Ctx, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = ctx.out.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_json<T: Serialize>(ctx: &Ctx, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("serialize {name}: {e}")))?;
    text.push('\n');
    write_out(ctx, name, text.as_bytes())
}

fn write_table(ctx: &Ctx, name: &str, t: &FeatureTable) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    to_csv(t, &mut buf)?;
    write_out(ctx, name, &buf)
}

fn load_table(path: &Path) -> Result<FeatureTable, CliError> {
    let bytes = read_file(path)?;
    Ok(from_csv(bytes.as_slice())?)
}

fn table_xy(t: &FeatureTable) -> Result<(Vec<Vec<f64>>, Vec<u8>), CliError> {
    let x = t.to_matrix()?;
    let y = t.labels.clone().ok_or_else(|| invalid(DatasetError::NotLabeled))?;
    Ok((x, y))
}

fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct SelectionFile {
    subset: probedet::selection::FeatureSubset,
    report: probedet::selection::SelectionReport,
}

/// Restrict a labeled table to the stored feature subset, tolerating one-hot
/// columns already absent from the table.
fn restrict(t: &FeatureTable, names: &[String]) -> Result<FeatureTable, CliError> {
    Ok(t.select_columns(names)?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    outputs: Vec<String>,
    elapsed_ms: u128,
}

fn write_manifest(
    ctx: &Ctx,
    command: &str,
    outputs: &[PathBuf],
    started: Instant,
) -> Result<(), CliError> {
    let config_sha256 = match &ctx.config_bytes {
        Some(b) => {
            let mut h = Sha256::new();
            h.update(b);
            format!("{:x}", h.finalize())
        }
        None => "none".to_string(),
    };
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: ctx.seed,
        config_sha256,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        elapsed_ms: started.elapsed().as_millis(),
    };
    write_json(ctx, &format!("{command}_manifest.json"), &manifest)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_synth(ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    let mut scenario: ScenarioConfig = ctx.section("scenario")?.unwrap_or_default();
    scenario.seed = ctx.seed;
    let (packets, truth) = gen_dataset(&scenario);
    let pcap = write_out(ctx, "capture.pcap", &write_pcap(&packets))?;
    let truth_path = write_out(ctx, "truth.csv", truth_to_csv(&truth).as_bytes())?;
    Ok(vec![pcap, truth_path])
}

fn cmd_extract(ctx: &Ctx, input: &Path) -> Result<Vec<PathBuf>, CliError> {
    let bytes = read_file(input)?;
    let contents = read_pcap(&bytes).map_err(invalid)?;
    let flows = assemble_flows(&contents.packets, FlowTimeouts::default());
    let features: Vec<_> = flows.iter().map(extract_flow_features).collect();
    let window: f64 = ctx.section("window_secs")?.unwrap_or(2.0);
    let temporal = count_signals_windowed(&contents.packets, &flows, window, WindowAnchor::Forward);
    let out = vec![
        write_table(ctx, "flows.csv", &flow_feature_set(&features))?,
        write_table(ctx, "session.csv", &session_feature_set(&features))?,
        write_table(ctx, "temporal.csv", &temporal_feature_set(&temporal))?,
    ];
    Ok(out)
}

#[derive(Deserialize)]
struct DatasetOptions {
    #[serde(default = "default_ratios")]
    ratios: (f64, f64, f64),
    #[serde(default = "default_true")]
    stratified: bool,
    #[serde(default)]
    impute: NumericImpute,
}

fn default_ratios() -> (f64, f64, f64) {
    (0.7, 0.15, 0.15)
}

fn default_true() -> bool {
    true
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions { ratios: default_ratios(), stratified: true, impute: NumericImpute::default() }
    }
}

fn cmd_dataset(
    ctx: &Ctx,
    flows: &Path,
    session: &Path,
    temporal: &Path,
    truth: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let opts: DatasetOptions = ctx.section("dataset")?.unwrap_or_default();
    let flow_t = load_table(flows)?;
    let session_t = load_table(session)?;
    let temporal_t = load_table(temporal)?;
    let truth_text = String::from_utf8(read_file(truth)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", truth.display())))?;
    let truth = truth_from_csv(&truth_text).map_err(CliError::Invalid)?;

    let mut merged = merge_feature_sets(&flow_t, &session_t, &temporal_t)?;
    let labels: Vec<u8> = merged
        .index
        .iter()
        .map(|rk| {
            truth.labels.get(&rk.key).copied().ok_or_else(|| {
                CliError::Invalid(format!("truth does not cover flow starting at {}us", rk.start_us))
            })
        })
        .collect::<Result<_, _>>()?;
    merged.labels = Some(labels);

    let (kept, drop_report) = drop_uninformative(&merged)?;
    let encoded = one_hot_encode(&kept);
    let (train, val, test) = split(&encoded, opts.ratios, ctx.seed, opts.stratified)?;
    let stats = fit_impute(&train, opts.impute)?;
    let train = apply_impute(&train, &stats)?;
    let val = apply_impute(&val, &stats)?;
    let test = apply_impute(&test, &stats)?;

    let report = serde_json::json!({
        "rows": encoded.n_rows(),
        "columns": encoded.feature_names(),
        "dropped": drop_report,
        "impute": stats,
        "split": { "train": train.n_rows(), "val": val.n_rows(), "test": test.n_rows() },
    });
    Ok(vec![
        write_table(ctx, "train.csv", &train)?,
        write_table(ctx, "val.csv", &val)?,
        write_table(ctx, "test.csv", &test)?,
        write_json(ctx, "prep_report.json", &report)?,
    ])
}

fn cmd_select(ctx: &Ctx, train: &Path, val: &Path) -> Result<Vec<PathBuf>, CliError> {
    let train_t = load_table(train)?;
    let val_t = load_table(val)?;
    let (train_x, train_y) = table_xy(&train_t)?;
    let (val_x, val_y) = table_xy(&val_t)?;
    let filter_cfg: FilterConfig = ctx.section("filter")?.unwrap_or_default();
    let ga_cfg: GaConfig = ctx.section("ga")?.unwrap_or_default();
    let prune: f64 = ctx.section("prune_threshold")?.unwrap_or(0.75);
    let names = train_t.feature_names();
    let (subset, report) = run_hybrid_selection(
        &train_x, &train_y, &val_x, &val_y, &names, &filter_cfg, &ga_cfg, prune, ctx.seed,
    );
    Ok(vec![write_json(ctx, "selection.json", &SelectionFile { subset, report })?])
}

fn cmd_train(
    ctx: &Ctx,
    train: &Path,
    model_kind: &str,
    features: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let mut train_t = load_table(train)?;
    if let Some(sel_path) = features {
        let sel: SelectionFile = serde_json::from_slice(&read_file(sel_path)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", sel_path.display())))?;
        train_t = restrict(&train_t, &sel.subset.names)?;
    }
    let (x, y) = table_xy(&train_t)?;
    let names = train_t.feature_names();

    let model = match model_kind {
        "ensemble" => {
            let spec: BaggingSpec = ctx.section("ensemble")?.unwrap_or_default();
            let model = fit_bagging(&x, &y, &spec, ctx.seed)?;
            ModelFile::Ensemble { model, feature_names: names }
        }
        "cnn" => {
            let spec: CnnSpec = ctx.section("cnn")?.unwrap_or_else(default_cli_cnn_spec);
            let spec = CnnSpec { seed: ctx.seed, ..spec };
            let encoding = fit_encoding(&x, spec.side)?;
            let images: Vec<Vec<f64>> = x.iter().map(|r| encoding.encode(r)).collect();
            let model = train_cnn(&images, &y, None, &spec)?;
            ModelFile::Cnn { model, encoding, feature_names: names }
        }
        kind => {
            let params: BTreeMap<String, Value> = ctx.section("params")?.unwrap_or_default();
            let spec = spec_from_params(kind, &params)?;
            let model = learners::fit_named(&spec, &x, &y, ctx.seed, Some(names))?;
            ModelFile::Learner { model }
        }
    };
    let report = serde_json::json!({
        "model": model_kind,
        "rows": x.len(),
        "features": train_t.n_cols(),
    });
    Ok(vec![
        write_json(ctx, "model.json", &model)?,
        write_json(ctx, "train_report.json", &report)?,
    ])
}

/// A deliberately small default so CPU training stays fast on tabular data;
/// pass a `cnn` config section for bigger topologies.
fn default_cli_cnn_spec() -> CnnSpec {
    CnnSpec {
        side: 8,
        conv: vec![probedet::cnn::ConvLayerSpec {
            filters: 4,
            kernel: 3,
            activation: probedet::cnn::Activation::Relu,
            dropout: 0.1,
        }],
        dense_units: 32,
        epochs: 10,
        batch_size: 32,
        ..CnnSpec::default()
    }
}

fn cmd_tune(
    ctx: &Ctx,
    train: &Path,
    val: &Path,
    budget: Option<usize>,
) -> Result<Vec<PathBuf>, CliError> {
    let space: SearchSpace = ctx
        .section("space")?
        .ok_or_else(|| CliError::Invalid("tune requires a 'space' config section".into()))?;
    let budget = budget.or(ctx.section("budget")?).unwrap_or(20);
    let (train_x, train_y) = table_xy(&load_table(train)?)?;
    let (val_x, val_y) = table_xy(&load_table(val)?)?;
    let result = random_search_tune(&space, budget, &train_x, &train_y, &val_x, &val_y, ctx.seed)?;
    Ok(vec![write_json(ctx, "tune.json", &result)?])
}

fn read_pred_csv(path: &Path) -> Result<(Vec<u8>, Option<Vec<f64>>), CliError> {
    let bytes = read_file(path)?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let has_score = rdr
        .headers()
        .map_err(invalid)?
        .iter()
        .any(|h| h == "score");
    let mut preds = Vec::new();
    let mut scores = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(invalid)?;
        let p: u8 = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::Invalid(format!("bad prediction row in {}", path.display())))?;
        preds.push(p);
        if has_score {
            let s: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::Invalid(format!("bad score row in {}", path.display())))?;
            scores.push(s);
        }
    }
    Ok((preds, has_score.then_some(scores)))
}

fn cmd_eval(
    ctx: &Ctx,
    test: &Path,
    model: Option<&Path>,
    pred: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let test_t = load_table(test)?;
    let y = test_t.labels.clone().ok_or_else(|| invalid(DatasetError::NotLabeled))?;
    let (preds, scores) = match (model, pred) {
        (Some(m), None) => {
            let mf = load_model(m)?;
            let x = mf.matrix_for(&test_t)?;
            let (p, s) = mf.predict(&x)?;
            (p, Some(s))
        }
        (None, Some(p)) => read_pred_csv(p)?,
        _ => return Err(CliError::Invalid("eval needs exactly one of --model or --pred".into())),
    };
    let report = eval::report(&y, &preds, scores.as_deref())?;
    let mut outputs = vec![write_json(ctx, "eval.json", &report)?];
    if let Some(s) = &scores {
        let mut csv_text = String::from("pred,score\n");
        for (p, sc) in preds.iter().zip(s) {
            csv_text.push_str(&format!("{p},{sc}\n"));
        }
        outputs.push(write_out(ctx, "predictions.csv", csv_text.as_bytes())?);
    }
    Ok(outputs)
}

fn cmd_compare(
    ctx: &Ctx,
    input: &Path,
    test: &Path,
    model: &Path,
    rules_path: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let rules: Vec<MisuseRule> = match rules_path {
        Some(p) => serde_json::from_slice(&read_file(p)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?,
        None => default_misuse_rules(),
    };
    let bytes = read_file(input)?;
    let contents = read_pcap(&bytes).map_err(invalid)?;
    let flows = assemble_flows(&contents.packets, FlowTimeouts::default());
    let features: Vec<_> = flows.iter().map(extract_flow_features).collect();
    let window: f64 = ctx.section("window_secs")?.unwrap_or(2.0);
    let temporal = count_signals_windowed(&contents.packets, &flows, window, WindowAnchor::Forward);
    let misuse = misuse_detect(&features, &temporal, &rules)?;
    let by_key: std::collections::HashMap<_, u8> = features
        .iter()
        .zip(&misuse.verdicts)
        .map(|(f, &v)| ((f.key, f.start_us), v))
        .collect();

    let test_t = load_table(test)?;
    let y = test_t.labels.clone().ok_or_else(|| invalid(DatasetError::NotLabeled))?;
    let mf = load_model(model)?;
    let x = mf.matrix_for(&test_t)?;
    let (anomaly_pred, _) = mf.predict(&x)?;
    let mut unmatched = 0usize;
    let misuse_pred: Vec<u8> = test_t
        .index
        .iter()
        .map(|rk| match by_key.get(&(rk.key, rk.start_us)) {
            Some(&v) => v,
            None => {
                unmatched += 1;
                0
            }
        })
        .collect();
    let report = compare(&y, &anomaly_pred, &misuse_pred)?;
    let full = serde_json::json!({
        "comparison": report,
        "rule_hits": misuse.rule_hits,
        "unmatched_test_rows": unmatched,
    });
    Ok(vec![write_json(ctx, "compare.json", &full)?])
}

fn cmd_saliency(
    ctx: &Ctx,
    model_path: &Path,
    test: &Path,
    row: usize,
    target: usize,
    guided: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let mf = load_model(model_path)?;
    let test_t = load_table(test)?;
    let x = mf.matrix_for(&test_t)?;
    let ModelFile::Cnn { model, encoding, .. } = mf else {
        return Err(CliError::Invalid("saliency requires a cnn model".into()));
    };
    if target > 1 {
        return Err(CliError::Invalid("target class must be 0 or 1".into()));
    }
    let Some(features) = x.get(row) else {
        return Err(CliError::Invalid(format!("row {row} out of range ({} rows)", x.len())));
    };
    let image = encoding.encode(features);
    let map = saliency(&model, &image, target, guided);
    let side = model.spec.side;
    Ok(vec![
        write_out(ctx, "input.pgm", to_pgm(&image, side).as_bytes())?,
        write_out(ctx, "saliency.pgm", to_pgm(&map, side).as_bytes())?,
    ])
}

// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let config_bytes = match &cli.config {
        Some(p) => Some(read_file(p)?),
        None => None,
    };
    let config: Option<Value> = match &config_bytes {
        Some(b) => Some(
            serde_json::from_slice(b)
                .map_err(|e| CliError::Invalid(format!("config is not valid JSON: {e}")))?,
        ),
        None => None,
    };
    let seed = cli
        .seed
        .or_else(|| config.as_ref().and_then(|c| c.get("seed")).and_then(Value::as_u64))
        .unwrap_or(0);
    fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", cli.out.display())))?;
    let ctx = Ctx { config, config_bytes, seed, out: cli.out.clone() };

    let (name, outputs) = match &cli.cmd {
        Cmd::Synth => ("synth", cmd_synth(&ctx)?),
        Cmd::Extract { input } => ("extract", cmd_extract(&ctx, input)?),
        Cmd::Dataset { flows, session, temporal, truth } => {
            ("dataset", cmd_dataset(&ctx, flows, session, temporal, truth)?)
        }
        Cmd::Select { train, val } => ("select", cmd_select(&ctx, train, val)?),
        Cmd::Train { train, model, features } => {
            ("train", cmd_train(&ctx, train, model, features.as_deref())?)
        }
        Cmd::Tune { train, val, budget } => ("tune", cmd_tune(&ctx, train, val, *budget)?),
        Cmd::Eval { test, model, pred } => {
            ("eval", cmd_eval(&ctx, test, model.as_deref(), pred.as_deref())?)
        }
        Cmd::Compare { input, test, model, rules } => {
            ("compare", cmd_compare(&ctx, input, test, model, rules.as_deref())?)
        }
        Cmd::Saliency { model, test, row, target, guided } => {
            ("saliency", cmd_saliency(&ctx, model, test, *row, *target, *guided)?)
        }
    };
    write_manifest(&ctx, name, &outputs, started)?;
    for p in outputs {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
