use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use aqp_core::encoder::{self, EncodedQuery, TokenVocabulary};
use aqp_core::executor;
use aqp_core::hash::{json_hash, sha256_hex};
use aqp_core::metrics::{self, EvalReport};
use aqp_core::nnet::{EncodedSet, LstmModel, ModelConfig, Predictor, TrainReport};
use aqp_core::querygen::{self, FlatQuery, LabeledQuery, QueryTemplate, TemplateFile, WorkloadRecord};
use aqp_core::store::{self, AttributeKind, CsvOptions, Dataset};
use aqp_core::synth;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{invalid, read_manifest, verify_artifact, CmdResult, Classify, Outputs};
use crate::config::{MetricsSettings, ModelSettings};

pub const TEMPLATE_FILE: &str = "template.json";
pub const WORKLOAD_FILE: &str = "workload.jsonl";
pub const LABELED_FILE: &str = "labeled.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub threads: usize,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn hex_json<T: Serialize>(v: &T) -> String {
    json_hash(v).expect("value serializes")
}

/// File-system-friendly name of an aggregation target, e.g. `avg_amount`.
pub fn slug(target: &querygen::AggregationTarget) -> String {
    let raw: String = target
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    raw.split('_').filter(|s| !s.is_empty()).collect::<Vec<_>>().join("_")
}

fn load_dataset(data: &Path, schema: &Path) -> CmdResult<(Dataset, BTreeMap<String, String>)> {
    let decls = store::read_schema(schema).invalid("cannot read schema")?;
    let ds = store::load_csv(data, &decls, &CsvOptions::default()).invalid("cannot load dataset")?;
    let mut inputs = BTreeMap::new();
    inputs.insert("data".into(), verify_artifact(data)?);
    inputs.insert("schema".into(), verify_artifact(schema)?);
    Ok((ds, inputs))
}

fn read_jsonl(path: &Path) -> CmdResult<Vec<WorkloadRecord>> {
    let file = std::fs::File::open(path).invalid(format!("cannot open {}", path.display()))?;
    querygen::read_workload(BufReader::new(file)).invalid(format!("malformed workload {}", path.display()))
}

fn jsonl<R: Into<WorkloadRecord>>(records: impl IntoIterator<Item = R>) -> CmdResult<Vec<u8>> {
    let mut buf = Vec::new();
    querygen::write_workload(&mut buf, records).runtime("cannot serialize workload")?;
    Ok(buf)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Transactions,
    RunningExample,
}

pub fn synth(ctx: &Ctx, kind: SynthKind, rows: usize) -> CmdResult<()> {
    let (ds, schema) = match kind {
        SynthKind::Transactions => (synth::transactions(rows, ctx.seed()), synth::transactions_schema()),
        SynthKind::RunningExample => (synth::running_example(), synth::running_example_schema()),
    };
    let mut csv = Vec::new();
    synth::write_csv(&ds, &mut csv).runtime("cannot render dataset")?;
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write("data.csv", &csv)?;
    out.write_json("schema.json", &schema)?;
    out.write_manifest("synth", BTreeMap::new(), json!({ "rows": ds.row_count(), "seed": ctx.seed() }))?;
    out.commit();
    println!("wrote {} rows to {}", ds.row_count(), ctx.out_dir.join("data.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct AttributeProfile {
    name: String,
    kind: AttributeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    cardinality: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<store::ContinuousStats>,
    entropy_bits: f64,
}

#[derive(Debug, Serialize)]
struct Profile {
    rows: usize,
    dropped_rows: usize,
    nominal_attributes: usize,
    continuous_attributes: usize,
    attributes: Vec<AttributeProfile>,
    where_attributes: Vec<String>,
    mean_entropy_bits: f64,
    target_std: BTreeMap<String, f64>,
}

pub fn profile(ctx: &Ctx, data: &Path, schema: &Path, targets: &[String], where_attrs: &[String]) -> CmdResult<()> {
    let (ds, inputs) = load_dataset(data, schema)?;
    let mut attributes = Vec::new();
    for a in ds.schema() {
        let entropy_bits = metrics::column_entropy(&ds, &a.name).invalid("entropy")?;
        let (cardinality, summary) = match a.kind {
            AttributeKind::Nominal => (Some(ds.nominal(&a.name).invalid("nominal")?.cardinality()), None),
            AttributeKind::Continuous => (None, ds.continuous_stats(&a.name).ok()),
        };
        attributes.push(AttributeProfile {
            name: a.name.clone(),
            kind: a.kind,
            cardinality,
            summary,
            entropy_bits,
        });
    }
    let where_attributes: Vec<String> = if where_attrs.is_empty() {
        ds.schema().iter().map(|a| a.name.clone()).collect()
    } else {
        where_attrs.to_vec()
    };
    let mean_entropy_bits = metrics::mean_entropy(&ds, &where_attributes).invalid("mean entropy")?;
    let targets: Vec<String> = if targets.is_empty() {
        ds.schema()
            .iter()
            .filter(|a| a.kind == AttributeKind::Continuous)
            .map(|a| a.name.clone())
            .collect()
    } else {
        targets.to_vec()
    };
    let mut target_std = BTreeMap::new();
    for t in targets {
        let v = ds.continuous(&t).invalid(format!("target `{t}`"))?;
        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len().max(1) as f64;
        target_std.insert(t, var.sqrt());
    }
    let count = |k| ds.schema().iter().filter(|a| a.kind == k).count();
    let report = Profile {
        rows: ds.row_count(),
        dropped_rows: ds.dropped_rows(),
        nominal_attributes: count(AttributeKind::Nominal),
        continuous_attributes: count(AttributeKind::Continuous),
        attributes,
        where_attributes,
        mean_entropy_bits,
        target_std,
    };
    let mut out = Outputs::new(&ctx.out_dir)?;
    let path = out.write_json("profile.json", &report)?;
    out.write_manifest("profile", inputs, serde_json::Value::Null)?;
    out.commit();
    print!("{}", std::fs::read_to_string(path).runtime("cannot read profile back")?);
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn generate(ctx: &Ctx, data: &Path, schema: &Path, template: &Path, sql: bool) -> CmdResult<()> {
    let (ds, mut inputs) = load_dataset(data, schema)?;
    let text = std::fs::read_to_string(template).invalid(format!("cannot read {}", template.display()))?;
    inputs.insert("template".into(), sha256_hex(text.as_bytes()));
    let mut file = TemplateFile::from_json(&text).invalid("malformed template")?;
    if let Some(seed) = ctx.seed {
        file.seed = seed;
    }
    let resolved = file.resolve(&ds).invalid("invalid template")?;
    let workload = querygen::generate_workload(&ds, &resolved).invalid("cannot generate workload")?;

    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write_json(TEMPLATE_FILE, &resolved)?;
    out.write(WORKLOAD_FILE, &jsonl(&workload)?)?;
    if sql {
        let mut text = String::new();
        for q in &workload {
            text.push_str(&q.to_sql("data"));
            text.push_str(";\n");
        }
        out.write("workload.sql", text.as_bytes())?;
    }
    let targets: Vec<String> = resolved.targets.iter().map(ToString::to_string).collect();
    out.write_manifest(
        "generate",
        inputs,
        json!({ "queries": workload.len(), "targets": targets, "seed": resolved.seed }),
    )?;
    out.commit();
    println!("generated {} queries", workload.len());
    Ok(())
}

pub fn label(ctx: &Ctx, data: &Path, schema: &Path, workload: &Path) -> CmdResult<()> {
    let (ds, mut inputs) = load_dataset(data, schema)?;
    inputs.insert("workload".into(), verify_artifact(workload)?);
    let queries: Vec<FlatQuery> = read_jsonl(workload)?.iter().map(WorkloadRecord::query).collect();
    let (labeled, report) = executor::label_workload(&ds, &queries, ctx.threads).invalid("cannot label workload")?;
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write(LABELED_FILE, &jsonl(&labeled)?)?;
    out.write_manifest("label", inputs, serde_json::to_value(&report).runtime("report")?)?;
    out.commit();
    println!(
        "labeled {} of {} queries ({} excluded: empty support)",
        report.labeled, report.total, report.excluded_empty
    );
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSplit {
    pub target: querygen::AggregationTarget,
    pub slug: String,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodeInfo {
    pub vocab_hash: String,
    pub input_shape: (usize, usize),
    pub seed: u64,
    pub targets: Vec<TargetSplit>,
}

pub fn split_path(slug: &str, part: &str) -> String {
    format!("splits/{slug}.{part}.jsonl")
}

pub fn encode(ctx: &Ctx, labeled_path: &Path, template_path: &Path) -> CmdResult<()> {
    let mut inputs = BTreeMap::new();
    inputs.insert("labeled".into(), verify_artifact(labeled_path)?);
    inputs.insert("template".into(), verify_artifact(template_path)?);
    let template: QueryTemplate = serde_json::from_str(
        &std::fs::read_to_string(template_path).invalid(format!("cannot read {}", template_path.display()))?,
    )
    .invalid("malformed resolved template")?;
    let file = std::fs::File::open(labeled_path).invalid(format!("cannot open {}", labeled_path.display()))?;
    let labeled = querygen::read_labeled(BufReader::new(file)).invalid("malformed labeled workload")?;
    if labeled.is_empty() {
        return invalid("labeled workload is empty");
    }

    let all: Vec<FlatQuery> = labeled.iter().map(|l| l.query.clone()).collect();
    let vocab = encoder::build_vocabulary(&all, &template).invalid("cannot build vocabulary")?;
    let vocab_hash = vocab.content_hash();

    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write(VOCAB_FILE, vocab.to_json().as_bytes())?;
    let mut targets = Vec::new();
    for t in &template.targets {
        let part: Vec<LabeledQuery> = labeled.iter().filter(|l| &l.query.target == t).cloned().collect();
        if part.is_empty() {
            log::warn!("no labeled queries for {t}; skipped");
            continue;
        }
        let s = querygen::split(part, querygen::DEFAULT_FRACTIONS, ctx.seed()).invalid(format!("cannot split {t}"))?;
        let slug = slug(t);
        out.write(&split_path(&slug, "train"), &jsonl(&s.train)?)?;
        out.write(&split_path(&slug, "validation"), &jsonl(&s.validation)?)?;
        out.write(&split_path(&slug, "test"), &jsonl(&s.test)?)?;
        targets.push(TargetSplit {
            target: t.clone(),
            slug,
            train: s.train.len(),
            validation: s.validation.len(),
            test: s.test.len(),
        });
    }
    let info = EncodeInfo {
        vocab_hash,
        input_shape: vocab.input_shape(),
        seed: ctx.seed(),
        targets,
    };
    out.write_manifest("encode", inputs, serde_json::to_value(&info).runtime("manifest")?)?;
    out.commit();
    println!(
        "vocabulary of {} tokens, input shape {:?}, {} target(s)",
        vocab.len(),
        info.input_shape,
        info.targets.len()
    );
    Ok(())
}

struct Encoded {
    vocab: TokenVocabulary,
    info: EncodeInfo,
}

fn load_encoded(dir: &Path) -> CmdResult<Encoded> {
    let manifest = read_manifest(dir, "encode")?;
    let info: EncodeInfo = serde_json::from_value(manifest.info).invalid("malformed encode manifest")?;
    let vocab_path = dir.join(VOCAB_FILE);
    verify_artifact(&vocab_path)?;
    let vocab = TokenVocabulary::from_json(
        &std::fs::read_to_string(&vocab_path).invalid(format!("cannot read {}", vocab_path.display()))?,
    )
    .invalid("malformed vocabulary")?;
    if vocab.content_hash() != info.vocab_hash {
        return invalid("vocabulary does not match the encode manifest");
    }
    Ok(Encoded { vocab, info })
}

fn load_split(dir: &Path, slug: &str, part: &str, vocab: &TokenVocabulary) -> CmdResult<(Vec<EncodedQuery>, Vec<f64>)> {
    let path = dir.join(split_path(slug, part));
    verify_artifact(&path)?;
    let file = std::fs::File::open(&path).invalid(format!("cannot open {}", path.display()))?;
    let labeled = querygen::read_labeled(BufReader::new(file)).invalid(format!("malformed {}", path.display()))?;
    let queries: Vec<FlatQuery> = labeled.iter().map(|l| l.query.clone()).collect();
    let xs = encoder::encode_all(&queries, vocab).invalid(format!("cannot encode {}", path.display()))?;
    Ok((xs, labeled.iter().map(|l| l.label).collect()))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub target: querygen::AggregationTarget,
    pub slug: String,
    pub checkpoint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainInfo {
    pub vocab_hash: String,
    pub models: Vec<TrainedModel>,
}

pub fn model_config(shape: (usize, usize), seed: u64, s: &ModelSettings) -> ModelConfig {
    let d = ModelConfig::new(shape);
    ModelConfig {
        lstm_units: s.lstm_units.unwrap_or(d.lstm_units),
        dense_units: s.dense_units.unwrap_or(d.dense_units),
        learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
        batch_size: s.batch_size.unwrap_or(d.batch_size),
        max_epochs: s.max_epochs.unwrap_or(d.max_epochs),
        patience: s.patience.unwrap_or(d.patience),
        label_norm: s.label_norm.unwrap_or(d.label_norm),
        seed,
        ..d
    }
}

pub fn train(ctx: &Ctx, settings: &ModelSettings) -> CmdResult<()> {
    let dir = &ctx.out_dir;
    let Encoded { vocab, info } = load_encoded(dir)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("vocabulary".into(), info.vocab_hash.clone());
    let mut out = Outputs::new(dir)?;
    let mut reports: BTreeMap<String, TrainReport> = BTreeMap::new();
    let mut models = Vec::new();
    for t in &info.targets {
        let (xtr, ytr) = load_split(dir, &t.slug, "train", &vocab)?;
        let (xva, yva) = load_split(dir, &t.slug, "validation", &vocab)?;
        for (part, xs) in [("train", &xtr), ("validation", &xva)] {
            inputs.insert(split_path(&t.slug, part), hex_json(&xs.iter().map(EncodedQuery::cells).collect::<Vec<_>>()));
        }
        let config = model_config(info.input_shape, ctx.seed(), settings);
        let mut model = LstmModel::init(config).invalid("invalid model configuration")?;
        model.set_vocabulary_hash(info.vocab_hash.clone());
        let train = EncodedSet::new(&xtr, &ytr).invalid("training set")?;
        let val = EncodedSet::new(&xva, &yva).invalid("validation set")?;
        log::info!("training {} on {} queries", t.target, train.len());
        let report = model.fit(&train, &val).runtime(format!("training {} failed", t.target))?;
        println!(
            "{}: {} epochs, best validation MSE {:.4e} (normalized), {:.1} s",
            t.target,
            report.epochs.len(),
            report.best_val_mse,
            report.wall_clock_secs
        );
        let checkpoint = format!("models/{}.ckpt", t.slug);
        out.write(&checkpoint, &model.to_checkpoint_bytes())?;
        reports.insert(t.target.to_string(), report);
        models.push(TrainedModel {
            target: t.target.clone(),
            slug: t.slug.clone(),
            checkpoint,
        });
    }
    let info = TrainInfo {
        vocab_hash: info.vocab_hash,
        models,
    };
    out.write_manifest("train", inputs, serde_json::to_value(&info).runtime("manifest")?)?;
    // Written after the manifest: it carries wall-clock times.
    out.write_json("train_report.json", &reports)?;
    out.commit();
    Ok(())
}

struct Deployed {
    vocab: TokenVocabulary,
    encode: EncodeInfo,
    models: Vec<(TrainedModel, LstmModel)>,
}

fn load_models(dir: &Path) -> CmdResult<Deployed> {
    let Encoded { vocab, info: encode } = load_encoded(dir)?;
    let manifest = read_manifest(dir, "train")?;
    let info: TrainInfo = serde_json::from_value(manifest.info).invalid("malformed train manifest")?;
    if info.vocab_hash != encode.vocab_hash {
        return invalid("models were trained on a different vocabulary; rerun train");
    }
    let mut models = Vec::new();
    for m in info.models {
        let path = dir.join(&m.checkpoint);
        verify_artifact(&path)?;
        let model = LstmModel::load(&path, Some(&encode.vocab_hash)).invalid(format!("cannot load {}", path.display()))?;
        models.push((m, model));
    }
    Ok(Deployed { vocab, encode, models })
}

#[derive(Debug, Serialize)]
struct PredictionRecord<'a> {
    target: &'a querygen::AggregationTarget,
    filters: &'a querygen::FilterSet,
    prediction: f64,
}

pub fn predict(ctx: &Ctx, queries_path: &Path, output: &str) -> CmdResult<()> {
    let deployed = load_models(&ctx.out_dir)?;
    let records = read_jsonl(queries_path)?;
    let queries: Vec<FlatQuery> = records.iter().map(WorkloadRecord::query).collect();
    let mut predictions = vec![0.0; queries.len()];
    let mut routed = vec![false; queries.len()];
    for (m, model) in &deployed.models {
        let idx: Vec<usize> = (0..queries.len()).filter(|&i| queries[i].target == m.target).collect();
        let picked: Vec<FlatQuery> = idx.iter().map(|&i| queries[i].clone()).collect();
        let xs = encoder::encode_all(&picked, &deployed.vocab).invalid("cannot encode queries")?;
        let ys = model.predict_batch(&xs, ctx.threads).invalid("prediction failed")?;
        for (i, y) in idx.into_iter().zip(ys) {
            predictions[i] = y;
            routed[i] = true;
        }
    }
    if let Some(i) = routed.iter().position(|r| !r) {
        return invalid(format!("no model for target {} (query {})", queries[i].target, i + 1));
    }
    let mut buf = Vec::new();
    for (q, p) in queries.iter().zip(&predictions) {
        let rec = PredictionRecord {
            target: &q.target,
            filters: &q.filters,
            prediction: *p,
        };
        serde_json::to_writer(&mut buf, &rec).runtime("serialize")?;
        buf.push(b'\n');
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("queries".into(), verify_artifact(queries_path)?);
    inputs.insert("vocabulary".into(), deployed.encode.vocab_hash.clone());
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write(output, &buf)?;
    out.write_manifest("predict", inputs, json!({ "queries": queries.len() }))?;
    out.commit();
    println!("wrote {} predictions to {}", queries.len(), ctx.out_dir.join(output).display());
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct TimingOptions {
    pub warmup: usize,
    pub reps: usize,
    pub workers: usize,
}

impl TimingOptions {
    pub fn from_settings(s: &MetricsSettings, threads: usize) -> Self {
        Self {
            warmup: s.warmup.unwrap_or(20),
            reps: s.reps.unwrap_or(200),
            workers: s.workers.unwrap_or(threads),
        }
    }
}

/// Accuracy plus timing for one predictor on one test set.
pub fn evaluate<P: Predictor>(
    model: &P,
    target: Option<String>,
    xs: &[EncodedQuery],
    ys: &[f64],
    timing: TimingOptions,
) -> CmdResult<EvalReport> {
    let predictions = model.predict_many(xs, timing.workers).invalid("prediction failed")?;
    let mut report = EvalReport::from_predictions(target, &predictions, ys).invalid("cannot score test split")?;
    if timing.reps > 0 {
        report.ql_ms = Some(metrics::measure_ql(model, xs, timing.warmup, timing.reps).invalid("latency")?);
        let qt = metrics::measure_qt(model, xs, timing.workers).invalid("throughput")?;
        report.qt_qps = Some(qt.qps);
        report.qt_workers = Some(qt.workers);
    }
    report.input_tensor_variance = Some(metrics::input_tensor_variance(xs).invalid("input variance")?);
    Ok(report)
}

pub fn eval(ctx: &Ctx, data: Option<(&Path, &Path)>, timing: TimingOptions) -> CmdResult<()> {
    let deployed = load_models(&ctx.out_dir)?;
    let dataset = match data {
        Some((d, s)) => Some(load_dataset(d, s)?.0),
        None => None,
    };
    let where_attrs: Vec<String> = deployed.vocab.cont_attrs.iter().chain(&deployed.vocab.nom_attrs).cloned().collect();
    let mut reports = Vec::new();
    for (m, model) in &deployed.models {
        let (xs, ys) = load_split(&ctx.out_dir, &m.slug, "test", &deployed.vocab)?;
        let mut report = evaluate(model, Some(m.target.to_string()), &xs, &ys, timing)?;
        if let Some(ds) = &dataset {
            if !where_attrs.is_empty() {
                report.mean_entropy = Some(metrics::mean_entropy(ds, &where_attrs).invalid("mean entropy")?);
            }
        }
        reports.push(report);
    }
    let table = metrics::render_table(&reports);
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write_json("eval_report.json", &reports)?;
    out.write("eval_table.txt", table.as_bytes())?;
    out.commit();
    print!("{table}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchRow {
    target: String,
    batch_size: usize,
    workers: usize,
    ql_ms: f64,
    qt_qps: f64,
}

pub fn bench(ctx: &Ctx, batch_sizes: &[usize], timing: TimingOptions) -> CmdResult<()> {
    if batch_sizes.is_empty() || batch_sizes.contains(&0) {
        return invalid("batch sizes must be positive");
    }
    let deployed = load_models(&ctx.out_dir)?;
    let mut rows = Vec::new();
    for (m, model) in &deployed.models {
        let (xs, _) = load_split(&ctx.out_dir, &m.slug, "test", &deployed.vocab)?;
        if xs.is_empty() {
            return invalid(format!("test split of {} is empty", m.target));
        }
        let ql = metrics::measure_ql(model, &xs, timing.warmup, timing.reps.max(1)).invalid("latency")?;
        for &n in batch_sizes {
            let batch: Vec<EncodedQuery> = xs.iter().cycle().take(n).cloned().collect();
            let qt = metrics::measure_qt(model, &batch, timing.workers).invalid("throughput")?;
            rows.push(BenchRow {
                target: m.target.to_string(),
                batch_size: n,
                workers: timing.workers,
                ql_ms: ql,
                qt_qps: qt.qps,
            });
        }
    }
    let mut table = format!("{:<24} {:>10} {:>8} {:>10} {:>12}\n", "Target", "Batch", "Workers", "QL (ms/q)", "QT (q/s)");
    for r in &rows {
        table.push_str(&format!(
            "{:<24} {:>10} {:>8} {:>10.3} {:>12.0}\n",
            r.target, r.batch_size, r.workers, r.ql_ms, r.qt_qps
        ));
    }
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write_json("bench_report.json", &rows)?;
    out.write("bench_table.txt", table.as_bytes())?;
    out.commit();
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use aqp_core::nnet;
    use aqp_core::querygen::{AggregationFunction, AggregationTarget};
    use std::collections::HashMap;

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug(&AggregationTarget::new(AggregationFunction::Avg, "amount")), "avg_amount");
        assert_eq!(
            slug(&AggregationTarget::new(AggregationFunction::CountDistinct, "Store Type")),
            "count_distinct_store_type"
        );
    }

    struct Oracle(HashMap<Vec<u8>, f64>);

    impl Predictor for Oracle {
        fn predict_one(&self, x: &EncodedQuery) -> nnet::Result<f64> {
            Ok(self.0[x.cells()])
        }
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let xs: Vec<EncodedQuery> = (0..20u8)
            .map(|i| EncodedQuery::from_cells(1, 8, (0..8).map(|b| (i >> b) & 1).collect()).unwrap())
            .collect();
        let ys: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let oracle = Oracle(xs.iter().map(|x| x.cells().to_vec()).zip(ys.iter().copied()).collect());
        let timing = TimingOptions {
            warmup: 1,
            reps: 5,
            workers: 2,
        };
        let r = evaluate(&oracle, Some("avg(x)".into()), &xs, &ys, timing).unwrap();
        assert_eq!(r.nrmse_percent, 0.0);
        assert_eq!(r.n_test, 20);
        assert!(r.qt_qps.unwrap() > 0.0 && r.ql_ms.is_some());
    }
}
