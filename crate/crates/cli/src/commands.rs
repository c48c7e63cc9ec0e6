use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use radgen_core::dataset::{
    load_clean_dataset, read_records, sample_subsets, split, to_examples, write_clean_dataset, DataPoint, FeatureStore,
    SplitManifest, RECORDS_FILE,
};
use radgen_core::demographics::{select_top_categories, DemographicEncoder, DemographicFields, DemographicRecord};
use radgen_core::evaluation::{compare_reports, evaluate, Corpus, EmbeddingTable, EvaluationReport, UnknownPolicy};
use radgen_core::model::{init_parameters, load_checkpoint, save_checkpoint};
use radgen_core::text::{build_vocabulary, clean_report, CleanOutcome, RawReport, Vocabulary};
use radgen_core::trainer::{fit_with, generate_reports, Example};
use radgen_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::provenance::Provenance;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const ENCODER_FILE: &str = "encoder.json";
pub const REJECTS_FILE: &str = "rejects.jsonl";
pub const SPLITS_DIR: &str = "splits";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const MODEL_INFO_FILE: &str = "model_info.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn split_path(data: &Path, subset: usize) -> PathBuf {
    data.join(SPLITS_DIR).join(format!("subset-{subset}.json"))
}

pub fn synth_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let points = radgen_core::dataset::synthesize_corpus(&cfg.synth, cfg.seed)?;
    write_clean_dataset(out, &points)?;
    Provenance::new("synth-data", cfg, &[])?.write_dir(out)?;
    println!(
        "wrote {} records ({} strata) to {}",
        points.len(),
        cfg.synth.strata.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Reject<'a> {
    id: &'a str,
    reason: &'a str,
}

/// Cleans raw records, restricts ethnicity to the most frequent values,
/// builds the vocabulary and writes balanced subsets with their splits.
pub fn prepare_data(cfg: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let (records_path, base) = if input.is_dir() {
        (input.join(RECORDS_FILE), input.to_path_buf())
    } else {
        (
            input.to_path_buf(),
            input.parent().map(Path::to_path_buf).unwrap_or_default(),
        )
    };
    let store = FeatureStore::load(&base)?;
    let records = read_records(&records_path)?;
    let cleaning = cfg.data.cleaning()?;
    let mut rejects: Vec<(String, String)> = Vec::new();
    let mut points = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Data(format!("duplicate record id {}", r.id)));
        }
        let raw = RawReport {
            id: r.id.clone(),
            text: r.report.clone(),
        };
        match clean_report(&raw, &cleaning) {
            CleanOutcome::Clean(report) => points.push(DataPoint {
                id: r.id.clone(),
                features: r.resolve_features(store.as_ref())?,
                report,
                demographics: r.demographics(),
            }),
            CleanOutcome::Rejected { reason, .. } => rejects.push((r.id.clone(), reason.code().to_string())),
        }
    }
    if points.is_empty() {
        return Err(Error::Data(format!(
            "no report in {} survives cleaning",
            records_path.display()
        )));
    }
    let feature_dim = points[0].features.len();
    for p in &points {
        p.check(feature_dim)?;
    }
    let demographics: Vec<DemographicRecord> = points.iter().map(|p| p.demographics.clone()).collect();
    let top = select_top_categories(&demographics, cfg.data.ethnicity_count)?;
    if top.under_k {
        eprintln!(
            "warning: only {} distinct ethnicity values, fewer than the {} requested",
            top.categories.len(),
            cfg.data.ethnicity_count
        );
    }
    let encoder = DemographicEncoder::new(top.categories, cfg.data.age_min, cfg.data.age_max)?;
    points.retain(|p| {
        let keep = encoder.categories.contains(&p.demographics.ethnicity);
        if !keep {
            rejects.push((p.id.clone(), "ethnicity".into()));
        }
        keep
    });
    let reports: Vec<_> = points.iter().map(|p| p.report.clone()).collect();
    let vocab = build_vocabulary(&reports, cfg.data.vocab_cap)?;
    let k = cfg.data.subsets;
    let size = cfg.data.subset_size.unwrap_or(points.len() / k);
    let subsets = sample_subsets(&points, k, size, cfg.seed)?;

    write_clean_dataset(out, &points)?;
    vocab.save(&out.join(VOCAB_FILE))?;
    write(&out.join(ENCODER_FILE), serde_json::to_string_pretty(&encoder)?)?;
    for (i, ids) in subsets.iter().enumerate() {
        let mut manifest = split(i, ids, cfg.seed)?;
        manifest.generation.insert("subsets".into(), k.to_string());
        manifest.generation.insert("subset_size".into(), size.to_string());
        manifest.generation.insert("pool".into(), points.len().to_string());
        write(&split_path(out, i), serde_json::to_string_pretty(&manifest)?)?;
    }
    let mut lines = String::new();
    for (id, reason) in &rejects {
        lines.push_str(&serde_json::to_string(&Reject { id, reason })?);
        lines.push('\n');
    }
    write(&out.join(REJECTS_FILE), lines)?;
    Provenance::new(
        "prepare-data",
        cfg,
        &[&records_path, &base.join(radgen_core::dataset::FEATURE_BLOB)],
    )?
    .write_dir(out)?;
    println!(
        "{} of {} records kept ({} rejected), vocabulary {}, {k} subset(s) of {size}",
        points.len(),
        records.len(),
        rejects.len(),
        vocab.len()
    );
    Ok(())
}

/// Stored next to a trained model so later stages need no extra flags.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub demographics: String,
    pub subset: usize,
    pub best_epoch: usize,
}

struct PreparedData {
    points: HashMap<String, DataPoint>,
    manifest: SplitManifest,
}

fn load_prepared(data: &Path, subset: usize) -> Result<PreparedData> {
    let points = load_clean_dataset(data)?;
    let manifest: SplitManifest = read_json(&split_path(data, subset))?;
    Ok(PreparedData {
        points: points.into_iter().map(|p| (p.id.clone(), p)).collect(),
        manifest,
    })
}

impl PreparedData {
    fn pick(&self, ids: &[String]) -> Result<Vec<&DataPoint>> {
        ids.iter()
            .map(|id| {
                self.points
                    .get(id)
                    .ok_or_else(|| Error::Data(format!("split references unknown id {id}")))
            })
            .collect()
    }

    fn feature_dim(&self) -> Result<usize> {
        self.points
            .values()
            .next()
            .map(|p| p.features.len())
            .ok_or_else(|| Error::Data("dataset is empty".into()))
    }
}

pub fn train(cfg: &RunConfig, data: &Path, subset: usize, fields: DemographicFields, out: &Path) -> Result<()> {
    let prepared = load_prepared(data, subset)?;
    let vocab = Vocabulary::load(&data.join(VOCAB_FILE))?;
    let encoder: DemographicEncoder = read_json(&data.join(ENCODER_FILE))?;
    let mut resolved = cfg.clone();
    resolved.model.vocab_size = vocab.len();
    resolved.model.feature_dim = prepared.feature_dim()?;
    resolved.model.demographic_dim = fields.dim(encoder.categories.len());
    resolved.model.validate()?;
    let model = &resolved.model;
    let convert = |ids: &[String]| -> Result<Vec<Example>> {
        to_examples(&prepared.pick(ids)?, &vocab, &encoder, fields, model.max_len)
    };
    let train = convert(&prepared.manifest.train)?;
    let val = convert(&prepared.manifest.val)?;
    let params = init_parameters(model, resolved.seed)?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join(TRAIN_LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let every = resolved.train.checkpoint_every;
    let result = fit_with(model, params, &train, &val, &resolved.train, |record, params| {
        writeln!(log, "{}", serde_json::to_string(record)?).map_err(|e| Error::io(&log_path, e))?;
        eprintln!(
            "epoch {:>3}  train {:.4}  val {:.4}  {:.1}s",
            record.epoch, record.train_loss, record.val_loss, record.seconds
        );
        if every.is_some_and(|k| record.epoch % k == 0) {
            save_checkpoint(&out.join(format!("epoch-{:04}", record.epoch)), model, params)?;
        }
        Ok(())
    })?;
    save_checkpoint(&out.join(CHECKPOINT_DIR), model, &result.best)?;
    vocab.save(&out.join(VOCAB_FILE))?;
    write(&out.join(ENCODER_FILE), serde_json::to_string_pretty(&encoder)?)?;
    let info = ModelInfo {
        demographics: fields.to_string(),
        subset,
        best_epoch: result.log.best_epoch,
    };
    write(&out.join(MODEL_INFO_FILE), serde_json::to_string_pretty(&info)?)?;
    Provenance::new("train", &resolved, &[data])?.write_dir(out)?;
    let best = result.log.best().map_or(f64::NAN, |r| r.val_loss);
    println!(
        "trained {} epochs on {} examples ({fields}); best epoch {} with validation loss {best:.4}",
        result.log.epochs.len(),
        train.len(),
        result.log.best_epoch
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

pub struct GenerateArgs<'a> {
    pub model: &'a Path,
    pub data: &'a Path,
    pub subset: Option<usize>,
    pub split: SplitName,
    pub out: &'a Path,
    pub references: Option<&'a Path>,
    pub ids: Option<&'a Path>,
}

fn lines(items: impl IntoIterator<Item = String>) -> String {
    items.into_iter().map(|l| l + "\n").collect()
}

pub fn generate(cfg: &RunConfig, args: &GenerateArgs<'_>) -> Result<()> {
    let (params, model) = load_checkpoint(&args.model.join(CHECKPOINT_DIR))?;
    let info: ModelInfo = read_json(&args.model.join(MODEL_INFO_FILE))?;
    let fields = DemographicFields::parse(&info.demographics)?;
    let vocab = Vocabulary::load(&args.model.join(VOCAB_FILE))?;
    let encoder: DemographicEncoder = read_json(&args.model.join(ENCODER_FILE))?;
    if vocab.len() != model.vocab_size {
        return Err(Error::Data(format!(
            "vocabulary has {} tokens but the checkpoint expects {}",
            vocab.len(),
            model.vocab_size
        )));
    }
    let prepared = load_prepared(args.data, args.subset.unwrap_or(info.subset))?;
    let ids = match args.split {
        SplitName::Train => &prepared.manifest.train,
        SplitName::Val => &prepared.manifest.val,
        SplitName::Test => &prepared.manifest.test,
    };
    let points = prepared.pick(ids)?;
    let examples = to_examples(&points, &vocab, &encoder, fields, model.max_len)?;
    let reports = generate_reports(
        &model,
        &params,
        &examples,
        &vocab,
        cfg.generate.temperature,
        cfg.seed,
        cfg.generate.batch_size,
    )?;
    write(args.out, lines(reports.iter().map(|r| r.join(" "))))?;
    if let Some(path) = args.references {
        write(path, lines(points.iter().map(|p| p.report.text())))?;
    }
    if let Some(path) = args.ids {
        write(path, lines(ids.iter().cloned()))?;
    }
    Provenance::new("generate", cfg, &[args.model, args.data])?.write_beside(args.out)?;
    println!("wrote {} reports to {}", reports.len(), args.out.display());
    Ok(())
}

pub fn evaluate_files(cfg: &RunConfig, hypotheses: &Path, references: &Path, out: Option<&Path>) -> Result<()> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let corpus = Corpus::from_lines(&read(hypotheses)?, &read(references)?)?;
    let table = match &cfg.evaluate.embeddings {
        Some(p) => EmbeddingTable::load(p, UnknownPolicy::Zero)?,
        None => {
            let tokens: BTreeSet<&String> = corpus
                .hypotheses()
                .iter()
                .chain(corpus.references())
                .flatten()
                .collect();
            let tokens: Vec<&String> = tokens.into_iter().collect();
            EmbeddingTable::hashed_unit(&tokens, cfg.evaluate.embedding_dim, cfg.seed)?
        }
    };
    let report = evaluate(&corpus, &table)?;
    for (name, value) in radgen_core::evaluation::METRIC_NAMES.iter().zip(report.metrics()) {
        println!("{name:<9} {value:.6}");
    }
    println!("note: {}", report.embedding_note);
    if let Some(path) = out {
        write(path, serde_json::to_string_pretty(&report)?)?;
        let mut inputs = vec![hypotheses, references];
        if let Some(p) = &cfg.evaluate.embeddings {
            inputs.push(p);
        }
        Provenance::new("evaluate", cfg, &inputs)?.write_beside(path)?;
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig, a: &[PathBuf], b: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let load = |paths: &[PathBuf]| -> Result<Vec<EvaluationReport>> { paths.iter().map(|p| read_json(p)).collect() };
    let rows = compare_reports(&load(a)?, &load(b)?, cfg.evaluate.alpha)?;
    println!(
        "{:<9} {:>9} {:>9} {:>9} {:>9} {:>10}",
        "metric", "mean_a", "mean_b", "t", "p", "significant"
    );
    for r in &rows {
        match &r.test {
            Some(t) => println!(
                "{:<9} {:>9.4} {:>9.4} {:>9.3} {:>9.4} {:>10}",
                r.metric, r.mean_a, r.mean_b, t.t, t.p, t.significant
            ),
            None => println!(
                "{:<9} {:>9.4} {:>9.4} {:>9} {:>9} {:>10}",
                r.metric, r.mean_a, r.mean_b, "-", "-", "degenerate"
            ),
        }
    }
    if let Some(path) = out {
        write(path, serde_json::to_string_pretty(&rows)?)?;
        let inputs: Vec<&Path> = a.iter().chain(b).map(PathBuf::as_path).collect();
        Provenance::new("compare", cfg, &inputs)?.write_beside(path)?;
    }
    Ok(())
}
