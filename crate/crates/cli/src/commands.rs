use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use intele_core::evalkit::{metrics_report, roc_svg, MetricsReport, RocCurve, ScoredSet};
use intele_core::genmodel::{Dataset, GenModelParams, Regime};
use intele_core::identcheck::{identifiability_experiment, IdentReport, SourceKind};
use intele_core::intele::{train, InTeLeModel, Mode};
use intele_core::rng::tags;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const TRAIN_FILE: &str = "train_PL.csv";
pub const TEST_FILES: [&str; 2] = ["test_PL.csv", "test_PH.csv"];

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_csv(&read(path)?).with_context(|| format!("in {}", path.display()))
}

/// Sidecar written next to generated datasets.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: ExperimentConfig,
    pub params: GenModelParams,
    pub files: BTreeMap<String, FileInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileInfo {
    pub rows: usize,
    pub sha256: String,
}

/// Writes `train_PL.csv`, `test_PL.csv`, `test_PH.csv` and `meta.json`.
/// Both test sets come from the same sample stream and differ only in regime.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetMeta> {
    let params = GenModelParams::from_config(&cfg.generator)?;
    create_dir(out)?;
    let n_train = cfg.experiment.n_train;
    let n_test = cfg.experiment.n_test;
    let sets = [
        (TRAIN_FILE, params.sample_dataset(n_train, Regime::PL, tags::TRAIN)),
        (TEST_FILES[0], params.sample_dataset(n_test, Regime::PL, tags::TEST)),
        (TEST_FILES[1], params.sample_dataset(n_test, Regime::PH, tags::TEST)),
    ];
    let mut files = BTreeMap::new();
    for (name, ds) in &sets {
        let csv = ds.to_csv();
        write(&out.join(name), &csv)?;
        files.insert(name.to_string(), FileInfo { rows: ds.len(), sha256: sha256_hex(csv.as_bytes()) });
    }
    let meta = DatasetMeta { config: cfg.clone(), params, files };
    write(&out.join("meta.json"), to_json(&meta)?)?;
    Ok(meta)
}

/// Output of scoring one dataset with one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub dataset_sha256: String,
    pub metrics: MetricsReport,
    /// Mean `f_SC(f_1(Enc x)) − f_SC(f_0(Enc x))`; absent without decoders and `f_SC`.
    pub branch_gap: Option<f64>,
}

pub fn evaluate(model: &InTeLeModel, data: &Dataset, dataset_sha256: String) -> Result<(EvalReport, RocCurve)> {
    if data.d_x() != model.d_x {
        bail!(
            "dimension mismatch: model expects d_x = {} but dataset has d_x = {}",
            model.d_x,
            data.d_x()
        );
    }
    let x = data.x_matrix();
    let scores = ScoredSet::new(model.predict(&x)?, data.binary_labels())?;
    let (metrics, roc) = metrics_report(&scores)?;
    let branch_gap = if model.mode.has_decoders() && model.mode.has_fsc() {
        Some(model.branch_gap(&x)?)
    } else {
        None
    };
    Ok((EvalReport { mode: model.mode, dataset_sha256, metrics, branch_gap }, roc))
}

/// Scores `data_file` with `model_file`; writes `report.json`, `roc.csv` and `roc.svg`.
pub fn cmd_eval(model_file: &Path, data_file: &Path, out: &Path) -> Result<EvalReport> {
    let model = InTeLeModel::from_json(&read(model_file)?)
        .with_context(|| format!("in {}", model_file.display()))?;
    let text = read(data_file)?;
    let data = Dataset::from_csv(&text).with_context(|| format!("in {}", data_file.display()))?;
    let (report, roc) = evaluate(&model, &data, sha256_hex(text.as_bytes()))
        .with_context(|| format!("evaluating {} on {}", model_file.display(), data_file.display()))?;
    create_dir(out)?;
    write(&out.join("report.json"), to_json(&report)?)?;
    write(&out.join("roc.csv"), roc.to_csv())?;
    let label = data_file.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    write(&out.join("roc.svg"), roc_svg(&[(label, &roc)]))?;
    Ok(report)
}

/// Final summary of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub epochs: usize,
    pub final_train_accuracy: f64,
    pub final_total_loss: f64,
    /// Evaluation of the trained model on each test file found next to the training set.
    pub evaluations: BTreeMap<String, EvalReport>,
}

/// Trains on `data/train_PL.csv` and writes a self-describing run directory.
pub fn cmd_train(cfg: &ExperimentConfig, data_dir: &Path, out: &Path) -> Result<TrainReport> {
    let train_path = data_dir.join(TRAIN_FILE);
    let train_text = read(&train_path)?;
    let train_set = Dataset::from_csv(&train_text).with_context(|| format!("in {}", train_path.display()))?;

    let mut checksums = BTreeMap::new();
    checksums.insert(TRAIN_FILE.to_string(), sha256_hex(train_text.as_bytes()));
    let mut tests = Vec::new();
    for name in TEST_FILES {
        let path = data_dir.join(name);
        if path.exists() {
            let text = read(&path)?;
            let sha = sha256_hex(text.as_bytes());
            checksums.insert(name.to_string(), sha.clone());
            let ds = Dataset::from_csv(&text).with_context(|| format!("in {}", path.display()))?;
            tests.push((name, ds, sha));
        }
    }

    let hp = &cfg.training;
    let model = InTeLeModel::new(train_set.d_x(), &cfg.model, hp.mode, hp.seed)?;
    let (model, log) = train(model, &train_set, hp)?;

    create_dir(out)?;
    write(&out.join("config.toml"), cfg.to_toml()?)?;
    write(&out.join("checksums.json"), to_json(&checksums)?)?;
    write(&out.join("model.json"), model.to_json()?)?;
    let mut jsonl = String::new();
    for rec in &log.records {
        jsonl.push_str(&serde_json::to_string(rec)?);
        jsonl.push('\n');
    }
    write(&out.join("metrics.jsonl"), jsonl)?;

    let mut evaluations = BTreeMap::new();
    let mut curves = Vec::new();
    for (name, ds, sha) in tests {
        let (rep, roc) = evaluate(&model, &ds, sha)?;
        let stem = name.trim_end_matches(".csv");
        write(&out.join(format!("roc_{stem}.csv")), roc.to_csv())?;
        evaluations.insert(stem.to_string(), rep);
        curves.push((stem, roc));
    }
    if !curves.is_empty() {
        let refs: Vec<(&str, &RocCurve)> = curves.iter().map(|(n, c)| (*n, c)).collect();
        write(&out.join("roc.svg"), roc_svg(&refs))?;
    }

    let last = log.records.last().context("training produced no epochs")?;
    let report = TrainReport {
        mode: hp.mode,
        epochs: log.records.len(),
        final_train_accuracy: last.train_accuracy,
        final_total_loss: last.total,
        evaluations,
    };
    write(&out.join("report.json"), to_json(&report)?)?;
    Ok(report)
}

/// Per-seed identifiability report with the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedIdentReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub report: IdentReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentAggregate {
    pub source: SourceKind,
    pub seeds: Vec<u64>,
    pub heldout_mean_r2: Vec<f64>,
    pub mean_r2: f64,
    pub std_r2: f64,
    pub condition_b_satisfied: bool,
}

/// Runs the identifiability experiment for every configured seed.
pub fn cmd_identcheck(cfg: &ExperimentConfig, out: &Path, oracle: bool) -> Result<IdentAggregate> {
    let source = if oracle { SourceKind::Oracle } else { SourceKind::Encoder };
    create_dir(out)?;
    let mut per_seed = Vec::new();
    for &seed in &cfg.experiment.seeds {
        let run = cfg.clone().with_seed(seed);
        let gen = GenModelParams::from_config(&run.generator)?;
        let report = identifiability_experiment(
            &gen,
            &run.model,
            &run.training,
            run.experiment.n_train,
            run.experiment.n_test,
            source,
        )
        .with_context(|| format!("seed {seed}"))?;
        let rec = SeedIdentReport { seed, config: run, report };
        write(&out.join(format!("ident_seed{seed}.json")), to_json(&rec)?)?;
        per_seed.push(rec);
    }
    let r2: Vec<f64> = per_seed.iter().map(|r| r.report.heldout.mean_r2).collect();
    let n = r2.len() as f64;
    let mean = r2.iter().sum::<f64>() / n;
    let std = (r2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let agg = IdentAggregate {
        source,
        seeds: cfg.experiment.seeds.clone(),
        heldout_mean_r2: r2,
        mean_r2: mean,
        std_r2: std,
        condition_b_satisfied: per_seed.iter().all(|r| r.report.condition_b.satisfied),
    };
    write(&out.join("aggregate.json"), to_json(&agg)?)?;
    Ok(agg)
}

pub fn resolve_out(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.experiment.out_dir.clone())
        .context("no output directory: pass --out or set experiment.out_dir")
}
