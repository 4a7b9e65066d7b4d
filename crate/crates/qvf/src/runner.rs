//! End-to-end experiment steps shared by the CLI and the tests. Every
//! output directory receives the resolved configuration as `config.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qvf_core::data::{synth_dataset, LabeledDataset, Split};
use qvf_core::exec::Executor;
use qvf_core::fusion::{
    extract_features, shf_run, FeatureCache, FusionModel, Optimizer, Provenance, ShfCaches, Strategy,
};
use qvf_core::metrics::MetricsReport;
use qvf_core::rng::derive_seed;
use qvf_core::train::{evaluate, fit, EpochRecord};

use crate::checkpoint;
use crate::config::{DatasetSource, ExperimentConfig};
use crate::error::{read, write, Error, Result};
use crate::idx;
use crate::manifest::{validate_splits, SplitManifest};
use crate::report::{self, MetricsFile, RunLabel};

pub const CONFIG_JSON: &str = "config.json";
pub const HISTORY_CSV: &str = "history.csv";
pub const EPOCH0: &str = "epoch0.qvfm";
pub const FINAL: &str = "final.qvfm";
pub const BEST: &str = "best.qvfm";
pub const THETA_JSON: &str = "theta.json";

pub const SPLITS: [Split; 3] = [Split::Train, Split::Val, Split::Test];

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl Datasets {
    pub fn get(&self, split: Split) -> &LabeledDataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn load_datasets(config: &ExperimentConfig) -> Result<Datasets> {
    let load = |split: Split| -> Result<LabeledDataset> {
        match &config.dataset {
            DatasetSource::Idx { dir, .. } => {
                let (i, l) = idx::split_paths(dir, split);
                idx::load_idx(&i, &l, split)
            }
            DatasetSource::Synthetic { .. } => {
                Ok(synth_dataset(&config.synth_spec(split).expect("synthetic"), split)?)
            }
        }
    };
    let d = Datasets {
        train: load(Split::Train)?,
        val: load(Split::Val)?,
        test: load(Split::Test)?,
    };
    if let DatasetSource::Idx {
        manifest: Some(m), ..
    } = &config.dataset
    {
        let manifest = match SplitManifest::named(m) {
            Some(named) => named,
            None => SplitManifest::load(Path::new(m))?,
        };
        validate_splits(&[&d.train, &d.val, &d.test], &manifest)?;
    }
    Ok(d)
}

/// Resolved configuration as written next to outputs (without the output
/// path, so identical runs produce identical files wherever they land).
pub fn echo_config(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut c = config.clone();
    c.out = None;
    write(&dir.join(CONFIG_JSON), c.to_json() + "\n")
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.out = None;
    checkpoint::sha256_hex(c.to_json().as_bytes())
}

/// Writes the three splits of the configured dataset as IDX files.
pub fn synth(config: &ExperimentConfig, out: &Path) -> Result<Datasets> {
    if !matches!(config.dataset, DatasetSource::Synthetic { .. }) {
        return Err(Error::Config("synth needs a synthetic dataset source".into()));
    }
    let data = load_datasets(config)?;
    for split in SPLITS {
        let (i, l) = idx::split_paths(out, split);
        idx::save_idx(data.get(split), &i, &l)?;
    }
    echo_config(config, out)?;
    Ok(data)
}

pub fn history_csv(history: &[EpochRecord], with_gamma: bool) -> String {
    let mut out = String::from("epoch,train_loss,val_acc,val_f1");
    if with_gamma {
        out.push_str(",gamma");
    }
    out.push('\n');
    for r in history {
        write!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_accuracy, r.val_f1).unwrap();
        if with_gamma {
            write!(out, ",{}", r.gamma.unwrap_or(f64::NAN)).unwrap();
        }
        out.push('\n');
    }
    out
}

fn run_label(config: &ExperimentConfig) -> RunLabel {
    let s = config.strategy;
    RunLabel {
        strategy: s.name().into(),
        backbone: s.uses_classical().then(|| format!("{:?}", config.backbone).to_lowercase()),
        quantum_mode: s.uses_quantum().then(|| format!("{:?}", config.quantum_mode).to_lowercase()),
        seed: config.seed,
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FusionModel,
    pub best: FusionModel,
    pub history: Vec<EpochRecord>,
    /// Final-model reports on train, validation and test.
    pub reports: Vec<MetricsReport>,
    /// Branch hashes before and after training under static fusion.
    pub branch_hashes: Option<(String, String)>,
}

/// Trains the configured strategy and writes checkpoints (`epoch0`, `final`,
/// `best`), the learning curve and metrics into `out`.
pub fn train<E: Executor>(config: &ExperimentConfig, out: &Path, exec: &E) -> Result<TrainOutcome> {
    config.validate()?;
    let data = load_datasets(config)?;
    echo_config(config, out)?;
    let outcome = if config.strategy == Strategy::Shf {
        train_static(config, &data, out, exec)?
    } else {
        let mut model = FusionModel::new(config.model_config(config.strategy)?)?;
        checkpoint::save(&model, &out.join(EPOCH0))?;
        let mut opt = Optimizer::new(&model, config.optim)?;
        let fit = fit(&mut model, &mut opt, &data.train, &data.val, &config.train_options(), exec)?;
        let reports = SPLITS
            .iter()
            .map(|&s| evaluate(&model, data.get(s), Some(config.seed), exec))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        TrainOutcome {
            model,
            best: fit.best,
            history: fit.history,
            reports,
            branch_hashes: None,
        }
    };
    if let Some(q) = &outcome.model.quantum {
        checkpoint::save_theta(&q.config, &q.state, &out.join(THETA_JSON))?;
    }
    checkpoint::save(&outcome.model, &out.join(FINAL))?;
    checkpoint::save(&outcome.best, &out.join(BEST))?;
    write(&out.join(HISTORY_CSV), history_csv(&outcome.history, config.strategy == Strategy::Tshf))?;
    report::write_metrics(
        out,
        &MetricsFile {
            run: run_label(config),
            reports: outcome.reports.clone(),
        },
    )?;
    Ok(outcome)
}

/// Pretrains the classical backbone standalone (into `out/pretrain`), then
/// freezes both extractors, caches their embeddings and trains the
/// handler alone.
fn train_static<E: Executor>(config: &ExperimentConfig, data: &Datasets, out: &Path, exec: &E) -> Result<TrainOutcome> {
    let pre_dir = out.join("pretrain");
    let mut pre_config = config.clone();
    pre_config.strategy = Strategy::BaselineClassical;
    pre_config.epochs = config.pretrain_epochs.unwrap_or(config.epochs);
    pre_config.seed = derive_seed(config.seed, "pretrain");
    let pre = train(&pre_config, &pre_dir, exec)?;
    let backbone = pre.best.classical.clone().expect("classical baseline");
    let backbone_ckpt = pre_dir.join(BEST);
    let checkpoint_hash = checkpoint::sha256_hex(&read(&backbone_ckpt)?);

    let mut model = FusionModel::new(config.model_config(Strategy::Shf)?)?;
    model.set_classical(backbone)?;
    checkpoint::save(&model, &out.join(EPOCH0))?;
    let provenance = Provenance {
        root_seed: Some(config.seed),
        checkpoint_hash: Some(checkpoint_hash),
        config_hash: Some(config_hash(config)),
        ..Provenance::of(&model)
    };
    let caches = extract_all(&model, data, &provenance, &out.join("cache"), exec)?;
    let before = checkpoint::branch_hash(&model);
    let mut opt = Optimizer::new(&model, config.optim)?;
    let outcome = shf_run(
        &mut model,
        &mut opt,
        ShfCaches {
            train: &caches[0],
            val: &caches[1],
            test: &caches[2],
        },
        &config.train_options(),
        Some(config.seed),
    )?;
    let after = checkpoint::branch_hash(&model);
    if before != after {
        return Err(Error::Core(qvf_core::Error::InvalidState(
            "static fusion modified a frozen branch".into(),
        )));
    }
    Ok(TrainOutcome {
        model,
        best: outcome.fit.best,
        history: outcome.fit.history,
        reports: outcome.reports.to_vec(),
        branch_hashes: Some((before, after)),
    })
}

pub fn cache_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.qvfc", split.name()))
}

fn extract_all<E: Executor>(
    model: &FusionModel,
    data: &Datasets,
    provenance: &Provenance,
    dir: &Path,
    exec: &E,
) -> Result<Vec<FeatureCache>> {
    SPLITS
        .iter()
        .map(|&split| {
            let cache = extract_features(model, data.get(split), provenance.clone(), exec)?;
            crate::cache::save(&cache, &cache_path(dir, split))?;
            Ok(cache)
        })
        .collect()
}

/// Builds (or loads from `checkpoint`) a fusion model and writes feature
/// caches, provenance sidecars and embedding CSVs for all splits.
pub fn extract<E: Executor>(
    config: &ExperimentConfig,
    checkpoint_path: Option<&Path>,
    out: &Path,
    exec: &E,
) -> Result<Vec<FeatureCache>> {
    config.validate()?;
    if !config.strategy.is_fusion() {
        return Err(Error::Config(format!("extract needs a fusion strategy, not {}", config.strategy)));
    }
    let data = load_datasets(config)?;
    let mut model = FusionModel::new(config.model_config(config.strategy)?)?;
    let checkpoint_hash = match checkpoint_path {
        Some(p) => {
            checkpoint::load_into(&mut model, p)?;
            checkpoint::sha256_hex(&read(p)?)
        }
        None => checkpoint::sha256_hex(&checkpoint::encode(&checkpoint::model_tensors(&model))),
    };
    let provenance = Provenance {
        root_seed: Some(config.seed),
        checkpoint_hash: Some(checkpoint_hash),
        config_hash: Some(config_hash(config)),
        ..Provenance::of(&model)
    };
    echo_config(config, out)?;
    let caches = extract_all(&model, &data, &provenance, out, exec)?;
    for c in &caches {
        crate::export::export_embeddings(c, &out.join(format!("{}-embeddings.csv", c.split.name())))?;
    }
    Ok(caches)
}

/// Configuration stored next to a checkpoint.
pub fn config_for_checkpoint(checkpoint_path: &Path) -> Result<ExperimentConfig> {
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let path = dir.join(CONFIG_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    ExperimentConfig::from_json(&text).map_err(|source| Error::Json { path, source })
}

pub fn load_model(config: &ExperimentConfig, checkpoint_path: &Path) -> Result<FusionModel> {
    if !checkpoint_path.is_file() {
        return Err(Error::io(
            checkpoint_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        ));
    }
    let mut model = FusionModel::new(config.model_config(config.strategy)?)?;
    checkpoint::load_into(&mut model, checkpoint_path)?;
    Ok(model)
}

/// Evaluates a checkpoint on one split and writes
/// `metrics-<split>.json` / `.csv` into `out`.
pub fn eval<E: Executor>(
    config: &ExperimentConfig,
    checkpoint_path: &Path,
    split: Split,
    out: &Path,
    exec: &E,
) -> Result<MetricsReport> {
    let model = load_model(config, checkpoint_path)?;
    let data = load_datasets(config)?;
    let report = evaluate(&model, data.get(split), Some(config.seed), exec)?;
    let name = split.name();
    write(
        &out.join(format!("metrics-{name}.json")),
        serde_json::to_vec_pretty(&report).expect("serialisable"),
    )?;
    write(&out.join(format!("metrics-{name}.csv")), report::metrics_csv(std::slice::from_ref(&report)))?;
    echo_config(config, out)?;
    Ok(report)
}

/// Writes `report.md` and `report.csv` comparing every run under
/// `run_dir`.
pub fn consolidate(run_dir: &Path, out: &Path) -> Result<report::Comparison> {
    let cmp = report::compare_runs(run_dir)?;
    write(&out.join("report.md"), cmp.markdown())?;
    write(&out.join("report.csv"), cmp.csv())?;
    Ok(cmp)
}
