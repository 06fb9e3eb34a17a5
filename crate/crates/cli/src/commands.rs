use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use skintone_core::audit::{
    audit_dataset, default_palette, emit_report, evaluate_ood, ReportFormat,
};
use skintone_core::augmentation::augment;
use skintone_core::classifiers::{
    grid_search, ingest_embeddings, kfold_cv, load_model, predict_dataset, save_model, train, Dataset, Model,
    ModelSpec, Objective,
};
use skintone_core::data::merge_label_files;
use skintone_core::descriptors::{DescriptorConfig, FeatureRow, FeatureTable, BIN_CHOICES};
use skintone_core::metrics::{OoaccAveraging, 
    self, exact_agreement, icc3, krippendorff_alpha, off_by_one_agreement, AlphaMetric,
};
use skintone_core::pipeline::{extract_one, extract_table, ExtractConfig, FsSource};
use skintone_core::splits::{
    balance, build_custom_test, kfold_by_individual, split_by_images, split_by_individuals, Fractions, SplitPlan,
};
use skintone_core::{DatasetManifest, RegionKind};

use crate::config::ToolkitConfig;
use crate::palette::Palette;
use crate::record::RunRecord;
use crate::serve::{self, ServeOptions};

/// Suffix marking augmented copies of an image in a feature table.
pub const AUGMENTED_MARK: &str = "~aug";

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute descriptor features for every image of a manifest.
    Extract(ExtractArgs),
    /// Partition a manifest by images or individuals.
    Split(SplitArgs),
    /// Cap images per individual with balanced class counts.
    Balance(BalanceArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Grid-search model specs on a validation partition.
    Tune(TuneArgs),
    /// k-fold cross-validation of one spec.
    Cv(CvArgs),
    /// Score a model on a feature table.
    Eval(EvalArgs),
    /// Inter-annotator agreement across label files.
    Agree(AgreeArgs),
    /// Zero-shot tone distribution of an external dataset.
    Audit(AuditArgs),
    /// Annotation server.
    Serve(ServeArgs),
}

impl Command {
    pub fn run(&self, cfg: &ToolkitConfig) -> Result<()> {
        match self {
            Command::Extract(a) => extract(a, cfg),
            Command::Split(a) => split(a, cfg),
            Command::Balance(a) => balance_cmd(a, cfg),
            Command::Train(a) => train_cmd(a, cfg),
            Command::Tune(a) => tune(a, cfg),
            Command::Cv(a) => cv(a, cfg),
            Command::Eval(a) => eval(a, cfg),
            Command::Agree(a) => agree(a, cfg),
            Command::Audit(a) => audit(a, cfg),
            Command::Serve(a) => serve_cmd(a, cfg),
        }
    }
}

fn manifest_arg(explicit: &Option<PathBuf>, cfg: &ToolkitConfig) -> Result<DatasetManifest> {
    let path = explicit
        .clone()
        .or_else(|| cfg.manifest.clone())
        .ok_or_else(|| anyhow!("no manifest: pass --manifest or set `manifest` in the config"))?;
    let path = cfg.locate(&path);
    DatasetManifest::load(&path).with_context(|| format!("loading manifest {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Deserialize one spec, rejecting keys the spec type would silently drop.
fn checked_spec(value: serde_json::Value) -> Result<ModelSpec> {
    let spec: ModelSpec = serde_json::from_value(value.clone()).context("parsing model spec")?;
    let known = serde_json::to_value(&spec)?;
    if let (Some(given), Some(known)) = (value.as_object(), known.as_object()) {
        if let Some(key) = given.keys().find(|k| !known.contains_key(*k)) {
            bail!("unknown key {key:?} in {} spec", spec.family.name());
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn parse_spec(raw: &str, cfg: &ToolkitConfig) -> Result<ModelSpec> {
    let text = if raw.trim_start().starts_with('{') {
        raw.to_string()
    } else {
        let path = cfg.locate(Path::new(raw));
        fs::read_to_string(&path).with_context(|| format!("reading spec {}", path.display()))?
    };
    let value: serde_json::Value = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).context("parsing model spec")?
    } else {
        toml::from_str(&text).context("parsing model spec")?
    };
    checked_spec(value)
}

fn load_table(path: &Path, manifest: &Option<PathBuf>, cfg: &ToolkitConfig) -> Result<FeatureTable> {
    let path = cfg.locate(path);
    let mut table = FeatureTable::load_csv(&path).with_context(|| format!("loading features {}", path.display()))?;
    if manifest.is_some() {
        table.attach_labels(&manifest_arg(manifest, cfg)?);
    }
    Ok(table)
}

fn load_plan(path: &Path, cfg: &ToolkitConfig) -> Result<SplitPlan> {
    let path = cfg.locate(path);
    SplitPlan::load(&path).with_context(|| format!("loading split {}", path.display()))
}

fn partition<'a>(plan: &'a SplitPlan, name: &str) -> Result<&'a BTreeSet<String>> {
    plan.partition(name).ok_or_else(|| {
        let names: Vec<&String> = plan.partitions.keys().collect();
        anyhow!("split has no partition {name:?} (has {names:?})")
    })
}

/// Partition members plus, optionally, the augmented copies of those members.
fn with_augmented(table: &FeatureTable, ids: &BTreeSet<String>, include: bool) -> BTreeSet<String> {
    let mut out = ids.clone();
    if include {
        for row in &table.rows {
            if let Some((base, _)) = row.image_id.split_once(AUGMENTED_MARK) {
                if ids.contains(base) {
                    out.insert(row.image_id.clone());
                }
            }
        }
    }
    out
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature CSV to write; the layout goes to `<out>.layout.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// full, face or skin.
    #[arg(long, default_value = "full")]
    pub region: RegionKind,
    /// Histogram bins (128, 64, 32 or 16); overrides the config.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub tau_percent: Option<f64>,
    /// Directory of `<image_id>.mask.png` files.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    /// Use the YCbCr skin detector when a mask file is missing.
    #[arg(long)]
    pub ycbcr_fallback: bool,
    /// Import precomputed embeddings (CSV) instead of computing descriptors.
    #[arg(long, conflicts_with_all = ["bins", "tau_percent", "mask_dir", "ycbcr_fallback", "augment_copies"])]
    pub embeddings: Option<PathBuf>,
    /// Augmented copies per image, extracted with the config's augmentation settings.
    #[arg(long, default_value_t = 0)]
    pub augment_copies: usize,
    #[arg(long, default_value_t = 0)]
    pub augment_seed: u64,
}

fn extract(a: &ExtractArgs, cfg: &ToolkitConfig) -> Result<()> {
    let mut record = RunRecord::new("extract", a, cfg, Some(a.augment_seed));
    if let Some(path) = &a.embeddings {
        let mut table = ingest_embeddings(cfg.locate(path))?;
        if a.manifest.is_some() || cfg.manifest.is_some() {
            table.attach_labels(&manifest_arg(&a.manifest, cfg)?);
        }
        table.save_csv(&a.out)?;
        log::info!("imported {} embeddings of {} dims", table.len(), table.layout.len());
        record.output(&a.out).write()?;
        return Ok(());
    }
    let manifest = manifest_arg(&a.manifest, cfg)?;
    let mut descriptor = cfg.descriptor.clone();
    if let Some(bins) = a.bins {
        descriptor.bins = bins;
    }
    if let Some(t) = a.tau_percent {
        descriptor.tau_percent = t;
    }
    let extract_cfg = ExtractConfig {
        region: a.region,
        descriptor,
        mask_dir: a.mask_dir.clone(),
        ycbcr_fallback: a.ycbcr_fallback,
        skin_bounds: cfg.skin_bounds,
    };
    let source = FsSource::new(a.mask_dir.clone());
    let (mut table, skipped) = extract_table(&manifest, &source, &extract_cfg)?;
    if a.augment_copies > 0 {
        let mut counter = 0u64;
        for rec in manifest.images.values() {
            if table.get(&rec.image_id).is_none() {
                continue;
            }
            let image = skintone_core::data::load_image(manifest.image_path(rec))?;
            for j in 0..a.augment_copies {
                let seed = a.augment_seed.wrapping_add(counter);
                counter += 1;
                let copy = augment(&image, &cfg.augment, seed)?;
                let mem = skintone_core::pipeline::MemorySource {
                    images: [(rec.image_id.clone(), copy)].into(),
                    masks: Default::default(),
                };
                match extract_one(&manifest, &mem, rec, &extract_cfg) {
                    Ok(values) => table.push(FeatureRow {
                        image_id: format!("{}{AUGMENTED_MARK}{j}", rec.image_id),
                        label: manifest.label_of_image(&rec.image_id),
                        values,
                    })?,
                    Err(reason) => log::warn!("augmented copy {j} of {} skipped: {reason}", rec.image_id),
                }
            }
        }
    }
    table.save_csv(&a.out)?;
    record = record.output(&a.out);
    if !skipped.is_empty() {
        let mut name = a.out.as_os_str().to_owned();
        name.push(".skipped.json");
        let path = PathBuf::from(name);
        write_json(&path, &skipped)?;
        log::warn!("{} images skipped; see {}", skipped.len(), path.display());
        record = record.output(path);
    }
    log::info!("extracted {} rows of {} features", table.len(), table.layout.len());
    record.write()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum ModeArg {
    Img,
    Ind,
}

fn parse_fractions(raw: &str) -> Result<Fractions, String> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("{p:?} is not a number")))
        .collect::<Result<_, _>>()?;
    let [train, val, test] = parts[..] else {
        return Err(format!("expected train,val,test; got {} values", parts.len()));
    };
    Fractions::new(train, val, test).map_err(|e| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ind")]
    pub mode: ModeArg,
    /// train,val,test fractions summing to 1.
    #[arg(long, value_parser = parse_fractions, default_value = "0.8,0.1,0.1")]
    pub fractions: Fractions,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Build k folds by individual instead of train/val/test.
    #[arg(long, conflicts_with = "custom_test")]
    pub kfold: Option<usize>,
    /// Hold out this many individuals per class as a test set.
    #[arg(long)]
    pub custom_test: Option<usize>,
    /// Manifest of what remains after `--custom-test` (default `<out>.remainder.jsonl`).
    #[arg(long, requires = "custom_test")]
    pub remainder: Option<PathBuf>,
    #[arg(long, default_value = "split.json")]
    pub out: PathBuf,
}

fn split(a: &SplitArgs, cfg: &ToolkitConfig) -> Result<()> {
    let manifest = manifest_arg(&a.manifest, cfg)?;
    let mut record = RunRecord::new("split", a, cfg, Some(a.seed)).output(&a.out);
    let plan = if let Some(k) = a.kfold {
        if matches!(a.mode, ModeArg::Img) {
            bail!("--kfold partitions individuals; it cannot be combined with --mode img");
        }
        kfold_by_individual(&manifest, k, a.seed)?
    } else if let Some(n) = a.custom_test {
        let (plan, remainder) = build_custom_test(&manifest, n, a.seed)?;
        let path = a.remainder.clone().unwrap_or_else(|| {
            let mut name = a.out.as_os_str().to_owned();
            name.push(".remainder.jsonl");
            PathBuf::from(name)
        });
        remainder.save(&path)?;
        record = record.output(path);
        plan
    } else {
        match a.mode {
            ModeArg::Img => split_by_images(&manifest, a.fractions, a.seed)?,
            ModeArg::Ind => split_by_individuals(&manifest, a.fractions, a.seed)?,
        }
    };
    let leaked = plan.leaked_individuals(&manifest);
    if !leaked.is_empty() {
        log::warn!("{} individuals appear in more than one partition", leaked.len());
    }
    plan.save(&a.out)?;
    for (name, ids) in &plan.partitions {
        log::info!("{name}: {} images", ids.len());
    }
    record.write()?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct BalanceArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Images kept per individual (1 to 5).
    #[arg(long, default_value_t = 1)]
    pub max_per_individual: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "balance.json")]
    pub out: PathBuf,
    /// Also write the balanced manifest here.
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

fn balance_cmd(a: &BalanceArgs, cfg: &ToolkitConfig) -> Result<()> {
    let manifest = manifest_arg(&a.manifest, cfg)?;
    let plan = balance(&manifest, a.max_per_individual, a.seed)?;
    write_json(&a.out, &plan)?;
    let mut record = RunRecord::new("balance", a, cfg, Some(a.seed)).output(&a.out);
    if let Some(path) = &a.manifest_out {
        manifest.restrict(&plan.selected).save(path)?;
        record = record.output(path);
    }
    record.write()?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Feature CSV from `extract`.
    #[arg(long)]
    pub features: PathBuf,
    /// Attach labels from this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Split plan; without it every labeled row trains.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "train", requires = "split")]
    pub partition: String,
    /// Partition monitored by the learning-rate schedule.
    #[arg(long, requires = "split")]
    pub val_partition: Option<String>,
    /// Model spec: a JSON/TOML file or inline JSON.
    #[arg(long)]
    pub spec: String,
    /// Train on augmented copies of the partition's images too.
    #[arg(long)]
    pub include_augmented: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn train_cmd(a: &TrainArgs, cfg: &ToolkitConfig) -> Result<()> {
    let spec = parse_spec(&a.spec, cfg)?;
    let table = load_table(&a.features, &a.manifest, cfg)?;
    let name = dataset_name(&a.features);
    let (train_set, val) = match &a.split {
        Some(path) => {
            let plan = load_plan(path, cfg)?;
            let ids = with_augmented(&table, partition(&plan, &a.partition)?, a.include_augmented);
            let val = match &a.val_partition {
                Some(v) => Some(Dataset::from_table(&table, Some(partition(&plan, v)?))),
                None => None,
            };
            (Dataset::from_table(&table, Some(&ids)), val)
        }
        None => (Dataset::from_table(&table, None), None),
    };
    let model = train(&spec, &train_set.named(name), val.as_ref())?;
    save_model(&model, &a.out)?;
    log::info!("trained {} on {} samples", spec.family.name(), model.metadata.n_train);
    RunRecord::new("train", a, cfg, Some(spec.seed)).output(&a.out).write()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum ObjectiveArg {
    Bacc,
    Acc,
    Ooacc,
    Wooacc,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Bacc => Objective::Bacc,
            ObjectiveArg::Acc => Objective::Acc,
            ObjectiveArg::Ooacc => Objective::Ooacc,
            ObjectiveArg::Wooacc => Objective::Wooacc,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "train")]
    pub partition: String,
    #[arg(long, default_value = "val")]
    pub val_partition: String,
    /// JSON array of model specs, or a JSON/TOML document with a `specs` array.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, value_enum, default_value = "bacc")]
    pub objective: ObjectiveArg,
    #[arg(long)]
    pub include_augmented: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the winning spec here.
    #[arg(long)]
    pub best_out: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum GridFile {
    List(Vec<serde_json::Value>),
    Doc { specs: Vec<serde_json::Value> },
}

fn load_grid(path: &Path) -> Result<Vec<ModelSpec>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading grid {}", path.display()))?;
    let grid: GridFile = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    let (GridFile::List(specs) | GridFile::Doc { specs }) = grid;
    specs.into_iter().map(checked_spec).collect()
}

fn tune(a: &TuneArgs, cfg: &ToolkitConfig) -> Result<()> {
    let grid = load_grid(&cfg.locate(&a.grid))?;
    let table = load_table(&a.features, &a.manifest, cfg)?;
    let plan = load_plan(&a.split, cfg)?;
    let ids = with_augmented(&table, partition(&plan, &a.partition)?, a.include_augmented);
    let train_set = Dataset::from_table(&table, Some(&ids)).named(dataset_name(&a.features));
    let val = Dataset::from_table(&table, Some(partition(&plan, &a.val_partition)?));
    let result = grid_search(&grid, &train_set, &val, a.objective.into())?;
    write_json(&a.out, &result)?;
    let mut record = RunRecord::new("tune", a, cfg, Some(plan.seed)).output(&a.out);
    if let Some(path) = &a.best_out {
        write_json(path, &result.best)?;
        record = record.output(path);
    }
    log::info!("best spec #{} ({})", result.best_index, result.best.family.name());
    record.write()?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fold plan from `split --kfold`.
    #[arg(long)]
    pub folds: PathBuf,
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn cv(a: &CvArgs, cfg: &ToolkitConfig) -> Result<()> {
    let spec = parse_spec(&a.spec, cfg)?;
    let table = load_table(&a.features, &a.manifest, cfg)?;
    let folds = load_plan(&a.folds, cfg)?;
    let report = kfold_cv(&spec, &table, &folds)?;
    write_json(&a.out, &report)?;
    log::info!("mean bAcc {:.4} ± {:.4}", report.mean.bacc, report.std.bacc);
    RunRecord::new("cv", a, cfg, Some(spec.seed)).output(&a.out).write()?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "test", requires = "split")]
    pub partition: String,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub confusion_csv: Option<PathBuf>,
    /// How per-class off-by-one recall is averaged into wOOAcc.
    #[arg(long, value_enum, default_value = "macro")]
    pub wooacc: WooaccArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum WooaccArg {
    Macro,
    Support,
}

fn eval(a: &EvalArgs, cfg: &ToolkitConfig) -> Result<()> {
    let model = load_model(cfg.locate(&a.model))?;
    let table = load_table(&a.features, &a.manifest, cfg)?;
    let data = match &a.split {
        Some(path) => Dataset::from_table(&table, Some(partition(&load_plan(path, cfg)?, &a.partition)?)),
        None => Dataset::from_table(&table, None),
    };
    let predicted = predict_dataset(&model, &data)?;
    let averaging = match a.wooacc {
        WooaccArg::Macro => OoaccAveraging::Macro,
        WooaccArg::Support => OoaccAveraging::Support,
    };
    let report = metrics::scores_with(&metrics::confusion(&data.y, &predicted)?, averaging)?;
    let mut record = RunRecord::new("eval", a, cfg, Some(model.spec.seed));
    if let Some(path) = &a.confusion_csv {
        fs::write(path, report.confusion.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        record = record.output(path);
    }
    emit_json(&a.out, &report, record)
}

/// Writes `value` to `out` with a record beside it, or prints it with the record embedded.
fn emit_json<T: Serialize>(out: &Option<PathBuf>, value: &T, record: RunRecord) -> Result<()> {
    match out {
        Some(path) => {
            write_json(path, value)?;
            let mut record = record;
            record.outputs.insert(0, path.clone());
            record.write()?;
        }
        None => {
            let mut doc = serde_json::to_value(value)?;
            if let serde_json::Value::Object(map) = &mut doc {
                map.insert("record".into(), serde_json::to_value(&record)?);
            }
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum AlphaArg {
    Interval,
    Ordinal,
}

#[derive(Debug, Args, Serialize)]
pub struct AgreeArgs {
    /// Label JSONL files, one per annotator or session.
    #[arg(long, num_args = 1.., required = true)]
    pub labels: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "interval")]
    pub metric: AlphaArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct AgreementReport {
    pub subjects: usize,
    pub raters: Vec<String>,
    pub co_rated_subjects: usize,
    pub exact_agreement: Option<f64>,
    pub ooacc: Option<f64>,
    pub icc3: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_metric: AlphaArg,
    /// Why a statistic is missing.
    pub notes: Vec<String>,
}

fn agree(a: &AgreeArgs, cfg: &ToolkitConfig) -> Result<()> {
    let files: Vec<PathBuf> = a.labels.iter().map(|p| cfg.locate(p)).collect();
    let ratings = merge_label_files(&files)?;
    let mut notes = Vec::new();
    let mut keep = |name: &str, r: Result<f64, metrics::MetricsError>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{name}: {e}"));
            None
        }
    };
    let metric = match a.metric {
        AlphaArg::Interval => AlphaMetric::Interval,
        AlphaArg::Ordinal => AlphaMetric::Ordinal,
    };
    let report = AgreementReport {
        subjects: ratings.subjects().len(),
        raters: ratings.raters().to_vec(),
        co_rated_subjects: ratings.co_rated().subjects().len(),
        exact_agreement: keep("exact_agreement", exact_agreement(&ratings)),
        ooacc: keep("ooacc", off_by_one_agreement(&ratings)),
        icc3: keep("icc3", icc3(&ratings)),
        alpha: keep("alpha", krippendorff_alpha(&ratings, metric)),
        alpha_metric: a.metric,
        notes,
    };
    emit_json(&a.out, &report, RunRecord::new("agree", a, cfg, None))
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum FormatArg {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    pub region: RegionKind,
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    #[arg(long)]
    pub ycbcr_fallback: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Report format; inferred from the extension of `--out` when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Score against the manifest's labels instead of reporting a distribution.
    #[arg(long)]
    pub evaluate: bool,
}

/// The descriptor settings that reproduce the model's layout, trying the configured
/// settings first and then the other bin counts.
fn descriptor_for(model: &Model, cfg: &ToolkitConfig) -> Result<DescriptorConfig> {
    let base = cfg.descriptor.clone();
    std::iter::once(base.bins)
        .chain(BIN_CHOICES.iter().copied().filter(|&b| b != base.bins))
        .map(|bins| DescriptorConfig { bins, ..base.clone() })
        .find(|d| d.layout().hash() == model.layout_hash)
        .ok_or_else(|| {
            anyhow!(
                "model layout {} is not produced by the configured descriptor settings at any bin count",
                model.layout.kind
            )
        })
}

fn audit(a: &AuditArgs, cfg: &ToolkitConfig) -> Result<()> {
    let model = load_model(cfg.locate(&a.model))?;
    let manifest = manifest_arg(&a.manifest, cfg)?;
    let extract_cfg = ExtractConfig {
        region: a.region,
        descriptor: descriptor_for(&model, cfg)?,
        mask_dir: a.mask_dir.clone(),
        ycbcr_fallback: a.ycbcr_fallback,
        skin_bounds: cfg.skin_bounds,
    };
    let source = FsSource::new(a.mask_dir.clone());
    let record = RunRecord::new("audit", a, cfg, None).output(&a.out);
    if a.evaluate {
        let result = evaluate_ood(&manifest, &model, &source, &extract_cfg)?;
        write_json(&a.out, &result)?;
        log::info!("acc {:.4}, ooacc {:.4}", result.acc, result.ooacc);
        record.write()?;
        return Ok(());
    }
    let report = audit_dataset(&manifest, &model, &source, &extract_cfg)?;
    let format = match a.format {
        Some(FormatArg::Json) => ReportFormat::Json,
        Some(FormatArg::Csv) => ReportFormat::Csv,
        Some(FormatArg::Svg) => ReportFormat::Svg,
        None => a
            .out
            .extension()
            .and_then(|e| e.to_str())
            .and_then(|e| e.parse().ok())
            .unwrap_or(ReportFormat::Json),
    };
    let palette = match &cfg.palette {
        Some(path) => Palette::load(&cfg.locate(path))?.hex_array(),
        None => default_palette(),
    };
    emit_report(&report, format, &a.out, &palette)?;
    log::info!("{} of {} images classified", report.classified, report.total);
    record.write()?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Append-only JSONL label sink.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Serve N individuals per class (by manifest label), interleaved across classes.
    #[arg(long)]
    pub stratified: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Static UI bundle served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Palette and exemplar file; overrides the config.
    #[arg(long)]
    pub palette: Option<PathBuf>,
}

fn serve_cmd(a: &ServeArgs, cfg: &ToolkitConfig) -> Result<()> {
    let manifest = manifest_arg(&a.manifest, cfg)?;
    let palette = match a.palette.clone().or_else(|| cfg.palette.clone()) {
        Some(path) => Palette::load(&cfg.locate(&path))?,
        None => Palette::default(),
    };
    if let Some(dir) = &a.ui_dir {
        if !dir.is_dir() {
            bail!("UI directory {} does not exist", dir.display());
        }
    }
    let options = ServeOptions {
        sink: a.labels.clone(),
        stratified: a.stratified,
        seed: a.seed,
        ui_dir: a.ui_dir.clone(),
        guidance: cfg.guidance.clone(),
    };
    let state = serve::AppState::new(manifest, palette, options)?;
    RunRecord::new("serve", a, cfg, Some(a.seed)).output(&a.labels).write()?;
    serve::run(state, &a.host, a.port.unwrap_or(cfg.port))
}
