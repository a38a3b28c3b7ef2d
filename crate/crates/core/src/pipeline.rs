//! The end-to-end workflow as callable stages: prepare, train, extract,
//! classify, visualize and report.
//!
//! Every stage writes into its own output directory, echoes its resolved
//! configuration there as `run_config.json`, and leaves an `INCOMPLETE`
//! marker behind if it fails part-way.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::classify::{
    default_feature_layer, evaluate, extract_features, failure_report, format_table, report_records, train_linear_svm,
    train_mlp, train_nearest_neighbour, write_failure_bundle, Classifier, EvalReport, FeatureSet, MlpConfig,
    Prediction,
};
use crate::datapipe::{
    build_d1_manifest, build_d2_manifest, build_synthetic_manifest, finalize, Dataset, DatasetKind, HsvBounds,
    PrepareConfig, Split, SynthConfig, SyntheticPreset,
};
use crate::deconv::{render_visualisation, MaskScope, ReluRule, SMode, VisRequest};
use crate::error::{Error, Result};
use crate::network::{
    build_desk_network, build_paper_network_with_classes, load_checkpoint, save_checkpoint, train, LayerKind, Network,
    NetworkSpec, TrainConfig, DESK_INPUT_SIDE, PAPER_INPUT_SIDE,
};
use crate::util::write_atomic;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_FEATURES: &str = "features_train.json";
pub const TEST_FEATURES: &str = "features_test.json";

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NetPreset {
    Paper,
    #[default]
    Desk,
}

impl NetPreset {
    pub fn input_side(self) -> usize {
        match self {
            NetPreset::Paper => PAPER_INPUT_SIDE,
            NetPreset::Desk => DESK_INPUT_SIDE,
        }
    }

    pub fn spec(self, class_count: usize) -> NetworkSpec {
        match self {
            NetPreset::Paper => build_paper_network_with_classes(class_count),
            NetPreset::Desk => build_desk_network(class_count),
        }
    }
}

impl fmt::Display for NetPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetPreset::Paper => "paper",
            NetPreset::Desk => "desk",
        })
    }
}

impl FromStr for NetPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(NetPreset::Paper),
            "desk" => Ok(NetPreset::Desk),
            _ => Err(Error::invalid(format!("unknown preset {s:?} (expected paper or desk)"))),
        }
    }
}

impl FromStr for ReluRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descending" => Ok(ReluRule::Descending),
            "forward-gate" => Ok(ReluRule::ForwardGate),
            _ => Err(Error::invalid(format!(
                "unknown ReLU rule {s:?} (expected descending or forward-gate)"
            ))),
        }
    }
}

impl FromStr for MaskScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "across-maps" => Ok(MaskScope::AcrossMaps),
            "per-map" => Ok(MaskScope::PerMap),
            _ => Err(Error::invalid(format!(
                "unknown mask scope {s:?} (expected across-maps or per-map)"
            ))),
        }
    }
}

string_serde!(NetPreset);
string_serde!(SMode);
string_serde!(ReluRule);
string_serde!(MaskScope);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareArgs {
    pub dataset: DatasetKind,
    pub src: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub preset: NetPreset,
    /// Overrides the preset's input side.
    pub input_side: Option<usize>,
    pub classes: usize,
    pub per_class: usize,
    pub synth_size: usize,
    pub shared_outline: bool,
    pub patches_per_image: Option<usize>,
    pub test_fraction: f64,
    pub hsv_bounds: HsvBounds,
    pub min_foreground: f64,
    pub threads: usize,
}

impl Default for PrepareArgs {
    fn default() -> Self {
        PrepareArgs {
            dataset: DatasetKind::Synthetic,
            src: None,
            out: PathBuf::new(),
            seed: 0,
            preset: NetPreset::Desk,
            input_side: None,
            classes: 8,
            per_class: 20,
            synth_size: 96,
            shared_outline: false,
            patches_per_image: None,
            test_fraction: 0.2,
            hsv_bounds: HsvBounds::default(),
            min_foreground: crate::datapipe::patches::DEFAULT_MIN_FOREGROUND,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    pub manifest: PathBuf,
    #[serde(skip)]
    pub out: PathBuf,
    pub preset: NetPreset,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub lr_decay: f32,
    pub seed: u64,
    pub threads: usize,
    /// Save `checkpoints/epoch_NNN.ckpt` every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Start from this checkpoint, replacing its head if the class count differs.
    pub init_from: Option<PathBuf>,
}

impl Default for TrainArgs {
    fn default() -> Self {
        TrainArgs {
            manifest: PathBuf::new(),
            out: PathBuf::new(),
            preset: NetPreset::Desk,
            epochs: 30,
            batch_size: 16,
            lr: 0.05,
            lr_decay: 0.93,
            seed: 0,
            threads: 1,
            checkpoint_every: 0,
            init_from: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractArgs {
    pub manifest: PathBuf,
    pub checkpoint: PathBuf,
    #[serde(skip)]
    pub out: PathBuf,
    /// Defaults to the second-to-last fc layer.
    pub layer: Option<String>,
    pub l2_normalize: bool,
    pub threads: usize,
}

impl Default for ExtractArgs {
    fn default() -> Self {
        ExtractArgs {
            manifest: PathBuf::new(),
            checkpoint: PathBuf::new(),
            out: PathBuf::new(),
            layer: None,
            l2_normalize: true,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyArgs {
    /// Directory holding the extract stage's feature files.
    pub features: PathBuf,
    #[serde(skip)]
    pub out: PathBuf,
    /// Any of `svm`, `mlp`, `nn`.
    pub classifiers: Vec<String>,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub mlp: MlpConfig,
    pub seed: u64,
}

impl Default for ClassifyArgs {
    fn default() -> Self {
        ClassifyArgs {
            features: PathBuf::new(),
            out: PathBuf::new(),
            classifiers: vec!["svm".into(), "mlp".into(), "nn".into()],
            svm_c: 10.0,
            svm_epochs: 30,
            mlp: MlpConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualizeArgs {
    pub manifest: PathBuf,
    pub checkpoint: PathBuf,
    #[serde(skip)]
    pub out: PathBuf,
    /// Defaults to the last conv layer.
    pub layer: Option<String>,
    pub s: Vec<SMode>,
    /// Entry ids to render; when empty, the first `count` test entries.
    pub ids: Vec<String>,
    pub count: usize,
    pub relu_rule: ReluRule,
    pub scope: MaskScope,
}

impl Default for VisualizeArgs {
    fn default() -> Self {
        VisualizeArgs {
            manifest: PathBuf::new(),
            checkpoint: PathBuf::new(),
            out: PathBuf::new(),
            layer: None,
            s: vec![SMode::Count(1), SMode::Count(5), SMode::All],
            ids: Vec::new(),
            count: 4,
            relu_rule: ReluRule::Descending,
            scope: MaskScope::AcrossMaps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportArgs {
    /// An `eval_*.json` written by the classify or train stage.
    pub eval: PathBuf,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    pub k: usize,
    /// Layer for the S=1 visualisations; defaults to the first conv layer.
    pub vis_layer: Option<String>,
}

impl Default for ReportArgs {
    fn default() -> Self {
        ReportArgs {
            eval: PathBuf::new(),
            manifest: None,
            checkpoint: None,
            out: PathBuf::new(),
            k: 3,
            vis_layer: None,
        }
    }
}

/// A fully resolved invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum RunConfig {
    Prepare(PrepareArgs),
    Train(TrainArgs),
    Extract(ExtractArgs),
    Classify(ClassifyArgs),
    Visualize(VisualizeArgs),
    Report(ReportArgs),
}

impl RunConfig {
    pub fn out_dir(&self) -> &Path {
        match self {
            RunConfig::Prepare(a) => &a.out,
            RunConfig::Train(a) => &a.out,
            RunConfig::Extract(a) => &a.out,
            RunConfig::Classify(a) => &a.out,
            RunConfig::Visualize(a) => &a.out,
            RunConfig::Report(a) => &a.out,
        }
    }

    fn threads(&self) -> usize {
        match self {
            RunConfig::Prepare(a) => a.threads,
            RunConfig::Train(a) => a.threads,
            RunConfig::Extract(a) => a.threads,
            _ => 1,
        }
    }

    /// The echoed form: the configuration plus the tool version.
    pub fn echo(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v["tool_version"] = serde_json::Value::String(TOOL_VERSION.to_string());
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }

    /// Runs the stage. On success the output directory holds the echoed
    /// config and no `INCOMPLETE` marker.
    pub fn run(&self) -> Result<()> {
        let out = self.out_dir();
        if out.as_os_str().is_empty() {
            return Err(Error::invalid("an output directory is required"));
        }
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let marker = out.join(INCOMPLETE_MARKER);
        write_atomic(&marker, b"stage did not finish; outputs here are partial\n")?;
        write_atomic(&out.join(RUN_CONFIG_FILE), self.echo()?.as_bytes())?;
        let threads = self.threads().max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| match self {
            RunConfig::Prepare(a) => prepare(a).map(|_| ()),
            RunConfig::Train(a) => train_stage(a).map(|_| ()),
            RunConfig::Extract(a) => extract(a).map(|_| ()),
            RunConfig::Classify(a) => classify(a).map(|_| ()),
            RunConfig::Visualize(a) => visualize(a).map(|_| ()),
            RunConfig::Report(a) => report(a).map(|_| ()),
        })?;
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))
    }
}

pub fn prepare(a: &PrepareArgs) -> Result<PathBuf> {
    let side = a.input_side.unwrap_or(a.preset.input_side());
    let cfg = PrepareConfig {
        seed: a.seed,
        input_extent: [side, side],
        hsv_bounds: a.hsv_bounds,
        min_foreground: a.min_foreground,
    };
    let src = || {
        a.src
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("dataset {} needs a source directory", a.dataset)))
    };
    let manifest = match a.dataset {
        DatasetKind::D1 => build_d1_manifest(src()?, &cfg)?,
        DatasetKind::D2 => build_d2_manifest(src()?, &cfg)?,
        DatasetKind::Synthetic => {
            let preset = SyntheticPreset {
                synth: SynthConfig {
                    class_count: a.classes,
                    per_class: a.per_class,
                    seed: a.seed,
                    size: a.synth_size,
                    shared_outline: a.shared_outline,
                },
                test_fraction: a.test_fraction,
                patches_per_image: a.patches_per_image,
            };
            build_synthetic_manifest(&a.out, &preset, &cfg)?
        }
    };
    log::info!(
        "{} manifest: {} train / {} test entries",
        a.dataset,
        manifest.header.train_count,
        manifest.header.test_count
    );
    finalize(manifest, &a.out)
}

/// Softmax predictions of `net` over a loaded split.
pub fn evaluate_network(net: &Network, ids: &[String], examples: &[(crate::Tensor, usize)]) -> Result<EvalReport> {
    use rayon::prelude::*;
    let k = net.spec.class_count;
    let preds = examples
        .par_iter()
        .map(|(x, _)| net.predict(x))
        .collect::<Result<Vec<usize>>>()?;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut predictions = Vec::with_capacity(preds.len());
    for ((&p, (_, label)), id) in preds.iter().zip(examples).zip(ids) {
        confusion[*label][p] += 1;
        predictions.push(Prediction {
            id: id.clone(),
            true_class: label + 1,
            predicted_class: p + 1,
        });
    }
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        classifier: "CNN (softmax)".into(),
        feature_layer: net.spec.layers.last().map(|l| l.name.clone()).unwrap_or_default(),
        l2_normalized: false,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        per_class_errors: crate::classify::rank_errors(&confusion),
        confusion,
        predictions,
    })
}

fn write_eval(report: &EvalReport, out: &Path, tag: &str) -> Result<()> {
    write_atomic(
        &out.join(format!("eval_{tag}.json")),
        serde_json::to_string_pretty(report)?.as_bytes(),
    )?;
    write_atomic(
        &out.join(format!("confusion_{tag}.txt")),
        report.confusion_grid().as_bytes(),
    )
}

pub struct TrainOutcome {
    pub net: Network,
    pub checkpoint: PathBuf,
    pub test_report: EvalReport,
}

pub fn train_stage(a: &TrainArgs) -> Result<TrainOutcome> {
    let dataset = Dataset::open(&a.manifest)?;
    let header = &dataset.manifest.header;
    let spec = a.preset.spec(header.class_count);
    if spec.input.height != header.input_extent[0] || spec.input.width != header.input_extent[1] {
        return Err(Error::invalid(format!(
            "preset {} expects {}x{} inputs but the manifest was prepared at {}x{}",
            a.preset, spec.input.height, spec.input.width, header.input_extent[0], header.input_extent[1]
        )));
    }
    let mut net = match &a.init_from {
        None => Network::init(spec, a.seed)?,
        Some(p) => {
            let mut net = load_checkpoint(p)?;
            if net.spec.class_count != header.class_count {
                net.replace_head(header.class_count, a.seed)?;
            }
            net
        }
    };
    let train_split = dataset.load_split(Split::Train)?;
    let test_split = dataset.load_split(Split::Test)?;
    log::info!(
        "training {} preset on {} examples, testing on {}",
        a.preset,
        train_split.examples.len(),
        test_split.examples.len()
    );
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        base_lr: a.lr,
        lr_decay: a.lr_decay,
        seed: a.seed,
        threads: a.threads.max(1),
    };
    let mut log_lines = String::new();
    let ckpt_dir = a.out.join("checkpoints");
    train(&mut net, &train_split, &config, |net, stats| {
        log_lines.push_str(&serde_json::to_string(&serde_json::json!({
            "epoch": stats.epoch,
            "mean_loss": stats.mean_loss,
            "train_accuracy": stats.train_accuracy,
            "learning_rate": stats.learning_rate,
        }))?);
        log_lines.push('\n');
        if a.checkpoint_every > 0 && stats.epoch % a.checkpoint_every == 0 {
            fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
            save_checkpoint(net, &ckpt_dir.join(format!("epoch_{:03}.ckpt", stats.epoch)))?;
        }
        Ok(true)
    })?;
    write_atomic(&a.out.join("training_log.jsonl"), log_lines.as_bytes())?;
    let checkpoint = a.out.join(FINAL_CHECKPOINT);
    save_checkpoint(&net, &checkpoint)?;
    let test_report = evaluate_network(&net, &test_split.ids, &test_split.examples)?;
    log::info!("test accuracy {:.4}", test_report.accuracy);
    write_eval(&test_report, &a.out, "cnn")?;
    Ok(TrainOutcome {
        net,
        checkpoint,
        test_report,
    })
}

pub fn extract(a: &ExtractArgs) -> Result<(FeatureSet, FeatureSet)> {
    let dataset = Dataset::open(&a.manifest)?;
    let net = load_checkpoint(&a.checkpoint)?;
    let layer = match &a.layer {
        Some(l) => l.clone(),
        None => default_feature_layer(&net.spec)
            .ok_or_else(|| Error::invalid("network has no fully-connected layer"))?
            .to_string(),
    };
    let digest = dataset.manifest.digest();
    let mut sets = Vec::new();
    for (split, file) in [(Split::Train, TRAIN_FEATURES), (Split::Test, TEST_FEATURES)] {
        let loaded = dataset.load_split(split)?;
        let fs = extract_features(&net, &loaded.examples, &loaded.ids, &layer, a.l2_normalize, &digest)?;
        fs.save(&a.out.join(file))?;
        sets.push(fs);
    }
    let test = sets.pop().expect("two sets");
    let train = sets.pop().expect("two sets");
    Ok((train, test))
}

pub fn classify(a: &ClassifyArgs) -> Result<Vec<(String, EvalReport)>> {
    let train = FeatureSet::load(&a.features.join(TRAIN_FEATURES))?;
    let test = FeatureSet::load(&a.features.join(TEST_FEATURES))?;
    if train.manifest_digest != test.manifest_digest || train.layer != test.layer {
        return Err(Error::invalid("train and test features come from different runs"));
    }
    let feature = format!("From deep CNN ({})", train.layer);
    let mut reports = Vec::new();
    for name in &a.classifiers {
        let model: Box<dyn Classifier> = match name.as_str() {
            "svm" => Box::new(train_linear_svm(&train, a.svm_c, a.svm_epochs, a.seed)?),
            "mlp" => Box::new(train_mlp(
                &train,
                &MlpConfig {
                    seed: a.seed,
                    ..a.mlp.clone()
                },
            )?),
            "nn" => Box::new(train_nearest_neighbour(&train)?),
            other => {
                return Err(Error::invalid(format!(
                    "unknown classifier {other:?} (expected svm, mlp or nn)"
                )))
            }
        };
        let report = evaluate(model.as_ref(), &test)?;
        log::info!("{}: accuracy {:.4}", report.classifier, report.accuracy);
        write_eval(&report, &a.out, name)?;
        reports.push((feature.clone(), report));
    }
    write_atomic(&a.out.join("report.txt"), format_table(&reports).as_bytes())?;
    write_atomic(&a.out.join("reports.jsonl"), report_records(&reports)?.as_bytes())?;
    Ok(reports)
}

fn conv_names(spec: &NetworkSpec) -> Vec<&str> {
    spec.layers
        .iter()
        .filter(|l| matches!(l.kind, LayerKind::Conv { .. }))
        .map(|l| l.name.as_str())
        .collect()
}

pub fn visualize(a: &VisualizeArgs) -> Result<Vec<PathBuf>> {
    let dataset = Dataset::open(&a.manifest)?;
    let net = load_checkpoint(&a.checkpoint)?;
    let layer = match &a.layer {
        Some(l) => l.clone(),
        None => conv_names(&net.spec)
            .last()
            .ok_or_else(|| Error::invalid("network has no conv layer"))?
            .to_string(),
    };
    let entries: Vec<_> = if a.ids.is_empty() {
        dataset.entries(Split::Test).into_iter().take(a.count).collect()
    } else {
        a.ids
            .iter()
            .map(|id| {
                dataset
                    .find(id)
                    .ok_or_else(|| Error::invalid(format!("entry {id:?} not in manifest")))
            })
            .collect::<Result<_>>()?
    };
    let mut written = Vec::new();
    for e in entries {
        let input = dataset.load_input(e)?;
        for &s in &a.s {
            let req = VisRequest {
                scope: a.scope,
                relu_rule: a.relu_rule,
                ..VisRequest::new(layer.clone(), s, e.id.clone())
            };
            let r = render_visualisation(&net, &input, &req, &a.out)?;
            written.push(r.image_path);
            written.push(r.sidecar_path);
        }
    }
    Ok(written)
}

pub fn report(a: &ReportArgs) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(&a.eval).map_err(|e| Error::io(&a.eval, e))?;
    let eval: EvalReport = serde_json::from_str(&text)?;
    let bundle = failure_report(&eval, a.k);
    let dataset = a.manifest.as_deref().map(Dataset::open).transpose()?;
    let net = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let layer = match (&net, &a.vis_layer) {
        (_, Some(l)) => Some(l.clone()),
        (Some(n), None) => conv_names(&n.spec).first().map(|s| s.to_string()),
        (None, None) => None,
    };
    let vis = match (&net, &layer) {
        (Some(n), Some(l)) => Some((n, l.as_str())),
        _ => None,
    };
    let mut summary = format!("accuracy {:.4}\n{}\n", eval.accuracy, eval.ranking_line());
    summary.push_str(&eval.confusion_grid());
    write_atomic(&a.out.join("summary.txt"), summary.as_bytes())?;
    write_failure_bundle(&bundle, dataset.as_ref(), vis, &a.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_roundtrips_and_rejects_unknown_fields() {
        let cfg = RunConfig::Visualize(VisualizeArgs {
            layer: Some("conv3".into()),
            ..VisualizeArgs::default()
        });
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"subcommand\":\"visualize\""));
        assert!(text.contains("[\"1\",\"5\",\"all\"]"));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"subcommand":"train","bogus":1}"#).is_err());
        assert!(cfg.echo().unwrap().contains(TOOL_VERSION));
    }

    #[test]
    fn failed_stage_leaves_marker() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::Train(TrainArgs {
            manifest: dir.path().join("missing.jsonl"),
            out: dir.path().join("out"),
            ..TrainArgs::default()
        });
        assert!(cfg.run().is_err());
        assert!(dir.path().join("out").join(INCOMPLETE_MARKER).exists());
        assert!(dir.path().join("out").join(RUN_CONFIG_FILE).exists());
    }
}
