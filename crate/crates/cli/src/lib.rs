//! Subcommand parsing for the `leafcnn` binary.
//!
//! Each subcommand resolves to a [`RunConfig`]: values from an optional JSON
//! `--config` file first, then any flags given on the command line.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use leafcnn::pipeline::RunConfig;
use serde_json::{Map, Value};

#[derive(Parser, Debug)]
#[command(name = "leafcnn", version, about = "Leaf classification with a from-scratch CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a dataset manifest (d1, d2 or synthetic).
    Prepare(PrepareFlags),
    /// Train a network on a manifest.
    Train(TrainFlags),
    /// Write train/test feature files from a checkpoint.
    Extract(ExtractFlags),
    /// Fit SVM, MLP and 1-NN heads on extracted features and evaluate.
    Classify(ClassifyFlags),
    /// Render deconvnet reconstructions.
    Visualize(VisualizeFlags),
    /// Summarise the most confused classes of an evaluation.
    Report(ReportFlags),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON file with the subcommand's fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrepareFlags {
    #[command(flatten)]
    common: Common,
    /// d1, d2 or synthetic.
    #[arg(long)]
    dataset: Option<String>,
    /// Source tree of `<class>/<image>.png` for d1 and d2.
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// paper or desk; sets the input side.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    input_side: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    synth_size: Option<usize>,
    #[arg(long)]
    shared_outline: bool,
    #[arg(long)]
    patches_per_image: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    min_foreground: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainFlags {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    lr_decay: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
    /// 1 is fully deterministic.
    #[arg(long)]
    threads: Option<usize>,
    /// Save a checkpoint every N epochs; 0 disables.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Start from this checkpoint (fine-tuning).
    #[arg(long)]
    init_from: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractFlags {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// fc layer to read; defaults to the second-to-last fc.
    #[arg(long)]
    layer: Option<String>,
    /// Keep raw feature magnitudes.
    #[arg(long)]
    no_l2: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct ClassifyFlags {
    #[command(flatten)]
    common: Common,
    /// Directory written by `extract`.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Comma-separated subset of svm, mlp, nn.
    #[arg(long, value_delimiter = ',')]
    classifiers: Option<Vec<String>>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    svm_epochs: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    mlp_epochs: Option<usize>,
    #[arg(long)]
    mlp_lr: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct VisualizeFlags {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Conv or pool layer; defaults to the last conv.
    #[arg(long)]
    layer: Option<String>,
    /// Comma-separated S values, e.g. `1,5,all`.
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<String>>,
    /// Comma-separated entry ids; defaults to the first `--count` test entries.
    #[arg(long, value_delimiter = ',')]
    ids: Option<Vec<String>>,
    #[arg(long)]
    count: Option<usize>,
    /// descending or forward-gate.
    #[arg(long)]
    relu_rule: Option<String>,
    /// across-maps or per-map.
    #[arg(long)]
    scope: Option<String>,
}

#[derive(Args, Debug)]
struct ReportFlags {
    #[command(flatten)]
    common: Common,
    /// An eval_*.json from `train` or `classify`.
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of most-confused classes to bundle.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    vis_layer: Option<String>,
}

struct Overrides(Map<String, Value>);

impl Overrides {
    fn set<T: serde::Serialize>(&mut self, key: &str, value: Option<T>) -> anyhow::Result<()> {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v)?);
        }
        Ok(())
    }

    fn flag(&mut self, key: &str, on: bool, value: bool) {
        if on {
            self.0.insert(key.to_string(), Value::Bool(value));
        }
    }
}

fn resolve(
    name: &str,
    common: &Common,
    fill: impl FnOnce(&mut Overrides) -> anyhow::Result<()>,
) -> anyhow::Result<RunConfig> {
    let mut fields = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
                Value::Object(m) => m,
                _ => bail!("{} must hold a JSON object", path.display()),
            }
        }
        None => Map::new(),
    };
    if let Some(Value::String(sub)) = fields.remove("subcommand") {
        if sub != name {
            bail!("config is for `{sub}`, not `{name}`");
        }
    }
    fields.remove("tool_version");
    let config_out = fields.remove("out");
    let mut o = Overrides(fields);
    fill(&mut o)?;
    let out = match (&common.out, config_out) {
        (Some(p), _) => p.clone(),
        (None, Some(Value::String(p))) => PathBuf::from(p),
        _ => bail!("--out is required"),
    };
    o.0.insert("subcommand".into(), Value::String(name.into()));
    let mut cfg: RunConfig = serde_json::from_value(Value::Object(o.0)).context("invalid configuration")?;
    set_out(&mut cfg, out);
    Ok(cfg)
}

fn set_out(cfg: &mut RunConfig, out: PathBuf) {
    match cfg {
        RunConfig::Prepare(a) => a.out = out,
        RunConfig::Train(a) => a.out = out,
        RunConfig::Extract(a) => a.out = out,
        RunConfig::Classify(a) => a.out = out,
        RunConfig::Visualize(a) => a.out = out,
        RunConfig::Report(a) => a.out = out,
    }
}

fn to_config(command: Command) -> anyhow::Result<RunConfig> {
    match command {
        Command::Prepare(f) => resolve("prepare", &f.common, |o| {
            o.set("dataset", f.dataset)?;
            o.set("src", f.src)?;
            o.set("seed", f.seed)?;
            o.set("preset", f.preset)?;
            o.set("input_side", f.input_side)?;
            o.set("classes", f.classes)?;
            o.set("per_class", f.per_class)?;
            o.set("synth_size", f.synth_size)?;
            o.flag("shared_outline", f.shared_outline, true);
            o.set("patches_per_image", f.patches_per_image)?;
            o.set("test_fraction", f.test_fraction)?;
            o.set("min_foreground", f.min_foreground)?;
            o.set("threads", f.threads)
        }),
        Command::Train(f) => resolve("train", &f.common, |o| {
            o.set("manifest", f.manifest)?;
            o.set("preset", f.preset)?;
            o.set("epochs", f.epochs)?;
            o.set("batch_size", f.batch_size)?;
            o.set("lr", f.lr)?;
            o.set("lr_decay", f.lr_decay)?;
            o.set("seed", f.seed)?;
            o.set("threads", f.threads)?;
            o.set("checkpoint_every", f.checkpoint_every)?;
            o.set("init_from", f.init_from)
        }),
        Command::Extract(f) => resolve("extract", &f.common, |o| {
            o.set("manifest", f.manifest)?;
            o.set("checkpoint", f.checkpoint)?;
            o.set("layer", f.layer)?;
            o.flag("l2_normalize", f.no_l2, false);
            o.set("threads", f.threads)
        }),
        Command::Classify(f) => resolve("classify", &f.common, |o| {
            o.set("features", f.features)?;
            o.set("classifiers", f.classifiers)?;
            o.set("svm_c", f.svm_c)?;
            o.set("svm_epochs", f.svm_epochs)?;
            o.set("seed", f.seed)?;
            if f.mlp_hidden.is_some() || f.mlp_epochs.is_some() || f.mlp_lr.is_some() {
                let mut mlp = match o.0.remove("mlp") {
                    Some(Value::Object(m)) => m,
                    Some(_) => bail!("`mlp` must be an object"),
                    None => Map::new(),
                };
                let mut m = Overrides(std::mem::take(&mut mlp));
                m.set("hidden_width", f.mlp_hidden)?;
                m.set("epochs", f.mlp_epochs)?;
                m.set("lr", f.mlp_lr)?;
                o.0.insert("mlp".into(), Value::Object(m.0));
            }
            Ok(())
        }),
        Command::Visualize(f) => resolve("visualize", &f.common, |o| {
            o.set("manifest", f.manifest)?;
            o.set("checkpoint", f.checkpoint)?;
            o.set("layer", f.layer)?;
            o.set("s", f.s)?;
            o.set("ids", f.ids)?;
            o.set("count", f.count)?;
            o.set("relu_rule", f.relu_rule)?;
            o.set("scope", f.scope)
        }),
        Command::Report(f) => resolve("report", &f.common, |o| {
            o.set("eval", f.eval)?;
            o.set("manifest", f.manifest)?;
            o.set("checkpoint", f.checkpoint)?;
            o.set("k", f.k)?;
            o.set("vis_layer", f.vis_layer)
        }),
    }
}

/// Parses `argv` (program name first) into a resolved configuration.
pub fn parse<I, T>(argv: I) -> anyhow::Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    to_config(Cli::try_parse_from(argv)?.command)
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs one subcommand and returns the process exit code. Failures print a
/// single diagnostic line to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("leafcnn: {}", one_line(first.trim_start_matches("error: ")));
            return 2;
        }
    };
    let result = to_config(cli.command).and_then(|cfg| {
        log::info!("output directory {}", cfg.out_dir().display());
        cfg.run().map_err(anyhow::Error::from)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("leafcnn: error: {}", one_line(&format!("{e:#}")));
            1
        }
    }
}
