use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use leafcnn::network::{build_desk_network, save_checkpoint, Network, Params};
use leafcnn::pipeline::{RunConfig, INCOMPLETE_MARKER, RUN_CONFIG_FILE, TOOL_VERSION};
use leafcnn_cli::{parse, run};

fn leafcnn(args: &[&str]) -> i32 {
    run(std::iter::once("leafcnn").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn small_dataset(dir: &Path, classes: &str, per_class: &str) -> PathBuf {
    let data = dir.join("data");
    let code = leafcnn(&[
        "prepare",
        "--dataset",
        "synthetic",
        "--classes",
        classes,
        "--per-class",
        per_class,
        "--synth-size",
        "64",
        "--seed",
        "4",
        "--out",
        p(&data),
    ]);
    assert_eq!(code, 0);
    data.join("manifest.jsonl")
}

#[test]
fn prepare_twice_gives_identical_trees() {
    let dir = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let code = leafcnn(&[
            "prepare",
            "--dataset",
            "synthetic",
            "--classes",
            "8",
            "--per-class",
            "20",
            "--seed",
            "7",
            "--out",
            p(&out),
        ]);
        assert_eq!(code, 0);
        trees.push(tree(&out));
    }
    assert_eq!(trees[0].keys().collect::<Vec<_>>(), trees[1].keys().collect::<Vec<_>>());
    assert!(trees[0] == trees[1]);
    let echoed = String::from_utf8(trees[0][Path::new(RUN_CONFIG_FILE)].clone()).unwrap();
    assert!(echoed.contains(TOOL_VERSION));
    assert!(echoed.contains("\"per_class\": 20"));
    assert!(!trees[0].contains_key(Path::new(INCOMPLETE_MARKER)));
}

#[test]
fn unknown_flags_and_subcommands_are_rejected() {
    assert_eq!(leafcnn(&["prepare", "--out", "x", "--bogus", "1"]), 2);
    assert_eq!(leafcnn(&["frobnicate"]), 2);
    assert!(
        parse(["leafcnn", "train", "--manifest", "m.jsonl"]).is_err(),
        "missing --out"
    );
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.json");
    fs::write(
        &cfg,
        r#"{"subcommand":"train","epochs":3,"lr":0.01,"manifest":"m.jsonl","out":"from_config"}"#,
    )
    .unwrap();
    let c = parse(["leafcnn", "train", "--config", p(&cfg), "--epochs", "5", "--seed", "9"]).unwrap();
    let RunConfig::Train(a) = c else { panic!("not train") };
    assert_eq!((a.epochs, a.lr, a.seed), (5, 0.01, 9));
    assert_eq!(a.out, PathBuf::from("from_config"));

    fs::write(&cfg, r#"{"epochs":3,"typo_field":1}"#).unwrap();
    assert!(parse(["leafcnn", "train", "--config", p(&cfg), "--out", "o"]).is_err());
    fs::write(&cfg, r#"{"subcommand":"prepare"}"#).unwrap();
    assert!(parse(["leafcnn", "train", "--config", p(&cfg), "--out", "o"]).is_err());
}

#[test]
fn visualize_list_and_mlp_flags_parse() {
    let c = parse([
        "leafcnn",
        "visualize",
        "--manifest",
        "m",
        "--checkpoint",
        "c",
        "--out",
        "o",
        "--layer",
        "conv5",
        "--s",
        "1,5,all",
        "--relu-rule",
        "forward-gate",
    ])
    .unwrap();
    let RunConfig::Visualize(v) = c else {
        panic!("not visualize")
    };
    assert_eq!(v.s.len(), 3);
    assert_eq!(v.layer.as_deref(), Some("conv5"));
    assert!(parse(["leafcnn", "visualize", "--out", "o", "--s", "0"]).is_err());

    let c = parse([
        "leafcnn",
        "classify",
        "--features",
        "f",
        "--out",
        "o",
        "--mlp-epochs",
        "7",
        "--classifiers",
        "svm,nn",
    ])
    .unwrap();
    let RunConfig::Classify(a) = c else {
        panic!("not classify")
    };
    assert_eq!(a.mlp.epochs, 7);
    assert_eq!(a.mlp.hidden_width, 256);
    assert_eq!(a.classifiers, ["svm", "nn"]);
}

#[test]
fn failing_stage_exits_nonzero_and_marks_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let code = leafcnn(&[
        "train",
        "--manifest",
        p(&dir.path().join("nope.jsonl")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 1);
    assert!(out.join(INCOMPLETE_MARKER).exists());
}

#[test]
fn visualize_renders_each_requested_s() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path(), "3", "3");
    let train = dir.path().join("train");
    assert_eq!(
        leafcnn(&[
            "train",
            "--manifest",
            p(&manifest),
            "--epochs",
            "1",
            "--seed",
            "1",
            "--threads",
            "1",
            "--out",
            p(&train)
        ]),
        0
    );
    let vis = dir.path().join("vis");
    let ckpt = train.join("model.ckpt");
    let code = leafcnn(&[
        "visualize",
        "--manifest",
        p(&manifest),
        "--checkpoint",
        p(&ckpt),
        "--layer",
        "conv3",
        "--s",
        "1,5,all",
        "--count",
        "2",
        "--out",
        p(&vis),
    ]);
    assert_eq!(code, 0);
    let pngs: Vec<String> = tree(&vis)
        .into_keys()
        .map(|k| k.display().to_string())
        .filter(|k| k.ends_with(".png"))
        .collect();
    assert_eq!(pngs.len(), 6, "{pngs:?}");
    for s in ["S1", "S5", "Sall"] {
        assert_eq!(
            pngs.iter().filter(|n| n.ends_with(&format!("_conv3_{s}.png"))).count(),
            2
        );
    }
}

#[test]
fn zero_checkpoint_classifies_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let classes = 4;
    let manifest = small_dataset(dir.path(), "4", "10");
    let spec = build_desk_network(classes);
    let zeros = Params::zeros(&spec).unwrap();
    let ckpt = dir.path().join("zero.ckpt");
    save_checkpoint(&Network::new(spec, zeros).unwrap(), &ckpt).unwrap();

    let features = dir.path().join("features");
    assert_eq!(
        leafcnn(&[
            "extract",
            "--manifest",
            p(&manifest),
            "--checkpoint",
            p(&ckpt),
            "--out",
            p(&features)
        ]),
        0
    );
    let cls = dir.path().join("classify");
    assert_eq!(
        leafcnn(&[
            "classify",
            "--features",
            p(&features),
            "--mlp-epochs",
            "5",
            "--out",
            p(&cls)
        ]),
        0
    );
    let table = fs::read_to_string(cls.join("report.txt")).unwrap();
    assert!(table.contains("Feature") && table.contains("Classifier") && table.contains("Accuracy"));
    for name in ["svm", "mlp", "nn"] {
        let eval: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(cls.join(format!("eval_{name}.json"))).unwrap()).unwrap();
        let acc = eval["accuracy"].as_f64().unwrap();
        let n = eval["predictions"].as_array().unwrap().len() as f64;
        let chance = 1.0 / classes as f64;
        let sigma = (chance * (1.0 - chance) / n).sqrt();
        assert!(
            (acc - chance).abs() <= 3.0 * sigma,
            "{name}: accuracy {acc} over {n} samples"
        );
    }
}
