//! Accuracy, confusion matrices, per-class error rankings and failure bundles.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{imageops, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use super::models::Classifier;
use crate::datapipe::{Dataset, Split};
use crate::deconv::{render_visualisation, SMode, VisRequest};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::util::{write_atomic, write_png};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    /// 1-based.
    pub true_class: usize,
    /// 1-based.
    pub predicted_class: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: String,
    pub feature_layer: String,
    pub l2_normalized: bool,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, 0-based indices.
    pub confusion: Vec<Vec<usize>>,
    /// `(1-based class, misclassified count)`, most errors first, ties by class.
    pub per_class_errors: Vec<(usize, usize)>,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    /// Ranking in the form `Class 2(4 misclassified), Class 23(3)`.
    pub fn ranking_line(&self) -> String {
        self.per_class_errors
            .iter()
            .enumerate()
            .map(|(i, (c, n))| {
                if i == 0 {
                    format!("Class {c}({n} misclassified)")
                } else {
                    format!("Class {c}({n})")
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Plain-text grid, rows are true classes and columns predictions.
    pub fn confusion_grid(&self) -> String {
        let k = self.confusion.len();
        let width = self
            .confusion
            .iter()
            .flatten()
            .map(|v| v.to_string().len())
            .chain([k.to_string().len() + 1])
            .max()
            .unwrap_or(1);
        let mut out = format!("{:>w$}", "t\\p", w = width + 1);
        for c in 1..=k {
            write!(out, " {c:>width$}").expect("string write");
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            write!(out, "{:>w$}", i + 1, w = width + 1).expect("string write");
            for v in row {
                write!(out, " {v:>width$}").expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

pub fn rank_errors(confusion: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut ranked: Vec<(usize, usize)> = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| (i + 1, row.iter().sum::<usize>() - row[i]))
        .filter(|&(_, n)| n > 0)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

pub fn evaluate(model: &dyn Classifier, fs: &FeatureSet) -> Result<EvalReport> {
    fs.validate()?;
    if !fs.is_empty() && fs.dim() != model.dim() {
        return Err(Error::shape(format!(
            "features are {} wide but the model expects {}",
            fs.dim(),
            model.dim()
        )));
    }
    let k = model.class_count().max(fs.class_count);
    let mut confusion = vec![vec![0usize; k]; k];
    let mut predictions = Vec::with_capacity(fs.len());
    for ((row, &label), id) in fs.rows.iter().zip(&fs.labels).zip(&fs.ids) {
        let p = model.predict(row)?;
        confusion[label][p] += 1;
        predictions.push(Prediction {
            id: id.clone(),
            true_class: label + 1,
            predicted_class: p + 1,
        });
    }
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        classifier: model.name().to_string(),
        feature_layer: fs.layer.clone(),
        l2_normalized: fs.l2_normalized,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        per_class_errors: rank_errors(&confusion),
        confusion,
        predictions,
    })
}

/// `Feature | Classifier | Accuracy` table over several reports.
pub fn format_table(reports: &[(String, EvalReport)]) -> String {
    let fw = reports
        .iter()
        .map(|(f, _)| f.len())
        .chain(["Feature".len()])
        .max()
        .unwrap_or(7);
    let cw = reports
        .iter()
        .map(|(_, r)| r.classifier.len())
        .chain(["Classifier".len()])
        .max()
        .unwrap_or(10);
    let mut out = String::new();
    if let Some((_, r)) = reports.first() {
        writeln!(
            out,
            "# features: layer={} l2_normalized={}",
            r.feature_layer, r.l2_normalized
        )
        .expect("string write");
    }
    writeln!(out, "{:<fw$} | {:<cw$} | Accuracy", "Feature", "Classifier").expect("string write");
    writeln!(out, "{}-+-{}-+---------", "-".repeat(fw), "-".repeat(cw)).expect("string write");
    for (feature, r) in reports {
        writeln!(out, "{feature:<fw$} | {:<cw$} | {:.3}", r.classifier, r.accuracy).expect("string write");
    }
    out
}

/// One JSON record per report.
pub fn report_records(reports: &[(String, EvalReport)]) -> Result<String> {
    let mut out = String::new();
    for (feature, r) in reports {
        let rec = serde_json::json!({
            "feature": feature,
            "classifier": r.classifier,
            "feature_layer": r.feature_layer,
            "l2_normalized": r.l2_normalized,
            "accuracy": r.accuracy,
            "correct": r.correct(),
            "total": r.total(),
            "per_class_errors": r.per_class_errors,
        });
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureClass {
    pub class: usize,
    pub misclassified: Vec<Prediction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureBundle {
    pub note: Option<String>,
    pub classes: Vec<FailureClass>,
}

impl FailureBundle {
    pub fn entry_count(&self) -> usize {
        self.classes.iter().map(|c| c.misclassified.len()).sum()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        if let Some(n) = &self.note {
            writeln!(out, "# {n}").expect("string write");
        }
        for c in &self.classes {
            writeln!(out, "Class {}({} misclassified)", c.class, c.misclassified.len()).expect("string write");
            for p in &c.misclassified {
                writeln!(out, "  {} -> predicted Class {}", p.id, p.predicted_class).expect("string write");
            }
        }
        out
    }
}

/// Misclassified entries of the `k` classes with the most errors.
pub fn failure_report(report: &EvalReport, k: usize) -> FailureBundle {
    if report.per_class_errors.is_empty() {
        return FailureBundle {
            note: Some("no misclassified examples".into()),
            classes: Vec::new(),
        };
    }
    let classes = report
        .per_class_errors
        .iter()
        .take(k)
        .map(|&(class, _)| FailureClass {
            class,
            misclassified: report
                .predictions
                .iter()
                .filter(|p| p.true_class == class && p.predicted_class != class)
                .cloned()
                .collect(),
        })
        .collect();
    FailureBundle { note: None, classes }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// The misclassified image beside the first training image of the class it
/// was mistaken for, both scaled to `side`.
fn strip(dataset: &Dataset, p: &Prediction, side: u32) -> Result<RgbImage> {
    let entry = dataset
        .find(&p.id)
        .ok_or_else(|| Error::Manifest(format!("entry {:?} not in manifest", p.id)))?;
    let mut out = RgbImage::from_pixel(2 * side + 4, side, Rgb([255, 255, 255]));
    let left = imageops::resize(&dataset.load_rgb(entry)?, side, side, imageops::FilterType::Triangle);
    imageops::replace(&mut out, &left, 0, 0);
    if let Some(example) = dataset
        .manifest
        .entries_in(Split::Train)
        .find(|e| e.class_label == p.predicted_class)
    {
        let right = imageops::resize(&dataset.load_rgb(example)?, side, side, imageops::FilterType::Triangle);
        imageops::replace(&mut out, &right, side as i64 + 4, 0);
    }
    Ok(out)
}

/// Writes the bundle summary, JSON, image strips and, with a network, an
/// S=1 visualisation of each misclassified example at `vis_layer`.
pub fn write_failure_bundle(
    bundle: &FailureBundle,
    dataset: Option<&Dataset>,
    vis: Option<(&Network, &str)>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let summary = out_dir.join("failures.txt");
    write_atomic(&summary, bundle.summary().as_bytes())?;
    written.push(summary);
    let json = out_dir.join("failures.json");
    write_atomic(&json, serde_json::to_string_pretty(bundle)?.as_bytes())?;
    written.push(json);
    let Some(dataset) = dataset else {
        return Ok(written);
    };
    for c in &bundle.classes {
        for p in &c.misclassified {
            let path = out_dir.join("strips").join(format!("{}.png", sanitize(&p.id)));
            write_png(&path, &strip(dataset, p, 128)?)?;
            written.push(path);
            if let Some((net, layer)) = vis {
                let entry = dataset.find(&p.id).expect("strip found the entry");
                let input = dataset.load_input(entry)?;
                let req = VisRequest::new(layer, SMode::Count(1), p.id.clone());
                let r = render_visualisation(net, &input, &req, &out_dir.join("v1"))?;
                written.push(r.image_path);
                written.push(r.sidecar_path);
            }
        }
    }
    Ok(written)
}
