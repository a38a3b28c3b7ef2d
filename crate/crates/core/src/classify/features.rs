//! Deep features taken from a fully-connected layer of a trained network.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{LayerKind, Network, NetworkSpec};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub layer: String,
    pub manifest_digest: String,
    pub l2_normalized: bool,
    pub class_count: usize,
    pub ids: Vec<String>,
    /// 0-based class per row.
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<f32>>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows.len();
        if self.labels.len() != n || self.ids.len() != n {
            return Err(Error::invalid(format!(
                "feature set has {n} rows, {} labels and {} ids",
                self.labels.len(),
                self.ids.len()
            )));
        }
        let d = self.dim();
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::shape(format!("row {i} has width {} (expected {d})", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature row {i} ({})", self.ids[i])));
            }
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.class_count) {
            return Err(Error::invalid(format!(
                "label {l} outside {} classes",
                self.class_count
            )));
        }
        Ok(())
    }

    /// Rows of one class.
    pub fn class_rows(&self, class: usize) -> impl Iterator<Item = &[f32]> {
        self.rows
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == class)
            .map(|(r, _)| r.as_slice())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        crate::util::write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fs: FeatureSet = serde_json::from_str(&text)?;
        fs.validate()?;
        Ok(fs)
    }
}

fn fc_layer_names(spec: &NetworkSpec) -> Vec<&str> {
    spec.layers
        .iter()
        .filter(|l| matches!(l.kind, LayerKind::Fc { .. }))
        .map(|l| l.name.as_str())
        .collect()
}

/// The second-to-last fully-connected layer (fc7 in the large preset), or
/// the only one.
pub fn default_feature_layer(spec: &NetworkSpec) -> Option<&str> {
    let fcs = fc_layer_names(spec);
    match fcs.len() {
        0 => None,
        1 => Some(fcs[0]),
        n => Some(fcs[n - 2]),
    }
}

/// Index of the layer whose output is used as the feature vector: the named
/// fc layer, or the ReLU directly after it.
pub fn feature_output_index(spec: &NetworkSpec, layer: &str) -> Result<usize> {
    let valid = fc_layer_names(spec);
    let i = spec
        .layer_index(layer)
        .filter(|&i| matches!(spec.layers[i].kind, LayerKind::Fc { .. }))
        .ok_or_else(|| {
            Error::invalid(format!(
                "{layer:?} is not a fully-connected layer; valid feature layers: {}",
                valid.join(", ")
            ))
        })?;
    Ok(match spec.layers.get(i + 1) {
        Some(next) if matches!(next.kind, LayerKind::Relu) => i + 1,
        _ => i,
    })
}

pub fn l2_normalize(row: &mut [f32]) {
    let n = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
    if n > 0.0 {
        for v in row {
            *v = (*v as f64 / n) as f32;
        }
    }
}

/// One feature row per input, in order. Rows are computed independently so
/// the result does not depend on the thread count.
pub fn extract_features(
    net: &Network,
    inputs: &[(Tensor, usize)],
    ids: &[String],
    layer: &str,
    l2_normalized: bool,
    manifest_digest: &str,
) -> Result<FeatureSet> {
    if ids.len() != inputs.len() {
        return Err(Error::invalid(format!("{} ids for {} inputs", ids.len(), inputs.len())));
    }
    let out_index = feature_output_index(&net.spec, layer)?;
    let rows = inputs
        .par_iter()
        .map(|(x, _)| {
            let trace = net.forward(x)?;
            let mut row = trace.outputs[out_index].data().to_vec();
            if l2_normalized {
                l2_normalize(&mut row);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let fs = FeatureSet {
        layer: layer.to_string(),
        manifest_digest: manifest_digest.to_string(),
        l2_normalized,
        class_count: net.spec.class_count,
        ids: ids.to_vec(),
        labels: inputs.iter().map(|(_, l)| *l).collect(),
        rows,
    };
    fs.validate()?;
    Ok(fs)
}
