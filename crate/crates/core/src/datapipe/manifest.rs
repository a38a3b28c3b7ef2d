//! Dataset manifests: one JSON header line followed by one JSON entry per line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::patches::{PatchSpec, PAPER_PATCH_SIZES};
use super::rotate::{check_rotation, ROTATIONS};
use super::segment::HsvBounds;
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "leafcnn-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    D1,
    D2,
    Synthetic,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::D1 => "d1",
            DatasetKind::D2 => "d2",
            DatasetKind::Synthetic => "synthetic",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d1" => Ok(DatasetKind::D1),
            "d2" => Ok(DatasetKind::D2),
            "synthetic" => Ok(DatasetKind::Synthetic),
            _ => Err(Error::invalid(format!(
                "unknown dataset kind {s:?} (expected d1, d2 or synthetic)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Entries sharing a base id always land in the same split.
    pub base_id: String,
    /// Relative to the header's `source_root`.
    pub source_path: String,
    /// 1-based.
    pub class_label: usize,
    pub rotation_deg: u16,
    pub patch_spec: Option<PatchSpec>,
    pub split: Split,
    /// Fill colour for rotation corners.
    pub background: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vein_mask_path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub dataset_kind: DatasetKind,
    pub seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    pub class_count: usize,
    pub class_names: Vec<String>,
    /// `[height, width]` the entries are resized to.
    pub input_extent: [usize; 2],
    pub channel_means: [f32; 3],
    /// Directory the entry source paths are relative to; a relative root is
    /// resolved against the manifest's own directory.
    pub source_root: String,
    pub hsv_bounds: HsvBounds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries_in(split).count()
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.format != MANIFEST_FORMAT || h.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest format {:?} version {}",
                h.format, h.version
            )));
        }
        if h.class_names.len() != h.class_count {
            return Err(Error::Manifest(format!(
                "{} class names for {} classes",
                h.class_names.len(),
                h.class_count
            )));
        }
        let mut ids = std::collections::HashSet::new();
        for e in &self.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate entry id {:?}", e.id)));
            }
            if e.class_label == 0 || e.class_label > h.class_count {
                return Err(Error::Manifest(format!(
                    "entry {:?}: class label {} outside 1..={}",
                    e.id, e.class_label, h.class_count
                )));
            }
            check_rotation(e.rotation_deg)
                .map_err(|_| Error::Manifest(format!("entry {:?}: rotation {} not allowed", e.id, e.rotation_deg)))?;
            if let Some(p) = e.patch_spec {
                if !PAPER_PATCH_SIZES.contains(&p.size) {
                    return Err(Error::Manifest(format!(
                        "entry {:?}: patch size {} not one of {PAPER_PATCH_SIZES:?}",
                        e.id, p.size
                    )));
                }
            }
        }
        let (train, test) = (self.count(Split::Train), self.count(Split::Test));
        if (train, test) != (h.train_count, h.test_count) {
            return Err(Error::Manifest(format!(
                "header records {}/{} train/test entries but the manifest holds {train}/{test}",
                h.train_count, h.test_count
            )));
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::Manifest("empty manifest".into()))?;
        let header: ManifestHeader =
            serde_json::from_str(first).map_err(|e| Error::Manifest(format!("line 1: bad header: {e}")))?;
        let entries = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Manifest(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<ManifestEntry>>>()?;
        let m = DatasetManifest { header, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        crate::util::write_atomic(path, self.to_jsonl().as_bytes())
    }

    /// SHA-256 of the serialized manifest, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

/// The original plus its seven rotations, ids suffixed with the angle.
pub fn augment_rotations(entry: &ManifestEntry) -> Vec<ManifestEntry> {
    ROTATIONS
        .iter()
        .map(|&deg| ManifestEntry {
            id: format!("{}_r{deg:03}", entry.id),
            rotation_deg: deg,
            ..entry.clone()
        })
        .collect()
}

struct Group {
    label: usize,
    members: Vec<usize>,
}

/// Groups by base id, shuffled within each class, classes visited in a
/// seeded order.
fn seeded_groups(entries: &[ManifestEntry], seed: u64) -> (Vec<usize>, BTreeMap<usize, Vec<Group>>) {
    let mut by_base: BTreeMap<&str, Group> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_base
            .entry(&e.base_id)
            .or_insert_with(|| Group {
                label: e.class_label,
                members: Vec::new(),
            })
            .members
            .push(i);
    }
    let mut by_class: BTreeMap<usize, Vec<Group>> = BTreeMap::new();
    for (_, g) in by_base {
        by_class.entry(g.label).or_default().push(g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for groups in by_class.values_mut() {
        groups.shuffle(&mut rng);
    }
    let mut order: Vec<usize> = by_class.keys().copied().collect();
    order.shuffle(&mut rng);
    (order, by_class)
}

fn assign(entries: Vec<ManifestEntry>, test: &[usize]) -> Vec<ManifestEntry> {
    let mut entries = entries;
    for e in entries.iter_mut() {
        e.split = Split::Train;
    }
    for &i in test {
        entries[i].split = Split::Test;
    }
    entries
}

/// Seeded grouped split with exact counts. Test groups are drawn round-robin
/// over classes so every class is represented as evenly as group sizes allow.
pub fn split(
    entries: Vec<ManifestEntry>,
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    if train_count + test_count != entries.len() {
        return Err(Error::invalid(format!(
            "split {train_count}+{test_count} does not cover {} entries",
            entries.len()
        )));
    }
    let (order, mut by_class) = seeded_groups(&entries, seed);
    let mut test = Vec::with_capacity(test_count);
    let mut remaining = test_count;
    while remaining > 0 {
        let mut progressed = false;
        for label in &order {
            let groups = by_class.get_mut(label).expect("class present");
            if remaining > 0 && groups.last().is_some_and(|g| g.members.len() <= remaining) {
                let g = groups.pop().expect("checked non-empty");
                remaining -= g.members.len();
                test.extend(g.members);
                progressed = true;
            }
        }
        if !progressed {
            return Err(Error::invalid(format!(
                "cannot reach exactly {test_count} test entries from whole groups ({remaining} short)"
            )));
        }
    }
    Ok(assign(entries, &test))
}

/// Seeded grouped split holding out `round(fraction * groups)` whole groups.
pub fn split_fraction(entries: Vec<ManifestEntry>, test_fraction: f64, seed: u64) -> Result<Vec<ManifestEntry>> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let (order, mut by_class) = seeded_groups(&entries, seed);
    let total: usize = by_class.values().map(Vec::len).sum();
    let mut want = (test_fraction * total as f64).round() as usize;
    let mut test = Vec::new();
    while want > 0 {
        for label in &order {
            if want == 0 {
                break;
            }
            if let Some(g) = by_class.get_mut(label).and_then(Vec::pop) {
                test.extend(g.members);
                want -= 1;
            }
        }
    }
    Ok(assign(entries, &test))
}
