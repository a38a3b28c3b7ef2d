//! Dataset presets: whole-leaf (D1), leaf-interior patches (D2) and the
//! procedural corpus.
//!
//! Raw corpora are laid out as `<src>/<class>/<image>.png`; class directories
//! sorted by name get labels 1, 2, ...

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{read_rgb, Dataset};
use super::manifest::{
    augment_rotations, split, split_fraction, DatasetKind, DatasetManifest, ManifestEntry, ManifestHeader, Split,
    MANIFEST_FORMAT, MANIFEST_VERSION,
};
use super::patches::{crop_patches, patch_candidates, DEFAULT_MIN_FOREGROUND, PAPER_PATCH_SIZES};
use super::segment::{background_colour, segment_foreground, HsvBounds};
use super::synth::{generate_synthetic_leaves, SynthConfig};
use crate::error::{Error, Result};
use crate::util::write_png;

pub const D1_BASE_IMAGES: usize = 352;
pub const D1_TRAIN: usize = 2288;
pub const D1_TEST: usize = 528;
pub const D2_TRAIN: usize = 34672;
pub const D2_TEST: usize = 8800;
/// Un-rotated patches needed for the D2 totals.
pub const D2_BASE_PATCHES: usize = (D2_TRAIN + D2_TEST) / 8;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub seed: u64,
    /// `[height, width]`.
    pub input_extent: [usize; 2],
    pub hsv_bounds: HsvBounds,
    pub min_foreground: f64,
}

impl PrepareConfig {
    pub fn new(seed: u64, input_side: usize) -> Self {
        PrepareConfig {
            seed,
            input_extent: [input_side, input_side],
            hsv_bounds: HsvBounds::default(),
            min_foreground: DEFAULT_MIN_FOREGROUND,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceImage {
    pub id: String,
    /// Relative to the corpus root.
    pub path: String,
    pub class_label: usize,
}

/// Class names and images of a `<class>/<image>.png` tree, in sorted order.
pub fn scan_source_tree(root: &Path) -> Result<(Vec<String>, Vec<SourceImage>)> {
    let mut classes: Vec<String> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|d| d.ok())
        .filter(|d| d.path().is_dir())
        .map(|d| d.file_name().to_string_lossy().into_owned())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(Error::Preset(format!("{}: no class directories", root.display())));
    }
    let mut images = Vec::new();
    for (i, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        let mut files: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|d| d.ok())
            .map(|d| d.file_name().to_string_lossy().into_owned())
            .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
            .collect();
        files.sort();
        for f in files {
            let stem = f[..f.len() - 4].to_string();
            images.push(SourceImage {
                id: format!("{class}/{stem}"),
                path: format!("{class}/{f}"),
                class_label: i + 1,
            });
        }
    }
    Ok((classes, images))
}

fn header(kind: DatasetKind, config: &PrepareConfig, class_names: Vec<String>, root: &str) -> ManifestHeader {
    ManifestHeader {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        dataset_kind: kind,
        seed: config.seed,
        train_count: 0,
        test_count: 0,
        class_count: class_names.len(),
        class_names,
        input_extent: config.input_extent,
        channel_means: [0.0; 3],
        source_root: root.into(),
        hsv_bounds: config.hsv_bounds,
    }
}

fn finish(mut header: ManifestHeader, entries: Vec<ManifestEntry>) -> Result<DatasetManifest> {
    header.train_count = entries.iter().filter(|e| e.split == Split::Train).count();
    header.test_count = entries.len() - header.train_count;
    let m = DatasetManifest { header, entries };
    m.validate()?;
    Ok(m)
}

struct Segmented {
    image: SourceImage,
    mask: super::segment::Mask,
    background: [u8; 3],
}

fn segment_all(root: &Path, images: Vec<SourceImage>, bounds: &HsvBounds) -> Result<Vec<Segmented>> {
    images
        .into_par_iter()
        .map(|image| {
            let rgb = read_rgb(&root.join(&image.path))?;
            let mask = segment_foreground(&rgb, bounds, &image.path)?;
            let background = background_colour(&rgb, &mask);
            Ok(Segmented {
                image,
                mask,
                background,
            })
        })
        .collect()
}

fn base_entry(img: &SourceImage, background: [u8; 3]) -> ManifestEntry {
    ManifestEntry {
        id: img.id.clone(),
        base_id: img.id.clone(),
        source_path: img.path.clone(),
        class_label: img.class_label,
        rotation_deg: 0,
        patch_spec: None,
        split: Split::Train,
        background,
        vein_mask_path: None,
    }
}

/// Whole-leaf manifest: 352 base images, eight orientations each, 2288/528.
/// Channel means are left at zero; [`finalize`] fills them in.
pub fn build_d1_manifest(src: &Path, config: &PrepareConfig) -> Result<DatasetManifest> {
    let (classes, images) = scan_source_tree(src)?;
    if images.len() != D1_BASE_IMAGES {
        return Err(Error::Preset(format!(
            "d1 needs exactly {D1_BASE_IMAGES} base images for {D1_TRAIN}/{D1_TEST}, found {} under {}",
            images.len(),
            src.display()
        )));
    }
    let segmented = segment_all(src, images, &config.hsv_bounds)?;
    let entries: Vec<ManifestEntry> = segmented
        .iter()
        .flat_map(|s| augment_rotations(&base_entry(&s.image, s.background)))
        .collect();
    let entries = split(entries, D1_TRAIN, D1_TEST, config.seed)?;
    finish(header(DatasetKind::D1, config, classes, &absolute_root(src)?), entries)
}

/// Splits `total` over images with the given capacities: as even as
/// possible, shortfalls redistributed in a seeded order.
pub fn allocate_budgets(capacities: &[usize], total: usize, seed: u64) -> Result<Vec<usize>> {
    let available: usize = capacities.iter().sum();
    if available < total {
        return Err(Error::Preset(format!(
            "only {available} qualifying patches across {} images, {total} needed",
            capacities.len()
        )));
    }
    let mut order: Vec<usize> = (0..capacities.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut budget = vec![0usize; capacities.len()];
    let mut remaining = total;
    while remaining > 0 {
        let open: Vec<usize> = order.iter().copied().filter(|&i| budget[i] < capacities[i]).collect();
        let share = (remaining / open.len()).max(1);
        for i in open {
            if remaining == 0 {
                break;
            }
            let add = share.min(capacities[i] - budget[i]).min(remaining);
            budget[i] += add;
            remaining -= add;
        }
    }
    Ok(budget)
}

/// Leaf-interior patch manifest: exactly 34672/8800 entries or an error.
pub fn build_d2_manifest(src: &Path, config: &PrepareConfig) -> Result<DatasetManifest> {
    let (classes, images) = scan_source_tree(src)?;
    let segmented = segment_all(src, images, &config.hsv_bounds)?;
    let capacities: Vec<usize> = segmented
        .par_iter()
        .map(|s| patch_candidates(&s.mask, &PAPER_PATCH_SIZES, config.min_foreground).len())
        .collect();
    let budgets = allocate_budgets(&capacities, D2_BASE_PATCHES, config.seed)
        .map_err(|e| Error::Preset(format!("d2 cannot emit {D2_TRAIN}/{D2_TEST} patches: {e}")))?;
    let mut entries = Vec::with_capacity(D2_TRAIN + D2_TEST);
    for (i, (s, &budget)) in segmented.iter().zip(&budgets).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let patches = crop_patches(
            &s.mask,
            &PAPER_PATCH_SIZES,
            config.min_foreground,
            budget,
            &mut rng,
            &s.image.path,
        );
        for p in patches {
            let id = format!("{}_p{}_{}_{}", s.image.id, p.size, p.x, p.y);
            let base = ManifestEntry {
                id: id.clone(),
                base_id: id,
                patch_spec: Some(p),
                ..base_entry(&s.image, s.background)
            };
            entries.extend(augment_rotations(&base));
        }
    }
    let entries = split(entries, D2_TRAIN, D2_TEST, config.seed)?;
    finish(header(DatasetKind::D2, config, classes, &absolute_root(src)?), entries)
}

/// Procedural corpus preset. With `patches_per_image` set, each leaf
/// contributes that many leaf-interior patches instead of the whole leaf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPreset {
    pub synth: SynthConfig,
    pub test_fraction: f64,
    pub patches_per_image: Option<usize>,
}

impl SyntheticPreset {
    pub fn new(class_count: usize, per_class: usize, seed: u64) -> Self {
        SyntheticPreset {
            synth: SynthConfig::new(class_count, per_class, seed),
            test_fraction: 0.2,
            patches_per_image: None,
        }
    }
}

/// Writes the procedural corpus under `out` and returns its manifest. Leaves
/// of one image share a group, so all their patches and rotations land in
/// the same split.
pub fn build_synthetic_manifest(
    out: &Path,
    preset: &SyntheticPreset,
    config: &PrepareConfig,
) -> Result<DatasetManifest> {
    let leaves = generate_synthetic_leaves(&preset.synth)?;
    let per_class = preset.synth.per_class;
    let classes: Vec<String> = (1..=preset.synth.class_count).map(|c| format!("class{c:02}")).collect();
    let written: Vec<(String, String)> = leaves
        .par_iter()
        .enumerate()
        .map(|(i, leaf)| {
            let stem = format!("class{:02}/{:04}", leaf.label, i % per_class.max(1));
            let img = format!("images/{stem}.png");
            let vein = format!("veins/{stem}.png");
            write_png(&out.join(&img), &leaf.image)?;
            write_png(&out.join(&vein), &leaf.vein_mask.to_luma())?;
            Ok((img, vein))
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::new();
    for (i, (leaf, (img, vein))) in leaves.iter().zip(&written).enumerate() {
        let id = img.trim_start_matches("images/").trim_end_matches(".png").to_string();
        let base = ManifestEntry {
            id: id.clone(),
            base_id: id,
            source_path: img.clone(),
            class_label: leaf.label,
            rotation_deg: 0,
            patch_spec: None,
            split: Split::Train,
            background: background_colour(&leaf.image, &leaf.leaf_mask),
            vein_mask_path: Some(vein.clone()),
        };
        match preset.patches_per_image {
            None => entries.extend(augment_rotations(&base)),
            Some(n) => {
                let mut rng = ChaCha8Rng::seed_from_u64(preset.synth.seed);
                rng.set_stream(i as u64);
                let patches = crop_patches(
                    &leaf.leaf_mask,
                    &PAPER_PATCH_SIZES,
                    config.min_foreground,
                    n,
                    &mut rng,
                    img,
                );
                for p in patches {
                    let patch = ManifestEntry {
                        id: format!("{}_p{}_{}_{}", base.id, p.size, p.x, p.y),
                        patch_spec: Some(p),
                        ..base.clone()
                    };
                    entries.extend(augment_rotations(&patch));
                }
            }
        }
    }
    let entries = split_fraction(entries, preset.test_fraction, config.seed)?;
    finish(header(DatasetKind::Synthetic, config, classes, "."), entries)
}

/// Fills in training-set channel means and writes `manifest.jsonl` under `out`.
pub fn finalize(manifest: DatasetManifest, out: &Path) -> Result<PathBuf> {
    let path = out.join(MANIFEST_FILE);
    let dataset = Dataset::new(manifest, out);
    let means = dataset.compute_channel_means()?;
    let mut manifest = dataset.manifest;
    manifest.header.channel_means = means;
    manifest.write(&path)?;
    Ok(path)
}

fn absolute_root(src: &Path) -> Result<String> {
    let abs = fs::canonicalize(src).map_err(|e| Error::io(src, e))?;
    Ok(abs.to_string_lossy().into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn budgets_hit_total_exactly() {
        let b = allocate_budgets(&[10, 1, 50, 3], 40, 1).unwrap();
        assert_eq!(b.iter().sum::<usize>(), 40);
        assert!(b.iter().zip([10, 1, 50, 3]).all(|(x, c)| *x <= c));
        assert!(allocate_budgets(&[2, 2], 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn budgets_respect_capacity(caps in proptest::collection::vec(0usize..40, 1..30), frac in 0.0f64..1.0, seed in any::<u64>()) {
            let total = (caps.iter().sum::<usize>() as f64 * frac) as usize;
            let b = allocate_budgets(&caps, total, seed).unwrap();
            prop_assert_eq!(b.iter().sum::<usize>(), total);
            for (x, c) in b.iter().zip(&caps) {
                prop_assert!(x <= c);
            }
        }
    }

    #[test]
    fn synthetic_preset_writes_images_and_splits() {
        let dir = tempfile::tempdir().unwrap();
        let preset = SyntheticPreset {
            synth: SynthConfig {
                size: 32,
                ..SynthConfig::new(2, 5, 3)
            },
            ..SyntheticPreset::new(2, 5, 3)
        };
        let cfg = PrepareConfig::new(3, 16);
        let m = build_synthetic_manifest(dir.path(), &preset, &cfg).unwrap();
        assert_eq!(m.entries.len(), 80);
        assert_eq!(m.header.test_count, 16);
        let path = finalize(m, dir.path()).unwrap();
        let ds = Dataset::open(&path).unwrap();
        let train = ds.load_split(Split::Train).unwrap();
        assert_eq!(train.examples.len(), 64);
        let mut sums = [0.0f64; 3];
        let mut n = 0usize;
        for (t, _) in &train.examples {
            let plane = t.len() / 3;
            for (s, chunk) in sums.iter_mut().zip(t.data().chunks(plane)) {
                *s += chunk.iter().map(|&v| v as f64).sum::<f64>();
            }
            n += plane;
        }
        for s in sums {
            assert!((s / n as f64).abs() <= 1e-6);
        }
    }
}
