//! Materialises manifest entries: source raster, patch crop, rotation, resize.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{imageops, RgbImage};
use rayon::prelude::*;

use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::resize::{image_to_input, resize_bilinear};
use super::rotate::{rotate_mask, rotate_rgb};
use super::segment::Mask;
use crate::error::{Error, Result};
use crate::network::ExampleSource;
use crate::tensor::Tensor;

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?
        .to_rgb8())
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(Mask::from_luma(&img.to_luma8()))
}

fn crop_mask(mask: &Mask, x: usize, y: usize, size: usize) -> Mask {
    let mut out = Mask::new(size, size);
    for yy in 0..size {
        for xx in 0..size {
            out.set(xx, yy, mask.get(x + xx, y + yy));
        }
    }
    out
}

pub struct Dataset {
    pub manifest: DatasetManifest,
    root: PathBuf,
}

impl Dataset {
    /// `manifest_dir` anchors a relative source root.
    pub fn new(manifest: DatasetManifest, manifest_dir: &Path) -> Self {
        let root = manifest_dir.join(&manifest.header.source_root);
        Dataset { manifest, root }
    }

    pub fn open(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        Ok(Self::new(manifest, dir))
    }

    pub fn source_root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.manifest.entries_in(split).collect()
    }

    pub fn find(&self, id: &str) -> Option<&ManifestEntry> {
        self.manifest.entries.iter().find(|e| e.id == id)
    }

    fn check_patch(entry: &ManifestEntry, w: usize, h: usize) -> Result<()> {
        if let Some(p) = entry.patch_spec {
            if p.x + p.size > w || p.y + p.size > h {
                return Err(Error::Manifest(format!(
                    "entry {:?}: patch {}@({}, {}) exceeds the {w}x{h} source",
                    entry.id, p.size, p.x, p.y
                )));
            }
        }
        Ok(())
    }

    fn materialise(entry: &ManifestEntry, source: &RgbImage) -> Result<RgbImage> {
        Self::check_patch(entry, source.width() as usize, source.height() as usize)?;
        let cropped = match entry.patch_spec {
            Some(p) => imageops::crop_imm(source, p.x as u32, p.y as u32, p.size as u32, p.size as u32).to_image(),
            None => source.clone(),
        };
        rotate_rgb(&cropped, entry.rotation_deg, entry.background)
    }

    /// The entry's raster before resizing.
    pub fn load_rgb(&self, entry: &ManifestEntry) -> Result<RgbImage> {
        let source = read_rgb(&self.root.join(&entry.source_path))?;
        Self::materialise(entry, &source)
    }

    /// The entry's vein mask at input extent, if the manifest carries one.
    /// A pixel counts as vein if any part of the stroke covers it.
    pub fn load_vein_mask(&self, entry: &ManifestEntry) -> Result<Option<Mask>> {
        let Some(rel) = &entry.vein_mask_path else {
            return Ok(None);
        };
        let full = read_mask(&self.root.join(rel))?;
        Self::check_patch(entry, full.width, full.height)?;
        let cropped = match entry.patch_spec {
            Some(p) => crop_mask(&full, p.x, p.y, p.size),
            None => full,
        };
        let rotated = rotate_mask(&cropped, entry.rotation_deg)?;
        let [h, w] = self.manifest.header.input_extent;
        let t = Tensor::new(
            vec![1, rotated.height, rotated.width],
            rotated.data.iter().map(|&v| v as u8 as f32).collect(),
        )?;
        let r = resize_bilinear(&t, h, w)?;
        Ok(Some(Mask {
            width: w,
            height: h,
            data: r.data().iter().map(|&v| v > 0.0).collect(),
        }))
    }

    /// Network input for the entry: resized, scaled and mean-subtracted.
    pub fn load_input(&self, entry: &ManifestEntry) -> Result<Tensor> {
        let [h, w] = self.manifest.header.input_extent;
        image_to_input(&self.load_rgb(entry)?, h, w, &self.manifest.header.channel_means)
    }

    /// Inputs for `entries` in order, decoding each source file once.
    pub fn load_many(&self, entries: &[&ManifestEntry], means: &[f32; 3]) -> Result<Vec<Tensor>> {
        let [h, w] = self.manifest.header.input_extent;
        let mut by_source: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_source.entry(&e.source_path).or_default().push(i);
        }
        let groups: Vec<(&str, Vec<usize>)> = by_source.into_iter().collect();
        let loaded: Vec<Vec<(usize, Tensor)>> = groups
            .par_iter()
            .map(|(src, idx)| {
                let source = read_rgb(&self.root.join(src))?;
                idx.iter()
                    .map(|&i| {
                        let img = Self::materialise(entries[i], &source)?;
                        Ok((i, image_to_input(&img, h, w, means)?))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out: Vec<Option<Tensor>> = vec![None; entries.len()];
        for (i, t) in loaded.into_iter().flatten() {
            out[i] = Some(t);
        }
        Ok(out.into_iter().map(|t| t.expect("every entry loaded")).collect())
    }

    /// Every entry of `split` as `(input, 0-based class)` pairs.
    pub fn load_split(&self, split: Split) -> Result<LoadedSplit> {
        let entries = self.entries(split);
        let inputs = self.load_many(&entries, &self.manifest.header.channel_means)?;
        Ok(LoadedSplit {
            ids: entries.iter().map(|e| e.id.clone()).collect(),
            examples: inputs
                .into_iter()
                .zip(&entries)
                .map(|(t, e)| (t, e.class_label - 1))
                .collect(),
        })
    }

    /// Per-channel means of the training inputs at input extent.
    pub fn compute_channel_means(&self) -> Result<[f32; 3]> {
        let entries = self.entries(Split::Train);
        if entries.is_empty() {
            return Ok([0.0; 3]);
        }
        let mut sums = [0.0f64; 3];
        let mut count = 0usize;
        for chunk in entries.chunks(256) {
            for t in self.load_many(chunk, &[0.0; 3])? {
                let plane = t.len() / 3;
                for (c, s) in sums.iter_mut().enumerate() {
                    *s += t.data()[c * plane..(c + 1) * plane]
                        .iter()
                        .map(|&v| v as f64)
                        .sum::<f64>();
                }
                count += plane;
            }
        }
        Ok(sums.map(|s| (s / count as f64) as f32))
    }
}

/// A materialised split held in memory.
pub struct LoadedSplit {
    pub ids: Vec<String>,
    pub examples: Vec<(Tensor, usize)>,
}

impl ExampleSource for LoadedSplit {
    fn len(&self) -> usize {
        self.examples.len()
    }

    fn get(&self, i: usize) -> Result<(Tensor, usize)> {
        Ok(self.examples[i].clone())
    }
}
