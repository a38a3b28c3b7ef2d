//! Dataset construction: segmentation, rotation augmentation, leaf-interior
//! patches, deterministic splits, input resizing and a procedural corpus.

pub mod dataset;
pub mod manifest;
pub mod patches;
pub mod presets;
pub mod resize;
pub mod rotate;
pub mod segment;
pub mod synth;

pub use dataset::{Dataset, LoadedSplit};
pub use manifest::{
    augment_rotations, split, split_fraction, DatasetKind, DatasetManifest, ManifestEntry, ManifestHeader, Split,
};
pub use patches::{crop_patches, patch_candidates, PatchSpec, PAPER_PATCH_SIZES};
pub use presets::{
    build_d1_manifest, build_d2_manifest, build_synthetic_manifest, finalize, PrepareConfig, SyntheticPreset,
    D1_BASE_IMAGES, D1_TEST, D1_TRAIN, D2_BASE_PATCHES, D2_TEST, D2_TRAIN, MANIFEST_FILE,
};
pub use resize::{image_to_input, resize_bilinear};
pub use rotate::{rotate_mask, rotate_rgb, ROTATIONS};
pub use segment::{segment_foreground, HsvBounds, Mask};
pub use synth::{generate_synthetic_leaves, SynthConfig, SyntheticLeaf};
