//! Leaf-interior patch selection.
//!
//! A patch is kept only if nearly all of its pixels are leaf, so no part of
//! the outline (and therefore no shape information) survives in it.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::segment::{IntegralMask, Mask};

/// Patch sizes of the leaf-interior dataset, largest first.
pub const PAPER_PATCH_SIZES: [usize; 3] = [500, 400, 256];
pub const DEFAULT_MIN_FOREGROUND: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSpec {
    pub size: usize,
    pub x: usize,
    pub y: usize,
}

/// Every grid-aligned square (stride = size / 4) of each size whose
/// foreground fraction reaches `min_foreground`, in size-then-raster order.
pub fn patch_candidates(mask: &Mask, sizes: &[usize], min_foreground: f64) -> Vec<PatchSpec> {
    let integral = IntegralMask::new(mask);
    let mut out = Vec::new();
    for &size in sizes {
        if size == 0 || size > mask.width || size > mask.height {
            continue;
        }
        let stride = (size / 4).max(1);
        let need = (min_foreground * (size * size) as f64).ceil() as u32;
        for y in (0..=mask.height - size).step_by(stride) {
            for x in (0..=mask.width - size).step_by(stride) {
                if integral.window_count(x, y, size) >= need {
                    out.push(PatchSpec { size, x, y });
                }
            }
        }
    }
    out
}

/// Seeded selection of at most `budget` accepted patches.
pub fn crop_patches(
    mask: &Mask,
    sizes: &[usize],
    min_foreground: f64,
    budget: usize,
    rng: &mut ChaCha8Rng,
    name: &str,
) -> Vec<PatchSpec> {
    let mut cands = patch_candidates(mask, sizes, min_foreground);
    if cands.is_empty() {
        log::warn!("{name}: leaf too small for any {sizes:?} patch; no patches emitted");
    }
    cands.shuffle(rng);
    cands.truncate(budget);
    cands
}
