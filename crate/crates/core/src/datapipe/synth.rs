//! Procedural leaves for desk-scale runs.
//!
//! Each class gets an outline (egg-shaped ellipse) and a venation pattern
//! (midrib tilt, secondary-vein spacing and branching angle). Class
//! parameters are spread evenly over their ranges and decorrelated by seeded
//! permutations, so any two classes differ in venation even when they share
//! an outline. Every sample also carries its leaf and vein masks.

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::segment::Mask;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub class_count: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Side of the square canvas in pixels.
    pub size: usize,
    /// Give every class the same outline so only venation separates them.
    pub shared_outline: bool,
}

impl SynthConfig {
    pub fn new(class_count: usize, per_class: usize, seed: u64) -> Self {
        SynthConfig {
            class_count,
            per_class,
            seed,
            size: 96,
            shared_outline: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    /// Half-width over half-length.
    pub aspect: f64,
    /// Widening towards the tip (> 0) or the base (< 0).
    pub asymmetry: f64,
    pub midrib_tilt_deg: f64,
    /// Distance between secondary veins along the midrib, in half-lengths.
    pub vein_spacing: f64,
    /// Angle between secondary veins and the midrib.
    pub vein_angle_deg: f64,
}

pub struct SyntheticLeaf {
    /// 1-based class label.
    pub label: usize,
    pub image: RgbImage,
    pub leaf_mask: Mask,
    pub vein_mask: Mask,
}

const SHARED_ASPECT: f64 = 0.58;
const SHARED_ASYMMETRY: f64 = 0.12;

/// Deterministic per-class parameters for `config`.
pub fn class_params(config: &SynthConfig) -> Vec<ClassParams> {
    let k = config.class_count;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let mut perm = || {
        let mut p: Vec<usize> = (0..k).collect();
        p.shuffle(&mut rng);
        p
    };
    let (p_aspect, p_asym, p_tilt, p_space, p_angle) = (perm(), perm(), perm(), perm(), perm());
    let t = |i: usize| if k > 1 { i as f64 / (k - 1) as f64 } else { 0.5 };
    (0..k)
        .map(|c| {
            let (aspect, asymmetry) = if config.shared_outline {
                (SHARED_ASPECT, SHARED_ASYMMETRY)
            } else {
                (0.36 + 0.40 * t(p_aspect[c]), -0.30 + 0.60 * t(p_asym[c]))
            };
            ClassParams {
                aspect,
                asymmetry,
                midrib_tilt_deg: -8.0 + 16.0 * t(p_tilt[c]),
                vein_spacing: 0.22 + 0.28 * t(p_space[c]),
                vein_angle_deg: 40.0 + 35.0 * t(p_angle[c]),
            }
        })
        .collect()
}

struct Segment {
    a: (f64, f64),
    b: (f64, f64),
    half_width: f64,
}

impl Segment {
    fn distance(&self, p: (f64, f64)) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((p.0 - self.a.0) * dx + (p.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (qx, qy) = (self.a.0 + t * dx - p.0, self.a.1 + t * dy - p.1);
        (qx * qx + qy * qy).sqrt()
    }
}

fn draw_leaf(params: &ClassParams, size: usize, rng: &mut ChaCha8Rng) -> (RgbImage, Mask, Mask) {
    let s = size as f64;
    let scale = rng.random_range(0.95..1.05);
    let half_len = 0.42 * s * scale;
    let centre = (
        s / 2.0 + rng.random_range(-0.02..0.02) * s,
        s / 2.0 + rng.random_range(-0.02..0.02) * s,
    );
    let aspect = params.aspect * rng.random_range(0.97..1.03);
    let asym = params.asymmetry;
    let tilt = (params.midrib_tilt_deg + rng.random_range(-2.0..2.0)).to_radians();
    let spacing = params.vein_spacing * rng.random_range(0.93..1.07);
    let angle = (params.vein_angle_deg + rng.random_range(-3.0..3.0)).to_radians();

    // Leaf frame: u runs base (-1) to tip (+1) upwards, v across, both in half-lengths.
    let leaf_cover = |px: f64, py: f64| {
        let u = -(py - centre.1) / half_len;
        let v = (px - centre.0) / half_len;
        let half_width = aspect * (1.0 - u * u).max(0.0).sqrt() * (1.0 + asym * u);
        let across = ((half_width - v.abs()) * half_len + 0.5).clamp(0.0, 1.0);
        let along = ((1.0 - u.abs()) * half_len + 0.5).clamp(0.0, 1.0);
        across.min(along)
    };

    let dir = (tilt.sin(), -tilt.cos());
    let at = |t: f64| (centre.0 + t * half_len * dir.0, centre.1 + t * half_len * dir.1);
    let midrib_hw = 0.020 * s;
    let vein_hw = 0.010 * s;
    let mut veins = vec![Segment {
        a: at(-1.0),
        b: at(1.0),
        half_width: midrib_hw,
    }];
    let reach = 1.6 * aspect * half_len / angle.sin().max(0.2);
    let mut t = -0.85 + rng.random_range(0.0..spacing);
    while t < 0.9 {
        let origin = at(t);
        for side in [-1.0f64, 1.0] {
            let a = side * angle;
            // Rotate the midrib direction towards the tip by `a`.
            let d = (dir.0 * a.cos() - dir.1 * a.sin(), dir.0 * a.sin() + dir.1 * a.cos());
            veins.push(Segment {
                a: origin,
                b: (origin.0 + reach * d.0, origin.1 + reach * d.1),
                half_width: vein_hw,
            });
        }
        t += spacing;
    }

    let leaf_rgb = [
        rng.random_range(40.0..62.0),
        rng.random_range(112.0..140.0),
        rng.random_range(34.0..54.0),
    ];
    let vein_rgb = [
        rng.random_range(160.0..185.0),
        rng.random_range(205.0..228.0),
        rng.random_range(110.0..135.0),
    ];
    let bg_rgb = [18.0, 21.0, 19.0];
    let leaf_noise = Normal::new(0.0, 4.0).expect("valid std");
    let bg_noise = Normal::new(0.0, 2.0).expect("valid std");

    let mut img = RgbImage::new(size as u32, size as u32);
    let mut leaf_mask = Mask::new(size, size);
    let mut vein_mask = Mask::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let cover = leaf_cover(p.0, p.1);
            let u = -(p.1 - centre.1) / half_len;
            let shade = 0.92 + 0.08 * u.clamp(-1.0, 1.0);
            let mut vein_cover = 0.0f64;
            if cover > 0.0 {
                for seg in &veins {
                    let c = (seg.half_width + 0.5 - seg.distance(p)).clamp(0.0, 1.0);
                    vein_cover = vein_cover.max(c);
                }
                vein_cover *= cover;
            }
            let ln = leaf_noise.sample(rng);
            let bn = bg_noise.sample(rng);
            let mut px = [0u8; 3];
            for c in 0..3 {
                let leaf = leaf_rgb[c] * shade;
                let tissue = leaf * (1.0 - vein_cover) + vein_rgb[c] * vein_cover + ln;
                let v = bg_rgb[c] + bn;
                px[c] = (v * (1.0 - cover) + tissue * cover).round().clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(x as u32, y as u32, Rgb(px));
            leaf_mask.set(x, y, cover >= 0.5);
            vein_mask.set(x, y, vein_cover > 0.0 && cover >= 0.5);
        }
    }
    (img, leaf_mask, vein_mask)
}

/// `class_count * per_class` labelled leaves, class-major order.
pub fn generate_synthetic_leaves(config: &SynthConfig) -> Result<Vec<SyntheticLeaf>> {
    if config.class_count < 2 {
        return Err(Error::invalid(format!(
            "synthetic corpus needs at least 2 classes, got {}",
            config.class_count
        )));
    }
    if config.size < 16 {
        return Err(Error::invalid(format!("canvas side {} is too small", config.size)));
    }
    let params = class_params(config);
    let mut out = Vec::with_capacity(config.class_count * config.per_class);
    for (class, p) in params.iter().enumerate() {
        for i in 0..config.per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream((class * config.per_class + i) as u64);
            let (image, leaf_mask, vein_mask) = draw_leaf(p, config.size, &mut rng);
            out.push(SyntheticLeaf {
                label: class + 1,
                image,
                leaf_mask,
                vein_mask,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::segment::{segment_foreground, HsvBounds};

    #[test]
    fn counts_and_labels() {
        let leaves = generate_synthetic_leaves(&SynthConfig::new(8, 20, 7)).unwrap();
        assert_eq!(leaves.len(), 160);
        assert_eq!(leaves[0].label, 1);
        assert_eq!(leaves[159].label, 8);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = SynthConfig::new(3, 2, 11);
        let a = generate_synthetic_leaves(&cfg).unwrap();
        let b = generate_synthetic_leaves(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.vein_mask, y.vein_mask);
        }
        let c = generate_synthetic_leaves(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn hsv_segmentation_recovers_leaf() {
        let leaves = generate_synthetic_leaves(&SynthConfig::new(2, 2, 3)).unwrap();
        for leaf in &leaves {
            let seg = segment_foreground(&leaf.image, &HsvBounds::default(), "synthetic").unwrap();
            let agree = seg
                .data
                .iter()
                .zip(&leaf.leaf_mask.data)
                .filter(|(a, b)| a == b)
                .count();
            assert!(agree as f64 / seg.data.len() as f64 > 0.98);
            assert!(leaf.vein_mask.count() > 0);
            assert!(leaf.vein_mask.count() < leaf.leaf_mask.count() / 2);
        }
    }

    #[test]
    fn shared_outline_differs_only_in_venation() {
        let cfg = SynthConfig {
            shared_outline: true,
            ..SynthConfig::new(2, 1, 5)
        };
        let p = class_params(&cfg);
        assert_eq!(p[0].aspect, p[1].aspect);
        assert_eq!(p[0].asymmetry, p[1].asymmetry);
        assert_ne!(p[0].vein_spacing, p[1].vein_spacing);
        assert_ne!(p[0].vein_angle_deg, p[1].vein_angle_deg);
    }

    #[test]
    fn single_class_rejected() {
        assert!(generate_synthetic_leaves(&SynthConfig::new(1, 5, 0)).is_err());
    }
}
