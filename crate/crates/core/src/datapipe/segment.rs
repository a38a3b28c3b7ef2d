//! HSV-threshold foreground extraction.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary per-pixel mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len().max(1) as f64
    }

    /// Fraction of set pixels inside the `size` x `size` square at `(x, y)`,
    /// counted directly.
    pub fn window_fraction(&self, x: usize, y: usize, size: usize) -> f64 {
        let mut n = 0usize;
        for yy in y..y + size {
            n += self.data[yy * self.width + x..yy * self.width + x + size]
                .iter()
                .filter(|&&v| v)
                .count();
        }
        n as f64 / (size * size) as f64
    }

    pub fn to_luma(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    pub fn from_luma(img: &image::GrayImage) -> Mask {
        Mask {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.pixels().map(|p| p.0[0] >= 128).collect(),
        }
    }
}

/// Summed-area table for O(1) window counts.
pub struct IntegralMask {
    width: usize,
    sums: Vec<u32>,
}

impl IntegralMask {
    pub fn new(mask: &Mask) -> Self {
        let w = mask.width + 1;
        let mut sums = vec![0u32; w * (mask.height + 1)];
        for y in 0..mask.height {
            let mut row = 0u32;
            for x in 0..mask.width {
                row += mask.get(x, y) as u32;
                sums[(y + 1) * w + x + 1] = sums[y * w + x + 1] + row;
            }
        }
        IntegralMask { width: w, sums }
    }

    pub fn window_count(&self, x: usize, y: usize, size: usize) -> u32 {
        let w = self.width;
        let (x1, y1) = (x + size, y + size);
        self.sums[y1 * w + x1] + self.sums[y * w + x] - self.sums[y * w + x1] - self.sums[y1 * w + x]
    }
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f32, f32, f32) {
    let (r, g, b) = (r as f32 / 255.0, g as f32 / 255.0, b as f32 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

/// Foreground bounds. Defaults select green-to-yellow leaf tissue and reject
/// dark or grey backgrounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsvBounds {
    pub hue_min: f32,
    pub hue_max: f32,
    pub sat_min: f32,
    pub val_min: f32,
}

impl Default for HsvBounds {
    fn default() -> Self {
        HsvBounds {
            hue_min: 35.0,
            hue_max: 185.0,
            sat_min: 0.15,
            val_min: 0.15,
        }
    }
}

impl HsvBounds {
    pub fn contains(&self, hsv: (f32, f32, f32)) -> bool {
        let (h, s, v) = hsv;
        h >= self.hue_min && h <= self.hue_max && s >= self.sat_min && v >= self.val_min
    }
}

/// Marks pixels whose HSV value falls inside `bounds`. `name` labels the
/// error when nothing qualifies.
pub fn segment_foreground(image: &RgbImage, bounds: &HsvBounds, name: &str) -> Result<Mask> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::invalid(format!("{name}: empty image")));
    }
    let mask = Mask {
        width: image.width() as usize,
        height: image.height() as usize,
        data: image
            .pixels()
            .map(|p| bounds.contains(rgb_to_hsv(p.0[0], p.0[1], p.0[2])))
            .collect(),
    };
    if mask.count() == 0 {
        return Err(Error::SegmentationFailed(name.to_string()));
    }
    Ok(mask)
}

/// Mean colour of background pixels, used to fill canvas corners after rotation.
pub fn background_colour(image: &RgbImage, mask: &Mask) -> [u8; 3] {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for (p, &fg) in image.pixels().zip(&mask.data) {
        if !fg {
            for (s, &v) in sum.iter_mut().zip(&p.0) {
                *s += v as u64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return [0, 0, 0];
    }
    sum.map(|s| ((s + n / 2) / n) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_reference_values() {
        assert_eq!(rgb_to_hsv(0, 255, 0), (120.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv(255, 0, 0), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv(0, 0, 255), (240.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv(0, 0, 0), (0.0, 0.0, 0.0));
        let (h, s, v) = rgb_to_hsv(255, 0, 128);
        assert!((h - 329.88).abs() < 0.01 && s == 1.0 && v == 1.0);
    }

    #[test]
    fn green_is_foreground_black_is_not() {
        let b = HsvBounds::default();
        assert!(b.contains(rgb_to_hsv(0, 255, 0)));
        assert!(!b.contains(rgb_to_hsv(0, 0, 0)));
    }

    #[test]
    fn all_background_is_an_error() {
        let img = RgbImage::from_pixel(4, 4, image::Rgb([0, 0, 0]));
        assert!(matches!(
            segment_foreground(&img, &HsvBounds::default(), "dark.png"),
            Err(Error::SegmentationFailed(_))
        ));
    }

    #[test]
    fn integral_matches_direct_count() {
        let mut m = Mask::new(7, 5);
        for i in 0..m.data.len() {
            m.data[i] = (i * 7919) % 3 == 0;
        }
        let im = IntegralMask::new(&m);
        for size in 1..=5 {
            for y in 0..=5 - size {
                for x in 0..=7 - size {
                    let direct = (m.window_fraction(x, y, size) * (size * size) as f64).round() as u32;
                    assert_eq!(im.window_count(x, y, size), direct);
                }
            }
        }
    }
}
