//! The eight orientations used for augmentation.
//!
//! Angles are clockwise in display coordinates. Multiples of 90 degrees are
//! exact pixel permutations; the others resample bilinearly onto a canvas
//! large enough to hold the whole rotated image, filling uncovered corners
//! with the background colour.

use image::{imageops, Rgb, RgbImage};

use super::segment::Mask;
use crate::error::{Error, Result};

pub const ROTATIONS: [u16; 8] = [0, 45, 90, 135, 180, 225, 270, 315];

pub fn check_rotation(deg: u16) -> Result<()> {
    if ROTATIONS.contains(&deg) {
        Ok(())
    } else {
        Err(Error::invalid(format!("rotation {deg} is not one of {ROTATIONS:?}")))
    }
}

/// Extent of the canvas that holds a `w` x `h` image rotated by `deg`.
pub fn rotated_extent(w: usize, h: usize, deg: u16) -> (usize, usize) {
    match deg % 360 {
        0 | 180 => (w, h),
        90 | 270 => (h, w),
        d => {
            let t = (d as f64).to_radians();
            let (c, s) = (t.cos().abs(), t.sin().abs());
            let nw = (w as f64 * c + h as f64 * s - 1e-9).ceil() as usize;
            let nh = (w as f64 * s + h as f64 * c - 1e-9).ceil() as usize;
            (nw, nh)
        }
    }
}

/// Bilinear sample plan for one destination pixel: four source taps with
/// weights; `None` taps fall outside the source.
fn taps(
    dst: (usize, usize),
    dst_extent: (usize, usize),
    src_extent: (usize, usize),
    cos: f64,
    sin: f64,
) -> [(Option<(usize, usize)>, f64); 4] {
    let dx = dst.0 as f64 + 0.5 - dst_extent.0 as f64 / 2.0;
    let dy = dst.1 as f64 + 0.5 - dst_extent.1 as f64 / 2.0;
    let sx = cos * dx + sin * dy + src_extent.0 as f64 / 2.0 - 0.5;
    let sy = -sin * dx + cos * dy + src_extent.1 as f64 / 2.0 - 0.5;
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let at = |x: f64, y: f64| {
        if x >= 0.0 && y >= 0.0 && (x as usize) < src_extent.0 && (y as usize) < src_extent.1 {
            Some((x as usize, y as usize))
        } else {
            None
        }
    };
    [
        (at(x0, y0), (1.0 - fx) * (1.0 - fy)),
        (at(x0 + 1.0, y0), fx * (1.0 - fy)),
        (at(x0, y0 + 1.0), (1.0 - fx) * fy),
        (at(x0 + 1.0, y0 + 1.0), fx * fy),
    ]
}

fn resample<T: Copy>(
    src_extent: (usize, usize),
    deg: u16,
    fetch: impl Fn(usize, usize) -> T,
    mut emit: impl FnMut(usize, usize, &[(Option<T>, f64); 4]),
) -> (usize, usize) {
    let dst_extent = rotated_extent(src_extent.0, src_extent.1, deg);
    let t = (deg as f64).to_radians();
    let (cos, sin) = (t.cos(), t.sin());
    for y in 0..dst_extent.1 {
        for x in 0..dst_extent.0 {
            let ts = taps((x, y), dst_extent, src_extent, cos, sin);
            let vals = ts.map(|(p, w)| (p.map(|(px, py)| fetch(px, py)), w));
            emit(x, y, &vals);
        }
    }
    dst_extent
}

pub fn rotate_rgb(img: &RgbImage, deg: u16, fill: [u8; 3]) -> Result<RgbImage> {
    check_rotation(deg)?;
    Ok(match deg {
        0 => img.clone(),
        90 => imageops::rotate90(img),
        180 => imageops::rotate180(img),
        270 => imageops::rotate270(img),
        _ => {
            let (nw, nh) = rotated_extent(img.width() as usize, img.height() as usize, deg);
            let mut out = RgbImage::from_pixel(nw as u32, nh as u32, Rgb(fill));
            resample(
                (img.width() as usize, img.height() as usize),
                deg,
                |x, y| img.get_pixel(x as u32, y as u32).0,
                |x, y, vals| {
                    let mut acc = [0.0f64; 3];
                    for (v, w) in vals {
                        let px = v.unwrap_or(fill);
                        for c in 0..3 {
                            acc[c] += w * px[c] as f64;
                        }
                    }
                    out.put_pixel(x as u32, y as u32, Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8)));
                },
            );
            out
        }
    })
}

/// Rotates a mask with the same geometry as [`rotate_rgb`]; resampled
/// coverage of at least one half counts as set.
pub fn rotate_mask(mask: &Mask, deg: u16) -> Result<Mask> {
    check_rotation(deg)?;
    let (w, h) = (mask.width, mask.height);
    Ok(match deg {
        0 => mask.clone(),
        90 | 180 | 270 => {
            let (nw, nh) = rotated_extent(w, h, deg);
            let mut out = Mask::new(nw, nh);
            for y in 0..h {
                for x in 0..w {
                    let (nx, ny) = match deg {
                        90 => (h - 1 - y, x),
                        180 => (w - 1 - x, h - 1 - y),
                        _ => (y, w - 1 - x),
                    };
                    out.set(nx, ny, mask.get(x, y));
                }
            }
            out
        }
        _ => {
            let (nw, nh) = rotated_extent(w, h, deg);
            let mut out = Mask::new(nw, nh);
            resample(
                (w, h),
                deg,
                |x, y| mask.get(x, y),
                |x, y, vals| {
                    let cover: f64 = vals
                        .iter()
                        .map(|(v, wt)| if v.unwrap_or(false) { *wt } else { 0.0 })
                        .sum();
                    out.set(x, y, cover >= 0.5);
                },
            );
            out
        }
    })
}
