//! Conversion of rasters to network-input tensors.

use image::RgbImage;

use super::segment::Mask;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `[3, H, W]` tensor with channel values in `[0, 1]`.
pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f32; 3 * w * h];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = p.0[c] as f32 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("non-empty image")
}

fn axis_taps(dst: usize, src: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (s - lo as f64) as f32)
        })
        .collect()
}

/// Bilinear resize of a `[C, H, W]` tensor using pixel-centre alignment.
/// Resizing to the same extent is the identity.
pub fn resize_bilinear(input: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if height == 0 || width == 0 {
        return Err(Error::invalid("resize to an empty extent"));
    }
    if (h, w) == (height, width) {
        return Ok(input.clone());
    }
    let ys = axis_taps(height, h);
    let xs = axis_taps(width, w);
    let src = input.data();
    let mut out = vec![0.0f32; c * height * width];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out[(ch * height + oy) * width + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Tensor::new(vec![c, height, width], out)
}

/// Bilinear resize of a mask, keeping pixels with coverage of at least one half.
pub fn resize_mask(mask: &Mask, height: usize, width: usize) -> Result<Mask> {
    let t = Tensor::new(
        vec![1, mask.height, mask.width],
        mask.data.iter().map(|&v| v as u8 as f32).collect(),
    )?;
    let r = resize_bilinear(&t, height, width)?;
    Ok(Mask {
        width,
        height,
        data: r.data().iter().map(|&v| v >= 0.5).collect(),
    })
}

/// Resizes to the input extent, scales to `[0, 1]` and subtracts per-channel means.
pub fn image_to_input(img: &RgbImage, height: usize, width: usize, means: &[f32; 3]) -> Result<Tensor> {
    let mut t = resize_bilinear(&rgb_to_tensor(img), height, width)?;
    let plane = height * width;
    for (c, m) in means.iter().enumerate() {
        for v in &mut t.data_mut()[c * plane..(c + 1) * plane] {
            *v -= m;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_extent_is_identity() {
        let img = RgbImage::from_fn(227, 227, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 7]));
        let t = rgb_to_tensor(&img);
        let r = resize_bilinear(&t, 227, 227).unwrap();
        assert_eq!(r, t);
    }

    #[test]
    fn downsizes_500_patch_to_227() {
        let img = RgbImage::from_pixel(500, 500, image::Rgb([255, 0, 51]));
        let t = image_to_input(&img, 227, 227, &[0.0; 3]).unwrap();
        assert_eq!(t.shape(), &[3, 227, 227]);
        assert!((t.data()[0] - 1.0).abs() < 1e-6);
        assert!((t.data()[2 * 227 * 227] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn constant_survives_resize() {
        let t = Tensor::filled(&[2, 5, 9], 0.25);
        let r = resize_bilinear(&t, 13, 4).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }
}
