use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{project, top_s_mask_scoped, ActivationMask, MaskScope, ReluRule, SMode};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::Tensor;

/// One visualisation job.
#[derive(Clone, Debug, PartialEq)]
pub struct VisRequest {
    pub layer: String,
    pub s_mode: SMode,
    pub image_id: String,
    pub scope: MaskScope,
    pub relu_rule: ReluRule,
}

impl VisRequest {
    pub fn new(layer: impl Into<String>, s_mode: SMode, image_id: impl Into<String>) -> Self {
        VisRequest {
            layer: layer.into(),
            s_mode,
            image_id: image_id.into(),
            scope: MaskScope::AcrossMaps,
            relu_rule: ReluRule::Descending,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderedVisualisation {
    pub image_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub mask: ActivationMask,
    pub reconstruction: Tensor,
}

/// Min-max scales a `[C, H, W]` reconstruction (C = 1 or 3) to 8-bit RGB,
/// jointly over all channels. A constant image maps to black.
pub fn normalize_to_rgb8(recon: &Tensor) -> Result<image::RgbImage> {
    let (c, h, w) = recon.dims3()?;
    if c != 1 && c != 3 {
        return Err(Error::shape(format!("cannot display {c} channels")));
    }
    let (lo, hi) = recon
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let plane = h * w;
    let px = |ch: usize, i: usize| {
        if span > 0.0 {
            (((recon.data()[ch * plane + i] - lo) / span) * 255.0).round() as u8
        } else {
            0
        }
    };
    Ok(image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        if c == 3 {
            image::Rgb([px(0, i), px(1, i), px(2, i)])
        } else {
            let v = px(0, i);
            image::Rgb([v, v, v])
        }
    }))
}

/// Sidecar text: a comment header then one line per kept activation.
pub fn sidecar_lines(layer_name: &str, request: &VisRequest, mask: &ActivationMask) -> Vec<String> {
    let mut lines = vec![format!(
        "# image={} relu_rule={} scope={} requested_S={} effective_S={}",
        request.image_id, request.relu_rule, mask.scope, request.s_mode, mask.mode
    )];
    for (rank, k) in mask.kept.iter().enumerate() {
        lines.push(format!(
            "layer={} S={} rank={} coord=({},{},{}) activation={}",
            layer_name,
            mask.mode,
            rank + 1,
            k.channel,
            k.row,
            k.col,
            k.value
        ));
    }
    lines
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs the network on `image`, masks the requested layer, projects to pixel
/// space and writes `<id>_<layer>_S<s>.png` plus a `.txt` sidecar into `out_dir`.
pub fn render_visualisation(
    net: &Network,
    image: &Tensor,
    request: &VisRequest,
    out_dir: &Path,
) -> Result<RenderedVisualisation> {
    let layer = net.spec.layer_index(&request.layer).ok_or_else(|| {
        Error::invalid(format!(
            "unknown layer `{}`; layers are {}",
            request.layer,
            net.spec.layer_names().join(", ")
        ))
    })?;
    let trace = net.forward(image)?;
    let mask = top_s_mask_scoped(&trace, &net.spec, layer, request.s_mode, request.scope)?;
    let reconstruction = project(net, &trace, &mask, request.relu_rule)?;
    let rgb = normalize_to_rgb8(&reconstruction)?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stem = format!(
        "{}_{}_S{}",
        sanitize(&request.image_id),
        sanitize(&request.layer),
        request.s_mode
    );
    let image_path = out_dir.join(format!("{stem}.png"));
    rgb.save_with_format(&image_path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: image_path.clone(),
            source,
        })?;
    let sidecar_path = out_dir.join(format!("{stem}.txt"));
    let mut f = fs::File::create(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    for line in sidecar_lines(&request.layer, request, &mask) {
        writeln!(f, "{line}").map_err(|e| Error::io(&sidecar_path, e))?;
    }
    Ok(RenderedVisualisation {
        image_path,
        sidecar_path,
        mask,
        reconstruction,
    })
}
