//! Bias-weighted augmentation.
//!
//! Each training sample gets exactly one augmented variant whose transform
//! intensities scale with its class weight `w`:
//!
//! | transform  | draw                                                  |
//! |------------|-------------------------------------------------------|
//! | rotation   | `θ ~ U(-30w, 30w)` degrees about the image center     |
//! | scale      | `s ~ U(0.8, 1 + 0.2w)`                                |
//! | translate  | `|t| ~ U(0, 0.2w · min(H, W))` px, random sign per axis |
//! | flip       | horizontal, probability ½                             |
//! | lighting   | with probability `w / max w`: `β ~ U(0.5, 1.5)`, `γ ~ U(0.7, 1.3)` |
//! | occlusion  | `⌊0.15 · H · w⌋` black 10×10 patches                  |
//! | noise      | Gaussian, σ = `0.1w` on the `[0, 1]` pixel scale        |
//!
//! Stages run in that order: spatial, lighting, occlusion, noise. Every stage
//! rounds half away from zero once, at its end.
//!
//! Draw order on the `Params` stream: θ, s, |tx|, sign(tx), |ty|, sign(ty),
//! flip coin, lighting coin, β, γ. All ten draws happen regardless of flags.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributes::{decode_image, resolve_path};
use crate::error::{Error, Result};
use crate::intersections::ClassWeights;
use crate::manifest::{Manifest, SampleRecord, Split};
use crate::rng::{RngStream, Stage, GENERATOR_NAME};

pub const OCCLUSION_PATCH: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastPivot {
    /// Mean intensity of the image after brightness.
    Mean,
    /// Fixed pivot at 128.
    Mid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    pub rotation_deg: f64,
    pub scale: f64,
    pub translate_px: (f64, f64),
    pub flip: bool,
    pub lighting_applied: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub occlusion_patches: usize,
    pub noise_sigma: f64,
}

impl AugmentationParams {
    pub fn identity() -> Self {
        AugmentationParams {
            rotation_deg: 0.0,
            scale: 1.0,
            translate_px: (0.0, 0.0),
            flip: false,
            lighting_applied: false,
            brightness: 1.0,
            contrast: 1.0,
            occlusion_patches: 0,
            noise_sigma: 0.0,
        }
    }
}

/// Upper ends of the parameter ranges for a given weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub rotation_max_deg: f64,
    pub scale_max: f64,
    pub translate_max_px: f64,
    pub occlusion_patches: usize,
    pub noise_sigma: f64,
}

impl ParamBounds {
    pub fn for_weight(w: f64, height: u32, width: u32) -> Self {
        ParamBounds {
            rotation_max_deg: 30.0 * w,
            scale_max: 1.0 + 0.2 * w,
            translate_max_px: 0.2 * w * f64::from(height.min(width)),
            occlusion_patches: occlusion_patch_count(height, w),
            noise_sigma: 0.1 * w,
        }
    }
}

/// `⌊0.15 · H · w⌋`.
pub fn occlusion_patch_count(height: u32, w: f64) -> usize {
    (0.15 * f64::from(height) * w).floor().max(0.0) as usize
}

/// Draws the parameters for one sample. `max_weight` is the largest class
/// weight; `flip_enabled = false` forces `flip` off without changing the
/// stream layout.
pub fn sample_params(
    w: f64,
    max_weight: f64,
    dims: (u32, u32),
    flip_enabled: bool,
    stream: RngStream,
) -> AugmentationParams {
    let (height, width) = dims;
    let bounds = ParamBounds::for_weight(w, height, width);
    let mut rng = stream.stage(Stage::Params);

    let rotation_deg = rng.uniform(-bounds.rotation_max_deg, bounds.rotation_max_deg);
    let scale = rng.uniform(0.8, bounds.scale_max);
    let signed = |rng: &mut crate::rng::StageRng| {
        let magnitude = rng.uniform(0.0, bounds.translate_max_px);
        if rng.coin(0.5) {
            -magnitude
        } else {
            magnitude
        }
    };
    let tx = signed(&mut rng);
    let ty = signed(&mut rng);
    let flip_coin = rng.coin(0.5);
    let lighting_applied = rng.coin(w / max_weight);
    let brightness = rng.uniform(0.5, 1.5);
    let contrast = rng.uniform(0.7, 1.3);

    AugmentationParams {
        rotation_deg,
        scale,
        translate_px: (tx, ty),
        flip: flip_enabled && flip_coin,
        lighting_applied,
        brightness,
        contrast,
        occlusion_patches: bounds.occlusion_patches,
        noise_sigma: bounds.noise_sigma,
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Flip, then rotate (counter-clockwise as displayed) and scale about the
/// center, then translate. Inverse-mapped with bilinear sampling; samples
/// falling outside the source are black. Output keeps the input size.
pub fn apply_spatial(img: &RgbImage, p: &AugmentationParams) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let (wf, hf) = (f64::from(w), f64::from(h));
    let (cx, cy) = (wf / 2.0, hf / 2.0);
    let theta = p.rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (tx, ty) = p.translate_px;

    let sample = |sx: f64, sy: f64| -> [u8; 3] {
        if sx < -0.5 || sy < -0.5 || sx > wf - 0.5 || sy > hf - 0.5 {
            return [0; 3];
        }
        let sx = sx.clamp(0.0, wf - 1.0);
        let sy = sy.clamp(0.0, hf - 1.0);
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as u32, y0 as u32);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let (p00, p10) = (img.get_pixel(x0, y0).0, img.get_pixel(x1, y0).0);
        let (p01, p11) = (img.get_pixel(x0, y1).0, img.get_pixel(x1, y1).0);
        let mut out = [0u8; 3];
        for c in 0..3 {
            let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
            let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
            out[c] = to_u8(top * (1.0 - fy) + bottom * fy);
        }
        out
    };

    RgbImage::from_fn(w, h, |x, y| {
        let ox = f64::from(x) + 0.5 - cx - tx;
        let oy = f64::from(y) + 0.5 - cy - ty;
        let (ux, uy) = (ox / p.scale, oy / p.scale);
        let rx = cos * ux - sin * uy;
        let ry = sin * ux + cos * uy;
        let rx = if p.flip { -rx } else { rx };
        Rgb(sample(rx + cx - 0.5, ry + cy - 0.5))
    })
}

/// `v' = clamp((v·β − μ)·γ + μ, 0, 255)` per channel value, where `μ` is the
/// pivot chosen by `pivot`.
pub fn apply_lighting(img: &RgbImage, brightness: f64, contrast: f64, pivot: ContrastPivot) -> RgbImage {
    let raw = img.as_raw();
    let mu = match pivot {
        ContrastPivot::Mean => {
            raw.iter().map(|v| f64::from(*v) * brightness).sum::<f64>() / raw.len() as f64
        }
        ContrastPivot::Mid => 128.0,
    };
    let data = raw
        .iter()
        .map(|v| to_u8((f64::from(*v) * brightness - mu) * contrast + mu))
        .collect();
    RgbImage::from_raw(img.width(), img.height(), data).expect("same dimensions")
}

/// Blacks out `n_patches` 10×10 squares. Top-left corners are uniform over
/// the image (x drawn before y, per patch); patches are clipped at the border
/// and may overlap.
pub fn apply_occlusion(img: &RgbImage, n_patches: usize, stream: RngStream) -> RgbImage {
    let mut out = img.clone();
    if n_patches == 0 {
        return out;
    }
    let (w, h) = (img.width(), img.height());
    let mut rng = stream.stage(Stage::Occlusion);
    for _ in 0..n_patches {
        let x0 = rng.below(u64::from(w)) as u32;
        let y0 = rng.below(u64::from(h)) as u32;
        for y in y0..(y0 + OCCLUSION_PATCH).min(h) {
            for x in x0..(x0 + OCCLUSION_PATCH).min(w) {
                out.put_pixel(x, y, Rgb([0; 3]));
            }
        }
    }
    out
}

/// `v' = round(clamp(v/255 + N(0, σ²), 0, 1) · 255)`, one draw per channel
/// value in row-major order.
pub fn apply_noise(img: &RgbImage, sigma: f64, stream: RngStream) -> RgbImage {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = stream.stage(Stage::Noise);
    let data = img
        .as_raw()
        .iter()
        .map(|v| {
            let x = f64::from(*v) / 255.0 + sigma * rng.standard_normal();
            to_u8(x.clamp(0.0, 1.0) * 255.0)
        })
        .collect();
    RgbImage::from_raw(img.width(), img.height(), data).expect("same dimensions")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub master_seed: u64,
    pub flip: bool,
    pub contrast_pivot: ContrastPivot,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            master_seed: 0,
            flip: true,
            contrast_pivot: ContrastPivot::Mean,
        }
    }
}

impl AugmentConfig {
    /// Every convention that affects output pixels, for run records.
    pub fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "master_seed": self.master_seed,
            "flip_enabled": self.flip,
            "contrast_pivot": self.contrast_pivot,
            "generator": GENERATOR_NAME,
            "param_draw_order": ["rotation", "scale", "|tx|", "sign(tx)", "|ty|", "sign(ty)", "flip", "lighting", "brightness", "contrast"],
            "transform_order": ["spatial", "lighting", "occlusion", "noise"],
            "spatial": "flip, rotate ccw about center, scale, translate; bilinear; black outside",
            "translation": "|t| ~ U(0, 0.2w*min(H,W)), independent random sign per axis",
            "lighting_probability": "w / max_w",
            "occlusion": "floor(0.15*H*w) black 10x10 patches, top-left uniform over image, clipped",
            "noise": "sigma = 0.1w standard deviation on [0,1] scale",
            "rounding": "half away from zero, once per stage",
        })
    }
}

pub fn augment_image(
    img: &RgbImage,
    w: f64,
    max_weight: f64,
    cfg: &AugmentConfig,
    stream: RngStream,
) -> (RgbImage, AugmentationParams) {
    let params = sample_params(w, max_weight, (img.height(), img.width()), cfg.flip, stream);
    let mut out = apply_spatial(img, &params);
    if params.lighting_applied {
        out = apply_lighting(&out, params.brightness, params.contrast, cfg.contrast_pivot);
    }
    out = apply_occlusion(&out, params.occlusion_patches, stream);
    out = apply_noise(&out, params.noise_sigma, stream);
    (out, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub source_id: String,
    pub augmented_id: String,
    pub class_label: String,
    pub weight: f64,
    pub sample_index: u64,
    pub params: AugmentationParams,
}

#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    /// Originals plus one variant each, sorted by (source id, variant).
    pub manifest: Manifest,
    pub records: Vec<AugmentRecord>,
}

pub fn augmented_id(source_id: &str) -> String {
    format!("{source_id}_aug")
}

/// Augments the training split. Relative input paths resolve against `root`;
/// variants are written to `out_dir/<source_id>_aug.png`. The returned
/// manifest's original records carry paths resolved against `root`, the
/// variants carry paths relative to `out_dir`. Output depends only on the
/// manifest, the weights and `cfg`, not on the rayon pool size.
pub fn augment_dataset(
    manifest: &Manifest,
    root: &Path,
    weights: &ClassWeights,
    cfg: &AugmentConfig,
    out_dir: &Path,
) -> Result<AugmentOutcome> {
    for label in manifest.labels() {
        match weights.get(label) {
            Some(w) if w.is_finite() && w > 0.0 => {}
            Some(w) => {
                return Err(Error::InvalidArgument(format!("weight for class {label:?} is {w}")))
            }
            None => {
                return Err(Error::InvalidArgument(format!("no weight for class {label:?}")))
            }
        }
    }
    let max_weight = weights.max_weight();

    let jobs: Vec<(u64, &SampleRecord)> = manifest
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split == Split::Train)
        .map(|(i, s)| (i as u64, s))
        .collect();
    if let Some((_, s)) = jobs.iter().find(|(_, s)| s.id.contains(['/', '\\'])) {
        return Err(Error::InvalidArgument(format!(
            "sample id {:?} cannot be used as a file name",
            s.id
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let records: Vec<AugmentRecord> = jobs
        .par_iter()
        .map(|(index, s)| {
            let img = decode_image(&s.id, &resolve_path(root, s))?;
            let w = weights.get(&s.class_label).expect("checked above");
            let (out, params) = augment_image(&img, w, max_weight, cfg, RngStream::new(cfg.master_seed, *index));
            let aug_id = augmented_id(&s.id);
            let path = out_dir.join(format!("{aug_id}.png"));
            out.save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| Error::Encode {
                    id: s.id.clone(),
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            Ok(AugmentRecord {
                source_id: s.id.clone(),
                augmented_id: aug_id,
                class_label: s.class_label.clone(),
                weight: w,
                sample_index: *index,
                params,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<(String, u8, SampleRecord)> = Vec::with_capacity(2 * jobs.len());
    for ((_, s), rec) in jobs.iter().zip(&records) {
        let mut original = (*s).clone();
        original.image_path = resolve_path(root, s);
        rows.push((s.id.clone(), 0, original));
        rows.push((
            s.id.clone(),
            1,
            SampleRecord {
                id: rec.augmented_id.clone(),
                image_path: PathBuf::from(format!("{}.png", rec.augmented_id)),
                class_label: s.class_label.clone(),
                split: Split::Train,
                env: None,
                source_id: Some(s.id.clone()),
            },
        ));
    }
    rows.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    let mut records = records;
    records.sort_by(|a, b| a.source_id.cmp(&b.source_id));

    Ok(AugmentOutcome {
        manifest: Manifest::new(
            manifest.labels().to_vec(),
            rows.into_iter().map(|(_, _, r)| r).collect(),
        )?,
        records,
    })
}
