//! Environmental attributes: lighting (mean HSV value channel) and background
//! complexity (Canny edge density), each with a binary category.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{ImageFormat, ImageReader, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canny::{self, CannyParams};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, SampleRecord};

/// Lighting scores strictly below this are "low light" (0–255 scale).
pub const LOW_LIGHT_THRESHOLD: f64 = 85.0;
/// Edge densities strictly above this are "complex background".
pub const COMPLEX_BG_THRESHOLD: f64 = 0.1;
/// Side length used when `resize_first` is enabled.
pub const RESIZE_SIDE: u32 = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightingCategory {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundCategory {
    Simple,
    Complex,
}

impl LightingCategory {
    pub const ALL: [LightingCategory; 2] = [LightingCategory::Low, LightingCategory::High];

    pub fn as_str(self) -> &'static str {
        match self {
            LightingCategory::Low => "low",
            LightingCategory::High => "high",
        }
    }
}

impl BackgroundCategory {
    pub const ALL: [BackgroundCategory; 2] = [BackgroundCategory::Simple, BackgroundCategory::Complex];

    pub fn as_str(self) -> &'static str {
        match self {
            BackgroundCategory::Simple => "simple",
            BackgroundCategory::Complex => "complex",
        }
    }
}

impl fmt::Display for LightingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for BackgroundCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LightingCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(LightingCategory::Low),
            "high" => Ok(LightingCategory::High),
            other => Err(Error::Validation(format!("unknown lighting category {other:?}"))),
        }
    }
}

impl FromStr for BackgroundCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(BackgroundCategory::Simple),
            "complex" => Ok(BackgroundCategory::Complex),
            other => Err(Error::Validation(format!("unknown background category {other:?}"))),
        }
    }
}

/// Joint (lighting, background) condition; four values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnvCondition {
    pub lighting: LightingCategory,
    pub background: BackgroundCategory,
}

impl EnvCondition {
    pub const ALL: [EnvCondition; 4] = [
        EnvCondition::new(LightingCategory::Low, BackgroundCategory::Simple),
        EnvCondition::new(LightingCategory::Low, BackgroundCategory::Complex),
        EnvCondition::new(LightingCategory::High, BackgroundCategory::Simple),
        EnvCondition::new(LightingCategory::High, BackgroundCategory::Complex),
    ];

    pub const fn new(lighting: LightingCategory, background: BackgroundCategory) -> Self {
        EnvCondition {
            lighting,
            background,
        }
    }

    /// Position in [`EnvCondition::ALL`].
    pub fn index(self) -> usize {
        (self.lighting as usize) * 2 + self.background as usize
    }
}

impl fmt::Display for EnvCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} light/{} bg", self.lighting, self.background)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvAttributes {
    pub lighting_score: f64,
    pub bg_complexity: f64,
    pub lighting_cat: LightingCategory,
    pub bg_cat: BackgroundCategory,
}

impl EnvAttributes {
    pub fn condition(&self) -> EnvCondition {
        EnvCondition::new(self.lighting_cat, self.bg_cat)
    }

    /// Checks ranges and that the categories agree with the scores.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=255.0).contains(&self.lighting_score) {
            return Err(format!("lighting score {} outside [0, 255]", self.lighting_score));
        }
        if !(0.0..=1.0).contains(&self.bg_complexity) {
            return Err(format!("background complexity {} outside [0, 1]", self.bg_complexity));
        }
        let (l, b) = categorize(self.lighting_score, self.bg_complexity);
        if l != self.lighting_cat || b != self.bg_cat {
            return Err(format!(
                "categories ({}, {}) disagree with scores ({}, {})",
                self.lighting_cat, self.bg_cat, self.lighting_score, self.bg_complexity
            ));
        }
        Ok(())
    }
}

/// Mean of the HSV value channel, `V = max(R, G, B)`, on the 0–255 scale.
pub fn lighting_score(img: &RgbImage) -> f64 {
    let total: u64 = img
        .pixels()
        .map(|p| u64::from(*p.0.iter().max().unwrap_or(&0)))
        .sum();
    total as f64 / (img.width() as u64 * img.height() as u64) as f64
}

pub fn edge_density(img: &RgbImage, params: &CannyParams) -> f64 {
    canny::edge_density(img, params)
}

pub fn categorize(lighting_score: f64, bg_complexity: f64) -> (LightingCategory, BackgroundCategory) {
    let lighting = if lighting_score < LOW_LIGHT_THRESHOLD {
        LightingCategory::Low
    } else {
        LightingCategory::High
    };
    let background = if bg_complexity > COMPLEX_BG_THRESHOLD {
        BackgroundCategory::Complex
    } else {
        BackgroundCategory::Simple
    };
    (lighting, background)
}

pub fn categorize_env(lighting_score: f64, bg_complexity: f64) -> EnvAttributes {
    let (lighting_cat, bg_cat) = categorize(lighting_score, bg_complexity);
    EnvAttributes {
        lighting_score,
        bg_complexity,
        lighting_cat,
        bg_cat,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct ExtractOptions {
    pub canny: CannyParams,
    /// Run edge detection on a 224×224 resize instead of the original image.
    pub resize_first: bool,
}


pub fn attributes_of(img: &RgbImage, opts: &ExtractOptions) -> EnvAttributes {
    let light = lighting_score(img);
    let density = if opts.resize_first {
        let resized = image::imageops::resize(
            img,
            RESIZE_SIDE,
            RESIZE_SIDE,
            image::imageops::FilterType::Triangle,
        );
        edge_density(&resized, &opts.canny)
    } else {
        edge_density(img, &opts.canny)
    };
    categorize_env(light, density)
}

/// Decodes a PNG or JPEG file into 8-bit RGB. Any other format is an error.
pub fn decode_image(id: &str, path: &Path) -> Result<RgbImage> {
    let decode_err = |message: String| Error::Decode {
        id: id.to_string(),
        path: path.to_path_buf(),
        message,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        other => return Err(decode_err(format!("unsupported image format {other:?}"))),
    }
    let img = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(decode_err("image has zero size".into()));
    }
    Ok(img.to_rgb8())
}

pub fn resolve_path(root: &Path, sample: &SampleRecord) -> PathBuf {
    if sample.image_path.is_absolute() {
        sample.image_path.clone()
    } else {
        root.join(&sample.image_path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    FailFast,
    SkipAndReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractFailure {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub manifest: Manifest,
    /// Samples that could not be decoded; they keep their previous attributes.
    pub failures: Vec<ExtractFailure>,
}

/// Computes attributes for every sample. Relative image paths resolve against
/// `root`. Work runs on the current rayon pool; results are assembled in
/// manifest order, so the output does not depend on the worker count.
pub fn extract_all(
    manifest: &Manifest,
    root: &Path,
    opts: &ExtractOptions,
    policy: FailurePolicy,
) -> Result<ExtractOutcome> {
    opts.canny.validate()?;
    let results: Vec<Result<EnvAttributes>> = manifest
        .samples()
        .par_iter()
        .map(|s| {
            let img = decode_image(&s.id, &resolve_path(root, s))?;
            Ok(attributes_of(&img, opts))
        })
        .collect();

    let (labels, mut samples) = manifest.clone().into_parts();
    let mut failures = Vec::new();
    for (sample, result) in samples.iter_mut().zip(results) {
        match result {
            Ok(env) => sample.env = Some(env),
            Err(e) => match policy {
                FailurePolicy::FailFast => return Err(e),
                FailurePolicy::SkipAndReport => failures.push(ExtractFailure {
                    id: sample.id.clone(),
                    message: e.to_string(),
                }),
            },
        }
    }
    Ok(ExtractOutcome {
        manifest: Manifest::new(labels, samples)?,
        failures,
    })
}
