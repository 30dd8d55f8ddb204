//! Aggregation of externally computed attribution artifacts.
//!
//! Rasters and masks are stored as headerless CSV matrices, one row per image
//! row, in files named `<sample_id>.csv`. Mask codes: `0` background,
//! `1` object, `2` transition.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyRaster {
    pub sample_id: String,
    pub height: usize,
    pub width: usize,
    values: Vec<f64>,
}

impl SaliencyRaster {
    pub fn new(sample_id: impl Into<String>, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let sample_id = sample_id.into();
        if values.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "raster {sample_id:?}: {} values for {height}x{width}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!(
                "raster {sample_id:?}: value {v} is not a finite non-negative number"
            )));
        }
        Ok(SaliencyRaster {
            sample_id,
            height,
            width,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(
            self.sample_id.clone(),
            self.height,
            self.width,
            self.values.iter().map(|v| v * k).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Background,
    Object,
    Transition,
}

impl Region {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Region::Background),
            1 => Some(Region::Object),
            2 => Some(Region::Transition),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Region::Background => 0,
            Region::Object => 1,
            Region::Transition => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub sample_id: String,
    pub height: usize,
    pub width: usize,
    labels: Vec<Region>,
}

impl RegionMask {
    pub fn new(sample_id: impl Into<String>, height: usize, width: usize, labels: Vec<Region>) -> Result<Self> {
        let sample_id = sample_id.into();
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "mask {sample_id:?}: {} labels for {height}x{width}",
                labels.len()
            )));
        }
        Ok(RegionMask {
            sample_id,
            height,
            width,
            labels,
        })
    }

    pub fn labels(&self) -> &[Region] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassSplit {
    pub object: f64,
    pub background: f64,
    pub transition: f64,
}

pub fn mass_split(raster: &SaliencyRaster, mask: &RegionMask) -> Result<MassSplit> {
    if (raster.height, raster.width) != (mask.height, mask.width) {
        return Err(Error::DimensionMismatch(format!(
            "raster {:?} is {}x{} but mask {:?} is {}x{}",
            raster.sample_id, raster.height, raster.width, mask.sample_id, mask.height, mask.width
        )));
    }
    let mut sums = [0.0f64; 3];
    for (v, r) in raster.values.iter().zip(&mask.labels) {
        sums[r.code() as usize] += v;
    }
    let total: f64 = sums.iter().sum();
    if total <= 0.0 {
        return Err(Error::Validation(format!(
            "raster {:?} has zero total mass",
            raster.sample_id
        )));
    }
    Ok(MassSplit {
        background: sums[0] / total,
        object: sums[1] / total,
        transition: sums[2] / total,
    })
}

/// Element-wise mean of a group of equally sized rasters.
pub fn mean_raster(group: &[SaliencyRaster]) -> Result<Vec<f64>> {
    let first = group
        .first()
        .ok_or_else(|| Error::Insufficient("empty raster group".into()))?;
    let mut acc = vec![0.0; first.values.len()];
    for r in group {
        if (r.height, r.width) != (first.height, first.width) {
            return Err(Error::DimensionMismatch(format!(
                "raster {:?} is {}x{}, expected {}x{}",
                r.sample_id, r.height, r.width, first.height, first.width
            )));
        }
        for (a, v) in acc.iter_mut().zip(&r.values) {
            *a += v;
        }
    }
    let n = group.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Validation("zero-norm mean raster".into()));
    }
    Ok(dot / (na * nb))
}

/// Cosine similarity between the mean rasters of two groups.
pub fn condition_similarity(a: &[SaliencyRaster], b: &[SaliencyRaster]) -> Result<f64> {
    cosine_similarity(&mean_raster(a)?, &mean_raster(b)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionShare {
    /// Mean over samples of the environmental features' share of magnitude.
    pub share: f64,
    pub threshold: f64,
    /// Largest `|r|` against any environmental attribute, per feature.
    pub max_abs_correlation: Vec<Option<f64>>,
    pub environmental_features: Vec<usize>,
    /// Features whose magnitude is constant across samples.
    pub skipped_features: Vec<usize>,
    /// Samples whose total magnitude is zero; they do not enter the mean.
    pub skipped_samples: Vec<usize>,
}

/// Share of attribution magnitude carried by features that correlate with an
/// environmental attribute. `attrib[i][f]` is sample `i`'s attribution for
/// feature `f`; `env[i][k]` is its value of environmental attribute `k`. A
/// feature is environmental when `max_k |r(f, k)| > threshold`.
pub fn env_attribution_share(attrib: &[Vec<f64>], env: &[Vec<f64>], threshold: f64) -> Result<AttributionShare> {
    let n = attrib.len();
    if n < 3 {
        return Err(Error::Insufficient(format!("{n} samples, need at least 3")));
    }
    if env.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} attribution vectors but {} environment vectors",
            env.len()
        )));
    }
    let n_feat = attrib[0].len();
    let n_env = env[0].len();
    if attrib.iter().any(|v| v.len() != n_feat) || env.iter().any(|v| v.len() != n_env) {
        return Err(Error::DimensionMismatch("ragged attribution or environment vectors".into()));
    }
    let mags: Vec<Vec<f64>> = attrib
        .iter()
        .map(|v| v.iter().map(|x| x.abs()).collect())
        .collect();
    let env_cols: Vec<Vec<f64>> = (0..n_env).map(|k| env.iter().map(|v| v[k]).collect()).collect();

    let mut max_abs_correlation = Vec::with_capacity(n_feat);
    let mut skipped_features = Vec::new();
    for f in 0..n_feat {
        let col: Vec<f64> = mags.iter().map(|v| v[f]).collect();
        if col.iter().all(|x| *x == col[0]) {
            skipped_features.push(f);
            max_abs_correlation.push(None);
            continue;
        }
        let mut best: Option<f64> = None;
        for e in &env_cols {
            match stats::pearson(&col, e) {
                Ok(c) => best = Some(best.map_or(c.r.abs(), |b: f64| b.max(c.r.abs()))),
                // a constant environmental column carries no information
                Err(Error::ConstantSeries(_)) => {}
                Err(err) => return Err(err),
            }
        }
        max_abs_correlation.push(best);
    }
    let environmental_features: Vec<usize> = max_abs_correlation
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_some_and(|r| r > threshold))
        .map(|(f, _)| f)
        .collect();

    let mut total_share = 0.0;
    let mut used = 0usize;
    let mut skipped_samples = Vec::new();
    for (i, v) in mags.iter().enumerate() {
        let total: f64 = v.iter().sum();
        if total == 0.0 {
            skipped_samples.push(i);
            continue;
        }
        let envm: f64 = environmental_features.iter().map(|&f| v[f]).sum();
        total_share += envm / total;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Validation("every sample has zero attribution mass".into()));
    }
    Ok(AttributionShare {
        share: total_share / used as f64,
        threshold,
        max_abs_correlation,
        environmental_features,
        skipped_features,
        skipped_samples,
    })
}

fn read_matrix<T>(path: &Path, parse: impl Fn(&str) -> Option<T>) -> Result<(usize, usize, Vec<T>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut width = None;
    let mut height = 0;
    let mut values = Vec::new();
    for (row, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for cell in line.split(',') {
            let v = parse(cell.trim())
                .ok_or_else(|| parse_err(format!("row {}: bad value {:?}", row + 1, cell.trim())))?;
            values.push(v);
        }
        let w = values.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(parse_err(format!("row {} has {w} columns, expected {expected}", row + 1)))
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| parse_err("empty matrix".into()))?;
    Ok((height, width, values))
}

fn write_matrix<T: std::fmt::Display>(path: &Path, width: usize, values: &[T]) -> Result<()> {
    let mut out = String::new();
    for row in values.chunks(width) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_raster(sample_id: &str, path: &Path) -> Result<SaliencyRaster> {
    let (h, w, v) = read_matrix(path, |s| s.parse::<f64>().ok())?;
    SaliencyRaster::new(sample_id, h, w, v)
}

pub fn load_mask(sample_id: &str, path: &Path) -> Result<RegionMask> {
    let (h, w, v) = read_matrix(path, |s| s.parse::<u8>().ok().and_then(Region::from_code))?;
    RegionMask::new(sample_id, h, w, v)
}

pub fn write_raster(raster: &SaliencyRaster, path: &Path) -> Result<()> {
    write_matrix(path, raster.width, &raster.values)
}

pub fn write_mask(mask: &RegionMask, path: &Path) -> Result<()> {
    let codes: Vec<u8> = mask.labels.iter().map(|r| r.code()).collect();
    write_matrix(path, mask.width, &codes)
}
