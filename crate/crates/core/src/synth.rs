//! Synthetic images and prediction sets with known attributes and metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::attributes::{
    categorize, categorize_env, BackgroundCategory, EnvAttributes, EnvCondition, LightingCategory,
};
use crate::error::{Error, Result};
use crate::fairness::PredictionRecord;
use crate::manifest::{write_manifest, Manifest, SampleRecord, Split};
use crate::rng::{RngStream, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureKind {
    Constant { color: [u8; 3] },
    /// Top half `top`, bottom half `bottom` (the top gets `height / 2` rows).
    TwoTone { top: [u8; 3], bottom: [u8; 3] },
    /// Cells alternate starting with `color_a`; the seed picks a phase offset.
    Checkerboard { cell: u32, color_a: [u8; 3], color_b: [u8; 3] },
    /// Gray `low` left of column `position`, `high` from it on.
    StepEdge { position: u32, low: u8, high: u8 },
    /// Horizontal gray ramp `round(from + (to - from) * x / (W - 1))`.
    Gradient { from: u8, to: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: FixtureKind,
    pub height: u32,
    pub width: u32,
    pub target_class: String,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default)]
    pub seed: u64,
}

fn default_split() -> Split {
    Split::Train
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("fixture {:?}: {m}", self.id)));
        if self.height == 0 || self.width == 0 {
            return bad("empty image".into());
        }
        match self.kind {
            FixtureKind::Checkerboard { cell: 0, .. } => bad("cell size 0".into()),
            FixtureKind::StepEdge { position, .. } if position > self.width => {
                bad(format!("step position {position} beyond width {}", self.width))
            }
            _ => Ok(()),
        }
    }
}

/// Expected attributes. Edge density and background category are only given
/// where the construction forces them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedAttributes {
    pub lighting_score: f64,
    pub lighting_cat: LightingCategory,
    pub edge_density: Option<f64>,
    pub bg_cat: Option<BackgroundCategory>,
}

fn value(c: [u8; 3]) -> u64 {
    u64::from(*c.iter().max().unwrap())
}

fn luma(c: [u8; 3]) -> f64 {
    (0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64).round()
}

fn checker_offset(spec: &FixtureSpec, cell: u32) -> (u32, u32) {
    let mut rng = RngStream::new(spec.seed, 0).stage(Stage::Fixture);
    let period = 2 * u64::from(cell);
    (rng.below(period) as u32, rng.below(period) as u32)
}

/// Number of coordinates in `0..n` whose cell index `(i + off) / cell` is even.
fn even_cells(n: u32, off: u32, cell: u32) -> u64 {
    (0..n).filter(|i| ((i + off) / cell).is_multiple_of(2)).count() as u64
}

fn gradient_value(from: u8, to: u8, x: u32, width: u32) -> u8 {
    if width == 1 {
        return from;
    }
    let v = from as f64 + (to as f64 - from as f64) * x as f64 / (width - 1) as f64;
    v.round() as u8
}

pub fn generate_image(spec: &FixtureSpec) -> Result<(RgbImage, ExpectedAttributes)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let area = u64::from(h) * u64::from(w);
    let gray = |v: u8| Rgb([v, v, v]);
    let min_dim = h.min(w);
    let (img, value_sum, density, bg) = match spec.kind {
        FixtureKind::Constant { color } => (
            RgbImage::from_pixel(w, h, Rgb(color)),
            value(color) * area,
            Some(0.0),
            Some(BackgroundCategory::Simple),
        ),
        FixtureKind::TwoTone { top, bottom } => {
            let split = h / 2;
            let img = RgbImage::from_fn(w, h, |_, y| Rgb(if y < split { top } else { bottom }));
            let sum = (value(top) * u64::from(split) + value(bottom) * u64::from(h - split)) * u64::from(w);
            // at most a two-pixel boundary line
            let bg = (min_dim >= 20).then_some(BackgroundCategory::Simple);
            (img, sum, None, bg)
        }
        FixtureKind::Checkerboard { cell, color_a, color_b } => {
            let (ox, oy) = checker_offset(spec, cell);
            let img = RgbImage::from_fn(w, h, |x, y| {
                let parity = ((x + ox) / cell + (y + oy) / cell) % 2;
                Rgb(if parity == 0 { color_a } else { color_b })
            });
            let (ex, ey) = (even_cells(w, ox, cell), even_cells(h, oy, cell));
            let n_a = ex * ey + (u64::from(w) - ex) * (u64::from(h) - ey);
            let sum = value(color_a) * n_a + value(color_b) * (area - n_a);
            let contrast = (luma(color_a) - luma(color_b)).abs();
            let bg = if contrast == 0.0 {
                Some(BackgroundCategory::Simple)
            } else if contrast >= 128.0 && (5..=12).contains(&cell) && min_dim >= 4 * cell {
                Some(BackgroundCategory::Complex)
            } else if cell >= 24 {
                Some(BackgroundCategory::Simple)
            } else {
                None
            };
            let density = (contrast == 0.0).then_some(0.0);
            (img, sum, density, bg)
        }
        FixtureKind::StepEdge { position, low, high } => {
            let img = RgbImage::from_fn(w, h, |x, _| gray(if x < position { low } else { high }));
            let sum = (u64::from(low) * u64::from(position) + u64::from(high) * u64::from(w - position)) * u64::from(h);
            let bg = (min_dim >= 20).then_some(BackgroundCategory::Simple);
            (img, sum, None, bg)
        }
        FixtureKind::Gradient { from, to } => {
            let img = RgbImage::from_fn(w, h, |x, _| gray(gradient_value(from, to, x, w)));
            let row: u64 = (0..w).map(|x| u64::from(gradient_value(from, to, x, w))).sum();
            let slope = (to as f64 - from as f64).abs() / (w.max(2) - 1) as f64;
            // a gentle ramp never reaches the high threshold
            let bg = (slope <= 10.0).then_some(BackgroundCategory::Simple);
            (img, row * u64::from(h), None, bg)
        }
    };
    let lighting_score = value_sum as f64 / area as f64;
    let (lighting_cat, _) = categorize(lighting_score, 0.0);
    Ok((
        img,
        ExpectedAttributes {
            lighting_score,
            lighting_cat,
            edge_density: density,
            bg_cat: bg,
        },
    ))
}

/// A batch of fixtures with kinds and parameters drawn from the fixture stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBatch {
    pub class: String,
    pub split: Split,
    pub count: usize,
    #[serde(default = "default_side")]
    pub height: u32,
    #[serde(default = "default_side")]
    pub width: u32,
}

fn default_side() -> u32 {
    64
}

/// Input of the `synth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub labels: Vec<String>,
    #[serde(default)]
    pub fixtures: Vec<FixtureSpec>,
    #[serde(default)]
    pub batches: Vec<RandomBatch>,
}

fn random_kind(rng: &mut crate::rng::StageRng, side: u32) -> FixtureKind {
    let dark = rng.coin(0.5);
    let level = |rng: &mut crate::rng::StageRng| -> u8 {
        if dark {
            10 + rng.below(60) as u8
        } else {
            120 + rng.below(120) as u8
        }
    };
    match rng.below(4) {
        0 => FixtureKind::Constant {
            color: [level(rng), level(rng), level(rng)],
        },
        1 => {
            let a = level(rng);
            // contrast >= 128 keeps the checkerboard unambiguously complex
            let b = if a >= 128 { a - 128 } else { a + 128 };
            FixtureKind::Checkerboard {
                cell: 5 + rng.below(u64::from((side / 4).clamp(6, 13) - 5)) as u32,
                color_a: [a; 3],
                color_b: [b; 3],
            }
        }
        2 => {
            let lo = level(rng);
            FixtureKind::StepEdge {
                position: 1 + rng.below(u64::from(side - 1)) as u32,
                low: lo,
                high: lo.saturating_add(rng.below(60) as u8),
            }
        }
        _ => {
            let from = level(rng);
            FixtureKind::Gradient {
                from,
                to: from.saturating_add(rng.below(40) as u8),
            }
        }
    }
}

impl SynthSpec {
    /// Explicit fixtures followed by the expanded batches.
    pub fn expand(&self) -> Result<Vec<FixtureSpec>> {
        let mut out = self.fixtures.clone();
        let mut index = 0u64;
        for batch in &self.batches {
            if !self.labels.contains(&batch.class) {
                return Err(Error::Validation(format!("batch class {:?} is not a declared label", batch.class)));
            }
            for _ in 0..batch.count {
                let mut rng = RngStream::new(self.seed, index).stage(Stage::Fixture);
                let kind = random_kind(&mut rng, batch.height.min(batch.width));
                out.push(FixtureSpec {
                    id: format!("syn{index:05}"),
                    kind,
                    height: batch.height,
                    width: batch.width,
                    target_class: batch.class.clone(),
                    split: batch.split,
                    seed: self.seed.wrapping_add(index),
                });
                index += 1;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureExpectation {
    pub id: String,
    pub target_class: String,
    pub split: Split,
    pub expected: ExpectedAttributes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifest: Manifest,
    pub expectations: Vec<FixtureExpectation>,
    /// One prediction per test-split image, labelled with its target class.
    pub predictions: Vec<PredictionRecord>,
}

/// Writes `images/<id>.png`, `manifest.csv` (+ labels sidecar) and returns
/// what was written.
pub fn write_fixtures(spec: &SynthSpec, out_dir: &Path) -> Result<SynthOutput> {
    let fixtures = spec.expand()?;
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut samples = Vec::with_capacity(fixtures.len());
    let mut expectations = Vec::with_capacity(fixtures.len());
    let mut predictions = Vec::new();
    for f in &fixtures {
        let (img, expected) = generate_image(f)?;
        let rel = Path::new("images").join(format!("{}.png", f.id));
        let path = out_dir.join(&rel);
        img.save(&path).map_err(|e| Error::Encode {
            id: f.id.clone(),
            path: path.clone(),
            message: e.to_string(),
        })?;
        samples.push(SampleRecord::new(f.id.clone(), rel, f.target_class.clone(), f.split));
        if f.split == Split::Test {
            predictions.push(PredictionRecord::new(f.id.clone(), f.target_class.clone(), f.target_class.clone()));
        }
        expectations.push(FixtureExpectation {
            id: f.id.clone(),
            target_class: f.target_class.clone(),
            split: f.split,
            expected,
        });
    }
    let manifest = Manifest::new(spec.labels.clone(), samples)?;
    write_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(SynthOutput {
        manifest,
        expectations,
        predictions,
    })
}

/// One row of a prediction count table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub true_class: String,
    pub pred_class: String,
    pub condition: EnvCondition,
    pub count: u64,
}

/// Metrics computed directly from a count table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedFairness {
    /// `(class, condition) -> value`, `None` where undefined.
    pub dp: BTreeMap<(String, EnvCondition), Option<f64>>,
    pub eo: BTreeMap<(String, EnvCondition), Option<f64>>,
    pub dp_disparity: Option<f64>,
    pub eo_disparity: Option<f64>,
    pub confusion: Vec<Vec<u64>>,
    pub support: BTreeMap<(String, EnvCondition), u64>,
    pub precision: BTreeMap<(String, EnvCondition), Option<f64>>,
}

pub fn synthetic_env(cond: EnvCondition) -> EnvAttributes {
    let l = match cond.lighting {
        LightingCategory::Low => 40.0,
        LightingCategory::High => 170.0,
    };
    let b = match cond.background {
        BackgroundCategory::Simple => 0.05,
        BackgroundCategory::Complex => 0.2,
    };
    categorize_env(l, b)
}

fn expected_from_counts(labels: &[String], counts: &[CountEntry]) -> ExpectedFairness {
    let sum = |f: &dyn Fn(&CountEntry) -> bool| counts.iter().filter(|c| f(c)).map(|c| c.count).sum::<u64>();
    let div = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
    let mut dp = BTreeMap::new();
    let mut eo = BTreeMap::new();
    let mut support = BTreeMap::new();
    let mut precision = BTreeMap::new();
    for y in labels {
        for e in EnvCondition::ALL {
            let in_env = sum(&|c| c.condition == e);
            let pred_y = sum(&|c| c.condition == e && &c.pred_class == y);
            let true_y = sum(&|c| c.condition == e && &c.true_class == y);
            let tp = sum(&|c| c.condition == e && &c.true_class == y && &c.pred_class == y);
            dp.insert((y.clone(), e), div(pred_y, in_env));
            eo.insert((y.clone(), e), div(tp, true_y));
            support.insert((y.clone(), e), true_y);
            precision.insert((y.clone(), e), div(tp, pred_y));
        }
    }
    let spread = |m: &BTreeMap<(String, EnvCondition), Option<f64>>| {
        let vals: Vec<f64> = m.values().flatten().copied().collect();
        if vals.is_empty() {
            None
        } else {
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            Some(hi - lo)
        }
    };
    let confusion = labels
        .iter()
        .map(|t| labels.iter().map(|p| sum(&|c| &c.true_class == t && &c.pred_class == p)).collect())
        .collect();
    ExpectedFairness {
        dp_disparity: spread(&dp),
        eo_disparity: spread(&eo),
        dp,
        eo,
        confusion,
        support,
        precision,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFixture {
    pub manifest: Manifest,
    pub predictions: Vec<PredictionRecord>,
    pub expected: ExpectedFairness,
}

/// Expands a count table into per-sample test records in shuffled order.
pub fn generate_predictions(labels: &[String], counts: &[CountEntry], seed: u64) -> Result<PredictionFixture> {
    let mut samples = Vec::new();
    let mut preds = Vec::new();
    let mut n = 0usize;
    for entry in counts {
        for _ in 0..entry.count {
            let id = format!("p{n:06}");
            samples.push(
                SampleRecord::new(id.clone(), format!("synthetic/{id}.png"), entry.true_class.clone(), Split::Test)
                    .with_env(synthetic_env(entry.condition)),
            );
            preds.push(PredictionRecord::new(id, entry.true_class.clone(), entry.pred_class.clone()));
            n += 1;
        }
    }
    // Fisher-Yates on the fixture stream
    let mut rng = RngStream::new(seed, 0).stage(Stage::Fixture);
    for i in (1..preds.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        preds.swap(i, j);
    }
    Ok(PredictionFixture {
        manifest: Manifest::new(labels.to_vec(), samples)?,
        predictions: preds,
        expected: expected_from_counts(labels, counts),
    })
}

/// Random count table with up to `max_total` samples over `labels` and the
/// four conditions. Some cells are left empty on purpose.
pub fn random_counts(labels: &[String], max_total: u64, seed: u64) -> Vec<CountEntry> {
    let mut rng = RngStream::new(seed, 1).stage(Stage::Fixture);
    let cells = (labels.len() * labels.len() * 4) as u64;
    let total = 1 + rng.below(max_total);
    let mut table = vec![0u64; cells as usize];
    let sparse = rng.coin(0.3);
    for _ in 0..total {
        let mut k = rng.below(cells) as usize;
        // bias toward the diagonal so fixtures look like a classifier
        if rng.coin(0.5) {
            let t = (k / 4) / labels.len();
            let e = k % 4;
            k = (t * labels.len() + t) * 4 + e;
        }
        if sparse && k.is_multiple_of(4) {
            continue;
        }
        table[k] += 1;
    }
    let mut out = Vec::new();
    for (t, tl) in labels.iter().enumerate() {
        for (p, pl) in labels.iter().enumerate() {
            for e in EnvCondition::ALL {
                let count = table[(t * labels.len() + p) * 4 + e.index()];
                if count > 0 {
                    out.push(CountEntry {
                        true_class: tl.clone(),
                        pred_class: pl.clone(),
                        condition: e,
                        count,
                    });
                }
            }
        }
    }
    if out.is_empty() {
        out.push(CountEntry {
            true_class: labels[0].clone(),
            pred_class: labels[0].clone(),
            condition: EnvCondition::ALL[1],
            count: 1,
        });
    }
    out
}
