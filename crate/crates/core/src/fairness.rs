//! Intersectional fairness evaluation of classifier predictions.
//!
//! For every class `y` and joint environment condition `e`:
//!
//! * demographic parity `DP(y,e) = P(ŷ = y | e)`
//! * equal opportunity `EO(y,e) = TP / (TP + FN)` within `(y, e)`
//!
//! Disparities are `max - min` over the defined cells of each table. Cells
//! with no support are undefined: they are listed separately and never enter
//! an extremum.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attributes::{BackgroundCategory, EnvCondition, LightingCategory};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Split};

pub const DEFAULT_BIAS_THRESHOLD: f64 = 0.15;
const SCORE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub true_class: String,
    pub predicted_class: String,
    /// Class probabilities in manifest label order.
    pub scores: Option<Vec<f64>>,
}

impl PredictionRecord {
    pub fn new(sample_id: impl Into<String>, true_class: impl Into<String>, predicted_class: impl Into<String>) -> Self {
        PredictionRecord {
            sample_id: sample_id.into(),
            true_class: true_class.into(),
            predicted_class: predicted_class.into(),
            scores: None,
        }
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| *s > b) {
            best = Some((i, *s));
        }
    }
    best.map(|(i, _)| i)
}

fn validate_prediction(p: &PredictionRecord, labels: &[String]) -> Result<(usize, usize)> {
    let index = |name: &str, role: &str| {
        labels.iter().position(|l| l == name).ok_or_else(|| {
            Error::Validation(format!("prediction {:?}: unknown {role} {name:?}", p.sample_id))
        })
    };
    let t = index(&p.true_class, "true class")?;
    let y = index(&p.predicted_class, "predicted class")?;
    if let Some(scores) = &p.scores {
        if scores.len() != labels.len() {
            return Err(Error::Validation(format!(
                "prediction {:?}: {} scores for {} classes",
                p.sample_id,
                scores.len(),
                labels.len()
            )));
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "prediction {:?}: scores sum to {sum}",
                p.sample_id
            )));
        }
        if argmax(scores) != Some(y) {
            return Err(Error::Validation(format!(
                "prediction {:?}: predicted class {:?} is not the argmax of its scores",
                p.sample_id, p.predicted_class
            )));
        }
    }
    Ok((t, y))
}

/// A DP or EO table entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub class_label: String,
    pub lighting: LightingCategory,
    pub background: BackgroundCategory,
    pub numerator: u64,
    pub denominator: u64,
    /// `None` when the denominator is zero.
    pub value: Option<f64>,
}

/// Class marginal of a rate (all environments pooled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRate {
    pub class_label: String,
    pub numerator: u64,
    pub denominator: u64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub class_label: String,
    /// Absent for per-class cells.
    pub lighting: Option<LightingCategory>,
    pub background: Option<BackgroundCategory>,
    pub support: u64,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMetric {
    DemographicParity,
    EqualOpportunity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasFlag {
    pub metric: FairnessMetric,
    pub disparity: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndefinedCell {
    pub table: String,
    pub class_label: String,
    pub lighting: LightingCategory,
    pub background: BackgroundCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub labels: Vec<String>,
    pub n_samples: u64,
    pub overall_accuracy: f64,
    pub dp_table: Vec<RateCell>,
    pub eo_table: Vec<RateCell>,
    pub dp_disparity: Option<f64>,
    pub eo_disparity: Option<f64>,
    pub dp_by_class: Vec<ClassRate>,
    pub eo_by_class: Vec<ClassRate>,
    pub per_intersection: Vec<MetricCell>,
    pub per_class: Vec<MetricCell>,
    /// `confusion[i][j]` = samples of true class `i` predicted as `j`.
    pub confusion: Vec<Vec<u64>>,
    pub undefined_cells: Vec<UndefinedCell>,
    pub threshold: f64,
    pub flags: Vec<BiasFlag>,
    pub notes: Vec<String>,
}

impl FairnessReport {
    pub fn accuracy_by_key(&self) -> HashMap<crate::intersections::IntersectionKey, f64> {
        self.per_intersection
            .iter()
            .filter_map(|c| {
                let cond = EnvCondition::new(c.lighting?, c.background?);
                Some((
                    crate::intersections::IntersectionKey::new(c.class_label.clone(), cond),
                    c.accuracy?,
                ))
            })
            .collect()
    }
}

pub fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn f1_score(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

/// `max - min` over the defined values; `None` when nothing is defined.
pub fn value_range<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for v in values.into_iter().flatten() {
        any = true;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    any.then_some(hi - lo)
}

pub fn confusion_matrix(preds: &[PredictionRecord], labels: &[String]) -> Result<Vec<Vec<u64>>> {
    let mut m = vec![vec![0u64; labels.len()]; labels.len()];
    for p in preds {
        let (t, y) = validate_prediction(p, labels)?;
        m[t][y] += 1;
    }
    Ok(m)
}

/// `(before - after) / before`.
pub fn disparity_reduction(before: f64, after: f64) -> Result<f64> {
    if before <= 0.0 || !before.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "disparity before must be positive, got {before}"
        )));
    }
    Ok((before - after) / before)
}

/// Spread of accuracy over the defined cells.
pub fn accuracy_range(cells: &[MetricCell]) -> Result<f64> {
    value_range(cells.iter().map(|c| c.accuracy))
        .ok_or_else(|| Error::Insufficient("no cell has a defined accuracy".into()))
}

/// Flags each disparity strictly greater than `threshold`.
pub fn flag_bias(report: &FairnessReport, threshold: f64) -> Vec<BiasFlag> {
    [
        (FairnessMetric::DemographicParity, report.dp_disparity),
        (FairnessMetric::EqualOpportunity, report.eo_disparity),
    ]
    .into_iter()
    .filter_map(|(metric, d)| {
        let d = d?;
        (d > threshold).then_some(BiasFlag {
            metric,
            disparity: d,
            threshold,
        })
    })
    .collect()
}

/// Raw tallies the report is assembled from. `true_pred_env[t][y][e]` counts
/// samples of true class `t` predicted `y` under condition `e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub true_pred_env: Vec<Vec<[u64; 4]>>,
}

impl Tally {
    pub fn new(classes: usize) -> Self {
        Tally {
            true_pred_env: vec![vec![[0; 4]; classes]; classes],
        }
    }

    pub fn add(&mut self, true_idx: usize, pred_idx: usize, cond: EnvCondition, n: u64) {
        self.true_pred_env[true_idx][pred_idx][cond.index()] += n;
    }
}

const NOTES: [&str; 3] = [
    "per-intersection accuracy is the fraction of the cell's samples classified correctly; per-class accuracy is one-vs-rest (TP + TN) / N",
    "cells with zero support are undefined and excluded from disparities",
    "bias flags use a strict comparison: a disparity equal to or below the threshold is not flagged",
];

/// Builds the full report from a tally.
pub fn report_from_tally(labels: &[String], tally: &Tally, threshold: f64) -> FairnessReport {
    let c = labels.len();
    let t = &tally.true_pred_env;
    let n_env: Vec<u64> = (0..4)
        .map(|e| (0..c).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| t[i][j][e]).sum())
        .collect();
    let n_total: u64 = n_env.iter().sum();
    let support = |y: usize, e: usize| (0..c).map(|j| t[y][j][e]).sum::<u64>();
    let predicted = |y: usize, e: usize| (0..c).map(|i| t[i][y][e]).sum::<u64>();

    let mut dp_table = Vec::with_capacity(4 * c);
    let mut eo_table = Vec::with_capacity(4 * c);
    let mut per_intersection = Vec::with_capacity(4 * c);
    let mut undefined_cells = Vec::new();
    for (y, label) in labels.iter().enumerate() {
        for cond in EnvCondition::ALL {
            let e = cond.index();
            let tp = t[y][y][e];
            let sup = support(y, e);
            let pred = predicted(y, e);
            let dp = RateCell {
                class_label: label.clone(),
                lighting: cond.lighting,
                background: cond.background,
                numerator: pred,
                denominator: n_env[e],
                value: ratio(pred, n_env[e]),
            };
            let eo = RateCell {
                numerator: tp,
                denominator: sup,
                value: ratio(tp, sup),
                ..dp.clone()
            };
            for (name, cell) in [("dp", &dp), ("eo", &eo)] {
                if cell.value.is_none() {
                    undefined_cells.push(UndefinedCell {
                        table: name.into(),
                        class_label: label.clone(),
                        lighting: cond.lighting,
                        background: cond.background,
                    });
                }
            }
            let precision = ratio(tp, pred);
            let recall = ratio(tp, sup);
            per_intersection.push(MetricCell {
                class_label: label.clone(),
                lighting: Some(cond.lighting),
                background: Some(cond.background),
                support: sup,
                accuracy: recall,
                precision,
                recall,
                f1: f1_score(precision, recall),
            });
            dp_table.push(dp);
            eo_table.push(eo);
        }
    }

    let confusion: Vec<Vec<u64>> = (0..c)
        .map(|i| (0..c).map(|j| t[i][j].iter().sum()).collect())
        .collect();
    let correct: u64 = (0..c).map(|i| confusion[i][i]).sum();

    let mut per_class = Vec::with_capacity(c);
    let mut dp_by_class = Vec::with_capacity(c);
    let mut eo_by_class = Vec::with_capacity(c);
    for (y, label) in labels.iter().enumerate() {
        let tp = confusion[y][y];
        let sup: u64 = confusion[y].iter().sum();
        let pred: u64 = (0..c).map(|i| confusion[i][y]).sum();
        // one-vs-rest: everything not involving y on either side is a true negative
        let tn = n_total + tp - sup - pred;
        let precision = ratio(tp, pred);
        let recall = ratio(tp, sup);
        per_class.push(MetricCell {
            class_label: label.clone(),
            lighting: None,
            background: None,
            support: sup,
            accuracy: ratio(tp + tn, n_total),
            precision,
            recall,
            f1: f1_score(precision, recall),
        });
        dp_by_class.push(ClassRate {
            class_label: label.clone(),
            numerator: pred,
            denominator: n_total,
            value: ratio(pred, n_total),
        });
        eo_by_class.push(ClassRate {
            class_label: label.clone(),
            numerator: tp,
            denominator: sup,
            value: ratio(tp, sup),
        });
    }

    let mut report = FairnessReport {
        labels: labels.to_vec(),
        n_samples: n_total,
        overall_accuracy: ratio(correct, n_total).unwrap_or(0.0),
        dp_disparity: value_range(dp_table.iter().map(|c| c.value)),
        eo_disparity: value_range(eo_table.iter().map(|c| c.value)),
        dp_table,
        eo_table,
        dp_by_class,
        eo_by_class,
        per_intersection,
        per_class,
        confusion,
        undefined_cells,
        threshold,
        flags: Vec::new(),
        notes: NOTES.iter().map(|s| s.to_string()).collect(),
    };
    report.flags = flag_bias(&report, threshold);
    report
}

/// Evaluates predictions against the samples of `split`.
pub fn evaluate(
    preds: &[PredictionRecord],
    manifest: &Manifest,
    split: Split,
    threshold: f64,
) -> Result<FairnessReport> {
    if preds.is_empty() {
        return Err(Error::Insufficient(format!(
            "no predictions overlap the {split} split"
        )));
    }
    let by_id: HashMap<&str, _> = manifest
        .split_samples(split)
        .map(|s| (s.id.as_str(), s))
        .collect();
    let labels = manifest.labels();
    let mut seen = HashSet::new();
    let mut tally = Tally::new(labels.len());
    let mut missing = Vec::new();
    for p in preds {
        let sample = by_id
            .get(p.sample_id.as_str())
            .ok_or_else(|| Error::UnknownSample(p.sample_id.clone()))?;
        if !seen.insert(p.sample_id.as_str()) {
            return Err(Error::DuplicatePrediction(p.sample_id.clone()));
        }
        if p.true_class != sample.class_label {
            return Err(Error::Validation(format!(
                "prediction {:?}: true class {:?} disagrees with manifest class {:?}",
                p.sample_id, p.true_class, sample.class_label
            )));
        }
        let (t, y) = validate_prediction(p, labels)?;
        match &sample.env {
            Some(env) => tally.add(t, y, env.condition(), 1),
            None => missing.push(p.sample_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingEnv(missing));
    }
    Ok(report_from_tally(labels, &tally, threshold))
}

/// Reads `id,true_class,pred_class[,p_1..p_C]`.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let expected = ["id", "true_class", "pred_class"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected.iter().copied()) {
        return Err(parse_err("header must start with id,true_class,pred_class".into()));
    }
    let n_scores = headers.len() - 3;
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(format!("row {}: {e}", line + 2)))?;
        let scores = if n_scores > 0 {
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().skip(3).map(|s| s.trim().parse::<f64>()).collect();
            Some(parsed.map_err(|e| parse_err(format!("row {}: {e}", line + 2)))?)
        } else {
            None
        };
        out.push(PredictionRecord {
            sample_id: record[0].to_string(),
            true_class: record[1].to_string(),
            predicted_class: record[2].to_string(),
            scores,
        });
    }
    Ok(out)
}

pub fn write_predictions(preds: &[PredictionRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let n_scores = preds.first().and_then(|p| p.scores.as_ref()).map_or(0, Vec::len);
    let mut header: Vec<String> = ["id", "true_class", "pred_class"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n_scores).map(|i| format!("p_{i}")));
    let io = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(&header).map_err(io)?;
    for p in preds {
        let mut row = vec![p.sample_id.clone(), p.true_class.clone(), p.predicted_class.clone()];
        if let Some(s) = &p.scores {
            row.extend(s.iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
