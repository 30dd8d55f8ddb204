//! Class × environment intersections, their representation, and per-class
//! augmentation weights `w_y = N / (n_y · C)`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attributes::{BackgroundCategory, EnvCondition, LightingCategory};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, Split};
use crate::stats::{self, Correlation};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntersectionKey {
    pub class_label: String,
    pub lighting: LightingCategory,
    pub background: BackgroundCategory,
}

impl IntersectionKey {
    pub fn new(class_label: impl Into<String>, condition: EnvCondition) -> Self {
        IntersectionKey {
            class_label: class_label.into(),
            lighting: condition.lighting,
            background: condition.background,
        }
    }

    pub fn condition(&self) -> EnvCondition {
        EnvCondition::new(self.lighting, self.background)
    }

    /// All `C × 2 × 2` keys in label order, then [`EnvCondition::ALL`] order.
    pub fn all(labels: &[String]) -> Vec<IntersectionKey> {
        labels
            .iter()
            .flat_map(|l| EnvCondition::ALL.iter().map(move |c| IntersectionKey::new(l.clone(), *c)))
            .collect()
    }
}

impl fmt::Display for IntersectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} + {} light + {} bg",
            self.class_label, self.lighting, self.background
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionStats {
    pub key: IntersectionKey,
    pub count: usize,
    pub proportion: f64,
}

/// Returns the ids of samples in `split` that have no attributes yet.
pub(crate) fn missing_env(manifest: &Manifest, split: Split) -> Vec<String> {
    manifest
        .split_samples(split)
        .filter(|s| s.env.is_none())
        .map(|s| s.id.clone())
        .collect()
}

/// One entry per key (zero-count cells included), proportions relative to the
/// split size.
pub fn enumerate_intersections(manifest: &Manifest, split: Split) -> Result<Vec<IntersectionStats>> {
    let missing = missing_env(manifest, split);
    if !missing.is_empty() {
        return Err(Error::MissingEnv(missing));
    }
    let total = manifest.split_counts().get(split);
    if total == 0 {
        return Err(Error::Insufficient(format!("split {split} has no samples")));
    }
    let keys = IntersectionKey::all(manifest.labels());
    let mut counts = vec![0usize; keys.len()];
    for s in manifest.split_samples(split) {
        let class = manifest.label_index(&s.class_label).expect("declared label");
        let cond = s.env.as_ref().expect("checked above").condition();
        counts[class * EnvCondition::ALL.len() + cond.index()] += 1;
    }
    Ok(keys
        .into_iter()
        .zip(counts)
        .map(|(key, count)| IntersectionStats {
            key,
            count,
            proportion: count as f64 / total as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeight {
    pub class_label: String,
    pub count: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub total: usize,
    pub entries: Vec<ClassWeight>,
}

impl ClassWeights {
    pub fn get(&self, class_label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.class_label == class_label)
            .map(|e| e.weight)
    }

    pub fn max_weight(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.weight)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn num_classes(&self) -> usize {
        self.entries.len()
    }

    /// Every class gets the same weight `w` (emulates uniform augmentation).
    pub fn uniform(counts: &[(String, usize)], weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidArgument(format!("uniform weight must be positive, got {weight}")));
        }
        Ok(ClassWeights {
            total: counts.iter().map(|(_, n)| n).sum(),
            entries: counts
                .iter()
                .map(|(l, n)| ClassWeight {
                    class_label: l.clone(),
                    count: *n,
                    weight,
                })
                .collect(),
        })
    }
}

/// `w_y = N / (n_y · C)` over the given per-class counts.
pub fn class_weights_from_counts(counts: &[(String, usize)]) -> Result<ClassWeights> {
    if counts.is_empty() {
        return Err(Error::Validation("empty label set".into()));
    }
    if let Some((label, _)) = counts.iter().find(|(_, n)| *n == 0) {
        return Err(Error::EmptyClass(label.clone()));
    }
    let total: usize = counts.iter().map(|(_, n)| n).sum();
    let classes = counts.len() as f64;
    Ok(ClassWeights {
        total,
        entries: counts
            .iter()
            .map(|(label, n)| ClassWeight {
                class_label: label.clone(),
                count: *n,
                weight: total as f64 / (*n as f64 * classes),
            })
            .collect(),
    })
}

pub fn compute_class_weights(manifest: &Manifest, split: Split) -> Result<ClassWeights> {
    class_weights_from_counts(&manifest.class_counts(Some(split)))
}

/// Pearson correlation between intersection proportion and accuracy. Cells
/// with zero count or without an accuracy entry are left out.
pub fn representation_correlation(
    stats: &[IntersectionStats],
    accuracy_by_key: &HashMap<IntersectionKey, f64>,
) -> Result<Correlation> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = stats
        .iter()
        .filter(|s| s.count > 0)
        .filter_map(|s| accuracy_by_key.get(&s.key).map(|a| (s.proportion, *a)))
        .unzip();
    stats::pearson(&xs, &ys)
}
