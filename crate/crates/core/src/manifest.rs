//! Dataset manifest: the list of samples every other stage reads.
//!
//! On disk a manifest is a headered UTF-8 CSV (`id,path,class,split`, plus the
//! optional environment columns `lighting_score,bg_complexity,lighting_cat,bg_cat`
//! and an optional `source_id` provenance column). Label ordering is pinned by a
//! sidecar `<manifest>.labels.json`; without one the label set is the sorted set
//! of distinct class labels.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attributes::{BackgroundCategory, EnvAttributes, LightingCategory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split {other:?}"))),
        }
    }
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub class_label: String,
    pub split: Split,
    /// `None` until attributes have been extracted.
    pub env: Option<EnvAttributes>,
    /// For augmented records, the id of the sample they were derived from.
    pub source_id: Option<String>,
}

impl SampleRecord {
    pub fn new(
        id: impl Into<String>,
        image_path: impl Into<PathBuf>,
        class_label: impl Into<String>,
        split: Split,
    ) -> Self {
        SampleRecord {
            id: id.into(),
            image_path: image_path.into(),
            class_label: class_label.into(),
            split,
            env: None,
            source_id: None,
        }
    }

    pub fn with_env(mut self, env: EnvAttributes) -> Self {
        self.env = Some(env);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// A validated manifest: at least two declared classes, unique ids, and every
/// sample labelled with a declared class.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    labels: Vec<String>,
    samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn new(labels: Vec<String>, samples: Vec<SampleRecord>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Validation("empty label set".into()));
        }
        if labels.len() < 2 {
            return Err(Error::Validation(format!(
                "at least two classes are required, found {}",
                labels.len()
            )));
        }
        let mut seen_labels = HashSet::new();
        for label in &labels {
            if !seen_labels.insert(label.as_str()) {
                return Err(Error::Validation(format!("duplicate class label {label:?}")));
            }
        }
        let mut seen_ids = HashSet::new();
        for s in &samples {
            if s.id.is_empty() {
                return Err(Error::Validation("empty sample id".into()));
            }
            if !seen_ids.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate sample id {:?}", s.id)));
            }
            if !seen_labels.contains(s.class_label.as_str()) {
                return Err(Error::Validation(format!(
                    "sample {:?} has undeclared class {:?}",
                    s.id, s.class_label
                )));
            }
            if let Some(env) = &s.env {
                env.validate()
                    .map_err(|e| Error::Validation(format!("sample {:?}: {e}", s.id)))?;
            }
        }
        Ok(Manifest { labels, samples })
    }

    /// Builds a manifest whose label set is the sorted set of distinct labels.
    pub fn from_samples(samples: Vec<SampleRecord>) -> Result<Self> {
        let labels: BTreeSet<String> = samples.iter().map(|s| s.class_label.clone()).collect();
        Manifest::new(labels.into_iter().collect(), samples)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<SampleRecord>) {
        (self.labels, self.samples)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn split_samples(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for s in &self.samples {
            match s.split {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }

    /// Per-class sample counts `n_y`, in label order. `None` counts every split.
    pub fn class_counts(&self, split: Option<Split>) -> Vec<(String, usize)> {
        let mut counts = vec![0usize; self.labels.len()];
        for s in &self.samples {
            if split.is_some_and(|sp| sp != s.split) {
                continue;
            }
            // label membership is a constructor invariant
            let idx = self.label_index(&s.class_label).expect("declared label");
            counts[idx] += 1;
        }
        self.labels.iter().cloned().zip(counts).collect()
    }

    pub fn has_env(&self) -> bool {
        self.samples.iter().any(|s| s.env.is_some())
    }

    fn has_source_ids(&self) -> bool {
        self.samples.iter().any(|s| s.source_id.is_some())
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    id: String,
    path: String,
    class: String,
    split: String,
    #[serde(default)]
    lighting_score: Option<f64>,
    #[serde(default)]
    bg_complexity: Option<f64>,
    #[serde(default)]
    lighting_cat: Option<String>,
    #[serde(default)]
    bg_cat: Option<String>,
    #[serde(default)]
    source_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelSidecar {
    labels: Vec<String>,
}

/// Path of the label-order sidecar that accompanies a manifest file.
pub fn labels_sidecar_path(manifest_path: &Path) -> PathBuf {
    let mut name = manifest_path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".labels.json");
    manifest_path.with_file_name(name)
}

fn parse_env(row: &RawRow) -> Result<Option<EnvAttributes>> {
    let present = [
        row.lighting_score.is_some(),
        row.bg_complexity.is_some(),
        row.lighting_cat.as_deref().is_some_and(|s| !s.is_empty()),
        row.bg_cat.as_deref().is_some_and(|s| !s.is_empty()),
    ];
    if present.iter().all(|p| !p) {
        return Ok(None);
    }
    if !present.iter().all(|p| *p) {
        return Err(Error::Validation(format!(
            "sample {:?} has partially filled environment columns",
            row.id
        )));
    }
    let lighting_cat: LightingCategory = row.lighting_cat.as_deref().unwrap_or("").parse()?;
    let bg_cat: BackgroundCategory = row.bg_cat.as_deref().unwrap_or("").parse()?;
    Ok(Some(EnvAttributes {
        lighting_score: row.lighting_score.unwrap_or_default(),
        bg_complexity: row.bg_complexity.unwrap_or_default(),
        lighting_cat,
        bg_cat,
    }))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };

    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .clone();
    let mut samples = Vec::new();
    if !(headers.is_empty() || headers.len() == 1 && headers[0].is_empty()) {
        for name in ["id", "path", "class", "split"] {
            if !headers.iter().any(|h| h == name) {
                return Err(parse_err(format!("missing required column {name:?}")));
            }
        }
        for (line, row) in reader.deserialize::<RawRow>().enumerate() {
            let row = row.map_err(|e| parse_err(format!("row {}: {e}", line + 2)))?;
            let split: Split = row.split.parse()?;
            let env = parse_env(&row)?;
            samples.push(SampleRecord {
                id: row.id.clone(),
                image_path: PathBuf::from(&row.path),
                class_label: row.class.clone(),
                split,
                env,
                source_id: row.source_id.filter(|s| !s.is_empty()),
            });
        }
    }

    let sidecar = labels_sidecar_path(path);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let parsed: LabelSidecar = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: sidecar.clone(),
            message: e.to_string(),
        })?;
        Manifest::new(parsed.labels, samples)
    } else {
        Manifest::from_samples(samples)
    }
}

/// Writes the manifest CSV and its label sidecar. Environment columns are
/// emitted when any sample carries attributes, `source_id` when any sample
/// has provenance.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let with_env = manifest.has_env();
    let with_source = manifest.has_source_ids();

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    };

    let mut header = vec!["id", "path", "class", "split"];
    if with_env {
        header.extend(["lighting_score", "bg_complexity", "lighting_cat", "bg_cat"]);
    }
    if with_source {
        header.push("source_id");
    }
    writer.write_record(&header).map_err(csv_err)?;

    for s in &manifest.samples {
        let mut record = vec![
            s.id.clone(),
            s.image_path.to_string_lossy().into_owned(),
            s.class_label.clone(),
            s.split.to_string(),
        ];
        if with_env {
            match &s.env {
                Some(env) => record.extend([
                    env.lighting_score.to_string(),
                    env.bg_complexity.to_string(),
                    env.lighting_cat.to_string(),
                    env.bg_cat.to_string(),
                ]),
                None => record.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        if with_source {
            record.push(s.source_id.clone().unwrap_or_default());
        }
        writer.write_record(&record).map_err(csv_err)?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path, e))?;

    let sidecar = labels_sidecar_path(path);
    let body = serde_json::to_string_pretty(&LabelSidecar {
        labels: manifest.labels.clone(),
    })
    .expect("label list serializes");
    std::fs::write(&sidecar, body + "\n").map_err(|e| Error::io(&sidecar, e))?;
    Ok(())
}
