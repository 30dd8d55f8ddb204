use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use interbias_core::attributes::{
    extract_all, resolve_path, EnvCondition, ExtractOptions, FailurePolicy,
};
use interbias_core::attribution::{
    condition_similarity, env_attribution_share, load_mask, load_raster, mass_split, SaliencyRaster,
};
use interbias_core::augment::{augment_dataset, AugmentConfig, ContrastPivot};
use interbias_core::canny::CannyParams;
use interbias_core::compare::{compare, Comparison, PairBy};
use interbias_core::fairness::{evaluate, load_predictions, write_predictions, FairnessReport};
use interbias_core::intersections::{
    class_weights_from_counts, enumerate_intersections, representation_correlation, ClassWeight,
    ClassWeights, IntersectionKey,
};
use interbias_core::manifest::{load_manifest, write_manifest, Manifest, SampleRecord, Split};
use interbias_core::run_config::RunConfig;
use interbias_core::stats;
use interbias_core::synth::{write_fixtures, SynthSpec};

use crate::output::{ensure_dir, num, opt, write_csv, write_json};
use crate::{
    AttributionArgs, AugmentArgs, Cli, Command, CompareArgs, EvaluateArgs, ExtractArgs, PairArg,
    PivotArg, StatsArgs, SynthArgs, WeightsArgs,
};

const TOOL: &str = "interbias";

fn config(sub: &str) -> RunConfig {
    RunConfig::new(TOOL, env!("CARGO_PKG_VERSION"), sub)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::ExtractAttrs(a) => extract(a),
        Command::Stats(a) => stats_cmd(a),
        Command::Weights(a) => weights(a),
        Command::Augment(a) => augment(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Attribution(a) => attribution(a),
        Command::Synth(a) => synth(a),
    }
}

fn split(s: &str) -> Result<Split> {
    s.parse::<Split>().map_err(|e| anyhow!(e))
}

fn open_manifest(path: &Path) -> Result<Manifest> {
    load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))
}

/// Relative image paths in a manifest resolve against its directory.
fn manifest_root(path: &Path) -> Result<PathBuf> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    parent
        .canonicalize()
        .with_context(|| format!("resolving {}", parent.display()))
}

fn with_absolute_paths(m: Manifest, root: &Path) -> Result<Manifest> {
    let (labels, samples) = m.into_parts();
    let samples = samples
        .into_iter()
        .map(|s| {
            let image_path = resolve_path(root, &s);
            SampleRecord { image_path, ..s }
        })
        .collect();
    Ok(Manifest::new(labels, samples)?)
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let m = open_manifest(&a.manifest)?;
    let root = manifest_root(&a.manifest)?;
    let opts = ExtractOptions {
        canny: CannyParams {
            sigma: a.canny.canny_sigma,
            kernel_size: 5,
            low_threshold: a.canny.canny_low,
            high_threshold: a.canny.canny_high,
        },
        resize_first: a.canny.resize_first,
    };
    let policy = if a.skip_failures {
        FailurePolicy::SkipAndReport
    } else {
        FailurePolicy::FailFast
    };
    let outcome = extract_all(&m, &root, &opts, policy)?;
    let rc = config("extract-attrs")
        .flag("manifest", &a.manifest)
        .flag("out", &a.out)
        .flag("canny", opts.canny)
        .flag("resize_first", opts.resize_first)
        .flag("skip_failures", a.skip_failures)
        .input(&a.manifest)?;

    let mut by_condition: BTreeMap<String, usize> = BTreeMap::new();
    for s in outcome.manifest.samples() {
        if let Some(env) = &s.env {
            *by_condition.entry(env.condition().to_string()).or_default() += 1;
        }
    }
    ensure_dir(&a.out)?;
    let annotated = with_absolute_paths(outcome.manifest, &root)?;
    write_manifest(&annotated, &a.out.join("manifest.csv"))?;
    write_json(
        &a.out.join("extract_report.json"),
        &json!({
            "run_config": rc,
            "samples": annotated.len(),
            "by_condition": by_condition,
            "failures": outcome.failures,
        }),
    )
}

fn stats_cmd(a: &StatsArgs) -> Result<()> {
    let m = open_manifest(&a.manifest)?;
    let sp = split(&a.split)?;
    let cells = enumerate_intersections(&m, sp)?;
    let mut rc = config("stats")
        .flag("manifest", &a.manifest)
        .flag("out", &a.out)
        .flag("split", sp)
        .flag("accuracy_report", &a.accuracy_report)
        .flag("plot_data", &a.plot_data)
        .input(&a.manifest)?;

    let correlation = match &a.accuracy_report {
        Some(path) => {
            rc = rc.input(path)?;
            let report = read_report(path)?;
            Some(representation_correlation(&cells, &report.accuracy_by_key())?)
        }
        None => None,
    };
    let class_counts = m.class_counts(Some(sp));
    let total: usize = class_counts.iter().map(|(_, n)| n).sum();

    ensure_dir(&a.out)?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.key.class_label.clone(),
                c.key.lighting.to_string(),
                c.key.background.to_string(),
                c.count.to_string(),
                num(c.proportion),
            ]
        })
        .collect();
    let header = ["class", "lighting", "background", "count", "proportion"];
    write_csv(&a.out.join("intersections.csv"), &header, &rows)?;
    write_json(
        &a.out.join("intersections.json"),
        &json!({
            "run_config": rc,
            "split": sp,
            "total": total,
            "cells": cells,
            "representation_accuracy_correlation": correlation,
        }),
    )?;

    if let Some(dir) = &a.plot_data {
        ensure_dir(dir)?;
        let class_rows: Vec<Vec<String>> = class_counts
            .iter()
            .map(|(l, n)| vec![l.clone(), n.to_string()])
            .collect();
        write_csv(&dir.join("fig1_class_distribution.csv"), &["class", "count"], &class_rows)?;
        write_csv(&dir.join("fig2_intersections.csv"), &header, &rows)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct WeightEntry {
    n: usize,
    w: f64,
}

#[derive(Deserialize)]
struct WeightsFile {
    weights: BTreeMap<String, WeightEntry>,
}

fn weights(a: &WeightsArgs) -> Result<()> {
    let m = open_manifest(&a.manifest)?;
    let sp = split(&a.split)?;
    let counts = m.class_counts(Some(sp));
    let (w, formula) = match a.uniform_w {
        Some(u) => (ClassWeights::uniform(&counts, u)?, format!("w_y = {u} for every class")),
        None => (class_weights_from_counts(&counts)?, "w_y = N / (n_y * C)".to_string()),
    };
    let rc = config("weights")
        .flag("manifest", &a.manifest)
        .flag("out", &a.out)
        .flag("split", sp)
        .flag("uniform_w", a.uniform_w)
        .input(&a.manifest)?;
    let table: BTreeMap<&str, WeightEntry> = w
        .entries
        .iter()
        .map(|e| (e.class_label.as_str(), WeightEntry { n: e.count, w: e.weight }))
        .collect();
    ensure_dir(&a.out)?;
    let rows: Vec<Vec<String>> = w
        .entries
        .iter()
        .map(|e| vec![e.class_label.clone(), e.count.to_string(), num(e.weight)])
        .collect();
    write_csv(&a.out.join("weights.csv"), &["class", "n", "w"], &rows)?;
    write_json(
        &a.out.join("weights.json"),
        &json!({
            "run_config": rc,
            "formula": formula,
            "total": w.total,
            "classes": w.num_classes(),
            "weights": table,
            "note": "weights are the formula evaluated on these counts; published weight tables for the same counts may not match it, so compare formulas before comparing numbers",
        }),
    )
}

fn read_weights(path: &Path, labels: &[String]) -> Result<ClassWeights> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: WeightsFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut entries = Vec::with_capacity(labels.len());
    for l in labels {
        let e = file
            .weights
            .get(l)
            .ok_or_else(|| anyhow!("{} has no weight for class {l:?}", path.display()))?;
        entries.push(ClassWeight {
            class_label: l.clone(),
            count: e.n,
            weight: e.w,
        });
    }
    Ok(ClassWeights {
        total: entries.iter().map(|e| e.count).sum(),
        entries,
    })
}

fn augment(a: &AugmentArgs) -> Result<()> {
    let m = open_manifest(&a.manifest)?;
    let root = manifest_root(&a.manifest)?;
    let w = read_weights(&a.weights, m.labels())?;
    let cfg = AugmentConfig {
        master_seed: a.seed,
        flip: !a.no_flip,
        contrast_pivot: match a.contrast_pivot {
            PivotArg::Mean => ContrastPivot::Mean,
            PivotArg::Mid => ContrastPivot::Mid,
        },
    };
    let rc = config("augment")
        .flag("manifest", &a.manifest)
        .flag("weights", &a.weights)
        .flag("out", &a.out)
        .flag("no_flip", a.no_flip)
        .flag("contrast_pivot", cfg.contrast_pivot)
        .seed(a.seed)
        .input(&a.manifest)?
        .input(&a.weights)?;
    let outcome = augment_dataset(&m, &root, &w, &cfg, &a.out)?;
    write_manifest(&outcome.manifest, &a.out.join("manifest.csv"))?;
    write_json(
        &a.out.join("augment_records.json"),
        &json!({
            "run_config": rc,
            "conventions": cfg.describe(),
            "weights": w,
            "records": outcome.records,
        }),
    )?;
    write_json(&a.out.join("run_config.json"), &rc)
}

fn read_report(path: &Path) -> Result<FairnessReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let body = v.get("report").cloned().unwrap_or(v);
    serde_json::from_value(body).with_context(|| format!("{} is not a fairness report", path.display()))
}

fn rate_rows(cells: &[interbias_core::fairness::RateCell]) -> Vec<Vec<String>> {
    cells
        .iter()
        .map(|c| {
            vec![
                c.class_label.clone(),
                c.lighting.to_string(),
                c.background.to_string(),
                c.numerator.to_string(),
                c.denominator.to_string(),
                opt(c.value),
            ]
        })
        .collect()
}

fn metric_rows(cells: &[interbias_core::fairness::MetricCell]) -> Vec<Vec<String>> {
    cells
        .iter()
        .map(|c| {
            vec![
                c.class_label.clone(),
                c.lighting.map(|l| l.to_string()).unwrap_or_default(),
                c.background.map(|b| b.to_string()).unwrap_or_default(),
                c.support.to_string(),
                opt(c.accuracy),
                opt(c.precision),
                opt(c.recall),
                opt(c.f1),
            ]
        })
        .collect()
}

fn confusion_rows(r: &FairnessReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, t) in r.labels.iter().enumerate() {
        for (j, p) in r.labels.iter().enumerate() {
            rows.push(vec![t.clone(), p.clone(), r.confusion[i][j].to_string()]);
        }
    }
    rows
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let m = open_manifest(&a.manifest)?;
    let sp = split(&a.split)?;
    let preds = load_predictions(&a.predictions)?;
    let report = evaluate(&preds, &m, sp, a.threshold)?;
    let rc = config("evaluate")
        .flag("manifest", &a.manifest)
        .flag("predictions", &a.predictions)
        .flag("out", &a.out)
        .flag("split", sp)
        .flag("threshold", a.threshold)
        .flag("plot_data", &a.plot_data)
        .input(&a.manifest)?
        .input(&a.predictions)?;

    ensure_dir(&a.out)?;
    let rate_header = ["class", "lighting", "background", "numerator", "denominator", "value"];
    let metric_header = ["class", "lighting", "background", "support", "accuracy", "precision", "recall", "f1"];
    write_csv(&a.out.join("dp_table.csv"), &rate_header, &rate_rows(&report.dp_table))?;
    write_csv(&a.out.join("eo_table.csv"), &rate_header, &rate_rows(&report.eo_table))?;
    write_csv(&a.out.join("per_intersection.csv"), &metric_header, &metric_rows(&report.per_intersection))?;
    write_csv(&a.out.join("per_class.csv"), &metric_header, &metric_rows(&report.per_class))?;
    write_csv(&a.out.join("confusion.csv"), &["true_class", "pred_class", "count"], &confusion_rows(&report))?;

    if let Some(dir) = &a.plot_data {
        ensure_dir(dir)?;
        let fig4: Vec<Vec<String>> = report
            .per_class
            .iter()
            .map(|c| vec![c.class_label.clone(), opt(c.accuracy), opt(c.f1), opt(c.precision), opt(c.recall)])
            .collect();
        write_csv(&dir.join("fig4_per_class.csv"), &["class", "accuracy", "f1", "precision", "recall"], &fig4)?;
        let mut fig5 = Vec::new();
        for (name, by_class, disparity) in [
            ("dp", &report.dp_by_class, report.dp_disparity),
            ("eo", &report.eo_by_class, report.eo_disparity),
        ] {
            for c in by_class {
                fig5.push(vec![name.to_string(), c.class_label.clone(), opt(c.value), opt(disparity)]);
            }
        }
        write_csv(&dir.join("fig5_fairness.csv"), &["metric", "class", "value", "disparity"], &fig5)?;
        write_csv(&dir.join("fig6_confusion.csv"), &["true_class", "pred_class", "count"], &confusion_rows(&report))?;
    }
    write_json(&a.out.join("report.json"), &json!({ "run_config": rc, "report": report }))
}

fn compare_cmd(a: &CompareArgs) -> Result<()> {
    let (base_paths, treat_paths) = match (a.pair.len(), a.baseline.is_empty() && a.treatment.is_empty()) {
        (2, true) => (vec![a.pair[0].clone()], vec![a.pair[1].clone()]),
        (0, false) => (a.baseline.clone(), a.treatment.clone()),
        _ => bail!("give either two report paths or --baseline/--treatment lists"),
    };
    let load = |paths: &[PathBuf]| paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>();
    let (base, treat) = (load(&base_paths)?, load(&treat_paths)?);
    let pair_by = match a.pair_by {
        PairArg::Runs => PairBy::Runs,
        PairArg::Conditions => PairBy::Conditions,
    };
    let c: Comparison = compare(&base, &treat, pair_by)?;
    let mut rc = config("compare")
        .flag("baseline", &base_paths)
        .flag("treatment", &treat_paths)
        .flag("out", &a.out)
        .flag("pair_by", pair_by);
    for p in base_paths.iter().chain(&treat_paths) {
        rc = rc.input(p)?;
    }
    ensure_dir(&a.out)?;
    let rows: Vec<Vec<String>> = c
        .rows
        .iter()
        .map(|r| {
            vec![
                r.metric.clone(),
                opt(r.baseline_mean),
                opt(r.baseline_std),
                opt(r.treatment_mean),
                opt(r.treatment_std),
                opt(r.delta),
                opt(r.t_statistic),
                r.dof.map(|d| d.to_string()).unwrap_or_default(),
                opt(r.p_value),
                opt(r.reduction),
            ]
        })
        .collect();
    write_csv(
        &a.out.join("comparison.csv"),
        &[
            "metric",
            "baseline_mean",
            "baseline_std",
            "treatment_mean",
            "treatment_std",
            "delta",
            "t",
            "dof",
            "p_value",
            "reduction",
        ],
        &rows,
    )?;
    write_json(&a.out.join("comparison.json"), &json!({ "run_config": rc, "comparison": c }))
}

#[derive(Serialize)]
struct GroupSummary {
    class: String,
    lighting: String,
    background: String,
    rasters: usize,
    with_mask: usize,
    object: Option<f64>,
    background_share: Option<f64>,
    transition: Option<f64>,
}

#[derive(Serialize)]
struct Similarity {
    class: Option<String>,
    axis: &'static str,
    value: f64,
}

fn attribution(a: &AttributionArgs) -> Result<()> {
    let m = open_manifest(&a.manifest)?;
    let sp = split(&a.split)?;
    let mut rasters: Vec<(&SampleRecord, SaliencyRaster)> = Vec::new();
    let mut missing_rasters = Vec::new();
    let mut missing_masks = Vec::new();
    let mut groups: BTreeMap<IntersectionKey, (usize, Vec<[f64; 3]>)> = BTreeMap::new();
    for s in m.split_samples(sp) {
        let env = s
            .env
            .ok_or_else(|| anyhow!("sample {:?} has no environment attributes", s.id))?;
        let rpath = a.rasters.join(format!("{}.csv", s.id));
        if !rpath.exists() {
            missing_rasters.push(s.id.clone());
            continue;
        }
        let raster = load_raster(&s.id, &rpath)?;
        let entry = groups
            .entry(IntersectionKey::new(s.class_label.clone(), env.condition()))
            .or_default();
        entry.0 += 1;
        let mpath = a.masks.join(format!("{}.csv", s.id));
        if mpath.exists() {
            let split = mass_split(&raster, &load_mask(&s.id, &mpath)?)?;
            entry.1.push([split.object, split.background, split.transition]);
        } else {
            missing_masks.push(s.id.clone());
        }
        rasters.push((s, raster));
    }
    if rasters.is_empty() {
        bail!("no rasters found in {} for the {sp} split", a.rasters.display());
    }

    let mean_of = |v: &[[f64; 3]], k: usize| -> Option<f64> {
        stats::mean(&v.iter().map(|x| x[k]).collect::<Vec<_>>()).ok()
    };
    let summaries: Vec<GroupSummary> = groups
        .iter()
        .map(|(key, (n, splits))| GroupSummary {
            class: key.class_label.clone(),
            lighting: key.lighting.to_string(),
            background: key.background.to_string(),
            rasters: *n,
            with_mask: splits.len(),
            object: mean_of(splits, 0),
            background_share: mean_of(splits, 1),
            transition: mean_of(splits, 2),
        })
        .collect();

    // cross-condition similarity, per class and pooled
    let mut similarities = Vec::new();
    let classes: Vec<Option<&String>> = std::iter::once(None).chain(m.labels().iter().map(Some)).collect();
    for class in classes {
        for axis in ["lighting", "background"] {
            let side = |first: bool| -> Vec<SaliencyRaster> {
                rasters
                    .iter()
                    .filter(|(s, _)| class.is_none_or(|c| &s.class_label == c))
                    .filter(|(s, _)| {
                        let cond = s.env.expect("checked").condition();
                        let is_first = if axis == "lighting" {
                            cond.lighting == EnvCondition::ALL[0].lighting
                        } else {
                            cond.background == EnvCondition::ALL[0].background
                        };
                        is_first == first
                    })
                    .map(|(_, r)| r.clone())
                    .collect()
            };
            let (x, y) = (side(true), side(false));
            if x.is_empty() || y.is_empty() {
                continue;
            }
            similarities.push(Similarity {
                class: class.cloned(),
                axis,
                value: condition_similarity(&x, &y)?,
            });
        }
    }

    let mut rc = config("attribution")
        .flag("manifest", &a.manifest)
        .flag("rasters", &a.rasters)
        .flag("masks", &a.masks)
        .flag("out", &a.out)
        .flag("split", sp)
        .flag("attributions", &a.attributions)
        .flag("corr_threshold", a.corr_threshold)
        .input(&a.manifest)?
        .input(&a.rasters)?
        .input(&a.masks)?;

    let share = match &a.attributions {
        Some(path) => {
            rc = rc.input(path)?;
            let (ids, vectors) = read_attributions(path)?;
            let mut env = Vec::with_capacity(ids.len());
            for id in &ids {
                let s = m.get(id).ok_or_else(|| anyhow!("attribution row for unknown sample {id:?}"))?;
                let e = s.env.ok_or_else(|| anyhow!("sample {id:?} has no environment attributes"))?;
                env.push(vec![e.lighting_score, e.bg_complexity]);
            }
            Some(env_attribution_share(&vectors, &env, a.corr_threshold)?)
        }
        None => None,
    };

    ensure_dir(&a.out)?;
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|g| {
            vec![
                g.class.clone(),
                g.lighting.clone(),
                g.background.clone(),
                g.rasters.to_string(),
                g.with_mask.to_string(),
                opt(g.object),
                opt(g.background_share),
                opt(g.transition),
            ]
        })
        .collect();
    write_csv(
        &a.out.join("attribution_groups.csv"),
        &["class", "lighting", "background", "rasters", "with_mask", "object", "background_share", "transition"],
        &rows,
    )?;
    write_json(
        &a.out.join("attribution.json"),
        &json!({
            "run_config": rc,
            "groups": summaries,
            "similarities": similarities,
            "similarity_axes": "lighting compares low vs high light; background compares simple vs complex",
            "environmental_share": share,
            "environmental_share_rule": "interpretation: a feature counts as environmental when its attribution magnitude has |Pearson r| above the threshold with lighting score or background complexity",
            "missing_rasters": missing_rasters,
            "missing_masks": missing_masks,
        }),
    )
}

fn read_attributions(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{} row {}", path.display(), i + 2))?;
        let mut it = rec.iter();
        ids.push(it.next().unwrap_or_default().to_string());
        let v = it
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{} row {}", path.display(), i + 2))?;
        vectors.push(v);
    }
    Ok((ids, vectors))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.spec.display()))?;
    ensure_dir(&a.out)?;
    let out = write_fixtures(&spec, &a.out)?;
    write_predictions(&out.predictions, &a.out.join("predictions.csv"))?;
    let rc = config("synth")
        .flag("spec", &a.spec)
        .flag("out", &a.out)
        .seed(spec.seed)
        .input(&a.spec)?;
    write_json(
        &a.out.join("expected.json"),
        &json!({ "run_config": rc, "fixtures": out.expectations }),
    )
}
