//! Acceptance criteria. Runs without the libtest harness so each criterion
//! prints exactly one PASS/FAIL line.

mod common;

use std::collections::HashMap;
use std::fs;
use std::panic;
use std::time::{Duration, Instant};

use common::*;
use image::{Rgb, RgbImage};
use interbias_core::attributes::{
    attributes_of, categorize, BackgroundCategory, EnvCondition, ExtractOptions, LightingCategory,
};
use interbias_core::attribution::{
    condition_similarity, env_attribution_share, mass_split, Region, RegionMask, SaliencyRaster,
};
use interbias_core::augment::{occlusion_patch_count, sample_params, ParamBounds};
use interbias_core::canny::{edge_density, CannyParams};
use interbias_core::fairness::{
    accuracy_range, disparity_reduction, evaluate, MetricCell, PredictionRecord, DEFAULT_BIAS_THRESHOLD,
};
use interbias_core::intersections::{class_weights_from_counts, enumerate_intersections, IntersectionKey};
use interbias_core::manifest::{Manifest, SampleRecord, Split};
use interbias_core::rng::{RngStream, Stage};
use interbias_core::stats::{paired_t_test, pearson, t_cdf};
use interbias_core::synth::{generate_predictions, random_counts, synthetic_env};

type Check = fn() -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let e = start.elapsed();
    ensure!(e < limit, "took {e:?}, limit {limit:?}");
    Ok(())
}

fn counts(pairs: &[(&str, usize)]) -> Vec<(String, usize)> {
    pairs.iter().map(|(l, n)| (l.to_string(), *n)).collect()
}

fn c1_weights() -> Result<(), String> {
    let start = Instant::now();
    let uniform = class_weights_from_counts(&counts(&[("a", 500), ("b", 500), ("c", 500), ("d", 500)]))
        .map_err(|e| e.to_string())?;
    ensure!(uniform.entries.iter().all(|e| e.weight == 1.0), "uniform counts gave {:?}", uniform.entries);

    let n = [1203usize, 845, 978, 1024, 842];
    // 4892 / (n * 5), evaluated independently to 9 places
    let frozen = [0.813300083, 1.157869822, 1.000408998, 0.955468750, 1.161995249];
    let table: Vec<(&str, usize)> = ["c0", "c1", "c2", "c3", "c4"].into_iter().zip(n).collect();
    let w = class_weights_from_counts(&counts(&table)).map_err(|e| e.to_string())?;
    let total: usize = n.iter().sum();
    for (i, e) in w.entries.iter().enumerate() {
        let direct = total as f64 / (n[i] as f64 * 5.0);
        ensure!((e.weight - direct).abs() < 1e-4, "class {i}: {} vs direct {direct}", e.weight);
        ensure!((e.weight - frozen[i]).abs() < 1e-9, "class {i}: {} vs {}", e.weight, frozen[i]);
    }
    let weighted: f64 = w.entries.iter().map(|e| e.count as f64 * e.weight).sum();
    ensure!((weighted - total as f64).abs() < 1e-9, "sum n*w = {weighted}, N = {total}");
    within(Duration::from_secs(1), start)
}

fn c2_reported_arithmetic() -> Result<(), String> {
    let start = Instant::now();
    let dp = disparity_reduction(0.142, 0.092).map_err(|e| e.to_string())?;
    let eo = disparity_reduction(0.187, 0.121).map_err(|e| e.to_string())?;
    ensure!((dp - 0.352).abs() <= 0.001, "dp reduction {dp}");
    ensure!((eo - 0.353).abs() <= 0.001, "eo reduction {eo}");

    let cell = |a: f64| MetricCell {
        class_label: "x".into(),
        lighting: None,
        background: None,
        support: 1,
        accuracy: Some(a),
        precision: None,
        recall: None,
        f1: None,
    };
    let six: Vec<MetricCell> = [0.923, 0.856, 0.801, 0.687, 0.604, 0.631].into_iter().map(cell).collect();
    let range = accuracy_range(&six).map_err(|e| e.to_string())?;
    ensure!((range - 0.319).abs() < 1e-12, "accuracy range {range}");

    // 59 of 4892 samples in one intersection
    let low_complex = synthetic_env(EnvCondition::new(LightingCategory::Low, BackgroundCategory::Complex));
    let high_simple = synthetic_env(EnvCondition::new(LightingCategory::High, BackgroundCategory::Simple));
    let samples: Vec<SampleRecord> = (0..4892)
        .map(|i| {
            let env = if i < 59 { low_complex } else { high_simple };
            SampleRecord::new(format!("s{i}"), "x.png", "a", Split::Train).with_env(env)
        })
        .collect();
    let m = Manifest::new(vec!["a".into(), "b".into()], samples).map_err(|e| e.to_string())?;
    let cells = enumerate_intersections(&m, Split::Train).map_err(|e| e.to_string())?;
    let key = IntersectionKey::new("a", low_complex.condition());
    let pct = 100.0 * cells.iter().find(|c| c.key == key).unwrap().proportion;
    ensure!((pct - 1.21).abs() <= 0.01, "smallest intersection {pct}%");
    within(Duration::from_secs(1), start)
}

/// Per-sample counting, independent of the library's tally.
struct Oracle {
    dp: HashMap<(String, EnvCondition), Option<f64>>,
    eo: HashMap<(String, EnvCondition), Option<f64>>,
    precision: HashMap<(String, EnvCondition), Option<f64>>,
    support: HashMap<(String, EnvCondition), u64>,
    confusion: Vec<Vec<u64>>,
    dp_disparity: Option<f64>,
    eo_disparity: Option<f64>,
}

fn brute_force(labels: &[String], preds: &[PredictionRecord], m: &Manifest) -> Oracle {
    let env_of = |id: &str| m.get(id).unwrap().env.unwrap().condition();
    let frac = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let mut o = Oracle {
        dp: HashMap::new(),
        eo: HashMap::new(),
        precision: HashMap::new(),
        support: HashMap::new(),
        confusion: vec![vec![0; labels.len()]; labels.len()],
        dp_disparity: None,
        eo_disparity: None,
    };
    for y in labels {
        for e in EnvCondition::ALL {
            let in_e: Vec<&PredictionRecord> = preds.iter().filter(|p| env_of(&p.sample_id) == e).collect();
            let pred_y = in_e.iter().filter(|p| &p.predicted_class == y).count();
            let true_y = in_e.iter().filter(|p| &p.true_class == y).count();
            let tp = in_e.iter().filter(|p| &p.true_class == y && &p.predicted_class == y).count();
            o.dp.insert((y.clone(), e), frac(pred_y, in_e.len()));
            o.eo.insert((y.clone(), e), frac(tp, true_y));
            o.precision.insert((y.clone(), e), frac(tp, pred_y));
            o.support.insert((y.clone(), e), true_y as u64);
        }
    }
    for p in preds {
        let t = labels.iter().position(|l| *l == p.true_class).unwrap();
        let y = labels.iter().position(|l| *l == p.predicted_class).unwrap();
        o.confusion[t][y] += 1;
    }
    let spread = |m: &HashMap<(String, EnvCondition), Option<f64>>| {
        let v: Vec<f64> = m.values().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        let mut hi = v[0];
        let mut lo = v[0];
        for x in &v {
            if *x > hi {
                hi = *x;
            }
            if *x < lo {
                lo = *x;
            }
        }
        Some(hi - lo)
    };
    o.dp_disparity = spread(&o.dp);
    o.eo_disparity = spread(&o.eo);
    o
}

fn fixtures() -> Vec<(Vec<String>, interbias_core::synth::PredictionFixture)> {
    (0..100u64)
        .map(|i| {
            let classes = 2 + (i % 4) as usize;
            let labels: Vec<String> = (0..classes).map(|c| format!("class{c}")).collect();
            let table = random_counts(&labels, 1000, 1000 + i);
            let fx = generate_predictions(&labels, &table, i).unwrap();
            (labels, fx)
        })
        .collect()
}

fn c3_oracle_equivalence() -> Result<(), String> {
    let start = Instant::now();
    for (i, (labels, fx)) in fixtures().iter().enumerate() {
        ensure!(fx.predictions.len() <= 1000, "fixture {i} has {} samples", fx.predictions.len());
        let r = evaluate(&fx.predictions, &fx.manifest, Split::Test, DEFAULT_BIAS_THRESHOLD)
            .map_err(|e| format!("fixture {i}: {e}"))?;
        let o = brute_force(labels, &fx.predictions, &fx.manifest);
        for (cell, eo) in r.dp_table.iter().zip(&r.eo_table) {
            let key = (cell.class_label.clone(), EnvCondition::new(cell.lighting, cell.background));
            ensure!(cell.value == o.dp[&key], "fixture {i} dp {key:?}: {:?} vs {:?}", cell.value, o.dp[&key]);
            ensure!(eo.value == o.eo[&key], "fixture {i} eo {key:?}: {:?} vs {:?}", eo.value, o.eo[&key]);
            ensure!(fx.expected.dp[&key] == cell.value && fx.expected.eo[&key] == eo.value, "fixture {i}: embedded expectation differs at {key:?}");
        }
        for c in &r.per_intersection {
            let key = (c.class_label.clone(), EnvCondition::new(c.lighting.unwrap(), c.background.unwrap()));
            ensure!(c.support == o.support[&key], "fixture {i} support {key:?}");
            ensure!(c.accuracy == o.eo[&key] && c.recall == o.eo[&key], "fixture {i} accuracy {key:?}");
            ensure!(c.precision == o.precision[&key], "fixture {i} precision {key:?}");
            let f1 = match (o.precision[&key], o.eo[&key]) {
                (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
                _ => None,
            };
            ensure!(c.f1 == f1, "fixture {i} f1 {key:?}: {:?} vs {f1:?}", c.f1);
        }
        ensure!(r.dp_disparity == o.dp_disparity, "fixture {i} dp disparity {:?} vs {:?}", r.dp_disparity, o.dp_disparity);
        ensure!(r.eo_disparity == o.eo_disparity, "fixture {i} eo disparity {:?} vs {:?}", r.eo_disparity, o.eo_disparity);
        ensure!(r.confusion == o.confusion, "fixture {i} confusion");
        ensure!(fx.expected.confusion == o.confusion, "fixture {i} embedded confusion");
    }
    within(Duration::from_secs(10), start)
}

fn c4_dp_normalization() -> Result<(), String> {
    let mut checked = 0;
    for (i, (_, fx)) in fixtures().iter().enumerate() {
        let r = evaluate(&fx.predictions, &fx.manifest, Split::Test, DEFAULT_BIAS_THRESHOLD).map_err(|e| e.to_string())?;
        for e in EnvCondition::ALL {
            let vals: Vec<Option<f64>> = r
                .dp_table
                .iter()
                .filter(|c| EnvCondition::new(c.lighting, c.background) == e)
                .map(|c| c.value)
                .collect();
            if vals.iter().all(Option::is_none) {
                // no samples in this condition
                continue;
            }
            let sum: f64 = vals.iter().map(|v| v.unwrap()).sum();
            ensure!((sum - 1.0).abs() <= 1e-9, "fixture {i} condition {e}: sum {sum}");
            checked += 1;
        }
    }
    ensure!(checked > 300, "only {checked} populated conditions");
    Ok(())
}

#[derive(serde::Deserialize)]
struct Board {
    height: u32,
    width: u32,
    cell: u32,
    color_a: [u8; 3],
    color_b: [u8; 3],
    offset_x: u32,
    offset_y: u32,
    density: f64,
}

#[derive(serde::Deserialize)]
struct CannyReference {
    random_checkerboards: Vec<Board>,
}

fn c5_attributes() -> Result<(), String> {
    let start = Instant::now();
    let opts = ExtractOptions::default();
    for (color, (h, w)) in [([100, 100, 100], (16, 16)), ([10, 200, 30], (7, 33)), ([0, 0, 0], (5, 5)), ([255, 3, 9], (40, 12))] {
        let a = attributes_of(&RgbImage::from_pixel(w, h, Rgb(color)), &opts);
        let v = *color.iter().max().unwrap() as f64;
        ensure!(a.lighting_score == v, "constant {color:?}: {} vs {v}", a.lighting_score);
        ensure!(a.bg_complexity == 0.0, "constant {color:?}: density {}", a.bg_complexity);
    }
    ensure!(categorize(84.99, 0.0).0 == LightingCategory::Low, "84.99 not low");
    ensure!(categorize(85.0, 0.0).0 == LightingCategory::High, "85.0 not high");
    ensure!(categorize(0.0, 0.1).1 == BackgroundCategory::Simple, "0.1 not simple");
    ensure!(categorize(0.0, 0.1 + 1e-12).1 == BackgroundCategory::Complex, "0.1+eps not complex");
    ensure!(attributes_of(&RgbImage::from_pixel(4, 4, Rgb([85, 0, 0])), &opts).lighting_cat == LightingCategory::High, "V=85 image");
    ensure!(attributes_of(&RgbImage::from_pixel(4, 4, Rgb([84, 0, 0])), &opts).lighting_cat == LightingCategory::Low, "V=84 image");

    let checker = RgbImage::from_fn(224, 224, |x, y| if (x / 8 + y / 8) % 2 == 0 { Rgb([0; 3]) } else { Rgb([255; 3]) });
    ensure!(attributes_of(&checker, &opts).bg_cat == BackgroundCategory::Complex, "checkerboard not complex");

    let reference: CannyReference =
        serde_json::from_str(include_str!("../../core/tests/data/canny_reference.json")).map_err(|e| e.to_string())?;
    let params = CannyParams::default();
    let agree = reference
        .random_checkerboards
        .iter()
        .filter(|b| {
            let img = RgbImage::from_fn(b.width, b.height, |x, y| {
                let parity = ((x + b.offset_x) / b.cell + (y + b.offset_y) / b.cell) % 2;
                Rgb(if parity == 0 { b.color_a } else { b.color_b })
            });
            categorize(0.0, edge_density(&img, &params)).1 == categorize(0.0, b.density).1
        })
        .count();
    let n = reference.random_checkerboards.len();
    ensure!(n == 50 && agree * 100 >= 95 * n, "{agree}/{n} agree with the reference");
    within(Duration::from_secs(30), start)
}

fn c6_bwa_determinism() -> Result<(), String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let spec = write_spec(d, 21, &["a", "b", "c", "d"], 50, 0, 64);
    ok(["synth", "--spec", p(&spec), "--out", p(&d.join("syn"))]);
    let m = d.join("syn/manifest.csv");
    ok(["weights", "--manifest", p(&m), "--out", p(&d.join("w"))]);
    let aug = d.join("aug");
    let augment = |threads: &str| {
        if aug.exists() {
            fs::remove_dir_all(&aug).unwrap();
        }
        ok([
            "augment", "--manifest", p(&m), "--weights", p(&d.join("w/weights.json")),
            "--out", p(&aug), "--seed", "77", "--threads", threads,
        ]);
        snapshot(&aug)
    };
    let first = augment("4");
    let second = augment("4");
    ensure!(first == second, "two runs with the same seed differ");
    let single = augment("1");
    ensure!(first == single, "worker count changed the output");
    let rows = csv_rows(&aug.join("manifest.csv"));
    ensure!(rows.len() == 400, "{} output records", rows.len());
    ensure!(first.keys().filter(|k| k.to_string_lossy().ends_with("_aug.png")).count() == 200, "augmented image count");
    ensure!(occlusion_patch_count(224, 1.21) == 40, "patch count {}", occlusion_patch_count(224, 1.21));
    within(Duration::from_secs(60), start)
}

fn c7_intensity_monotonicity() -> Result<(), String> {
    let dims = (224, 224);
    let draw = |w: f64, seed: u64| {
        let (mut rot, mut scale, mut trans, mut noise) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let b = ParamBounds::for_weight(w, dims.0, dims.1);
        for i in 0..10_000u64 {
            let p = sample_params(w, 1.2, dims, true, RngStream::new(seed, i));
            let t = p.translate_px.0.abs().max(p.translate_px.1.abs());
            assert!(p.rotation_deg.abs() <= b.rotation_max_deg && p.scale <= b.scale_max && t <= b.translate_max_px);
            assert!(p.scale >= 0.8);
            rot = rot.max(p.rotation_deg.abs());
            scale = scale.max(p.scale);
            trans = trans.max(t);
            noise = noise.max(p.noise_sigma);
        }
        (rot, scale, trans, noise, b)
    };
    let lo = panic::catch_unwind(|| draw(0.8, 1)).map_err(|_| "w=0.8 draw outside its bounds".to_string())?;
    let hi = panic::catch_unwind(|| draw(1.2, 2)).map_err(|_| "w=1.2 draw outside its bounds".to_string())?;
    let b = lo.4;
    ensure!(hi.0 > b.rotation_max_deg, "rotation {} vs bound {}", hi.0, b.rotation_max_deg);
    ensure!(hi.1 > b.scale_max, "scale {} vs bound {}", hi.1, b.scale_max);
    ensure!(hi.2 > b.translate_max_px, "translation {} vs bound {}", hi.2, b.translate_max_px);
    ensure!(hi.3 > b.noise_sigma, "noise {} vs bound {}", hi.3, b.noise_sigma);
    ensure!(lo.0 <= b.rotation_max_deg && lo.2 <= b.translate_max_px, "w=0.8 exceeded its own range");
    Ok(())
}

#[derive(serde::Deserialize)]
struct PearsonCase {
    xs: Vec<f64>,
    ys: Vec<f64>,
    r: f64,
    p: f64,
}

#[derive(serde::Deserialize)]
struct PairedCase {
    a: Vec<f64>,
    b: Vec<f64>,
    t: f64,
    p: f64,
}

#[derive(serde::Deserialize)]
struct StatsReference {
    pearson: Vec<PearsonCase>,
    paired_t: Vec<PairedCase>,
}

fn c8_statistics() -> Result<(), String> {
    let start = Instant::now();
    let r: StatsReference =
        serde_json::from_str(include_str!("../../core/tests/data/stats_reference.json")).map_err(|e| e.to_string())?;
    ensure!(r.pearson.len() == 50 && r.paired_t.len() == 50, "reference size");
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    for (i, c) in r.pearson.iter().enumerate() {
        let got = pearson(&c.xs, &c.ys).map_err(|e| e.to_string())?;
        ensure!(rel(got.r, c.r) <= 1e-12, "pearson {i}: r {} vs {}", got.r, c.r);
        ensure!((got.p_value - c.p).abs() <= 1e-9, "pearson {i}: p {} vs {}", got.p_value, c.p);
    }
    for (i, c) in r.paired_t.iter().enumerate() {
        let got = paired_t_test(&c.a, &c.b).map_err(|e| e.to_string())?;
        ensure!(rel(got.t_statistic, c.t) <= 1e-12, "paired {i}: t {} vs {}", got.t_statistic, c.t);
        ensure!((got.p_value - c.p).abs() <= 1e-9, "paired {i}: p {} vs {}", got.p_value, c.p);
    }
    for dof in [1.0, 2.0, 5.0, 30.0, 1000.0] {
        ensure!(t_cdf(0.0, dof) == 0.5, "t_cdf(0, {dof}) = {}", t_cdf(0.0, dof));
    }
    for t in [-12.0f64, -2.5, -0.3, 0.7, 1.0, 4.2, 60.0] {
        let closed = 0.5 + t.atan() / std::f64::consts::PI;
        ensure!((t_cdf(t, 1.0) - closed).abs() <= 1e-10, "dof 1, t {t}");
    }
    let mut rng = RngStream::new(8, 0).stage(Stage::Fixture);
    for _ in 0..1000 {
        let t = rng.uniform(-50.0, 50.0);
        let dof = (1 + rng.below(300)) as f64;
        let s = t_cdf(t, dof) + t_cdf(-t, dof);
        ensure!((s - 1.0).abs() <= 1e-10, "symmetry t={t} dof={dof}: {s}");
    }
    within(Duration::from_secs(5), start)
}

fn mask(codes: &[u8]) -> RegionMask {
    let labels = codes
        .iter()
        .map(|c| match c {
            0 => Region::Background,
            1 => Region::Object,
            _ => Region::Transition,
        })
        .collect();
    RegionMask::new("m", 4, 4, labels).unwrap()
}

fn c9_attribution() -> Result<(), String> {
    let e = |x: interbias_core::Error| x.to_string();
    // values 1..16; top row object (10), second row transition (26), rest background (100)
    let r = SaliencyRaster::new("r", 4, 4, (1..=16).map(f64::from).collect()).map_err(e)?;
    let m = mask(&[1, 1, 1, 1, 2, 2, 2, 2, 0, 0, 0, 0, 0, 0, 0, 0]);
    let s = mass_split(&r, &m).map_err(e)?;
    ensure!((s.object - 10.0 / 136.0).abs() <= 1e-12, "object {}", s.object);
    ensure!((s.transition - 26.0 / 136.0).abs() <= 1e-12, "transition {}", s.transition);
    ensure!((s.background - 100.0 / 136.0).abs() <= 1e-12, "background {}", s.background);
    ensure!((s.object + s.background + s.transition - 1.0).abs() <= 1e-9, "proportions do not sum to 1");

    // group A mean: 1.5 on the left half, 0.5 on the right; group B: 1 on the top half.
    // dot = 4*1.5 + 4*0.5 = 8, |A| = sqrt(20), |B| = sqrt(8), cos = 2 / sqrt(10)
    let left = SaliencyRaster::new("a1", 4, 4, (0..16).map(|i| if i % 4 < 2 { 2.0 } else { 0.0 }).collect()).map_err(e)?;
    let ones = SaliencyRaster::new("a2", 4, 4, vec![1.0; 16]).map_err(e)?;
    let top = SaliencyRaster::new("b1", 4, 4, (0..16).map(|i| if i < 8 { 1.0 } else { 0.0 }).collect()).map_err(e)?;
    let cos = condition_similarity(&[left, ones], &[top]).map_err(e)?;
    ensure!((cos - 2.0 / 10f64.sqrt()).abs() <= 1e-12, "cosine {cos}");

    // planted feature 0 tracks lighting and carries 40% of each sample's mass
    let l = [-1.0, -1.0, 1.0, 1.0];
    let u = [1.0, -1.0, 1.0, -1.0];
    let attrib: Vec<Vec<f64>> = (0..4)
        .map(|i| vec![4.0 + 0.1 * l[i], 3.0 + u[i], 3.0 - u[i] - 0.1 * l[i]])
        .collect();
    let env: Vec<Vec<f64>> = l.iter().map(|v| vec![if *v < 0.0 { 40.0 } else { 170.0 }]).collect();
    let share = env_attribution_share(&attrib, &env, 0.5).map_err(e)?;
    ensure!((share.share - 0.40).abs() <= 1e-9, "share {}", share.share);
    ensure!(share.environmental_features == vec![0], "environmental features {:?}", share.environmental_features);
    Ok(())
}

fn c10_end_to_end() -> Result<(), String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let spec = write_spec(d, 4, &["bird", "car", "cat", "dog", "tree"], 12, 8, 64);
    ok(["synth", "--spec", p(&spec), "--out", p(&d.join("syn"))]);
    ok(["extract-attrs", "--manifest", p(&d.join("syn/manifest.csv")), "--out", p(&d.join("ext"))]);
    let m = d.join("ext/manifest.csv");
    ok(["stats", "--manifest", p(&m), "--out", p(&d.join("stats")), "--plot-data", p(&d.join("plots"))]);
    ok(["weights", "--manifest", p(&m), "--out", p(&d.join("w"))]);
    ok(["augment", "--manifest", p(&m), "--weights", p(&d.join("w/weights.json")), "--out", p(&d.join("aug")), "--seed", "1"]);
    // baseline predictor: confuses every third sample with the next class
    let labels = ["bird", "car", "cat", "dog", "tree"];
    let perfect = fs::read_to_string(d.join("syn/predictions.csv")).map_err(|e| e.to_string())?;
    let degraded: Vec<String> = perfect
        .lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 || i % 3 != 0 {
                return line.to_string();
            }
            let f: Vec<&str> = line.split(',').collect();
            let k = labels.iter().position(|l| *l == f[1]).unwrap();
            format!("{},{},{}", f[0], f[1], labels[(k + 1) % labels.len()])
        })
        .collect();
    fs::write(d.join("baseline.csv"), degraded.join("\n") + "\n").map_err(|e| e.to_string())?;
    ok(["evaluate", "--manifest", p(&m), "--predictions", p(&d.join("baseline.csv")), "--out", p(&d.join("ev_base"))]);
    ok(["evaluate", "--manifest", p(&m), "--predictions", p(&d.join("syn/predictions.csv")), "--out", p(&d.join("ev_bwa")), "--plot-data", p(&d.join("plots"))]);
    ok(["compare", p(&d.join("ev_base/report.json")), p(&d.join("ev_bwa/report.json")), "--out", p(&d.join("cmp"))]);

    for report in [
        "syn/expected.json",
        "ext/extract_report.json",
        "stats/intersections.json",
        "w/weights.json",
        "aug/augment_records.json",
        "ev_base/report.json",
        "ev_bwa/report.json",
        "cmp/comparison.json",
    ] {
        let j = read_json(&d.join(report));
        ensure!(j["run_config"]["subcommand"].is_string(), "{report} lacks a run config");
        ensure!(j["run_config"]["version"] == env!("CARGO_PKG_VERSION"), "{report} version");
    }
    let bwa = read_json(&d.join("ev_bwa/report.json"));
    ensure!(bwa["report"]["overall_accuracy"] == 1.0, "synthetic predictor should be perfect");
    within(Duration::from_secs(120), start)
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("weight formula suite", c1_weights),
        ("reported arithmetic reproduction", c2_reported_arithmetic),
        ("fairness metrics match brute-force counting on 100 fixtures", c3_oracle_equivalence),
        ("DP sums to 1 over classes per condition", c4_dp_normalization),
        ("attribute extraction suite", c5_attributes),
        ("augmentation determinism and size law", c6_bwa_determinism),
        ("augmentation intensity monotonicity", c7_intensity_monotonicity),
        ("statistics kernel vs reference", c8_statistics),
        ("attribution aggregation", c9_attribution),
        ("end-to-end pipeline", c10_end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        let elapsed = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("criterion {:>2} PASS  {name} ({elapsed:.2}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({elapsed:.2}s): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
