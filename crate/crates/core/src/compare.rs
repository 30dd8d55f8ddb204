//! Baseline-versus-treatment comparison of fairness reports.
//!
//! Each side is a list of reports, one per run. Rows cover per-class
//! accuracy, overall accuracy and the two disparities. The pairing axis of the
//! significance test is chosen by the caller:
//!
//! * [`PairBy::Runs`]: run `i` of the baseline is paired with run `i` of the
//!   treatment (needs at least two runs per side).
//! * [`PairBy::Conditions`]: per-class rows pair the class's per-intersection
//!   accuracies across environment conditions, averaged over runs.
//!
//! A summary row always pairs mean per-class accuracies across classes.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attributes::EnvCondition;
use crate::error::{Error, Result};
use crate::fairness::{disparity_reduction, FairnessReport};
use crate::stats::{self, TTestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairBy {
    Runs,
    Conditions,
}

impl FromStr for PairBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "runs" => Ok(PairBy::Runs),
            "conditions" => Ok(PairBy::Conditions),
            other => Err(Error::InvalidArgument(format!("unknown pairing axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub metric: String,
    pub baseline_mean: Option<f64>,
    pub baseline_std: Option<f64>,
    pub treatment_mean: Option<f64>,
    pub treatment_std: Option<f64>,
    pub delta: Option<f64>,
    pub t_statistic: Option<f64>,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    /// Relative decrease, disparity rows only.
    pub reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pair_by: PairBy,
    pub baseline_runs: usize,
    pub treatment_runs: usize,
    pub rows: Vec<CompareRow>,
    pub notes: Vec<String>,
}

fn summarize(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    match xs.len() {
        0 => (None, None),
        1 => (Some(xs[0]), None),
        _ => {
            let (m, s) = stats::mean_std(xs).expect("at least two values");
            (Some(m), Some(s))
        }
    }
}

fn row(metric: String, base: &[f64], treat: &[f64], test: Option<TTestResult>) -> CompareRow {
    let (bm, bs) = summarize(base);
    let (tm, ts) = summarize(treat);
    CompareRow {
        metric,
        baseline_mean: bm,
        baseline_std: bs,
        treatment_mean: tm,
        treatment_std: ts,
        delta: bm.zip(tm).map(|(b, t)| t - b),
        t_statistic: test.map(|t| t.t_statistic),
        dof: test.map(|t| t.dof),
        p_value: test.map(|t| t.p_value),
        reduction: None,
    }
}

/// Paired test when both sides line up; `None` otherwise.
fn paired(base: &[f64], treat: &[f64]) -> Option<TTestResult> {
    if base.len() != treat.len() || base.len() < 2 {
        return None;
    }
    stats::paired_t_test(treat, base).ok()
}

fn check_labels(reports: &[&FairnessReport]) -> Result<Vec<String>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Insufficient("no reports to compare".into()))?;
    if let Some(r) = reports.iter().find(|r| r.labels != first.labels) {
        return Err(Error::Validation(format!(
            "reports disagree on class labels: {:?} vs {:?}",
            first.labels, r.labels
        )));
    }
    Ok(first.labels.clone())
}

fn class_accuracy(r: &FairnessReport, class: usize) -> Option<f64> {
    r.per_class[class].accuracy
}

fn cell_accuracy(r: &FairnessReport, class: usize, cond: EnvCondition) -> Option<f64> {
    r.per_intersection[class * EnvCondition::ALL.len() + cond.index()].accuracy
}

/// Mean over runs of a per-run value, skipping undefined runs.
fn run_mean(reports: &[FairnessReport], f: impl Fn(&FairnessReport) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = reports.iter().filter_map(f).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn compare(baseline: &[FairnessReport], treatment: &[FairnessReport], pair_by: PairBy) -> Result<Comparison> {
    let all: Vec<&FairnessReport> = baseline.iter().chain(treatment).collect();
    let labels = check_labels(&all)?;
    if baseline.is_empty() || treatment.is_empty() {
        return Err(Error::Insufficient("both sides need at least one report".into()));
    }
    let mut notes = Vec::new();
    if pair_by == PairBy::Runs && (baseline.len() != treatment.len() || baseline.len() < 2) {
        notes.push(format!(
            "pairing by runs needs equal run counts of at least 2 (got {} and {}); p-values omitted",
            baseline.len(),
            treatment.len()
        ));
    }
    let series = |rs: &[FairnessReport], f: &dyn Fn(&FairnessReport) -> Option<f64>| -> Vec<f64> {
        rs.iter().filter_map(f).collect()
    };

    let mut rows = Vec::new();
    for (c, label) in labels.iter().enumerate() {
        let f = |r: &FairnessReport| class_accuracy(r, c);
        let (b, t) = (series(baseline, &f), series(treatment, &f));
        let test = match pair_by {
            PairBy::Runs => paired(&b, &t),
            PairBy::Conditions => {
                let mut bc = Vec::new();
                let mut tc = Vec::new();
                for cond in EnvCondition::ALL {
                    let bm = run_mean(baseline, |r| cell_accuracy(r, c, cond));
                    let tm = run_mean(treatment, |r| cell_accuracy(r, c, cond));
                    if let (Some(bm), Some(tm)) = (bm, tm) {
                        bc.push(bm);
                        tc.push(tm);
                    }
                }
                paired(&bc, &tc)
            }
        };
        rows.push(row(format!("accuracy:{label}"), &b, &t, test));
    }

    let class_means = |rs: &[FairnessReport]| -> Vec<Option<f64>> {
        (0..labels.len()).map(|c| run_mean(rs, |r| class_accuracy(r, c))).collect()
    };
    let (bcm, tcm) = (class_means(baseline), class_means(treatment));
    let (bv, tv): (Vec<f64>, Vec<f64>) = bcm
        .iter()
        .zip(&tcm)
        .filter_map(|(b, t)| b.zip(*t))
        .unzip();
    let mut summary = row("accuracy:mean_over_classes".into(), &[], &[], paired(&bv, &tv));
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    summary.baseline_mean = mean(&bv);
    summary.treatment_mean = mean(&tv);
    summary.delta = summary.baseline_mean.zip(summary.treatment_mean).map(|(b, t)| t - b);
    rows.push(summary);

    let overall = |r: &FairnessReport| Some(r.overall_accuracy);
    let (b, t) = (series(baseline, &overall), series(treatment, &overall));
    let test = (pair_by == PairBy::Runs).then(|| paired(&b, &t)).flatten();
    rows.push(row("overall_accuracy".into(), &b, &t, test));

    for (name, f) in [
        ("dp_disparity", (|r: &FairnessReport| r.dp_disparity) as fn(&FairnessReport) -> Option<f64>),
        ("eo_disparity", |r: &FairnessReport| r.eo_disparity),
    ] {
        let (b, t) = (series(baseline, &f), series(treatment, &f));
        let test = (pair_by == PairBy::Runs).then(|| paired(&b, &t)).flatten();
        let mut r = row(name.into(), &b, &t, test);
        r.reduction = match (r.baseline_mean, r.treatment_mean) {
            (Some(bm), Some(tm)) if bm > 0.0 => Some(disparity_reduction(bm, tm)?),
            _ => None,
        };
        rows.push(r);
    }
    notes.push("delta = treatment - baseline; t-tests are paired and two-sided on treatment - baseline".into());

    Ok(Comparison {
        pair_by,
        baseline_runs: baseline.len(),
        treatment_runs: treatment.len(),
        rows,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::EnvCondition;
    use crate::fairness::{report_from_tally, Tally};

    /// Report where class `c` is right `hits[c][e]` times out of 10 per condition.
    fn report(hits: &[[u64; 4]]) -> FairnessReport {
        let labels: Vec<String> = (0..hits.len()).map(|i| format!("c{i}")).collect();
        let mut t = Tally::new(labels.len());
        for (c, row) in hits.iter().enumerate() {
            for e in EnvCondition::ALL {
                let h = row[e.index()];
                t.add(c, c, e, h);
                t.add(c, (c + 1) % labels.len(), e, 10 - h);
            }
        }
        report_from_tally(&labels, &t, 0.15)
    }

    #[test]
    fn identical_sides_have_zero_delta() {
        let r = report(&[[9, 8, 7, 6], [5, 6, 7, 8]]);
        let c = compare(&[r.clone(), r.clone()], &[r.clone(), r], PairBy::Runs).unwrap();
        for row in &c.rows {
            assert_eq!(row.delta.unwrap(), 0.0, "{}", row.metric);
        }
        assert_eq!(c.rows[0].p_value, Some(1.0));
    }

    #[test]
    fn deltas_follow_the_reports() {
        let b = report(&[[5, 5, 5, 5], [9, 9, 9, 9]]);
        let t = report(&[[7, 7, 7, 8], [9, 9, 9, 9]]);
        let c = compare(std::slice::from_ref(&b), std::slice::from_ref(&t), PairBy::Conditions).unwrap();
        let acc0 = &c.rows[0];
        assert_eq!(acc0.metric, "accuracy:c0");
        let expect = t.per_class[0].accuracy.unwrap() - b.per_class[0].accuracy.unwrap();
        assert!((acc0.delta.unwrap() - expect).abs() < 1e-15);
        // paired over 4 conditions, differences 0.2, 0.2, 0.2, 0.3
        assert_eq!(acc0.dof, Some(3));
        let direct = stats::paired_t_test(&[0.7, 0.7, 0.7, 0.8], &[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!((acc0.t_statistic.unwrap() - direct.t_statistic).abs() < 1e-9);
        let eo = c.rows.iter().find(|r| r.metric == "eo_disparity").unwrap();
        assert!((eo.baseline_mean.unwrap() - 0.4).abs() < 1e-12);
        assert!((eo.treatment_mean.unwrap() - 0.2).abs() < 1e-12);
        assert!((eo.reduction.unwrap() - 0.5).abs() < 1e-12);
        // single run per side: no run pairing possible
        let c = compare(&[b], &[t], PairBy::Runs).unwrap();
        assert_eq!(c.rows[0].p_value, None);
    }

    #[test]
    fn rejects_mismatched_labels() {
        let a = report(&[[5, 5, 5, 5], [9, 9, 9, 9]]);
        let b = report(&[[5, 5, 5, 5], [9, 9, 9, 9], [1, 1, 1, 1]]);
        assert!(compare(&[a], &[b], PairBy::Runs).is_err());
        assert!(compare(&[], &[], PairBy::Runs).is_err());
    }
}
