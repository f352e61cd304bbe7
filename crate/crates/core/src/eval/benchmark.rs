use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::auroc::auroc_split;
use super::dataset::GOOD;
use super::product::DefectKind;
use crate::data::Sample;
use crate::detector::{AnomalyReport, Decision, Detector, PolicyConfig};
use crate::error::{Error, Result};

/// One line of the per-image report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub label: String,
    pub kind: String,
    pub d_g: f64,
    pub d_h: f64,
    pub d: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindAuroc {
    pub kind: String,
    pub count: usize,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub overall: f64,
    /// Each defect kind against the normal images, sorted by kind.
    pub per_kind: Vec<KindAuroc>,
    /// `logical` and `structural` aggregates when present.
    pub groups: Vec<KindAuroc>,
    pub records: Vec<ImageRecord>,
}

impl BenchmarkReport {
    pub fn auroc_for(&self, kind: &str) -> Option<f64> {
        self.per_kind.iter().chain(&self.groups).find(|k| k.kind == kind).map(|k| k.auroc)
    }

    /// One JSON object per image.
    pub fn records_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20} {:>6} {:>8}", "kind", "n", "AUROC");
        for k in self.per_kind.iter().chain(&self.groups) {
            let _ = writeln!(s, "{:<20} {:>6} {:>8.4}", k.kind, k.count, k.auroc);
        }
        let anomalous = self.records.iter().filter(|r| r.kind != GOOD).count();
        let _ = writeln!(s, "{:<20} {:>6} {:>8.4}", "overall", anomalous, self.overall);
        s
    }
}

fn is_logical(kind: &str) -> bool {
    DefectKind::parse(kind).is_none_or(|k| k.is_logical())
}

/// AUROC table from already computed reports; `kinds[i]` tags `reports[i]`.
pub fn summarize(reports: &[AnomalyReport], kinds: &[String]) -> Result<BenchmarkReport> {
    if reports.len() != kinds.len() {
        return Err(Error::dims(format!("{} reports for {} kinds", reports.len(), kinds.len())));
    }
    let normal: Vec<f64> = reports.iter().zip(kinds).filter(|(_, k)| *k == GOOD).map(|(r, _)| r.d).collect();
    let anomalous: Vec<f64> = reports.iter().zip(kinds).filter(|(_, k)| *k != GOOD).map(|(r, _)| r.d).collect();
    if normal.is_empty() || anomalous.is_empty() {
        return Err(Error::param("benchmark needs both normal and defective test images"));
    }
    let overall = auroc_split(&normal, &anomalous)?;
    let mut names: Vec<&String> = kinds.iter().filter(|k| *k != GOOD).collect();
    names.sort();
    names.dedup();
    let subset = |pred: &dyn Fn(&str) -> bool| -> Vec<f64> {
        reports.iter().zip(kinds).filter(|(_, k)| *k != GOOD && pred(k)).map(|(r, _)| r.d).collect()
    };
    let mut per_kind = Vec::new();
    for name in names {
        let scores = subset(&|k| k == name);
        per_kind.push(KindAuroc { kind: name.clone(), count: scores.len(), auroc: auroc_split(&normal, &scores)? });
    }
    let mut groups = Vec::new();
    for (label, logical) in [("logical", true), ("structural", false)] {
        let scores = subset(&|k| is_logical(k) == logical);
        if !scores.is_empty() {
            groups.push(KindAuroc { kind: label.into(), count: scores.len(), auroc: auroc_split(&normal, &scores)? });
        }
    }
    let records = reports
        .iter()
        .zip(kinds)
        .map(|(r, k)| ImageRecord {
            id: r.id.clone(),
            label: if k == GOOD { "normal".into() } else { "anomalous".into() },
            kind: k.clone(),
            d_g: r.d_g,
            d_h: r.d_h,
            d: r.d,
            decision: r.decision,
        })
        .collect();
    Ok(BenchmarkReport { overall, per_kind, groups, records })
}

pub fn run_benchmark(detector: &Detector, policy: &PolicyConfig, test: &[(Sample, String)]) -> Result<BenchmarkReport> {
    let mut reports = Vec::with_capacity(test.len());
    let mut kinds = Vec::with_capacity(test.len());
    for (s, k) in test {
        reports.push(detector.score(s, policy)?);
        kinds.push(k.clone());
    }
    summarize(&reports, &kinds)
}
