use std::fmt::Write;

use serde::Serialize;

use super::MatchReport;

/// Identifier embedded in every JSON report.
pub const REPORT_SCHEMA: &str = "crownrefine.match_report/1";

const CROWDING_BINS: [(usize, Option<usize>); 4] = [(1, Some(3)), (4, Some(6)), (7, Some(10)), (11, None)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrowdingBin {
    pub label: String,
    pub min_refs: usize,
    pub max_refs: Option<usize>,
    pub images: usize,
    pub references: usize,
    pub detections: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall grouped by the number of reference objects per image.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityCurve {
    pub bins: Vec<CrowdingBin>,
}

impl DensityCurve {
    pub fn bin(&self, label: &str) -> Option<&CrowdingBin> {
        self.bins.iter().find(|b| b.label == label)
    }
}

/// Bins images by reference count into 1–3, 4–6, 7–10 and 11+. Images
/// without references fall in no bin.
pub fn recall_vs_crowding(report: &MatchReport) -> DensityCurve {
    let bins = CROWDING_BINS
        .iter()
        .map(|&(lo, hi)| {
            let members: Vec<_> = report
                .per_image
                .iter()
                .filter(|s| s.references >= lo && hi.is_none_or(|h| s.references <= h))
                .collect();
            let references = members.iter().map(|s| s.references).sum();
            let detections = members.iter().map(|s| s.detections).sum();
            let matched = members.iter().map(|s| s.matched).sum();
            let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
            CrowdingBin {
                label: match hi {
                    Some(h) => format!("{lo}-{h}"),
                    None => format!("{lo}+"),
                },
                min_refs: lo,
                max_refs: hi,
                images: members.len(),
                references,
                detections,
                matched,
                precision: ratio(matched, detections),
                recall: ratio(matched, references),
            }
        })
        .collect();
    DensityCurve { bins }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema: &'static str,
    #[serde(flatten)]
    report: &'a MatchReport,
    crowding: DensityCurve,
}

impl MatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&JsonReport {
            schema: REPORT_SCHEMA,
            report: self,
            crowding: recall_vs_crowding(self),
        })
        .expect("report serializes")
    }

    /// Aligned plain-text summary plus the crowding breakdown.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let flag = |b: bool, txt: &str| if b { format!(" ({txt})") } else { String::new() };
        writeln!(s, "references          {:>10}", self.reference_count).unwrap();
        writeln!(s, "detections          {:>10}", self.detection_count).unwrap();
        writeln!(s, "matched (IoU>={:.2}) {:>10}", self.iou_threshold, self.pairs.len()).unwrap();
        writeln!(s, "recall              {:>10.4}{}", self.recall, flag(self.no_references, "no references")).unwrap();
        writeln!(s, "precision           {:>10.4}{}", self.precision, flag(self.no_detections, "no detections")).unwrap();
        writeln!(s, "mean IoU            {:>10.4}", self.mean_iou).unwrap();
        writeln!(s, "mean centroid dist  {:>10.4}", self.mean_centroid_distance).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "{:<8}{:>8}{:>8}{:>8}{:>10}{:>10}", "refs", "images", "refs", "dets", "recall", "precision").unwrap();
        for b in recall_vs_crowding(self).bins {
            writeln!(
                s,
                "{:<8}{:>8}{:>8}{:>8}{:>10.4}{:>10.4}",
                b.label, b.images, b.references, b.detections, b.recall, b.precision
            )
            .unwrap();
        }
        s
    }

    /// One line per matched pair: `reference,detection,iou,centroid_distance`.
    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("reference,detection,iou,centroid_distance\n");
        for p in &self.pairs {
            writeln!(s, "{},{},{},{}", p.reference, p.detection, p.iou, p.centroid_distance).unwrap();
        }
        s
    }
}

/// Side-by-side method comparison: recall, precision, mean IoU, mean
/// centroid distance and detection count per row.
pub fn comparison_table(rows: &[(&str, &MatchReport)]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<12}{:>10}{:>11}{:>10}{:>12}{:>12}",
        "method", "recall", "precision", "mean IoU", "centroid px", "detections"
    )
    .unwrap();
    for (name, r) in rows {
        writeln!(
            s,
            "{:<12}{:>10.4}{:>11.4}{:>10.4}{:>12.3}{:>12}",
            name, r.recall, r.precision, r.mean_iou, r.mean_centroid_distance, r.detection_count
        )
        .unwrap();
    }
    s
}
