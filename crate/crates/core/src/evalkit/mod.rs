//! Instance-level evaluation of detected masks against reference masks:
//! IoU, one-to-one matching, precision/recall, centroid distance, and
//! recall as a function of how crowded an image is.

mod report;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::raster::{centroid, BinaryMask, RasterError};

pub use report::{comparison_table, recall_vs_crowding, CrowdingBin, DensityCurve, REPORT_SCHEMA};

/// Default IoU needed for a detection to count as a true positive.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("IoU of two empty masks is undefined")]
    BothEmpty,
    #[error("mask dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// A reference or detected instance mask in one image.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub mask: BinaryMask,
    pub centroid: (f64, f64),
}

impl Detection {
    /// Fails on an empty mask.
    pub fn new(image_id: impl Into<String>, mask: BinaryMask) -> Result<Self, EvalError> {
        let centroid = centroid(&mask)?;
        Ok(Self {
            image_id: image_id.into(),
            mask,
            centroid,
        })
    }
}

pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, EvalError> {
    if a.dims() != b.dims() {
        return Err(EvalError::DimensionMismatch(a.dims(), b.dims()));
    }
    let union = a.union_count(b);
    if union == 0 {
        return Err(EvalError::BothEmpty);
    }
    Ok(a.intersection_count(b) as f64 / union as f64)
}

fn bbox_overlap(a: Option<(usize, usize, usize, usize)>, b: Option<(usize, usize, usize, usize)>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a.0 <= b.2 && b.0 <= a.2 && a.1 <= b.3 && b.1 <= a.3,
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchPair {
    /// Index into the reference slice.
    pub reference: usize,
    /// Index into the detection slice.
    pub detection: usize,
    pub iou: f64,
    pub centroid_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageStats {
    pub image_id: String,
    pub references: usize,
    pub detections: usize,
    pub matched: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchReport {
    pub iou_threshold: f64,
    pub pairs: Vec<MatchPair>,
    pub unmatched_refs: Vec<usize>,
    pub unmatched_dets: Vec<usize>,
    /// Mean IoU over matched pairs; 0 when nothing matched.
    pub mean_iou: f64,
    /// 1.0 with `no_detections` set when there are no detections.
    pub precision: f64,
    /// 1.0 with `no_references` set when there are no references.
    pub recall: f64,
    /// Mean centroid distance over matched pairs; 0 when nothing matched.
    pub mean_centroid_distance: f64,
    pub no_detections: bool,
    pub no_references: bool,
    pub reference_count: usize,
    pub detection_count: usize,
    /// Sorted by image id.
    pub per_image: Vec<ImageStats>,
}

/// Greedy one-to-one matching within each image: candidate pairs with IoU at
/// or above the threshold are taken in descending IoU order, ties broken by
/// ascending (reference, detection) index.
pub fn match_detections(
    refs: &[Detection],
    dets: &[Detection],
    iou_threshold: f64,
) -> Result<MatchReport, EvalError> {
    let mut images: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in refs.iter().enumerate() {
        images.entry(&r.image_id).or_default().0.push(i);
    }
    for (j, d) in dets.iter().enumerate() {
        images.entry(&d.image_id).or_default().1.push(j);
    }

    let ref_boxes: Vec<_> = refs.iter().map(|r| r.mask.bbox()).collect();
    let det_boxes: Vec<_> = dets.iter().map(|d| d.mask.bbox()).collect();

    let mut pairs = Vec::new();
    let mut per_image = Vec::with_capacity(images.len());
    let mut ref_used = vec![false; refs.len()];
    let mut det_used = vec![false; dets.len()];

    for (image_id, (ri, di)) in &images {
        let mut candidates = Vec::new();
        for &r in ri {
            for &d in di {
                if !bbox_overlap(ref_boxes[r], det_boxes[d]) {
                    continue;
                }
                let v = iou(&refs[r].mask, &dets[d].mask)?;
                if v >= iou_threshold {
                    candidates.push((v, r, d));
                }
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut matched = 0;
        for (v, r, d) in candidates {
            if ref_used[r] || det_used[d] {
                continue;
            }
            ref_used[r] = true;
            det_used[d] = true;
            matched += 1;
            let (a, b) = (refs[r].centroid, dets[d].centroid);
            pairs.push(MatchPair {
                reference: r,
                detection: d,
                iou: v,
                centroid_distance: ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt(),
            });
        }
        per_image.push(ImageStats {
            image_id: image_id.to_string(),
            references: ri.len(),
            detections: di.len(),
            matched,
        });
    }

    let unmatched_refs: Vec<usize> = (0..refs.len()).filter(|&i| !ref_used[i]).collect();
    let unmatched_dets: Vec<usize> = (0..dets.len()).filter(|&j| !det_used[j]).collect();
    let n = pairs.len() as f64;
    let mean = |f: fn(&MatchPair) -> f64| {
        if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().map(f).sum::<f64>() / n
        }
    };
    let ratio = |hits: usize, total: usize| if total == 0 { 1.0 } else { hits as f64 / total as f64 };

    Ok(MatchReport {
        iou_threshold,
        mean_iou: mean(|p| p.iou),
        mean_centroid_distance: mean(|p| p.centroid_distance),
        precision: ratio(pairs.len(), pairs.len() + unmatched_dets.len()),
        recall: ratio(pairs.len(), pairs.len() + unmatched_refs.len()),
        no_detections: dets.is_empty(),
        no_references: refs.is_empty(),
        reference_count: refs.len(),
        detection_count: dets.len(),
        pairs,
        unmatched_refs,
        unmatched_dets,
        per_image,
    })
}
