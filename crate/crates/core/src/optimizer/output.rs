use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::raster::save_mask_pgm;

use super::{OptimizerError, RefinementResult};

/// Name of the JSON-lines index written next to the detection masks.
pub const DETECTION_INDEX: &str = "detections.jsonl";

/// One index line per contour. Pruned contours have no mask file and no
/// centroid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub image_id: String,
    pub detection_id: usize,
    pub centroid_x: Option<f64>,
    pub centroid_y: Option<f64>,
    pub area: usize,
    pub pruned: bool,
    pub file: Option<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OptimizerError + '_ {
    move |source| OptimizerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `det_NNN.pgm` for every kept contour and the index file into
/// `dir`, returning the index entries.
pub fn write_detections(
    result: &RefinementResult,
    image_id: &str,
    dir: impl AsRef<Path>,
) -> Result<Vec<IndexEntry>, OptimizerError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(result.areas.len());
    let mut detections = result.detections.iter().peekable();
    for (i, &area) in result.areas.iter().enumerate() {
        let det = detections.next_if(|d| d.contour == i);
        let file = det.map(|d| -> Result<String, OptimizerError> {
            let name = format!("det_{i:03}.pgm");
            save_mask_pgm(&d.mask, dir.join(&name))?;
            Ok(name)
        });
        entries.push(IndexEntry {
            image_id: image_id.to_string(),
            detection_id: i,
            centroid_x: det.map(|d| d.centroid.0),
            centroid_y: det.map(|d| d.centroid.1),
            area,
            pruned: det.is_none(),
            file: file.transpose()?,
        });
    }
    let text: String = entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("index entry serializes") + "\n")
        .collect();
    let path = dir.join(DETECTION_INDEX);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(entries)
}

pub fn read_detection_index(path: impl AsRef<Path>) -> Result<Vec<IndexEntry>, OptimizerError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| OptimizerError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}
