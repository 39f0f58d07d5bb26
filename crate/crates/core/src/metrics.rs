//! Occlusion-coverage reports and descriptive dataset statistics.
//!
//! The report is JSON (`report.json`):
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "config":    { ...the AugmentationConfig of the run... },
//!   "aggregate": {
//!     "images", "failed_images", "augmented_images", "augmented_image_fraction",
//!     "total_boxes", "eligible_boxes", "selected_boxes", "masks_applied",
//!     "masked_box_fraction",      // selected / eligible
//!     "painted_box_fraction",     // boxes that received a non-empty mask / eligible
//!     "mean_masked_area_fraction", "max_masked_area_fraction",
//!     "dropped_degenerate_boxes"
//!   },
//!   "images":   [ { "image_id", "was_augmented", "total_boxes", "eligible_boxes",
//!                   "selected_boxes", "masks_applied",
//!                   "mean_masked_area_fraction", "max_masked_area_fraction" } ],
//!   "failures": [ { "image_id", "error" } ]
//! }
//! ```
//!
//! Ratios whose denominator is zero are `null`. The masked-area fraction of a
//! placement is its area divided by the area of the box it was sampled from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentationConfig, AugmentationRecord, ImageId};
use crate::dataset_io::DatasetManifest;
use crate::geometry::{iou, non_overlapping_boxes, BoundingBox};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{outcomes} outcomes for {images} images")]
pub struct MisalignedInputs {
    pub outcomes: usize,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: ImageId,
    pub was_augmented: bool,
    pub total_boxes: usize,
    pub eligible_boxes: usize,
    pub selected_boxes: usize,
    pub masks_applied: usize,
    pub mean_masked_area_fraction: Option<f64>,
    pub max_masked_area_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub images: usize,
    pub failed_images: usize,
    pub augmented_images: usize,
    pub augmented_image_fraction: Option<f64>,
    pub total_boxes: usize,
    pub eligible_boxes: usize,
    pub selected_boxes: usize,
    pub masks_applied: usize,
    pub masked_box_fraction: Option<f64>,
    pub painted_box_fraction: Option<f64>,
    pub mean_masked_area_fraction: Option<f64>,
    pub max_masked_area_fraction: Option<f64>,
    pub dropped_degenerate_boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub image_id: ImageId,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub schema_version: u32,
    pub config: AugmentationConfig,
    pub aggregate: Aggregate,
    pub images: Vec<ImageRow>,
    pub failures: Vec<ImageFailure>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Masked-area fractions of every placement that has a parent box.
pub fn masked_area_fractions<'a>(
    record: &'a AugmentationRecord,
    boxes: &'a [BoundingBox],
) -> impl Iterator<Item = f64> + 'a {
    record
        .placements
        .iter()
        .filter_map(|p| p.parent_index.map(|i| p.rect.area() as f64 / boxes[i].area() as f64))
}

/// Folds per-image results into a report. `results[i]` belongs to `manifest.images[i]`;
/// an `Err` carries the failure message for that image.
pub fn build_report(
    results: &[Result<AugmentationRecord, String>],
    manifest: &DatasetManifest,
    config: &AugmentationConfig,
) -> Result<AugmentationReport, MisalignedInputs> {
    if results.len() != manifest.images.len() {
        return Err(MisalignedInputs {
            outcomes: results.len(),
            images: manifest.images.len(),
        });
    }
    let boxes = manifest.boxes_by_image();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut fraction_sum = 0.0;
    let mut fraction_max: Option<f64> = None;
    let mut painted = 0usize;

    for ((result, entry), boxes) in results.iter().zip(&manifest.images).zip(&boxes) {
        let record = match result {
            Ok(r) => r,
            Err(error) => {
                failures.push(ImageFailure {
                    image_id: entry.id.clone(),
                    error: error.clone(),
                });
                continue;
            }
        };
        let fractions: Vec<f64> = masked_area_fractions(record, boxes).collect();
        let max = fractions.iter().copied().reduce(f64::max);
        fraction_sum += fractions.iter().sum::<f64>();
        painted += fractions.len();
        fraction_max = match (fraction_max, max) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        rows.push(ImageRow {
            image_id: entry.id.clone(),
            was_augmented: record.was_augmented,
            total_boxes: boxes.len(),
            eligible_boxes: record.eligible_count,
            selected_boxes: record.selected.len(),
            masks_applied: record.placements.len(),
            mean_masked_area_fraction: (!fractions.is_empty())
                .then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
            max_masked_area_fraction: max,
        });
    }

    let augmented = rows.iter().filter(|r| r.was_augmented).count();
    let eligible = rows.iter().map(|r| r.eligible_boxes).sum();
    let selected = rows.iter().map(|r| r.selected_boxes).sum();
    let aggregate = Aggregate {
        images: rows.len(),
        failed_images: failures.len(),
        augmented_images: augmented,
        augmented_image_fraction: ratio(augmented, rows.len()),
        total_boxes: rows.iter().map(|r| r.total_boxes).sum(),
        eligible_boxes: eligible,
        selected_boxes: selected,
        masks_applied: rows.iter().map(|r| r.masks_applied).sum(),
        masked_box_fraction: ratio(selected, eligible),
        painted_box_fraction: ratio(painted, eligible),
        mean_masked_area_fraction: (painted > 0).then(|| fraction_sum / painted as f64),
        max_masked_area_fraction: fraction_max,
        dropped_degenerate_boxes: manifest.dropped.len(),
    };

    Ok(AugmentationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        aggregate,
        images: rows,
        failures,
    })
}

/// Largest IoU between any two boxes of one image (0 with fewer than two boxes).
pub fn max_pairwise_iou(boxes: &[BoundingBox]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            best = best.max(iou(a, b));
        }
    }
    best
}

pub const STATS_HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: usize,
    pub boxes: usize,
    pub mean_boxes_per_image: Option<f64>,
    pub iou_threshold: f64,
    /// Boxes the overlap filter would exclude.
    pub excluded_boxes: usize,
    pub excluded_fraction: Option<f64>,
    /// Per-image maximum pairwise IoU, bucketed into equal-width bins over `[0, 1]`;
    /// the last bin is closed.
    pub max_iou_histogram: Vec<usize>,
    pub mean_max_iou: Option<f64>,
    pub dropped_degenerate_boxes: usize,
}

pub fn dataset_stats(manifest: &DatasetManifest, iou_threshold: f64) -> DatasetStats {
    let per_image = manifest.boxes_by_image();
    let boxes: usize = per_image.iter().map(Vec::len).sum();
    let excluded: usize = per_image
        .iter()
        .map(|b| b.len() - non_overlapping_boxes(b, iou_threshold).len())
        .sum();

    let mut histogram = vec![0usize; STATS_HISTOGRAM_BINS];
    let mut max_sum = 0.0;
    for b in &per_image {
        let m = max_pairwise_iou(b);
        max_sum += m;
        let bin = ((m * STATS_HISTOGRAM_BINS as f64) as usize).min(STATS_HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }

    DatasetStats {
        images: per_image.len(),
        boxes,
        mean_boxes_per_image: ratio(boxes, per_image.len()),
        iou_threshold,
        excluded_boxes: excluded,
        excluded_fraction: ratio(excluded, boxes),
        max_iou_histogram: histogram,
        mean_max_iou: (!per_image.is_empty()).then(|| max_sum / per_image.len() as f64),
        dropped_degenerate_boxes: manifest.dropped.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{MaskFill, MaskPlacement};
    use crate::color::Rgb;
    use crate::dataset_io::{Annotation, AnnotationFormat, ImageEntry};
    use serde_json::Map;

    fn manifest(boxes: &[Vec<BoundingBox>]) -> DatasetManifest {
        DatasetManifest {
            format: AnnotationFormat::Coco,
            images: (0..boxes.len())
                .map(|i| ImageEntry {
                    id: ImageId(i.to_string()),
                    raw_id: None,
                    file_name: format!("{i}.png"),
                    path: format!("{i}.png").into(),
                    width: 100,
                    height: 100,
                    extra: Map::new(),
                })
                .collect(),
            annotations: boxes
                .iter()
                .enumerate()
                .flat_map(|(i, bs)| {
                    bs.iter().map(move |&bbox| Annotation {
                        image_index: i,
                        bbox,
                        id: None,
                        category_id: None,
                        extra: Map::new(),
                    })
                })
                .collect(),
            categories: vec![],
            extra: Map::new(),
            dropped: vec![],
        }
    }

    fn bb(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn pass_through_run() {
        let m = manifest(&[vec![bb(0, 0, 5, 5)], vec![]]);
        let results = vec![Ok(AugmentationRecord::default()); 2];
        let r = build_report(&results, &m, &AugmentationConfig { p_aug: 0.0, ..Default::default() }).unwrap();
        assert_eq!(r.schema_version, REPORT_SCHEMA_VERSION);
        assert_eq!(r.aggregate.augmented_image_fraction, Some(0.0));
        assert!(r.images.iter().all(|row| row.masks_applied == 0));
        assert_eq!(r.aggregate.masked_box_fraction, None);
    }

    #[test]
    fn area_fraction_of_a_single_placement() {
        let m = manifest(&[vec![bb(0, 0, 10, 10)]]);
        let record = AugmentationRecord {
            was_augmented: true,
            eligible_count: 1,
            selected: vec![0],
            placements: vec![MaskPlacement {
                parent_index: Some(0),
                rect: bb(2, 2, 3, 4),
                fill: MaskFill::Solid(Rgb::BLACK),
            }],
        };
        let r = build_report(&[Ok(record)], &m, &AugmentationConfig::default()).unwrap();
        assert_eq!(r.images[0].mean_masked_area_fraction, Some(0.12));
        assert_eq!(r.aggregate.max_masked_area_fraction, Some(0.12));
        assert_eq!(r.aggregate.masked_box_fraction, Some(1.0));
    }

    #[test]
    fn failures_are_listed_not_counted() {
        let m = manifest(&[vec![], vec![]]);
        let r = build_report(&[Ok(AugmentationRecord::default()), Err("boom".into())], &m, &AugmentationConfig::default()).unwrap();
        assert_eq!(r.aggregate.images, 1);
        assert_eq!(r.aggregate.failed_images, 1);
        assert_eq!(r.failures[0].image_id.as_str(), "1");
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let m = manifest(&[vec![]]);
        assert!(build_report(&[], &m, &AugmentationConfig::default()).is_err());
    }

    #[test]
    fn report_serializes_with_schema_version() {
        let m = manifest(&[vec![]]);
        let r = build_report(&[Ok(AugmentationRecord::default())], &m, &AugmentationConfig::default()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["config"]["method"]["name"], "bboxcut");
        assert_eq!(v["config"]["mask_color"], "global_dominant");
        let back: AugmentationReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn stats_of_one_box() {
        let s = dataset_stats(&manifest(&[vec![bb(0, 0, 5, 5)]]), 0.5);
        assert_eq!((s.images, s.boxes), (1, 1));
        assert_eq!(s.mean_boxes_per_image, Some(1.0));
        assert_eq!(s.excluded_fraction, Some(0.0));
    }

    #[test]
    fn stats_of_duplicate_boxes() {
        let s = dataset_stats(&manifest(&[vec![bb(0, 0, 5, 5), bb(0, 0, 5, 5)]]), 0.5);
        assert_eq!(s.excluded_fraction, Some(1.0));
        assert_eq!(s.max_iou_histogram[STATS_HISTOGRAM_BINS - 1], 1);
    }
}
