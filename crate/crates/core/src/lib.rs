//! Occlusion-simulating augmentation for object-detection datasets.
//!
//! BBoxCut masks a random sub-rectangle of ground-truth boxes that do not overlap
//! their neighbours, painting it with the image's dominant color. Cutout and
//! region-aware Random Erasing are provided as comparison methods. All randomness
//! flows from a run seed and each image's stable identifier, so runs are
//! reproducible byte for byte regardless of parallelism.

pub mod augment;
pub mod baselines;
pub mod color;
pub mod dataset_io;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod preview;
pub mod rng;

pub use augment::{
    apply_mask, augment_dataset, augment_image, augment_with_seed, AnnotatedImage, AugmentError,
    AugmentationConfig, AugmentationOutcome, AugmentationRecord, ConfigError, ImageId, MaskFill,
    MaskPlacement, Method,
};
pub use baselines::{cutout, region_aware_random_erasing, CutoutConfig, RegionAwareREConfig};
pub use color::{dominant_color, MaskColorStrategy, Rgb};
pub use dataset_io::{load_dataset, write_dataset, DatasetError, DatasetManifest};
pub use geometry::{iou, non_overlapping_boxes, sample_mask_region, BoundingBox, MaskRegion};
pub use metrics::{build_report, dataset_stats, AugmentationReport, DatasetStats};
pub use pipeline::{run_augment, PipelineError, RunSummary};
pub use preview::run_preview;
pub use rng::image_rng;
