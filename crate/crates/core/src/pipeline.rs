//! End-to-end runs over a dataset on disk.
//!
//! Output layout under `out_root`:
//!
//! ```text
//! images/            augmented images, same relative names, always PNG
//! annotations.json   COCO annotations pointing at images/
//! report.json        occlusion-coverage report (see `metrics`)
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::augment::{augment_with_seed, worker_pool, AugmentationConfig, AugmentationRecord, ConfigError};
use crate::dataset_io::{write_annotations, write_output_image, DatasetError, DatasetManifest, IMAGES_DIR};
use crate::metrics::{build_report, AugmentationReport, MisalignedInputs, REPORT_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Report(#[from] MisalignedInputs),
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: AugmentationReport,
    pub annotations_path: PathBuf,
    pub report_path: PathBuf,
}

impl RunSummary {
    pub fn is_complete(&self) -> bool {
        self.report.failures.is_empty()
    }
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut writer = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| io_err(e.into()))?;
    writer.write_all(b"\n").and_then(|_| writer.flush()).map_err(io_err)
}

fn process_image(
    manifest: &DatasetManifest,
    index: usize,
    boxes: Vec<crate::geometry::BoundingBox>,
    config: &AugmentationConfig,
    out_root: &Path,
) -> Result<AugmentationRecord, String> {
    let entry = &manifest.images[index];
    let source = manifest.load_image(index, boxes).map_err(|e| e.to_string())?;
    let outcome = augment_with_seed(&source.annotated, config)
        .map_err(|e| format!("image `{}` ({}): {e}", entry.id, entry.path.display()))?;
    let unchanged = outcome.record.placements.is_empty();
    write_output_image(out_root, entry, &outcome.image, unchanged && source.verbatim_png)
        .map_err(|e| e.to_string())?;
    debug!("{}: {} masks", entry.id, outcome.record.placements.len());
    Ok(outcome.record)
}

/// Augments every image of `manifest` on `workers` threads and writes the output tree.
///
/// Images that fail are listed in the report; the rest of the run continues. Output
/// bytes do not depend on `workers`.
pub fn run_augment(
    manifest: &DatasetManifest,
    config: &AugmentationConfig,
    out_root: &Path,
    workers: usize,
) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let images_dir = out_root.join(IMAGES_DIR);
    fs::create_dir_all(&images_dir).map_err(|source| DatasetError::Io { path: images_dir, source })?;

    let boxes = manifest.boxes_by_image();
    let pool = worker_pool(workers);
    let results: Vec<Result<AugmentationRecord, String>> = pool.install(|| {
        boxes
            .into_par_iter()
            .enumerate()
            .map(|(i, b)| process_image(manifest, i, b, config, out_root))
            .collect()
    });

    let annotations_path = write_annotations(manifest, out_root)?;
    let report = build_report(&results, manifest, config)?;
    let report_path = out_root.join(REPORT_FILE);
    write_json(&report_path, &report)?;

    info!(
        "{} images, {} augmented, {} masks, {} failed",
        report.aggregate.images,
        report.aggregate.augmented_images,
        report.aggregate.masks_applied,
        report.aggregate.failed_images
    );
    Ok(RunSummary {
        report,
        annotations_path,
        report_path,
    })
}
