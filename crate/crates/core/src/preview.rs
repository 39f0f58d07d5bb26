//! Overlay renderings of augmented images for visual inspection.
//!
//! Selected boxes are outlined in red, unselected boxes in yellow and painted mask
//! regions in blue. `previews/legend.json` records the codes and per-image counts.

use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::augment::{augment_with_seed, worker_pool, AugmentationConfig, AugmentationRecord, ImageId};
use crate::color::Rgb;
use crate::dataset_io::{output_file_name, write_png, DatasetManifest};
use crate::geometry::BoundingBox;
use crate::pipeline::{write_json, PipelineError};
use crate::rng::preview_rng;

pub const PREVIEWS_DIR: &str = "previews";
pub const LEGEND_FILE: &str = "legend.json";

pub const SELECTED_BOX: Rgb = Rgb([255, 0, 0]);
pub const UNSELECTED_BOX: Rgb = Rgb([255, 255, 0]);
pub const MASK_REGION: Rgb = Rgb([0, 0, 255]);

/// Draws the one-pixel border of `rect`.
pub fn draw_outline(image: &mut RgbImage, rect: &BoundingBox, color: Rgb) {
    let px = image::Rgb(color.0);
    let (x0, y0) = (rect.x, rect.y);
    let x1 = (rect.right() as u32 - 1).min(image.width().saturating_sub(1));
    let y1 = (rect.bottom() as u32 - 1).min(image.height().saturating_sub(1));
    if x0 > x1 || y0 > y1 {
        return;
    }
    for x in x0..=x1 {
        image.put_pixel(x, y0, px);
        image.put_pixel(x, y1, px);
    }
    for y in y0..=y1 {
        image.put_pixel(x0, y, px);
        image.put_pixel(x1, y, px);
    }
}

/// Augmented image with box and mask outlines on top.
pub fn render_overlay(augmented: &RgbImage, boxes: &[BoundingBox], record: &AugmentationRecord) -> RgbImage {
    let mut out = augmented.clone();
    for (i, b) in boxes.iter().enumerate() {
        if !record.selected.contains(&i) {
            draw_outline(&mut out, b, UNSELECTED_BOX);
        }
    }
    for &i in &record.selected {
        draw_outline(&mut out, &boxes[i], SELECTED_BOX);
    }
    for p in &record.placements {
        draw_outline(&mut out, &p.rect, MASK_REGION);
    }
    out
}

/// Picks `count` image indices out of `total` with the run seed, ascending.
pub fn sample_indices(total: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= total {
        return (0..total).collect();
    }
    let mut picked = index::sample(&mut preview_rng(seed), total, count).into_vec();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, Serialize)]
pub struct PreviewEntry {
    pub image_id: ImageId,
    pub file: String,
    pub selected_boxes: usize,
    pub unselected_boxes: usize,
    pub mask_outlines: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Legend {
    pub selected_box: Rgb,
    pub unselected_box: Rgb,
    pub mask_region: Rgb,
    pub images: Vec<PreviewEntry>,
    pub failures: Vec<crate::metrics::ImageFailure>,
}

#[derive(Debug)]
pub struct PreviewSummary {
    pub legend: Legend,
    pub legend_path: PathBuf,
}

/// Renders overlays for `samples` images into `out_root/previews/`.
pub fn run_preview(
    manifest: &DatasetManifest,
    config: &AugmentationConfig,
    out_root: &Path,
    samples: usize,
    workers: usize,
) -> Result<PreviewSummary, PipelineError> {
    config.validate()?;
    let dir = out_root.join(PREVIEWS_DIR);
    let picked = sample_indices(manifest.images.len(), samples, config.seed);

    let results: Vec<Result<PreviewEntry, crate::metrics::ImageFailure>> = worker_pool(workers).install(|| {
        picked
            .par_iter()
            .map(|&i| {
                let entry = &manifest.images[i];
                let fail = |error: String| crate::metrics::ImageFailure {
                    image_id: entry.id.clone(),
                    error,
                };
                let boxes = manifest.boxes_for(i);
                let source = manifest.load_image(i, boxes.clone()).map_err(|e| fail(e.to_string()))?;
                let outcome = augment_with_seed(&source.annotated, config).map_err(|e| fail(e.to_string()))?;
                let overlay = render_overlay(&outcome.image, &boxes, &outcome.record);
                let file = output_file_name(&entry.file_name);
                write_png(&dir.join(&file), &overlay).map_err(|e| fail(e.to_string()))?;
                Ok(PreviewEntry {
                    image_id: entry.id.clone(),
                    file,
                    selected_boxes: outcome.record.selected.len(),
                    unselected_boxes: boxes.len() - outcome.record.selected.len(),
                    mask_outlines: outcome.record.placements.len(),
                })
            })
            .collect()
    });

    let mut legend = Legend {
        selected_box: SELECTED_BOX,
        unselected_box: UNSELECTED_BOX,
        mask_region: MASK_REGION,
        images: Vec::new(),
        failures: Vec::new(),
    };
    for r in results {
        match r {
            Ok(e) => legend.images.push(e),
            Err(f) => legend.failures.push(f),
        }
    }
    let legend_path = dir.join(LEGEND_FILE);
    write_json(&legend_path, &legend)?;
    Ok(PreviewSummary { legend, legend_path })
}
