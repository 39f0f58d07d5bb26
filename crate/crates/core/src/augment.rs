//! The BBoxCut augmentor and the dataset-level driver shared by every method.

use std::fmt;

use image::RgbImage;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, BaselineError, CutoutConfig, RegionAwareREConfig};
use crate::color::{ColorError, MaskColorResolver, MaskColorStrategy, Rgb};
use crate::geometry::{non_overlapping_boxes, sample_mask_region, BoundingBox};
use crate::rng::{image_rng, unit_open_closed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{name} must be within [0, 1], got {value}")]
    OutOfUnitRange { name: &'static str, value: f64 },
    #[error("{name} must be at least 1")]
    ZeroCount { name: &'static str },
    #[error("{name} must satisfy 0 < min <= max, got ({min}, {max})")]
    BadRange { name: &'static str, min: f64, max: f64 },
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ConfigError::OutOfUnitRange { name, value })
    }
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("region {rect:?} does not fit in a {width}x{height} image")]
    OutOfBounds {
        rect: BoundingBox,
        width: u32,
        height: u32,
    },
}

/// Stable identifier of an image; keys its random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub String);

impl ImageId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ImageId {
    fn from(s: &str) -> Self {
        ImageId(s.to_string())
    }
}

/// Pixels plus ground-truth boxes of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub id: ImageId,
    pub image: RgbImage,
    pub boxes: Vec<BoundingBox>,
}

/// Which augmentor a run applies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Method {
    #[default]
    Bboxcut,
    Cutout(CutoutConfig),
    RegionAwareRandomErasing(RegionAwareREConfig),
    None,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Bboxcut => "bboxcut",
            Method::Cutout(_) => "cutout",
            Method::RegionAwareRandomErasing(_) => "region_aware_random_erasing",
            Method::None => "none",
        }
    }
}

/// Every knob of a run. Defaults are the tuned values for wheat-head detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Probability that an image is augmented at all.
    pub p_aug: f64,
    /// Probability that an eligible box receives a mask.
    pub p_m: f64,
    /// Maximum mask width as a fraction of the box width.
    pub alpha_w: f64,
    /// Maximum mask height as a fraction of the box height.
    pub alpha_h: f64,
    /// Boxes overlapping another box above this IoU are never masked.
    pub iou_threshold: f64,
    pub mask_color: MaskColorStrategy,
    pub method: Method,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            p_aug: 0.3,
            p_m: 0.3,
            alpha_w: 0.3,
            alpha_h: 0.3,
            iou_threshold: 0.5,
            mask_color: MaskColorStrategy::GlobalDominant,
            method: Method::Bboxcut,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_unit("p_aug", self.p_aug)?;
        check_unit("p_m", self.p_m)?;
        check_unit("alpha_w", self.alpha_w)?;
        check_unit("alpha_h", self.alpha_h)?;
        check_unit("iou_threshold", self.iou_threshold)?;
        match &self.method {
            Method::Cutout(c) => c.validate(),
            Method::RegionAwareRandomErasing(c) => c.validate(),
            Method::Bboxcut | Method::None => Ok(()),
        }
    }

    /// Returns the config if it validates.
    pub fn validated(self) -> Result<Self, ConfigError> {
        self.validate()?;
        Ok(self)
    }
}

/// How a placement was painted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFill {
    Solid(Rgb),
    /// Independent uniform random intensities per pixel and channel.
    Noise,
}

/// A painted rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlacement {
    /// Ground-truth box the region was sampled from; `None` for box-agnostic methods.
    pub parent_index: Option<usize>,
    pub rect: BoundingBox,
    pub fill: MaskFill,
}

/// Everything an augmentation decided for one image, without the pixels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub was_augmented: bool,
    /// Boxes that passed the overlap filter.
    pub eligible_count: usize,
    /// Eligible boxes picked for masking, in annotation order.
    pub selected: Vec<usize>,
    pub placements: Vec<MaskPlacement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationOutcome {
    pub image: RgbImage,
    pub record: AugmentationRecord,
}

impl AugmentationOutcome {
    fn pass_through(image: &RgbImage) -> Self {
        Self {
            image: image.clone(),
            record: AugmentationRecord::default(),
        }
    }
}

/// Paints `rect` with a solid color. Pixels outside `rect` are untouched.
pub fn apply_mask(image: &mut RgbImage, rect: &BoundingBox, color: Rgb) -> Result<(), AugmentError> {
    check_fits(image, rect)?;
    let px = image::Rgb(color.0);
    for y in rect.y..rect.y + rect.h {
        for x in rect.x..rect.x + rect.w {
            image.put_pixel(x, y, px);
        }
    }
    Ok(())
}

pub(crate) fn check_fits(image: &RgbImage, rect: &BoundingBox) -> Result<(), AugmentError> {
    if rect.fits_within(image.width(), image.height()) {
        Ok(())
    } else {
        Err(AugmentError::OutOfBounds {
            rect: *rect,
            width: image.width(),
            height: image.height(),
        })
    }
}

fn check_image(input: &AnnotatedImage) -> Result<(), AugmentError> {
    let (w, h) = input.image.dimensions();
    if w == 0 || h == 0 {
        return Err(ColorError::EmptyImage { width: w, height: h }.into());
    }
    for b in &input.boxes {
        check_fits(&input.image, b)?;
    }
    Ok(())
}

/// Runs the configured method on one image with an explicit random stream.
///
/// For BBoxCut the stream is consumed in a fixed order: the image gate, one
/// selection draw per eligible box in annotation order, then for every selected
/// box four region draws followed by the color draws of the random strategy.
/// Annotations are never modified.
pub fn augment_image<R: Rng + ?Sized>(
    input: &AnnotatedImage,
    config: &AugmentationConfig,
    rng: &mut R,
) -> Result<AugmentationOutcome, AugmentError> {
    config.validate()?;
    check_image(input)?;
    match &config.method {
        Method::None => Ok(AugmentationOutcome::pass_through(&input.image)),
        Method::Bboxcut => bboxcut(input, config, rng),
        Method::Cutout(c) => {
            let mut image = input.image.clone();
            let record = baselines::cutout(&mut image, c, rng)?;
            Ok(AugmentationOutcome { image, record })
        }
        Method::RegionAwareRandomErasing(c) => {
            let mut image = input.image.clone();
            let record = baselines::region_aware_random_erasing(&mut image, &input.boxes, c, rng)?;
            Ok(AugmentationOutcome { image, record })
        }
    }
}

fn bboxcut<R: Rng + ?Sized>(
    input: &AnnotatedImage,
    config: &AugmentationConfig,
    rng: &mut R,
) -> Result<AugmentationOutcome, AugmentError> {
    if unit_open_closed(rng) > config.p_aug {
        return Ok(AugmentationOutcome::pass_through(&input.image));
    }

    let eligible = non_overlapping_boxes(&input.boxes, config.iou_threshold);
    let mut colors = MaskColorResolver::new(config.mask_color, &input.image)?;

    let selected: Vec<usize> = eligible
        .iter()
        .copied()
        .filter(|_| unit_open_closed(rng) <= config.p_m)
        .collect();

    let mut image = input.image.clone();
    let mut placements = Vec::new();
    for &i in &selected {
        let parent = &input.boxes[i];
        let Some(region) = sample_mask_region(i, parent, config.alpha_w, config.alpha_h, rng) else {
            continue;
        };
        // colors come from the untouched input, not the partially painted copy
        let color = colors.next_color(rng)?;
        apply_mask(&mut image, &region.rect, color)?;
        placements.push(MaskPlacement {
            parent_index: Some(i),
            rect: region.rect,
            fill: MaskFill::Solid(color),
        });
    }

    Ok(AugmentationOutcome {
        image,
        record: AugmentationRecord {
            was_augmented: true,
            eligible_count: eligible.len(),
            selected,
            placements,
        },
    })
}

/// Augments one image with the stream derived from the run seed and its identifier.
pub fn augment_with_seed(
    input: &AnnotatedImage,
    config: &AugmentationConfig,
) -> Result<AugmentationOutcome, AugmentError> {
    let mut rng = image_rng(config.seed, input.id.as_str());
    augment_image(input, config, &mut rng)
}

/// Builds a rayon pool with `workers` threads (at least one).
pub fn worker_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .thread_name(|i| format!("bboxcut-worker-{i}"))
        .build()
        .expect("failed to spawn worker threads")
}

/// Augments a whole dataset on `workers` threads.
///
/// Each image is processed with its own derived stream, so the output is identical
/// for every worker count and preserves input order. A failing image does not stop
/// the others.
pub fn augment_dataset(
    dataset: &[AnnotatedImage],
    config: &AugmentationConfig,
    workers: usize,
) -> Result<Vec<Result<AugmentationOutcome, AugmentError>>, ConfigError> {
    config.validate()?;
    let pool = worker_pool(workers);
    Ok(pool.install(|| {
        dataset
            .par_iter()
            .map(|img| augment_with_seed(img, config))
            .collect()
    }))
}
