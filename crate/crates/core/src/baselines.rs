//! Comparison augmentors: Cutout and region-aware Random Erasing.
//!
//! Both follow the same determinism contract as BBoxCut: the first draw is the
//! application gate, and everything else is a function of the explicit stream.

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{check_unit, AugmentationRecord, ConfigError, MaskFill, MaskPlacement};
use crate::color::Rgb;
use crate::geometry::{iou, BoundingBox};
use crate::rng::unit_open_closed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("cutout side {side} exceeds the {width}x{height} image")]
    SideTooLarge { side: u32, width: u32, height: u32 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Zero-valued squares at box-agnostic positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoutConfig {
    /// Square side in pixels; `None` uses an eighth of the shorter image side.
    pub side: Option<u32>,
    pub count: u32,
    pub apply_probability: f64,
}

impl Default for CutoutConfig {
    fn default() -> Self {
        Self {
            side: None,
            count: 1,
            apply_probability: 0.3,
        }
    }
}

impl CutoutConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.side == Some(0) {
            return Err(ConfigError::ZeroCount { name: "cutout side" });
        }
        if self.count == 0 {
            return Err(ConfigError::ZeroCount { name: "cutout count" });
        }
        check_unit("cutout apply_probability", self.apply_probability)
    }

    pub fn side_for(&self, width: u32, height: u32) -> u32 {
        self.side.unwrap_or_else(|| (width.min(height) / 8).max(1))
    }
}

/// Paints `count` black squares at uniform positions, ignoring annotations.
///
/// Draws: the gate, then `x` and `y` for each square.
pub fn cutout<R: Rng + ?Sized>(
    image: &mut RgbImage,
    config: &CutoutConfig,
    rng: &mut R,
) -> Result<AugmentationRecord, BaselineError> {
    config.validate()?;
    let (width, height) = image.dimensions();
    let side = config.side_for(width, height);
    if side > width.min(height) {
        return Err(BaselineError::SideTooLarge { side, width, height });
    }
    if unit_open_closed(rng) > config.apply_probability {
        return Ok(AugmentationRecord::default());
    }

    let black = image::Rgb(Rgb::BLACK.0);
    let mut placements = Vec::with_capacity(config.count as usize);
    for _ in 0..config.count {
        let x = rng.random_range(0..=width - side);
        let y = rng.random_range(0..=height - side);
        for py in y..y + side {
            for px in x..x + side {
                image.put_pixel(px, py, black);
            }
        }
        placements.push(MaskPlacement {
            parent_index: None,
            rect: BoundingBox { x, y, w: side, h: side },
            fill: MaskFill::Solid(Rgb::BLACK),
        });
    }
    Ok(AugmentationRecord {
        was_augmented: true,
        placements,
        ..Default::default()
    })
}

/// Random Erasing that steers clear of ground-truth boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAwareREConfig {
    /// Erased area as a fraction of the image area, `(min, max)`.
    pub area_range: (f64, f64),
    /// Height-to-width ratio of the erased rectangle, `(min, max)`.
    pub aspect_range: (f64, f64),
    pub apply_probability: f64,
    /// A candidate whose IoU with any ground-truth box exceeds this is rejected.
    pub max_box_overlap: f64,
    pub max_resample_attempts: u32,
}

impl Default for RegionAwareREConfig {
    fn default() -> Self {
        Self {
            area_range: (0.02, 0.2),
            aspect_range: (0.3, 3.33),
            apply_probability: 0.3,
            max_box_overlap: 0.2,
            max_resample_attempts: 10,
        }
    }
}

impl RegionAwareREConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let range_ok = |(min, max): (f64, f64)| min > 0.0 && min <= max && max.is_finite();
        if !range_ok(self.area_range) || self.area_range.1 > 1.0 {
            let (min, max) = self.area_range;
            return Err(ConfigError::BadRange { name: "erasing area_range", min, max });
        }
        if !range_ok(self.aspect_range) {
            let (min, max) = self.aspect_range;
            return Err(ConfigError::BadRange { name: "erasing aspect_range", min, max });
        }
        check_unit("erasing apply_probability", self.apply_probability)?;
        check_unit("erasing max_box_overlap", self.max_box_overlap)?;
        if self.max_resample_attempts == 0 {
            return Err(ConfigError::ZeroCount { name: "erasing max_resample_attempts" });
        }
        Ok(())
    }
}

/// Draws one candidate rectangle: area fraction, aspect ratio, then (if the size fits)
/// `x` and `y`. Returns `None` when the rounded size does not fit in the image.
pub fn sample_erase_candidate<R: Rng + ?Sized>(
    width: u32,
    height: u32,
    config: &RegionAwareREConfig,
    rng: &mut R,
) -> Option<BoundingBox> {
    let fraction = rng.random_range(config.area_range.0..=config.area_range.1);
    let aspect = rng.random_range(config.aspect_range.0..=config.aspect_range.1);
    let area = fraction * width as f64 * height as f64;
    let h = (area * aspect).sqrt().round();
    let w = (area / aspect).sqrt().round();
    if w < 1.0 || h < 1.0 || w > width as f64 || h > height as f64 {
        return None;
    }
    let (w, h) = (w as u32, h as u32);
    let x = rng.random_range(0..=width - w);
    let y = rng.random_range(0..=height - h);
    Some(BoundingBox { x, y, w, h })
}

/// Erases at most one rectangle with per-pixel noise, resampling candidates that
/// overlap a ground-truth box too much. Gives up after `max_resample_attempts`.
pub fn region_aware_random_erasing<R: Rng + ?Sized>(
    image: &mut RgbImage,
    boxes: &[BoundingBox],
    config: &RegionAwareREConfig,
    rng: &mut R,
) -> Result<AugmentationRecord, BaselineError> {
    config.validate()?;
    if unit_open_closed(rng) > config.apply_probability {
        return Ok(AugmentationRecord::default());
    }
    let (width, height) = image.dimensions();

    let accepted = (0..config.max_resample_attempts).find_map(|_| {
        sample_erase_candidate(width, height, config, rng)
            .filter(|c| boxes.iter().all(|b| iou(c, b) <= config.max_box_overlap))
    });

    let mut record = AugmentationRecord {
        was_augmented: true,
        ..Default::default()
    };
    if let Some(rect) = accepted {
        for py in rect.y..rect.y + rect.h {
            for px in rect.x..rect.x + rect.w {
                image.put_pixel(px, py, image::Rgb([rng.random(), rng.random(), rng.random()]));
            }
        }
        record.placements.push(MaskPlacement {
            parent_index: None,
            rect,
            fill: MaskFill::Noise,
        });
    }
    Ok(record)
}
