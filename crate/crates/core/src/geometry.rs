//! Integer bounding-box arithmetic: IoU, overlap filtering and mask-region sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("degenerate box {w}x{h} at ({x}, {y}): width and height must be at least 1")]
pub struct DegenerateBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Axis-aligned box in pixel coordinates. Covers columns `x..x + w` and rows `y..y + h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self, DegenerateBox> {
        if w == 0 || h == 0 {
            return Err(DegenerateBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    /// Exclusive right edge.
    #[inline]
    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    /// Exclusive bottom edge.
    #[inline]
    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    #[inline]
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let left = self.x.max(other.x) as u64;
        let top = self.y.max(other.y) as u64;
        let right = self.right().min(other.right());
        let bottom = self.bottom().min(other.bottom());
        if right <= left || bottom <= top {
            0
        } else {
            (right - left) * (bottom - top)
        }
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// True when the box fits in a `width` x `height` raster.
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.right() <= width as u64 && self.bottom() <= height as u64
    }
}

/// IoU as an exact fraction `(intersection, union)`. Union is never zero for valid boxes.
pub fn iou_ratio(a: &BoundingBox, b: &BoundingBox) -> (u64, u64) {
    let inter = a.intersection_area(b);
    (inter, a.area() + b.area() - inter)
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (inter, union) = iou_ratio(a, b);
    if inter == 0 || union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Indices of the boxes whose IoU with every other box is at most `iou_threshold`.
///
/// Both members of an offending pair are excluded, so the result does not depend on
/// input order. Indices are returned in ascending order.
pub fn non_overlapping_boxes(boxes: &[BoundingBox], iou_threshold: f64) -> Vec<usize> {
    let n = boxes.len();
    let mut excluded = vec![false; n];

    // Any pair with IoU above a non-negative threshold must intersect, so a sweep over
    // boxes sorted by left edge only has to visit horizontally overlapping neighbours.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (boxes[i].x, i));
    for (pos, &i) in order.iter().enumerate() {
        let right = boxes[i].right();
        for &j in &order[pos + 1..] {
            if boxes[j].x as u64 >= right {
                break;
            }
            if iou(&boxes[i], &boxes[j]) > iou_threshold {
                excluded[i] = true;
                excluded[j] = true;
            }
        }
    }

    (0..n).filter(|&i| !excluded[i]).collect()
}

/// A sampled sub-rectangle of one of the image's boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRegion {
    /// Index of the parent box in the image's box list.
    pub parent_index: usize,
    pub rect: BoundingBox,
}

/// Upper bound (inclusive) of the sampled mask extent along one axis.
pub fn max_mask_extent(alpha: f64, extent: u32) -> u32 {
    let bound = (alpha * extent as f64).round();
    (bound.max(0.0) as u32).min(extent)
}

/// Samples a mask region inside `parent`.
///
/// Draws width then height uniformly from `0..=round(alpha * extent)`, then the left
/// and top offsets uniformly over every position that keeps the region inside the
/// parent. Exactly four draws are taken from `rng` in that order. A zero width or
/// height means no mask and yields `None`.
pub fn sample_mask_region<R: Rng + ?Sized>(
    parent_index: usize,
    parent: &BoundingBox,
    alpha_w: f64,
    alpha_h: f64,
    rng: &mut R,
) -> Option<MaskRegion> {
    let w = rng.random_range(0..=max_mask_extent(alpha_w, parent.w));
    let h = rng.random_range(0..=max_mask_extent(alpha_h, parent.h));
    let x = rng.random_range(parent.x..=parent.x + parent.w - w);
    let y = rng.random_range(parent.y..=parent.y + parent.h - h);
    if w == 0 || h == 0 {
        return None;
    }
    Some(MaskRegion {
        parent_index,
        rect: BoundingBox { x, y, w, h },
    })
}
