#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bboxcut::dataset_io::write_png;
use bboxcut::{AnnotatedImage, BoundingBox, ImageId};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Noise image with channel values drawn from `lo..=hi`.
pub fn noise_image(rng: &mut ChaCha8Rng, w: u32, h: u32, lo: u8, hi: u8) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| {
        image::Rgb([rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)])
    })
}

/// Field-like image: a dominant background with a few brighter blobs.
pub fn field_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let base = [rng.random_range(20..80u8), rng.random_range(60..140u8), rng.random_range(10..60u8)];
    RgbImage::from_fn(w, h, |_, _| {
        if rng.random_bool(0.7) {
            image::Rgb(base)
        } else {
            image::Rgb([rng.random(), rng.random(), rng.random()])
        }
    })
}

pub fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32, max_side: u32) -> BoundingBox {
    let bw = rng.random_range(1..=max_side.min(w));
    let bh = rng.random_range(1..=max_side.min(h));
    BoundingBox::new(rng.random_range(0..=w - bw), rng.random_range(0..=h - bh), bw, bh).unwrap()
}

pub fn random_boxes(rng: &mut ChaCha8Rng, w: u32, h: u32, max_count: usize, max_side: u32) -> Vec<BoundingBox> {
    let n = rng.random_range(0..=max_count);
    (0..n).map(|_| random_box(rng, w, h, max_side)).collect()
}

pub fn annotated(id: &str, image: RgbImage, boxes: Vec<BoundingBox>) -> AnnotatedImage {
    AnnotatedImage {
        id: ImageId(id.to_string()),
        image,
        boxes,
    }
}

/// Writes `n` PNG images plus a COCO file. Some boxes stick out of their image and a
/// few lie entirely outside, so loading exercises clipping and dropping.
pub fn write_synthetic_coco(dir: &Path, n: usize, size: u32, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = rng(seed);
    let image_root = dir.join("src_images");
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut next_ann = 1;
    for i in 0..n {
        let file_name = format!("batch{}/img_{i:04}.png", i % 3);
        let (w, h) = (size + rng.random_range(0..16), size);
        write_png(&image_root.join(&file_name), &field_image(&mut rng, w, h)).unwrap();
        images.push(json!({"id": 1000 + i, "file_name": file_name, "width": w, "height": h, "domain": i % 5}));
        for b in random_boxes(&mut rng, w, h, 8, size / 3) {
            let mut bbox = json!([b.x, b.y, b.w, b.h]);
            if rng.random_bool(0.05) {
                bbox = json!([b.x, b.y, b.w + size, b.h]);
            } else if rng.random_bool(0.02) {
                bbox = json!([w + 3, b.y, b.w, b.h]);
            }
            annotations.push(json!({
                "id": next_ann, "image_id": 1000 + i, "bbox": bbox, "category_id": 1,
                "area": b.w * b.h, "iscrowd": 0
            }));
            next_ann += 1;
        }
    }
    let coco = json!({
        "info": {"description": "synthetic wheat field"},
        "licenses": [],
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "wheat_head", "supercategory": "plant"}]
    });
    let ann = dir.join("annotations.json");
    fs::write(&ann, serde_json::to_vec_pretty(&coco).unwrap()).unwrap();
    (ann, image_root)
}

/// Every file under `root` keyed by its relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Runs one acceptance criterion, prints a PASS/FAIL line and panics on failure or
/// when the runtime budget is exceeded.
pub fn criterion<F: FnOnce() -> Result<String, String>>(name: &str, budget: Duration, check: F) {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
        .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()));
    let elapsed = start.elapsed();
    let verdict = match &result {
        Ok(_) if elapsed <= budget => "PASS",
        _ => "FAIL",
    };
    let detail = match &result {
        Ok(d) => d.clone(),
        Err(e) => e.clone(),
    };
    // bypass the test harness capture so the verdict is always visible
    let mut out = std::io::stdout().lock();
    writeln!(out, "[{verdict}] {name} ({:.2}s / budget {:.0}s): {detail}", elapsed.as_secs_f64(), budget.as_secs_f64()).unwrap();
    drop(out);
    if let Err(e) = result {
        panic!("{name}: {e}");
    }
    assert!(elapsed <= budget, "{name}: took {elapsed:?}, budget {budget:?}");
}

/// Fails the enclosing criterion with a message when `cond` is false.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}
