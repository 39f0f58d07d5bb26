//! Reading and writing annotated datasets.
//!
//! Two annotation formats are accepted:
//!
//! * COCO JSON: `images[{id, file_name, width, height}]`,
//!   `annotations[{id, image_id, bbox: [x, y, w, h], category_id}]`, `categories[...]`.
//!   Unknown fields are carried through untouched.
//! * CSV with the header `image_name,x,y,w,h`, one box per row. A row whose four
//!   coordinates are empty declares an image without boxes.
//!
//! Output is always COCO JSON plus PNG images, so pixels survive byte-exactly.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader, RgbImage};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::augment::{AnnotatedImage, AugmentationOutcome, ImageId};
use crate::geometry::BoundingBox;

pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_FILE: &str = "annotations.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed JSON at byte {offset} (line {line}, column {column}): {message}")]
    Json {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: unsupported annotation format (expected .json or .csv)")]
    UnsupportedFormat { path: PathBuf },
    #[error("duplicate image id `{0}`")]
    DuplicateImage(ImageId),
    #[error("annotation #{index} references unknown image id `{image_id}`")]
    UnknownImage { index: usize, image_id: String },
    #[error("missing image file {}", path.display())]
    MissingImage { path: PathBuf },
    #[error("cannot decode image {}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot encode image {}: {source}", path.display())]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image `{image_id}`: annotation says {recorded:?} but the file is {actual:?}")]
    DimensionMismatch {
        image_id: ImageId,
        recorded: (u32, u32),
        actual: (u32, u32),
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    Coco,
    Csv,
}

impl AnnotationFormat {
    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => Ok(AnnotationFormat::Coco),
            Some("csv") => Ok(AnnotationFormat::Csv),
            _ => Err(DatasetError::UnsupportedFormat {
                path: path.to_path_buf(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub id: ImageId,
    /// The id exactly as written in the source annotations, if any.
    pub raw_id: Option<Value>,
    /// Path relative to the image root, as written in the annotations.
    pub file_name: String,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    /// Index into [`DatasetManifest::images`].
    pub image_index: usize,
    pub bbox: BoundingBox,
    pub id: Option<Value>,
    pub category_id: Option<Value>,
    pub extra: Map<String, Value>,
}

/// A box removed at load time because nothing was left of it after clipping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedBox {
    pub image_id: ImageId,
    pub original: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub format: AnnotationFormat,
    pub images: Vec<ImageEntry>,
    /// Surviving annotations, in file order.
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Value>,
    /// Other top-level COCO fields (`info`, `licenses`, ...).
    pub extra: Map<String, Value>,
    pub dropped: Vec<DroppedBox>,
}

/// A decoded image together with whether its source file can be reused verbatim.
pub struct SourceImage {
    pub annotated: AnnotatedImage,
    /// The source is an 8-bit RGB PNG, so copying the file is equivalent to re-encoding.
    pub verbatim_png: bool,
}

impl DatasetManifest {
    /// Boxes of every image, in annotation order.
    pub fn boxes_by_image(&self) -> Vec<Vec<BoundingBox>> {
        let mut out = vec![Vec::new(); self.images.len()];
        for a in &self.annotations {
            out[a.image_index].push(a.bbox);
        }
        out
    }

    pub fn boxes_for(&self, image_index: usize) -> Vec<BoundingBox> {
        self.annotations
            .iter()
            .filter(|a| a.image_index == image_index)
            .map(|a| a.bbox)
            .collect()
    }

    /// Decodes image `index` to 8-bit RGB and attaches `boxes`.
    pub fn load_image(&self, index: usize, boxes: Vec<BoundingBox>) -> Result<SourceImage, DatasetError> {
        let entry = &self.images[index];
        let reader = ImageReader::open(&entry.path)
            .map_err(io_err(&entry.path))?
            .with_guessed_format()
            .map_err(io_err(&entry.path))?;
        let format = reader.format();
        let decoded = reader.decode().map_err(|source| DatasetError::Decode {
            path: entry.path.clone(),
            source,
        })?;
        let verbatim_png = format == Some(ImageFormat::Png) && matches!(decoded, DynamicImage::ImageRgb8(_));
        let image = decoded.into_rgb8();
        if image.dimensions() != (entry.width, entry.height) {
            return Err(DatasetError::DimensionMismatch {
                image_id: entry.id.clone(),
                recorded: (entry.width, entry.height),
                actual: image.dimensions(),
            });
        }
        Ok(SourceImage {
            annotated: AnnotatedImage {
                id: entry.id.clone(),
                image,
                boxes,
            },
            verbatim_png,
        })
    }

    /// Equality ignoring where files live and what was dropped while loading.
    pub fn structurally_eq(&self, other: &DatasetManifest) -> bool {
        let image_eq = |a: &ImageEntry, b: &ImageEntry| {
            a.id == b.id
                && a.raw_id == b.raw_id
                && output_file_name(&a.file_name) == output_file_name(&b.file_name)
                && (a.width, a.height) == (b.width, b.height)
                && a.extra == b.extra
        };
        self.images.len() == other.images.len()
            && self.images.iter().zip(&other.images).all(|(a, b)| image_eq(a, b))
            && self.annotations == other.annotations
            && self.categories == other.categories
            && self.extra == other.extra
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<Value>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<Value>,
    file_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<Value>,
    image_id: Value,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category_id: Option<Value>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

fn id_key(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Converts a COCO `[x, y, w, h]` box to integer pixels clipped to the image.
///
/// Edges are rounded to the nearest pixel boundary. Returns `None` when less than one
/// pixel is left in either direction.
pub fn clip_box(bbox: [f64; 4], width: u32, height: u32) -> Option<BoundingBox> {
    if bbox.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let [x, y, w, h] = bbox;
    let clamp = |v: f64, hi: u32| v.round().clamp(0.0, hi as f64) as u32;
    let (left, right) = (clamp(x, width), clamp(x + w, width));
    let (top, bottom) = (clamp(y, height), clamp(y + h, height));
    BoundingBox::new(left, top, right.saturating_sub(left), bottom.saturating_sub(top)).ok()
}

struct PendingImage {
    id: ImageId,
    raw_id: Option<Value>,
    file_name: String,
    width: Option<u32>,
    height: Option<u32>,
    extra: Map<String, Value>,
}

struct PendingAnnotation {
    image_index: usize,
    bbox: [f64; 4],
    id: Option<Value>,
    category_id: Option<Value>,
    extra: Map<String, Value>,
}

/// Loads and validates a dataset. Boxes are clipped to their image; boxes with nothing
/// left are dropped with a warning and listed in [`DatasetManifest::dropped`].
pub fn load_dataset(annotation_path: &Path, image_root: &Path) -> Result<DatasetManifest, DatasetError> {
    let format = AnnotationFormat::from_path(annotation_path)?;
    let (pending, raw_annotations, categories, extra) = match format {
        AnnotationFormat::Coco => parse_coco(annotation_path)?,
        AnnotationFormat::Csv => parse_csv(annotation_path)?,
    };

    let images: Vec<ImageEntry> = pending
        .into_par_iter()
        .map(|p| resolve_image(p, image_root))
        .collect::<Result<_, _>>()?;

    let mut annotations = Vec::with_capacity(raw_annotations.len());
    let mut dropped = Vec::new();
    for a in raw_annotations {
        let entry = &images[a.image_index];
        match clip_box(a.bbox, entry.width, entry.height) {
            Some(bbox) => annotations.push(Annotation {
                image_index: a.image_index,
                bbox,
                id: a.id,
                category_id: a.category_id,
                extra: a.extra,
            }),
            None => {
                warn!(
                    "image `{}`: dropping box {:?}, nothing left after clipping to {}x{}",
                    entry.id, a.bbox, entry.width, entry.height
                );
                dropped.push(DroppedBox {
                    image_id: entry.id.clone(),
                    original: a.bbox,
                });
            }
        }
    }

    Ok(DatasetManifest {
        format,
        images,
        annotations,
        categories,
        extra,
        dropped,
    })
}

fn resolve_image(p: PendingImage, image_root: &Path) -> Result<ImageEntry, DatasetError> {
    let path = image_root.join(&p.file_name);
    if !path.is_file() {
        return Err(DatasetError::MissingImage { path });
    }
    let (w, h) = ImageReader::open(&path)
        .map_err(io_err(&path))?
        .with_guessed_format()
        .map_err(io_err(&path))?
        .into_dimensions()
        .map_err(|source| DatasetError::Decode {
            path: path.clone(),
            source,
        })?;
    let recorded = (p.width.unwrap_or(w), p.height.unwrap_or(h));
    if recorded != (w, h) {
        return Err(DatasetError::DimensionMismatch {
            image_id: p.id,
            recorded,
            actual: (w, h),
        });
    }
    Ok(ImageEntry {
        id: p.id,
        raw_id: p.raw_id,
        file_name: p.file_name,
        path,
        width: w,
        height: h,
        extra: p.extra,
    })
}

type Parsed = (Vec<PendingImage>, Vec<PendingAnnotation>, Vec<Value>, Map<String, Value>);

fn parse_coco(path: &Path) -> Result<Parsed, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let coco: CocoFile = serde_json::from_str(&text).map_err(|e| DatasetError::Json {
        path: path.to_path_buf(),
        offset: byte_offset(&text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut images = Vec::with_capacity(coco.images.len());
    for img in coco.images {
        let id = ImageId(img.id.as_ref().map(id_key).unwrap_or_else(|| img.file_name.clone()));
        if index.insert(id.0.clone(), images.len()).is_some() {
            return Err(DatasetError::DuplicateImage(id));
        }
        images.push(PendingImage {
            id,
            raw_id: img.id,
            file_name: img.file_name,
            width: img.width,
            height: img.height,
            extra: img.extra,
        });
    }

    let annotations = coco
        .annotations
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            let key = id_key(&a.image_id);
            let image_index = *index.get(&key).ok_or(DatasetError::UnknownImage { index: i, image_id: key })?;
            Ok(PendingAnnotation {
                image_index,
                bbox: a.bbox,
                id: a.id,
                category_id: a.category_id,
                extra: a.extra,
            })
        })
        .collect::<Result<_, DatasetError>>()?;

    Ok((images, annotations, coco.categories, coco.extra))
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    image_name: String,
    x: Option<f64>,
    y: Option<f64>,
    w: Option<f64>,
    h: Option<f64>,
}

fn parse_csv(path: &Path) -> Result<Parsed, DatasetError> {
    let csv_err = |message: String| DatasetError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        let image_index = *index.entry(row.image_name.clone()).or_insert_with(|| {
            images.push(PendingImage {
                id: ImageId(row.image_name.clone()),
                raw_id: None,
                file_name: row.image_name.clone(),
                width: None,
                height: None,
                extra: Map::new(),
            });
            images.len() - 1
        });
        match (row.x, row.y, row.w, row.h) {
            (Some(x), Some(y), Some(w), Some(h)) => annotations.push(PendingAnnotation {
                image_index,
                bbox: [x, y, w, h],
                id: None,
                category_id: None,
                extra: Map::new(),
            }),
            (None, None, None, None) => {}
            _ => {
                return Err(csv_err(format!(
                    "row for `{}` has some but not all of x, y, w, h",
                    row.image_name
                )))
            }
        }
    }
    Ok((images, annotations, Vec::new(), Map::new()))
}

/// File name of an image in the output tree: same relative path, `.png` extension.
pub fn output_file_name(file_name: &str) -> String {
    Path::new(file_name).with_extension("png").to_string_lossy().replace('\\', "/")
}

pub fn output_image_path(out_root: &Path, entry: &ImageEntry) -> PathBuf {
    out_root.join(IMAGES_DIR).join(output_file_name(&entry.file_name))
}

fn ensure_parent(path: &Path) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(())
}

/// Encodes `image` as PNG at `path`, creating parent directories.
pub fn write_png(path: &Path, image: &RgbImage) -> Result<(), DatasetError> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    image
        .write_to(&mut writer, ImageFormat::Png)
        .map_err(|source| DatasetError::Encode {
            path: path.to_path_buf(),
            source,
        })?;
    writer.flush().map_err(io_err(path))
}

/// Writes the output image for `entry`, reusing the source file when that is lossless.
pub fn write_output_image(
    out_root: &Path,
    entry: &ImageEntry,
    image: &RgbImage,
    copy_source: bool,
) -> Result<PathBuf, DatasetError> {
    let path = output_image_path(out_root, entry);
    if copy_source {
        ensure_parent(&path)?;
        fs::copy(&entry.path, &path).map_err(io_err(&entry.path))?;
    } else {
        write_png(&path, image)?;
    }
    Ok(path)
}

/// Writes `annotations.json` for the output tree and returns its path.
///
/// Images point at their PNG outputs; boxes are the clipped ones; everything else
/// is copied from the source annotations.
pub fn write_annotations(manifest: &DatasetManifest, out_root: &Path) -> Result<PathBuf, DatasetError> {
    let images = manifest
        .images
        .iter()
        .map(|e| CocoImage {
            id: Some(e.raw_id.clone().unwrap_or_else(|| Value::String(e.id.0.clone()))),
            file_name: output_file_name(&e.file_name),
            width: Some(e.width),
            height: Some(e.height),
            extra: e.extra.clone(),
        })
        .collect();
    let annotations = manifest
        .annotations
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let entry = &manifest.images[a.image_index];
            let b = a.bbox;
            CocoAnnotation {
                id: Some(a.id.clone().unwrap_or_else(|| Value::from(i as u64 + 1))),
                image_id: entry.raw_id.clone().unwrap_or_else(|| Value::String(entry.id.0.clone())),
                bbox: [b.x as f64, b.y as f64, b.w as f64, b.h as f64],
                category_id: a.category_id.clone(),
                extra: a.extra.clone(),
            }
        })
        .collect();
    let coco = CocoFile {
        images,
        annotations,
        categories: manifest.categories.clone(),
        extra: manifest.extra.clone(),
    };

    let path = out_root.join(ANNOTATIONS_FILE);
    ensure_parent(&path)?;
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &coco)
        .map_err(io::Error::from)
        .map_err(io_err(&path))?;
    writer.write_all(b"\n").and_then(|_| writer.flush()).map_err(io_err(&path))?;
    Ok(path)
}

/// Result of [`write_dataset`]; per-image failures do not stop the others.
#[derive(Debug)]
pub struct WriteSummary {
    pub annotations_path: PathBuf,
    pub failures: Vec<(ImageId, DatasetError)>,
}

/// Writes augmented images (as PNG) and the annotation file under `out_root`.
/// `outcomes` must align with `manifest.images`.
pub fn write_dataset(
    outcomes: &[AugmentationOutcome],
    manifest: &DatasetManifest,
    out_root: &Path,
) -> Result<WriteSummary, DatasetError> {
    assert_eq!(outcomes.len(), manifest.images.len(), "outcomes must align with manifest images");
    let failures = outcomes
        .par_iter()
        .zip(&manifest.images)
        .filter_map(|(o, e)| write_output_image(out_root, e, &o.image, false).err().map(|err| (e.id.clone(), err)))
        .collect();
    let annotations_path = write_annotations(manifest, out_root)?;
    Ok(WriteSummary {
        annotations_path,
        failures,
    })
}
