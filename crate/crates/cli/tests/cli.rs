use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bboxcut"));
    cmd.env_remove("BBOXCUT_WORKERS");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("failed to spawn bboxcut")
}

/// Twelve 40x32 gradient images with two boxes each. Image 0 carries a pair with IoU
/// 1/3, every other pair is disjoint.
fn dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let root = dir.join("imgs");
    fs::create_dir_all(&root).unwrap();
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for i in 0..12u32 {
        let name = format!("f{i:02}.png");
        image::RgbImage::from_fn(40, 32, |x, y| image::Rgb([(x * 6) as u8, (y * 7) as u8, (i * 20) as u8]))
            .save(root.join(&name))
            .unwrap();
        images.push(json!({"id": i, "file_name": name, "width": 40, "height": 32}));
        let second = if i == 0 { [5, 0, 10, 10] } else { [20, 16, 12, 12] };
        for (k, b) in [[0, 0, 10, 10], second].iter().enumerate() {
            annotations.push(json!({"id": i * 2 + k as u32 + 1, "image_id": i, "bbox": b, "category_id": 1}));
        }
    }
    let ann = dir.join("coco.json");
    let coco = json!({"images": images, "annotations": annotations, "categories": [{"id": 1, "name": "head"}]});
    fs::write(&ann, serde_json::to_vec(&coco).unwrap()).unwrap();
    (ann, root)
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().display().to_string(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn augment(ann: &Path, root: &Path, out: &Path, extra: &[&str]) -> Output {
    run(bin()
        .arg("augment")
        .arg("--annotations")
        .arg(ann)
        .arg("--images")
        .arg(root)
        .arg("--out")
        .arg(out)
        .args(extra))
}

#[test]
fn method_none_passes_images_through() {
    let dir = tempfile::tempdir().unwrap();
    let (ann, root) = dataset(dir.path());
    let out = dir.path().join("out");
    let o = augment(&ann, &root, &out, &["--method", "none", "--p-aug", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(tree(&out.join("images")), tree(&root));
}

#[test]
fn out_of_range_probability_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (ann, root) = dataset(dir.path());
    let o = augment(&ann, &root, &dir.path().join("out"), &["--p-aug", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--p-aug"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn inconsistent_range_names_the_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (ann, root) = dataset(dir.path());
    let o = augment(
        &ann,
        &root,
        &dir.path().join("out"),
        &["--method", "region-aware-random-erasing", "--rae-area-min", "0.5", "--rae-area-max", "0.1"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--rae-area-min"));
}

#[test]
fn missing_annotation_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = augment(&dir.path().join("nope.json"), dir.path(), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn same_seed_same_tree_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (ann, root) = dataset(dir.path());
    let args = ["--seed", "42", "--p-aug", "0.8", "--p-m", "0.9", "--alpha-w", "0.8", "--alpha-h", "0.8"];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(augment(&ann, &root, &a, &[&args[..], &["--workers", "1"]].concat()).status.success());
    assert!(augment(&ann, &root, &b, &[&args[..], &["--workers", "6"]].concat()).status.success());
    assert!(augment(&ann, &root, &c, &args).status.success());
    let ta = tree(&a);
    assert_eq!(ta, tree(&b));
    assert_eq!(ta, tree(&c));

    let report: Value = serde_json::from_slice(&ta["report.json"]).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert!(report["aggregate"]["masks_applied"].as_u64().unwrap() > 0);
    assert!(ta.keys().any(|k| k.starts_with("images/")));
    assert!(ta.contains_key("annotations.json"));

    let other = dir.path().join("d");
    assert!(augment(&ann, &root, &other, &["--seed", "43", "--p-aug", "0.8", "--p-m", "0.9"]).status.success());
    assert_ne!(ta["report.json"], tree(&other)["report.json"]);
}

#[test]
fn workers_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let (ann, root) = dataset(dir.path());
    let out = dir.path().join("out");
    let bad = run(bin()
        .env("BBOXCUT_WORKERS", "0")
        .args(["augment", "--out"])
        .arg(&out)
        .arg("--annotations")
        .arg(&ann)
        .arg("--images")
        .arg(&root));
    assert_eq!(bad.status.code(), Some(2), "worker count 0 from the environment must be rejected");
    let good = run(bin()
        .env("BBOXCUT_WORKERS", "3")
        .args(["augment", "--out"])
        .arg(&out)
        .arg("--annotations")
        .arg(&ann)
        .arg("--images")
        .arg(&root));
    assert!(good.status.success());
}

#[test]
fn stats_reports_overlap_exclusions() {
    let dir = tempfile::tempdir().unwrap();
    let (ann, root) = dataset(dir.path());
    let out = dir.path().join("stats");
    let base = |tau: &str| {
        run(bin()
            .arg("stats")
            .arg("--annotations")
            .arg(&ann)
            .arg("--images")
            .arg(&root)
            .args(["--iou-thresh", tau, "--out"])
            .arg(&out))
    };
    let o = base("0.3");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats: Value = serde_json::from_slice(&fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["images"], 12);
    assert_eq!(stats["boxes"], 24);
    // IoU 1/3 > 0.3 excludes both members of the pair
    assert_eq!(stats["excluded_boxes"], 2);
    let hist: Vec<u64> = stats["max_iou_histogram"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(hist.iter().sum::<u64>(), 12);
    assert_eq!(hist[0], 11);
    assert_eq!(hist[3], 1);

    assert!(base("0.5").status.success());
    let stats: Value = serde_json::from_slice(&fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["excluded_boxes"], 0);
}

#[test]
fn preview_writes_overlays_and_legend() {
    let dir = tempfile::tempdir().unwrap();
    let (ann, root) = dataset(dir.path());
    let out = dir.path().join("out");
    let o = run(bin()
        .arg("preview")
        .arg("--annotations")
        .arg(&ann)
        .arg("--images")
        .arg(&root)
        .arg("--out")
        .arg(&out)
        .args(["--samples", "4", "--p-aug", "1"]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = tree(&out.join("previews"));
    assert_eq!(files.keys().filter(|k| k.ends_with(".png")).count(), 4);
    let legend: Value = serde_json::from_slice(&files["legend.json"]).unwrap();
    assert_eq!(legend["images"].as_array().unwrap().len(), 4);
}
