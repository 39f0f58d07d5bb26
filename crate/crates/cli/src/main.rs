use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bboxcut::augment::ConfigError;
use bboxcut::dataset_io::DatasetManifest;
use bboxcut::metrics::DatasetStats;
use bboxcut::pipeline::write_json;
use bboxcut::{
    dataset_stats, load_dataset, run_augment, run_preview, AugmentationConfig, CutoutConfig, MaskColorStrategy,
    Method, RegionAwareREConfig,
};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::error;

/// Bounding-box-aware occlusion augmentation for object-detection datasets.
#[derive(Parser, Debug)]
#[command(name = "bboxcut", version, about)]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Augment a dataset and write images, annotations and a coverage report.
    Augment(AugmentArgs),
    /// Render overlays of selected boxes, unselected boxes and masks for a few images.
    Preview(PreviewArgs),
    /// Print box-count and overlap statistics of a dataset.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct DatasetArgs {
    /// COCO JSON (.json) or CSV (.csv: image_name,x,y,w,h) annotation file.
    #[arg(long)]
    annotations: PathBuf,

    /// Directory that annotation file names are relative to.
    #[arg(long)]
    images: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodName {
    Bboxcut,
    Cutout,
    #[value(name = "region-aware-random-erasing", alias = "region_aware_random_erasing")]
    RegionAwareRandomErasing,
    None,
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must be within [0, 1]".to_string())
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be a positive number".to_string())
    }
}

fn parse_mask_color(s: &str) -> Result<MaskColorStrategy, String> {
    s.parse().map_err(|e: bboxcut::color::ColorError| e.to_string())
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Probability that an image is augmented.
    #[arg(long, default_value_t = 0.3, value_parser = parse_unit)]
    p_aug: f64,
    /// Probability that an eligible box is masked.
    #[arg(long, default_value_t = 0.3, value_parser = parse_unit)]
    p_m: f64,
    /// Maximum mask width as a fraction of the box width.
    #[arg(long, default_value_t = 0.3, value_parser = parse_unit)]
    alpha_w: f64,
    /// Maximum mask height as a fraction of the box height.
    #[arg(long, default_value_t = 0.3, value_parser = parse_unit)]
    alpha_h: f64,
    /// Boxes whose IoU with another box exceeds this are never masked.
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit)]
    iou_thresh: f64,
    /// black, gray, white, random or global_dominant.
    #[arg(long, default_value = "global_dominant", value_parser = parse_mask_color)]
    mask_color: MaskColorStrategy,
    #[arg(long, value_enum, default_value_t = MethodName::Bboxcut)]
    method: MethodName,
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Cutout square side in pixels [default: 1/8 of the shorter image side].
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    cutout_side: Option<u32>,
    /// Cutout squares per image.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    cutout_count: u32,
    /// Cutout application probability.
    #[arg(long, default_value_t = 0.3, value_parser = parse_unit)]
    cutout_prob: f64,

    /// Region-aware erasing application probability.
    #[arg(long, default_value_t = 0.3, value_parser = parse_unit)]
    rae_prob: f64,
    /// Smallest erased area as a fraction of the image.
    #[arg(long, default_value_t = 0.02, value_parser = parse_unit)]
    rae_area_min: f64,
    /// Largest erased area as a fraction of the image.
    #[arg(long, default_value_t = 0.2, value_parser = parse_unit)]
    rae_area_max: f64,
    /// Smallest height/width ratio of the erased rectangle.
    #[arg(long, default_value_t = 0.3, value_parser = parse_positive)]
    rae_aspect_min: f64,
    /// Largest height/width ratio of the erased rectangle.
    #[arg(long, default_value_t = 3.33, value_parser = parse_positive)]
    rae_aspect_max: f64,
    /// Largest IoU an erased rectangle may have with any ground-truth box.
    #[arg(long, default_value_t = 0.2, value_parser = parse_unit)]
    rae_max_overlap: f64,
    /// Candidates tried before giving up on an image.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    rae_attempts: u32,
}

impl ConfigArgs {
    fn to_config(&self) -> Result<AugmentationConfig, ConfigError> {
        let method = match self.method {
            MethodName::Bboxcut => Method::Bboxcut,
            MethodName::None => Method::None,
            MethodName::Cutout => Method::Cutout(CutoutConfig {
                side: self.cutout_side,
                count: self.cutout_count,
                apply_probability: self.cutout_prob,
            }),
            MethodName::RegionAwareRandomErasing => Method::RegionAwareRandomErasing(RegionAwareREConfig {
                area_range: (self.rae_area_min, self.rae_area_max),
                aspect_range: (self.rae_aspect_min, self.rae_aspect_max),
                apply_probability: self.rae_prob,
                max_box_overlap: self.rae_max_overlap,
                max_resample_attempts: self.rae_attempts,
            }),
        };
        AugmentationConfig {
            p_aug: self.p_aug,
            p_m: self.p_m,
            alpha_w: self.alpha_w,
            alpha_h: self.alpha_h,
            iou_threshold: self.iou_thresh,
            mask_color: self.mask_color,
            method,
            seed: self.seed,
        }
        .validated()
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads [default: available cores].
    #[arg(long, env = "BBOXCUT_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

impl RunArgs {
    fn workers(&self) -> usize {
        self.workers.map(|w| w as usize).unwrap_or_else(default_workers)
    }
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct PreviewArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of images to render.
    #[arg(long, default_value_t = 8)]
    samples: usize,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// IoU threshold of the overlap filter.
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit)]
    iou_thresh: f64,
    /// Directory to write stats.json into.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Flag that controls the knob named in a config error.
fn flag_for(err: &ConfigError) -> &'static str {
    let name = match err {
        ConfigError::OutOfUnitRange { name, .. } | ConfigError::ZeroCount { name } | ConfigError::BadRange { name, .. } => *name,
    };
    match name {
        "p_aug" => "--p-aug",
        "p_m" => "--p-m",
        "alpha_w" => "--alpha-w",
        "alpha_h" => "--alpha-h",
        "iou_threshold" => "--iou-thresh",
        "erasing area_range" => "--rae-area-min/--rae-area-max",
        "erasing aspect_range" => "--rae-aspect-min/--rae-aspect-max",
        n if n.starts_with("cutout") => "--cutout-*",
        _ => "--rae-*",
    }
}

fn usage_error(err: ConfigError) -> ! {
    Cli::command()
        .error(ErrorKind::ValueValidation, format!("invalid value for {}: {err}", flag_for(&err)))
        .exit()
}

fn load(dataset: &DatasetArgs) -> Result<DatasetManifest, ExitCode> {
    load_dataset(&dataset.annotations, &dataset.images).map_err(|e| {
        error!("{e}");
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}

fn cmd_augment(args: &AugmentArgs) -> ExitCode {
    let config = args.run.config.to_config().unwrap_or_else(|e| usage_error(e));
    let manifest = match load(&args.run.dataset) {
        Ok(m) => m,
        Err(code) => return code,
    };
    match run_augment(&manifest, &config, &args.run.out, args.run.workers()) {
        Ok(summary) => {
            let agg = &summary.report.aggregate;
            println!(
                "augmented {}/{} images, {} masks, {} dropped boxes -> {}",
                agg.augmented_images,
                agg.images,
                agg.masks_applied,
                agg.dropped_degenerate_boxes,
                args.run.out.display()
            );
            for f in &summary.report.failures {
                eprintln!("error: {}: {}", f.image_id, f.error);
            }
            if summary.is_complete() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} images failed; see {}", agg.failed_images, summary.report_path.display());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_preview(args: &PreviewArgs) -> ExitCode {
    let config = args.run.config.to_config().unwrap_or_else(|e| usage_error(e));
    let manifest = match load(&args.run.dataset) {
        Ok(m) => m,
        Err(code) => return code,
    };
    match run_preview(&manifest, &config, &args.run.out, args.samples, args.run.workers()) {
        Ok(summary) => {
            println!(
                "rendered {} previews; legend: red = selected box, yellow = unselected box, blue = mask -> {}",
                summary.legend.images.len(),
                summary.legend_path.display()
            );
            for f in &summary.legend.failures {
                eprintln!("error: {}: {}", f.image_id, f.error);
            }
            if summary.legend.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn print_stats(s: &DatasetStats) {
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("images:                 {}", s.images);
    println!("boxes:                  {}", s.boxes);
    println!("mean boxes per image:   {}", opt(s.mean_boxes_per_image));
    println!("dropped (degenerate):   {}", s.dropped_degenerate_boxes);
    println!(
        "excluded at IoU > {}:   {} ({})",
        s.iou_threshold,
        s.excluded_boxes,
        opt(s.excluded_fraction)
    );
    println!("mean per-image max IoU: {}", opt(s.mean_max_iou));
    println!("per-image max IoU histogram:");
    let bins = s.max_iou_histogram.len();
    for (i, count) in s.max_iou_histogram.iter().enumerate() {
        let lo = i as f64 / bins as f64;
        let hi = (i + 1) as f64 / bins as f64;
        let close = if i + 1 == bins { ']' } else { ')' };
        println!("  [{lo:.1}, {hi:.1}{close} {count}");
    }
}

fn cmd_stats(args: &StatsArgs) -> ExitCode {
    let manifest = match load(&args.dataset) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let stats = dataset_stats(&manifest, args.iou_thresh);
    print_stats(&stats);
    if let Some(out) = &args.out {
        let path = Path::new(out).join("stats.json");
        if let Err(e) = write_json(&path, &stats) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match &cli.command {
        Command::Augment(args) => cmd_augment(args),
        Command::Preview(args) => cmd_preview(args),
        Command::Stats(args) => cmd_stats(args),
    }
}
