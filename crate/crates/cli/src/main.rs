//! `odm`: label generation, weak-label filtering, pre-training, evaluation
//! and visualization for text destylization models.
//!
//! Exit codes: 0 success, 1 a check or metric threshold failed, 2 bad input.
//! Summaries go to stdout; logs and diagnostics go to stderr.

mod imaging;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use odm_core::annot::{
    filter_weak, parse_canonical_line, parse_quad_line, parse_weak_line, read_canonical, write_canonical,
    SceneAnnotation, DEFAULT_MIN_CONF, DEFAULT_MIN_SIZE_PX,
};
use odm_core::eval::{aggregate, mask_to_regions, score_scene, shape_region, DEFAULT_IOU_THRESH, DEFAULT_MIN_AREA};
use odm_core::geom::{Point2, Polygon};
use odm_core::glyph::{builtin_font, load_font, render_label, GlyphSet, LabelCanvas};
use odm_core::gradsuite;
use odm_core::model::{tokenize_with, Charset, OdmModel};
use odm_core::synth::synth_dataset;
use odm_core::train::{apply_override, fit, load_checkpoint, TrainConfig, TrainSample};
use odm_core::OdmError;

#[derive(Parser, Debug)]
#[command(name = "odm", version, about = "Text destylization pre-training toolkit")]
struct Cli {
    /// Raise log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert annotations to canonical JSON lines.
    Import(ImportArgs),
    /// Render binary glyph label images for annotated scenes.
    GenLabels(GenLabelsArgs),
    /// Keep confident, large pseudo-label instances.
    FilterWeak(FilterWeakArgs),
    /// Train a model and write checkpoints plus a metrics CSV.
    Pretrain(PretrainArgs),
    /// Score detections against ground truth (precision, recall, hmean).
    Eval(EvalArgs),
    /// Write a prediction map and per-prompt attention heatmaps for one image.
    Render(RenderArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SourceFormat {
    /// `x1,y1,...,x4,y4,text` lines; one file per image.
    IcdarQuad,
    Canonical,
    /// `<image path>\t<json>` pseudo-label lines.
    Weak,
}

#[derive(Args, Debug)]
struct ImportArgs {
    #[arg(long, value_enum)]
    format: SourceFormat,
    /// Input file, or a directory of `.txt` files for icdar-quad.
    src: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Skip and count bad lines instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Image width, when it cannot be read from `--images`.
    #[arg(long, requires = "height")]
    width: Option<u32>,
    #[arg(long, requires = "width")]
    height: Option<u32>,
    /// Directory holding `<image_id>.png` files, used for image sizes.
    #[arg(long)]
    images: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("glyphs").required(true).args(["font", "builtin_font"])))]
struct GenLabelsArgs {
    annotations: PathBuf,
    /// TrueType or OpenType font file.
    #[arg(long)]
    font: Option<PathBuf>,
    /// Use the embedded bitmap font.
    #[arg(long)]
    builtin_font: bool,
    /// Render square `size` x `size` labels instead of the native image size.
    #[arg(long)]
    size: Option<usize>,
    /// Only draw these instance indices (comma separated).
    #[arg(long, value_delimiter = ',')]
    keep_indices: Option<Vec<usize>>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FilterWeakArgs {
    input: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_CONF)]
    min_conf: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SIZE_PX)]
    min_size: f64,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    /// Training configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Font for label rendering; the embedded font when omitted.
    #[arg(long)]
    font: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["checkpoint", "predictions"])))]
struct EvalArgs {
    /// Ground-truth canonical annotations.
    #[arg(long)]
    annotations: PathBuf,
    /// Model checkpoint; predictions come from its thresholded output.
    #[arg(long, requires = "images")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    /// Canonical annotations used directly as detections.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESH)]
    iou: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    min_area: usize,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Exit with 1 when hmean falls below this value.
    #[arg(long)]
    min_hmean: Option<f64>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    image: PathBuf,
    /// Prompt text; repeat for each instance.
    #[arg(long = "text", required = true)]
    texts: Vec<String>,
    #[arg(short, long)]
    out: PathBuf,
}

enum Status {
    Ok,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    log::info!("arguments: {:?}", cli.command);
    let result = match cli.command {
        Command::Import(a) => cmd_import(&a),
        Command::GenLabels(a) => cmd_gen_labels(&a),
        Command::FilterWeak(a) => cmd_filter_weak(&a),
        Command::Pretrain(a) => cmd_pretrain(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Gradcheck => cmd_gradcheck(),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e.chain().any(|c| matches!(c.downcast_ref::<OdmError>(), Some(OdmError::Numeric { .. })));
            ExitCode::from(if numeric { 1 } else { 2 })
        }
    }
}

// ------------------------------------------------------------------ import

fn image_size_for(args: &ImportArgs, image_id: &str, fallback: Option<&Path>) -> Result<(u32, u32)> {
    if let (Some(w), Some(h)) = (args.width, args.height) {
        return Ok((w, h));
    }
    if let Some(dir) = &args.images {
        return imaging::dimensions(&imaging::find_image(dir, image_id)?);
    }
    if let Some(p) = fallback.filter(|p| p.is_file()) {
        return imaging::dimensions(p);
    }
    bail!("size of `{image_id}` unknown; pass --width/--height or --images")
}

fn quad_files(src: &Path) -> Result<Vec<PathBuf>> {
    if src.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(src)
            .with_context(|| format!("listing {}", src.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![src.to_path_buf()])
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn cmd_import(args: &ImportArgs) -> Result<Status> {
    let mut out: Vec<SceneAnnotation> = Vec::new();
    let mut errors = 0usize;
    let mut report = |file: &Path, line: usize, msg: String| {
        errors += 1;
        eprintln!("{}:{line}: {msg}", file.display());
    };
    match args.format {
        SourceFormat::IcdarQuad => {
            for file in quad_files(&args.src)? {
                let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let image_id = stem.strip_prefix("gt_").unwrap_or(stem).to_string();
                let (w, h) = match image_size_for(args, &image_id, None) {
                    Ok(s) => s,
                    Err(e) => {
                        report(&file, 0, format!("{e:#}"));
                        continue;
                    }
                };
                let mut ann = SceneAnnotation::new(image_id, w, h);
                for (i, line) in read_lines(&file)?.iter().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    match parse_quad_line(line, i + 1) {
                        Ok(inst) => ann.instances.push(inst),
                        Err(e) => report(&file, i + 1, e.to_string()),
                    }
                }
                match ann.clamp_to_canvas() {
                    Ok(()) => out.push(ann),
                    Err(e) => report(&file, 0, e.to_string()),
                }
            }
        }
        SourceFormat::Canonical => {
            for (i, line) in read_lines(&args.src)?.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match parse_canonical_line(line, i + 1) {
                    Ok(ann) => out.push(ann),
                    Err(e) => report(&args.src, i + 1, e.to_string()),
                }
            }
        }
        SourceFormat::Weak => {
            let base = args.src.parent().unwrap_or(Path::new("."));
            for (i, line) in read_lines(&args.src)?.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let path = line.split('\t').next().unwrap_or_default().trim();
                let stem = Path::new(path).file_stem().and_then(|s| s.to_str()).unwrap_or(path);
                let parsed = image_size_for(args, stem, Some(&base.join(path)))
                    .and_then(|(w, h)| Ok(parse_weak_line(line, i + 1, w, h)?));
                match parsed {
                    Ok(ann) => out.push(ann),
                    Err(e) => report(&args.src, i + 1, format!("{e:#}")),
                }
            }
        }
    }
    if errors > 0 && !args.lenient {
        bail!("{errors} bad record(s); rerun with --lenient to skip them");
    }
    write_canonical(&out, &args.out)?;
    let instances: usize = out.iter().map(|a| a.instances.len()).sum();
    println!("imported {} images with {instances} instances ({errors} skipped)", out.len());
    Ok(Status::Ok)
}

// ------------------------------------------------------------------ labels

fn glyph_source(font: Option<&Path>) -> Result<GlyphSet> {
    match font {
        Some(p) => Ok(load_font(p)?),
        None => Ok(builtin_font()),
    }
}

fn cmd_gen_labels(args: &GenLabelsArgs) -> Result<Status> {
    let glyphs = glyph_source(args.font.as_deref())?;
    let annotations = read_canonical(&args.annotations)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut manifest = csv::Writer::from_path(args.out.join("manifest.csv"))?;
    manifest.write_record(["image_id", "instances_rendered", "instances_skipped"])?;
    for ann in &annotations {
        let size = match args.size {
            Some(s) => (s, s),
            None => (ann.width as usize, ann.height as usize),
        };
        let out = render_label(ann, &glyphs, size, args.keep_indices.as_deref())
            .with_context(|| format!("rendering `{}`", ann.image_id))?;
        for s in &out.skipped {
            log::warn!("{}: instance {} skipped: {}", ann.image_id, s.index, s.reason);
        }
        let path = args.out.join(format!("{}.png", ann.image_id));
        imaging::save_gray(&path, size.0, size.1, out.canvas.to_gray8())?;
        manifest.write_record([
            ann.image_id.clone(),
            out.rendered.len().to_string(),
            out.skipped.len().to_string(),
        ])?;
    }
    manifest.flush()?;
    println!("wrote {} label images to {}", annotations.len(), args.out.display());
    Ok(Status::Ok)
}

fn cmd_filter_weak(args: &FilterWeakArgs) -> Result<Status> {
    let input = read_canonical(&args.input)?;
    let mut total = 0;
    let mut kept = 0;
    let mut out = Vec::with_capacity(input.len());
    for ann in &input {
        let f = filter_weak(ann, args.min_conf, args.min_size)?;
        total += ann.instances.len();
        kept += f.instances.len();
        out.push(f);
    }
    write_canonical(&out, &args.out)?;
    println!("kept {kept} of {total} instances");
    Ok(Status::Ok)
}

// ------------------------------------------------------------------ training

fn load_config(args: &PretrainArgs) -> Result<TrainConfig> {
    let mut value = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => serde_json::to_value(TrainConfig::default())?,
    };
    for o in &args.overrides {
        apply_override(&mut value, o)?;
    }
    if let Some(seed) = args.seed {
        value["seed"] = seed.into();
    }
    Ok(TrainConfig::from_value(value)?)
}

fn load_dataset(cfg: &TrainConfig, glyphs: &GlyphSet) -> Result<Vec<TrainSample>> {
    let size = cfg.model.image_size;
    match &cfg.data.annotations {
        Some(ann_path) => {
            let dir = cfg
                .data
                .images
                .as_ref()
                .ok_or_else(|| anyhow!("data.images is required with data.annotations"))?;
            read_canonical(ann_path)?
                .into_iter()
                .map(|annotation| {
                    let img = imaging::load_rgb(&imaging::find_image(dir, &annotation.image_id)?)?;
                    Ok(TrainSample {
                        image: imaging::to_model_input(&img, size)?,
                        annotation,
                    })
                })
                .collect()
        }
        None => Ok(synth_dataset(cfg.data.synthetic_scenes, cfg.data.synthetic_seed, glyphs, size)?
            .into_iter()
            .map(|s| TrainSample {
                image: s.to_array(),
                annotation: s.annotation,
            })
            .collect()),
    }
}

fn cmd_pretrain(args: &PretrainArgs) -> Result<Status> {
    let cfg = load_config(args)?;
    log::info!("resolved config: {}", cfg.resolved().to_json());
    let glyphs = glyph_source(args.font.as_deref())?;
    let data = load_dataset(&cfg, &glyphs)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let out = fit(&data, &cfg, &glyphs, Some(&args.out))?;
    match out.metrics.last() {
        Some(m) => println!(
            "trained {} steps on {} samples; final seg {:.4} ocr {:.4} bc {:.4} total {:.4}; checkpoint {}",
            out.metrics.len(),
            data.len(),
            m.seg,
            m.ocr,
            m.bc,
            m.total,
            args.out.join("final.odmc").display()
        ),
        None => println!("trained 0 steps; checkpoint {}", args.out.join("final.odmc").display()),
    }
    Ok(Status::Ok)
}

// ------------------------------------------------------------------ evaluation

/// Prompts for an annotated scene: every scored, non-empty transcription.
fn scene_prompts(ann: &SceneAnnotation) -> Vec<&str> {
    let texts: Vec<&str> = ann
        .instances
        .iter()
        .filter(|i| !i.ignore && !i.text.is_empty())
        .map(|i| i.text.as_str())
        .collect();
    if texts.is_empty() {
        vec![""]
    } else {
        texts
    }
}

fn predict_regions(model: &OdmModel<f32>, ann: &SceneAnnotation, dir: &Path, min_area: usize) -> Result<Vec<Polygon>> {
    let cfg = model.config();
    let size = cfg.image_size;
    let img = imaging::load_rgb(&imaging::find_image(dir, &ann.image_id)?)?;
    let input = imaging::to_model_input(&img, size)?.reshape(&[1, 3, size, size])?;
    let tokens = tokenize_with(&scene_prompts(ann), &Charset, cfg.max_instances, cfg.max_len);
    let out = model.forward(&input, &tokens)?;
    let mask: Vec<u8> = out.logits.data().iter().map(|&z| (z > 0.0) as u8).collect();
    let canvas = LabelCanvas::from_pixels(size, size, &mask)?;
    let (sx, sy) = (ann.width as f64 / size as f64, ann.height as f64 / size as f64);
    Ok(mask_to_regions(&canvas, min_area)
        .into_iter()
        .filter_map(|p| Polygon::new(p.pts.iter().map(|q| Point2::new(q.x * sx, q.y * sy)).collect()).ok())
        .collect())
}

fn cmd_eval(args: &EvalArgs) -> Result<Status> {
    let gts = read_canonical(&args.annotations)?;
    let mut results = Vec::with_capacity(gts.len());
    if let Some(ckpt_path) = &args.checkpoint {
        let model = load_checkpoint::<f32>(ckpt_path)?.model()?;
        let dir = args.images.as_ref().expect("clap enforces --images");
        for ann in &gts {
            let preds = predict_regions(&model, ann, dir, args.min_area)?;
            results.push(score_scene(&preds, ann, args.iou));
        }
    } else if let Some(pred_path) = &args.predictions {
        let preds = read_canonical(pred_path)?;
        for ann in &gts {
            let regions: Vec<Polygon> = preds
                .iter()
                .filter(|p| p.image_id == ann.image_id)
                .flat_map(|p| p.instances.iter().filter(|i| !i.ignore))
                .filter_map(|i| shape_region(&i.shape).ok())
                .collect();
            results.push(score_scene(&regions, ann, args.iou));
        }
    }
    let report = aggregate(&results);
    let json = serde_json::to_string(&report)?;
    if let Some(p) = &args.report {
        fs::write(p, format!("{json}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{json}");
    match args.min_hmean {
        Some(min) if report.hmean < min => {
            eprintln!("hmean {:.4} is below the required {min}", report.hmean);
            Ok(Status::CheckFailed)
        }
        _ => Ok(Status::Ok),
    }
}

fn cmd_render(args: &RenderArgs) -> Result<Status> {
    let model = load_checkpoint::<f32>(&args.checkpoint)?.model()?;
    let cfg = model.config();
    let size = cfg.image_size;
    let img = imaging::load_rgb(&args.image)?;
    let input = imaging::to_model_input(&img, size)?.reshape(&[1, 3, size, size])?;
    let texts: Vec<&str> = args.texts.iter().map(String::as_str).collect();
    if texts.len() > cfg.max_instances {
        bail!("{} prompts exceed the model's capacity of {}", texts.len(), cfg.max_instances);
    }
    let tokens = tokenize_with(&texts, &Charset, cfg.max_instances, cfg.max_len);
    let out = model.forward(&input, &tokens)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    imaging::save_probability(&args.out.join("prediction.png"), size, out.logits.data())?;
    let base = image::imageops::resize(&img, size as u32, size as u32, image::imageops::FilterType::Triangle);
    let maps = out.heatmaps(0);
    if maps.is_empty() {
        log::warn!("model has no text branch; no heatmaps written");
    }
    for (slot, heat) in &maps {
        imaging::save_heatmap_overlay(&args.out.join(format!("heatmap_{slot}.png")), &base, heat, out.grid)?;
    }
    println!("wrote prediction and {} heatmaps to {}", maps.len(), args.out.display());
    Ok(Status::Ok)
}

fn cmd_gradcheck() -> Result<Status> {
    let checks = gradsuite::run()?;
    let mut failed = 0;
    for c in &checks {
        let verdict = if c.report.passed { "ok" } else { "FAILED" };
        eprintln!("{:<32} max rel err {:.3e} (tol {:.0e}) {verdict}", c.name, c.report.max_rel_err, c.tol);
        failed += usize::from(!c.report.passed);
    }
    let worst = checks.iter().map(|c| c.report.max_rel_err).fold(0.0f64, f64::max);
    println!("gradcheck: {} of {} checks passed, worst relative error {worst:.3e}", checks.len() - failed, checks.len());
    Ok(if failed == 0 { Status::Ok } else { Status::CheckFailed })
}
