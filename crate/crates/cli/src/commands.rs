use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use wsi_triage::augment::AugmentConfig;
use wsi_triage::bench::{compare_archs, render_bench_png, BenchOptions};
use wsi_triage::heatmap::{compare_to_ground_truth, predict_heatmap, render_heatmap, render_overlay, HeatmapConfig};
use wsi_triage::nn::{load_checkpoint_with, save_checkpoint_with, ModelGraph, SgdConfig};
use wsi_triage::patcher::{assign_folds, read_patch_set, write_patch_set, ClassTargets, ExtractionConfig, Patch, PatchSet};
use wsi_triage::pipeline::{load_manifest, patch_manifest, write_corpus, CorpusSpec, PatchingConfig, Standardization};
use wsi_triage::preprocess::{standardize_slide, tissue_mask_image, ColorTemplate, TissueConfig};
use wsi_triage::slide_store::{read_mask, read_slide, write_mask, AnnotationMask, SlideLabel, SyntheticSlideSpec};
use wsi_triage::train::{augmentation_study, cross_validate, evaluate, render_roc_png, train, TrainOptions};
use wsi_triage::{Error, Result};

use crate::args::*;
use crate::provenance::{artifact, read_json, write_json, Artifact};

pub const CHECKPOINT_FILE: &str = "model.ptri";
const ROC_PNG_SIZE: u32 = 400;

/// Checkpoint metadata needed to reproduce the training inputs.
#[derive(Debug, Serialize, serde::Deserialize)]
struct ModelMeta {
    patch_size: u32,
    template: Option<ColorTemplate>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p).map_err(|e| Error::io(p, e))
}

/// Rewrites input paths as absolute so the record replays from any directory.
pub fn canonicalize_inputs(cmd: &mut Command) -> Result<()> {
    match cmd {
        Command::Synth(_) | Command::Bench(_) | Command::Replay(_) => {}
        Command::Segment(a) => a.slide = absolute(&a.slide)?,
        Command::Patch(a) => {
            a.manifest = absolute(&a.manifest)?;
            canonicalize_template(&mut a.patching)?;
        }
        Command::Train(a) => {
            a.patches = absolute(&a.patches)?;
            if let Some(v) = &mut a.val_patches {
                *v = absolute(v)?;
            }
        }
        Command::Cv(a) => {
            a.manifest = absolute(&a.manifest)?;
            canonicalize_template(&mut a.patching)?;
        }
        Command::Eval(a) => {
            a.checkpoint = absolute(&a.checkpoint)?;
            a.patches = absolute(&a.patches)?;
        }
        Command::Infer(a) => {
            a.checkpoint = absolute(&a.checkpoint)?;
            a.slide = absolute(&a.slide)?;
            if let Some(m) = &mut a.mask {
                *m = absolute(m)?;
            }
        }
    }
    Ok(())
}

fn canonicalize_template(p: &mut PatchFlags) -> Result<()> {
    if !matches!(p.standardize.as_str(), "off" | "pooled") {
        p.standardize = absolute(Path::new(&p.standardize))?.to_string_lossy().into_owned();
    }
    Ok(())
}

fn tissue_config(t: &TissueArgs) -> TissueConfig {
    TissueConfig {
        v_min: t.v_min,
        v_max: t.v_max,
        se_radius: t.se_radius,
    }
}

fn patching_config(p: &PatchFlags, seed: u64) -> Result<PatchingConfig> {
    let standardization = match p.standardize.as_str() {
        "off" => Standardization::Off,
        "pooled" => Standardization::Pooled,
        path => Standardization::Fixed(read_json(Path::new(path))?),
    };
    Ok(PatchingConfig {
        extraction: ExtractionConfig {
            patch_size: p.patch_size,
            targets: ClassTargets {
                positive_tumor: p.positive,
                negative_tumor: p.negative,
                negative_normal: p.normal,
            },
            min_tissue_fraction: p.min_tissue,
            seed,
        },
        tissue: tissue_config(&p.tissue),
        standardization,
    })
}

fn train_options(t: &TrainFlags, seed: u64) -> TrainOptions {
    TrainOptions {
        arch: t.arch,
        sgd: SgdConfig {
            learning_rate: t.lr,
            momentum: t.momentum,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed,
        },
        augment: t.augment.then(|| augment_config(t, seed)),
    }
}

fn augment_config(t: &TrainFlags, seed: u64) -> AugmentConfig {
    AugmentConfig {
        max_rotation_deg: t.max_rotation,
        max_zoom_fraction: t.max_zoom,
        horizontal_flip: !t.no_hflip,
        vertical_flip: !t.no_vflip,
        seed,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn refs(patches: &[Patch]) -> Vec<&Patch> {
    patches.iter().collect()
}

/// Runs one non-replay command, writing into `out`. Returns the artifacts.
pub fn execute(cmd: &Command, seed: u64, threads: usize, out: &Path) -> Result<Vec<Artifact>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match cmd {
        Command::Synth(a) => synth(a, seed, out),
        Command::Segment(a) => segment(a, out),
        Command::Patch(a) => patch(a, seed, out),
        Command::Train(a) => train_cmd(a, seed, out),
        Command::Cv(a) => cv(a, seed, out),
        Command::Eval(a) => eval(a, seed, out),
        Command::Infer(a) => infer(a, out),
        Command::Bench(a) => bench(a, seed, threads, out),
        Command::Replay(_) => unreachable!("replay is dispatched by the caller"),
    }
}

fn synth(a: &SynthArgs, seed: u64, out: &Path) -> Result<Vec<Artifact>> {
    let spec = CorpusSpec {
        tumor_slides: a.tumor_slides,
        normal_slides: a.normal_slides,
        slide: SyntheticSlideSpec {
            id: String::new(),
            width_px: a.width,
            height_px: a.height,
            tile_size: a.tile_size,
            tissue_fraction: a.tissue_fraction,
            tumor_nodule_count: a.nodules,
            tumor_nodule_radius_px: (a.radius_min, a.radius_max),
            seed,
        },
        seed,
        id_prefix: a.id_prefix.clone(),
    };
    let manifest = write_corpus(&spec, out)?;
    let tumor = manifest.entries.iter().filter(|e| e.label == SlideLabel::Tumor).count();
    println!("wrote {} slides ({tumor} tumor) to {}", manifest.entries.len(), out.display());
    let mut arts = vec![artifact(out, "manifest.json", true)?, artifact(out, "slides", true)?];
    if tumor > 0 {
        arts.push(artifact(out, "masks", true)?);
    }
    Ok(arts)
}

fn segment(a: &SegmentArgs, out: &Path) -> Result<Vec<Artifact>> {
    let (id, image) = if a.slide.is_dir() {
        let s = read_slide(&a.slide)?;
        (s.id().to_owned(), s.to_image())
    } else {
        let img = image::open(&a.slide).map_err(|e| Error::image(&a.slide, e))?.to_rgb8();
        let stem = a.slide.file_stem().map_or("slide".into(), |s| s.to_string_lossy().into_owned());
        (stem, img)
    };
    let mask = tissue_mask_image(&image, &tissue_config(&a.tissue))?;
    let png = format!("{id}_tissue.png");
    let total = u64::from(mask.width()) * u64::from(mask.height());
    let stats = json!({
        "slide_id": id,
        "width": mask.width(),
        "height": mask.height(),
        "tissue_pixels": mask.count(),
        "tissue_fraction": mask.count() as f64 / total as f64,
    });
    write_mask(&AnnotationMask { slide_id: id.clone(), mask }, &out.join(&png))?;
    write_json(&out.join("tissue.json"), &stats)?;
    println!("{id}: tissue fraction {:.4}", stats["tissue_fraction"].as_f64().unwrap_or(0.0));
    Ok(vec![artifact(out, png, true)?, artifact(out, "tissue.json", true)?])
}

fn patch(a: &PatchArgs, seed: u64, out: &Path) -> Result<Vec<Artifact>> {
    let manifest = load_manifest(&a.manifest)?;
    let set = patch_manifest(&manifest, &patching_config(&a.patching, seed)?)?;
    write_patch_set(&set, &out.join("patches"))?;
    if let Some(t) = &set.template {
        write_json(&out.join("template.json"), t)?;
    }
    println!("extracted {} patches of {}px", set.patches.len(), set.patch_size);
    let mut arts = vec![artifact(out, "patches", true)?];
    if set.template.is_some() {
        arts.push(artifact(out, "template.json", true)?);
    }
    Ok(arts)
}

fn train_cmd(a: &TrainArgs, seed: u64, out: &Path) -> Result<Vec<Artifact>> {
    let set = read_patch_set(&a.patches)?;
    let val: Option<PatchSet> = a.val_patches.as_deref().map(read_patch_set).transpose()?;
    if let Some(v) = &val {
        if v.patch_size != set.patch_size {
            return Err(Error::Invariant(format!(
                "validation patches are {}px, training patches {}px",
                v.patch_size, set.patch_size
            )));
        }
    }
    let val_refs = val.as_ref().map(|v| refs(&v.patches)).unwrap_or_default();
    let opts = train_options(&a.training, seed);
    let mut trained = train(&refs(&set.patches), &val_refs, &opts)?;
    let meta = ModelMeta {
        patch_size: set.patch_size,
        template: set.template,
    };
    save_checkpoint_with(&trained.model, serde_json::to_value(&meta).expect("meta"), &out.join(CHECKPOINT_FILE))?;
    trained.run.checkpoint = Some(PathBuf::from(CHECKPOINT_FILE));
    write_json(&out.join("train_run.json"), &trained.run)?;
    let last = trained.run.final_epoch();
    match last.val_acc {
        Some(v) => println!("epoch {}: loss {:.4}, train acc {:.3}, val acc {v:.3}", last.epoch, last.train_loss, last.train_acc),
        None => println!("epoch {}: loss {:.4}, train acc {:.3}", last.epoch, last.train_loss, last.train_acc),
    }
    Ok(vec![artifact(out, CHECKPOINT_FILE, true)?, artifact(out, "train_run.json", true)?])
}

fn cv(a: &CvArgs, seed: u64, out: &Path) -> Result<Vec<Artifact>> {
    let manifest = load_manifest(&a.manifest)?;
    let set = patch_manifest(&manifest, &patching_config(&a.patching, seed)?)?;
    let folds = assign_folds(&manifest, a.folds, seed)?;
    let opts = train_options(&a.training, seed);
    let mut arts = Vec::new();
    if a.augmentation_study {
        let (study, on, off) = augmentation_study(&set.patches, &folds, &opts, augment_config(&a.training, seed))?;
        write_json(&out.join("augmentation_study.json"), &study)?;
        write_text(&out.join("augmentation_study.txt"), &study.to_text())?;
        write_json(&out.join("cv_runs.json"), &json!({ "with_augmentation": on.runs, "without_augmentation": off.runs }))?;
        print!("{}", study.to_text());
        arts.push(artifact(out, "augmentation_study.json", true)?);
        arts.push(artifact(out, "augmentation_study.txt", true)?);
    } else {
        let outcome = cross_validate(&set.patches, &folds, &opts)?;
        write_json(&out.join("cv_report.json"), &outcome.report)?;
        write_text(&out.join("cv_report.txt"), &outcome.report.to_text())?;
        write_json(&out.join("cv_runs.json"), &outcome.runs)?;
        print!("{}", outcome.report.to_text());
        arts.push(artifact(out, "cv_report.json", true)?);
        arts.push(artifact(out, "cv_report.txt", true)?);
    }
    arts.push(artifact(out, "cv_runs.json", true)?);
    Ok(arts)
}

fn load_model(path: &Path) -> Result<(ModelGraph, ModelMeta)> {
    let (model, header) = load_checkpoint_with(path)?;
    let meta: ModelMeta = serde_json::from_value(header.metadata).map_err(|e| Error::json(path, e))?;
    Ok((model, meta))
}

fn eval(a: &EvalArgs, seed: u64, out: &Path) -> Result<Vec<Artifact>> {
    let (model, meta) = load_model(&a.checkpoint)?;
    let set = read_patch_set(&a.patches)?;
    if set.patch_size != meta.patch_size {
        return Err(Error::Invariant(format!(
            "model expects {}px patches, {} holds {}px",
            meta.patch_size,
            a.patches.display(),
            set.patch_size
        )));
    }
    let ev = evaluate(&model, &refs(&set.patches), seed)?;
    write_json(&out.join("evaluation.json"), &ev)?;
    write_text(&out.join("roc.csv"), &ev.roc.to_csv())?;
    render_roc_png(&ev.roc, ROC_PNG_SIZE, &out.join("roc.png"))?;
    println!(
        "accuracy {:.4} on {} patches, AUC {:.4} (95% CI {:.4}-{:.4})",
        ev.accuracy, ev.patches, ev.roc.auc, ev.roc.ci_low, ev.roc.ci_high
    );
    Ok(vec![
        artifact(out, "evaluation.json", true)?,
        artifact(out, "roc.csv", true)?,
        artifact(out, "roc.png", true)?,
    ])
}

fn infer(a: &InferArgs, out: &Path) -> Result<Vec<Artifact>> {
    let (model, meta) = load_model(&a.checkpoint)?;
    let mut slide = read_slide(&a.slide)?;
    let tissue = tissue_mask_image(&slide.to_image(), &tissue_config(&a.tissue))?;
    let display = slide.clone();
    if let Some(t) = &meta.template {
        slide = standardize_slide(&slide, &tissue, t)?;
    }
    let config = HeatmapConfig {
        stride_px: a.stride.unwrap_or(meta.patch_size),
        threshold: a.threshold,
        skip_non_tissue: !a.keep_background,
    };
    let heatmap = predict_heatmap(&slide, &model, &tissue, &config)?;
    let id = slide.id().to_owned();
    let mask = a.mask.as_deref().map(|p| read_mask(p, &id)).transpose()?;
    if let Some(m) = &mask {
        m.validate_for(&slide)?;
    }
    let heat_png = format!("{id}_heatmap.png");
    let overlay_png = format!("{id}_overlay.png");
    render_heatmap(&heatmap, a.threshold, &out.join(&heat_png))?;
    render_overlay(&display, &heatmap, mask.as_ref(), a.threshold, &out.join(&overlay_png))?;
    let mut arts = vec![
        artifact(out, &heat_png, true)?,
        artifact(out, format!("{id}_heatmap.json"), true)?,
        artifact(out, &overlay_png, true)?,
    ];
    let flagged = heatmap.probs.iter().filter(|&&p| p >= a.threshold).count();
    println!("{id}: {}x{} cells, {flagged} at or above {}", heatmap.grid_w, heatmap.grid_h, a.threshold);
    if let Some(m) = &mask {
        let cmp = compare_to_ground_truth(&heatmap, m, a.threshold)?;
        let name = format!("{id}_comparison.json");
        write_json(&out.join(&name), &cmp)?;
        println!("{id}: dice {:.4}, iou {:.4}", cmp.dice, cmp.iou);
        arts.push(artifact(out, name, true)?);
    }
    Ok(arts)
}

fn bench(a: &BenchArgs, seed: u64, threads: usize, out: &Path) -> Result<Vec<Artifact>> {
    let opts = BenchOptions {
        warmup: a.warmup,
        reps: a.reps,
        threads,
    };
    let cmp = compare_archs(a.input_size, a.batch, &opts, seed)?;
    write_json(&out.join("bench.json"), &cmp)?;
    write_text(&out.join("bench.txt"), &cmp.to_text())?;
    render_bench_png(&cmp, &out.join("bench.png"))?;
    print!("{}", cmp.to_text());
    Ok(vec![
        artifact(out, "bench.json", false)?,
        artifact(out, "bench.txt", false)?,
        artifact(out, "bench.png", false)?,
    ])
}
