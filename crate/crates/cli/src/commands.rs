//! The subcommands as plain functions over paths, so tests can drive them
//! without spawning the binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde::{Deserialize, Serialize};

use cmad::config::ExtractorKind;
use cmad::data::{Image, Sample};
use cmad::detector::{train, AnomalyReport, Detector, PolicyConfig};
use cmad::eval::{gen_product_dataset, load_dataset, run_benchmark, write_dataset, BenchmarkReport, SceneSpec, SplitSpec};
use cmad::features::FileExtractor;
use cmad::model::ComponentModel;
use cmad::RunConfig;

use crate::exit::UsageError;
use crate::render::{mask_image, render};

/// Flag overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub features: Option<ExtractorKind>,
    pub feature_dir: Option<PathBuf>,
    pub no_crf: bool,
    pub k: Option<usize>,
}

/// Defaults, then the optional TOML file, then flags.
pub fn resolve_config(path: Option<&Path>, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = o.features {
        cfg.features.extractor = kind;
    }
    if let Some(dir) = &o.feature_dir {
        cfg.features.dir = Some(dir.clone());
    }
    if o.no_crf {
        cfg.segmentation.crf.enabled = false;
    }
    if let Some(k) = o.k {
        cfg.segmentation.k = k;
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

pub fn load_policy(path: Option<&Path>) -> Result<PolicyConfig> {
    match path {
        Some(p) => PolicyConfig::load(p).with_context(|| format!("loading policy {}", p.display())),
        None => Ok(PolicyConfig::default()),
    }
}

/// Loads a model; `feature_dir` replaces the recorded directory of a
/// file-extractor model without touching the model itself.
pub fn load_detector(model: &Path, feature_dir: Option<&Path>) -> Result<Detector> {
    let m = ComponentModel::load(model).with_context(|| format!("loading model {}", model.display()))?;
    match feature_dir {
        Some(dir) if m.config.features.extractor == ExtractorKind::File => {
            let stride = m.config.features.stride;
            Ok(Detector::new(m, Box::new(FileExtractor::new(dir, stride))))
        }
        Some(_) => Err(UsageError("--feature-dir only applies to models trained with file features".into()).into()),
        None => Detector::from_model(m).context("building the feature extractor"),
    }
}

pub fn cmd_train(dataset: &Path, cfg: &RunConfig, out_model: &Path) -> Result<ComponentModel> {
    let ds = load_dataset(dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    info!("training on {} images", ds.train.len());
    let extractor = cmad::detector::build_extractor(&cfg.features)?;
    let model = train(&ds.train, extractor.as_ref(), cfg).context("training")?;
    model.save(out_model).with_context(|| format!("writing model {}", out_model.display()))?;
    info!("kept components {:?}", model.kept());
    Ok(model)
}

fn is_png(p: &Path) -> bool {
    p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png"))
}

fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// PNG inputs: a file gives one sample named by its stem, a directory gives
/// every PNG below it, named by the relative path without extension.
pub fn collect_images(inputs: &[PathBuf]) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut files = Vec::new();
            for entry in walkdir::WalkDir::new(input).sort_by_file_name() {
                let entry = entry.with_context(|| format!("listing {}", input.display()))?;
                if entry.file_type().is_file() && is_png(entry.path()) {
                    files.push(entry.into_path());
                }
            }
            for f in files {
                let img = Image::load_png(&f).with_context(|| format!("reading {}", f.display()))?;
                samples.push(Sample::new(relative_id(input, &f), img));
            }
        } else {
            let img = Image::load_png(input).with_context(|| format!("reading {}", input.display()))?;
            let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            samples.push(Sample::new(stem, img));
        }
    }
    if samples.is_empty() {
        return Err(UsageError("no PNG images given".into()).into());
    }
    Ok(samples)
}

/// Writes one JSON report per line.
pub fn cmd_score(det: &Detector, samples: &[Sample], policy: &PolicyConfig, out: &mut dyn Write) -> Result<Vec<AnomalyReport>> {
    let mut reports = Vec::with_capacity(samples.len());
    for s in samples {
        let report = det.score(s, policy).with_context(|| format!("scoring {}", s.id))?;
        serde_json::to_writer(&mut *out, &report)?;
        out.write_all(b"\n")?;
        reports.push(report);
    }
    out.flush()?;
    Ok(reports)
}

/// Writes the overlay and one `<stem>.component<k>.png` mask per kept
/// component next to it. Returns the mask paths.
pub fn cmd_segment(det: &Detector, image: &Path, out_overlay: &Path) -> Result<Vec<PathBuf>> {
    let img = Image::load_png(image).with_context(|| format!("reading {}", image.display()))?;
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let rendered = render(det, &Sample::new(stem, img)).context("segmenting")?;
    if let Some(dir) = out_overlay.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    rendered.overlay.save_png(out_overlay).with_context(|| format!("writing {}", out_overlay.display()))?;
    let base = out_overlay.with_extension("");
    let mut paths = Vec::with_capacity(rendered.masks.len());
    for (k, mask) in &rendered.masks {
        let path = PathBuf::from(format!("{}.component{k}.png", base.display()));
        mask_image(mask).save_png(&path).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    Ok(paths)
}

pub const BENCHMARK_TABLE: &str = "benchmark.txt";
pub const BENCHMARK_JSON: &str = "benchmark.json";
pub const RECORDS: &str = "records.jsonl";

/// Writes the AUROC table as text and JSON plus the per-image records.
pub fn cmd_eval(det: &Detector, dataset: &Path, policy: &PolicyConfig, out_dir: &Path) -> Result<BenchmarkReport> {
    let ds = load_dataset(dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    if ds.test.is_empty() {
        return Err(cmad::Error::Degenerate(format!("no test images under {}", dataset.display())).into());
    }
    let report = run_benchmark(det, policy, &ds.test).context("benchmark")?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(BENCHMARK_TABLE), report.table())?;
    fs::write(out_dir.join(BENCHMARK_JSON), serde_json::to_string_pretty(&report)?)?;
    fs::write(out_dir.join(RECORDS), report.records_jsonl())?;
    Ok(report)
}

/// Synthetic dataset description read by `gen`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    pub scene: SceneSpec,
    pub split: SplitSpec,
}

impl GenSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn cmd_gen(spec: &GenSpec, out_dir: &Path) -> Result<()> {
    let ds = gen_product_dataset(&spec.scene, &spec.split, spec.seed).context("generating dataset")?;
    write_dataset(&ds, out_dir).with_context(|| format!("writing dataset {}", out_dir.display()))?;
    info!("wrote {} training and {} test images", ds.train.len(), ds.test.len());
    Ok(())
}
