//! Training orchestration, scoring with the fused metric
//! `D = D_G + alpha * D_H`, policy-driven decisions, ensembles with external
//! detectors and component-based classification of external anomaly maps.

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{ExtractorKind, FeaturesConfig, RunConfig};
use crate::counting::{connected_regions, count_histogram, counting_score, fit_groups, HistogramBank};
use crate::data::{rgb_to_lab, LabImage, Sample, ScalarField};
use crate::error::{Error, Result};
use crate::features::{build_memory_bank, coreset_sample, FeatureExtractor, FileExtractor, MockExtractor};
use crate::filter::select_core_components;
use crate::metrology::{
    attribute, build_global_vector, component_features, fit_normalizers, knn_score, normalize, Attribution,
    ComponentFeatures, VectorBank,
};
use crate::model::{ComponentModel, TrainingScores};
use crate::region::{calibrate_scale, extract_regions, RegionMask};
use crate::segment::{kmeans, segment_image, ComponentPrototypes, SegmentationField};

/// Human-set decision policy. Missing entries mean weight 1, no component
/// threshold and counting enabled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub weights: BTreeMap<usize, f64>,
    pub thresholds: BTreeMap<usize, f64>,
    /// `None` uses the model's largest leave-one-out training score.
    pub global_threshold: Option<f64>,
    pub ignore_background: bool,
    pub counting_enabled: BTreeMap<usize, bool>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    policy: PolicyConfig,
}

impl PolicyConfig {
    pub fn weight(&self, component: usize) -> f64 {
        self.weights.get(&component).copied().unwrap_or(1.0)
    }

    pub fn threshold(&self, component: usize) -> Option<f64> {
        self.thresholds.get(&component).copied()
    }

    pub fn counting_for(&self, component: usize) -> bool {
        self.counting_enabled.get(&component).copied().unwrap_or(true)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((k, w)) = self.weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::Config(format!("policy weight for component {k} must be finite and >= 0, got {w}")));
        }
        if let Some((k, t)) = self.thresholds.iter().find(|(_, t)| !t.is_finite()) {
            return Err(Error::Config(format!("policy threshold for component {k} must be finite, got {t}")));
        }
        if let Some(t) = self.global_threshold.filter(|t| !t.is_finite()) {
            return Err(Error::Config(format!("global threshold must be finite, got {t}")));
        }
        Ok(())
    }

    /// Parses a `[policy]` TOML document.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: PolicyFile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        file.policy.validate()?;
        Ok(file.policy)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&PolicyFile { policy: self.clone() }).expect("policy serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

pub fn build_extractor(cfg: &FeaturesConfig) -> Result<Box<dyn FeatureExtractor>> {
    Ok(match cfg.extractor {
        ExtractorKind::Mock => Box::new(MockExtractor::new(cfg.stride)),
        ExtractorKind::File => {
            let dir = cfg.dir.clone().ok_or_else(|| Error::Config("features.dir is required for the file extractor".into()))?;
            Box::new(FileExtractor::new(dir, cfg.stride))
        }
    })
}

/// Resizes to the configured square size (0 keeps the native size).
pub fn prepare(sample: &Sample, cfg: &RunConfig) -> Sample {
    let s = cfg.image.size;
    if s == 0 || (sample.image.height() == s && sample.image.width() == s) {
        return sample.clone();
    }
    Sample::new(sample.id.clone(), sample.image.resize(s, s))
}

/// Seed of the subsampled CRF. Shared by every image so a given image is
/// refined identically at training and test time.
fn crf_seed(cfg: &RunConfig) -> u64 {
    cfg.seed ^ 0xC0FF_EE00_D15E_A5E5
}

/// Coreset sampling of every training image and KMeans over the bank.
pub fn learn_prototypes(samples: &[Sample], extractor: &dyn FeatureExtractor, cfg: &RunConfig) -> Result<ComponentPrototypes> {
    let mut sampled = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let fmap = extractor.extract(s)?;
        sampled.push(coreset_sample(&fmap, cfg.features.coreset_ratio, cfg.seed.wrapping_add(i as u64))?);
    }
    let bank = build_memory_bank(&sampled)?;
    info!("memory bank: {} vectors of dim {}", bank.rows(), bank.dim);
    let seg = &cfg.segmentation;
    Ok(kmeans(&bank, seg.k, cfg.seed, seg.kmeans_max_iter, seg.kmeans_tol)?.prototypes)
}

pub fn segment(sample: &Sample, extractor: &dyn FeatureExtractor, protos: &ComponentPrototypes, cfg: &RunConfig) -> Result<SegmentationField> {
    segment_image(sample, extractor, protos, &cfg.segmentation, crf_seed(cfg))
}

/// Measurements of one image: per kept component its features and the
/// areas of its surviving connected regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<ComponentFeatures>,
    pub region_areas: Vec<Vec<f64>>,
}

pub fn observe_regions(masks: &[RegionMask], lab: &LabImage, cfg: &RunConfig) -> Result<Observation> {
    let mut features = Vec::with_capacity(masks.len());
    let mut region_areas = Vec::with_capacity(masks.len());
    for m in masks {
        features.push(component_features(m, lab, cfg.metrology.color_eps)?);
        let regions = connected_regions(m, cfg.counting.min_area_frac);
        region_areas.push(regions.iter().map(|r| r.area as f64).collect());
    }
    Ok(Observation { features, region_areas })
}

/// Trains from precomputed segmentations (one per sample, same order).
/// Samples must already be prepared; their order defines the bank order.
pub fn fit_model(
    samples: &[Sample],
    segs: &[SegmentationField],
    prototypes: ComponentPrototypes,
    cfg: &RunConfig,
) -> Result<ComponentModel> {
    if samples.is_empty() {
        return Err(Error::param("no training samples"));
    }
    if samples.len() != segs.len() {
        return Err(Error::dims(format!("{} samples vs {} segmentations", samples.len(), segs.len())));
    }
    let reference = match &cfg.filter.reference_image {
        Some(id) => samples.iter().position(|s| &s.id == id).ok_or_else(|| Error::Config(format!("reference image `{id}` not in training set")))?,
        None => (0..samples.len()).min_by(|&a, &b| samples[a].id.cmp(&samples[b].id)).unwrap(),
    };
    let reserved = select_core_components(&segs[reference], &cfg.filter)?;
    info!("kept components {:?} (noise {:?}, background {:?})", reserved.kept, reserved.noise, reserved.background);
    let kept = reserved.kept.clone();

    let mut scales = Vec::with_capacity(kept.len());
    for &k in &kept {
        let fields: Vec<ScalarField> = segs.iter().map(|s| s.channel(k)).collect();
        scales.push(calibrate_scale(&fields, &cfg.region.candidates, cfg.region.variance)?);
    }
    let c_stars: Vec<f64> = scales.iter().map(|s| s.c_star).collect();

    let mut observations = Vec::with_capacity(samples.len());
    for (s, seg) in samples.iter().zip(segs) {
        let masks = extract_regions(seg, &kept, &c_stars, cfg.region.method)?;
        observations.push(observe_regions(&masks, &rgb_to_lab(&s.image), cfg)?);
    }

    let set = cfg.metrology.features;
    let train_features: Vec<Vec<ComponentFeatures>> = observations.iter().map(|o| o.features.clone()).collect();
    let normalizers = fit_normalizers(&train_features, &kept, set)?;
    let mut rows = Vec::with_capacity(samples.len());
    for f in &train_features {
        let norm = normalize(f, &normalizers)?;
        let entries: Vec<(usize, [f64; 2])> = kept.iter().copied().zip(norm).collect();
        rows.push(build_global_vector(&entries, &kept, set)?);
    }
    let vectors = VectorBank::new(set.width(), kept.len(), &rows)?;

    let mut groups = Vec::with_capacity(kept.len());
    let mut histograms = Vec::with_capacity(kept.len());
    for j in 0..kept.len() {
        let pooled: Vec<f64> = observations.iter().flat_map(|o| o.region_areas[j].iter().copied()).collect();
        let g = fit_groups(&pooled, cfg.counting.eps_frac, cfg.counting.min_samples);
        let hists: Vec<_> = observations.iter().map(|o| count_histogram(&o.region_areas[j], &g)).collect();
        histograms.push(HistogramBank::new(g.len(), &hists)?);
        groups.push(g);
    }

    let mut model = ComponentModel {
        config: cfg.clone(),
        reference_image: samples[reference].id.clone(),
        prototypes,
        reserved,
        scales,
        normalizers,
        vectors,
        groups,
        histograms,
        training: TrainingScores { ids: samples.iter().map(|s| s.id.clone()).collect(), d_g: vec![], d_h: vec![] },
    };
    let unit = PolicyConfig::default();
    for (i, o) in observations.iter().enumerate() {
        let parts = score_parts(&model, o, &unit, Some(i))?;
        model.training.d_g.push(parts.d_g);
        model.training.d_h.push(parts.d_h);
    }
    Ok(model)
}

/// Full training: images are prepared and sorted by id first.
pub fn train(samples: &[Sample], extractor: &dyn FeatureExtractor, cfg: &RunConfig) -> Result<ComponentModel> {
    cfg.validate()?;
    let mut prepared: Vec<Sample> = samples.iter().map(|s| prepare(s, cfg)).collect();
    prepared.sort_by(|a, b| a.id.cmp(&b.id));
    if prepared.len() < cfg.metrology.k.max(2) {
        warn!("{} training images; kNN will use fewer neighbours than configured", prepared.len());
    }
    let protos = learn_prototypes(&prepared, extractor, cfg)?;
    let segs = prepared.iter().map(|s| segment(s, extractor, &protos, cfg)).collect::<Result<Vec<_>>>()?;
    fit_model(&prepared, &segs, protos, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Normal,
    Anomalous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingDetail {
    pub component: usize,
    pub counts: Vec<usize>,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub component: usize,
    pub area: f64,
    pub color: f64,
    pub normalized: [f64; 2],
    pub regions: usize,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub id: String,
    pub d_g: f64,
    pub d_h: f64,
    pub alpha: f64,
    pub d: f64,
    pub attributions: Vec<Attribution>,
    pub counting: Vec<CountingDetail>,
    pub components: Vec<ComponentSummary>,
    pub decision: Decision,
    /// Rules that fired: `global` or `component:<id>`.
    pub triggered: Vec<String>,
}

struct ScoreParts {
    d_g: f64,
    d_h: f64,
    attributions: Vec<Attribution>,
    counting: Vec<CountingDetail>,
    normalized: Vec<[f64; 2]>,
}

fn score_parts(model: &ComponentModel, obs: &Observation, policy: &PolicyConfig, exclude: Option<usize>) -> Result<ScoreParts> {
    let cfg = &model.config;
    let kept = model.kept();
    if obs.features.len() != kept.len() || obs.region_areas.len() != kept.len() {
        return Err(Error::dims(format!("observation covers {} components, model keeps {}", obs.features.len(), kept.len())));
    }
    let normalized = normalize(&obs.features, &model.normalizers)?;
    let entries: Vec<(usize, [f64; 2])> = kept.iter().copied().zip(normalized.iter().copied()).collect();
    let g = build_global_vector(&entries, kept, cfg.metrology.features)?;
    let weights: Vec<f64> = kept.iter().map(|&k| policy.weight(k)).collect();
    let global = knn_score(&g, &model.vectors, cfg.metrology.k, &weights, exclude)?;
    let attributions = attribute(&g, &model.vectors, &global.neighbors, kept, &weights);

    let mut d_h = 0.0;
    let mut counting = Vec::with_capacity(kept.len());
    for (j, &k) in kept.iter().enumerate() {
        let hist = count_histogram(&obs.region_areas[j], &model.groups[j]);
        let contribution = if cfg.counting.enabled && policy.counting_for(k) {
            counting_score(&hist, &model.histograms[j], cfg.counting.k, exclude)?
        } else {
            0.0
        };
        d_h += contribution;
        counting.push(CountingDetail { component: k, counts: hist.counts, contribution });
    }
    Ok(ScoreParts { d_g: global.d_g, d_h, attributions, counting, normalized })
}

/// Scores measurements against the model under `policy`.
pub fn score_observation(model: &ComponentModel, obs: &Observation, policy: &PolicyConfig, id: &str) -> Result<AnomalyReport> {
    policy.validate()?;
    let parts = score_parts(model, obs, policy, None)?;
    let alpha = model.config.detector.alpha;
    let d = parts.d_g + alpha * parts.d_h;
    let mut triggered = Vec::new();
    if d > policy.global_threshold.unwrap_or_else(|| model.default_threshold()) {
        triggered.push("global".to_string());
    }
    for a in &parts.attributions {
        if policy.threshold(a.component).is_some_and(|t| a.contribution > t) {
            triggered.push(format!("component:{}", a.component));
        }
    }
    let components = model
        .kept()
        .iter()
        .enumerate()
        .map(|(j, &k)| ComponentSummary {
            component: k,
            area: obs.features[j].area,
            color: obs.features[j].color,
            normalized: parts.normalized[j],
            regions: obs.region_areas[j].len(),
            empty: obs.features[j].empty,
        })
        .collect();
    Ok(AnomalyReport {
        id: id.to_string(),
        d_g: parts.d_g,
        d_h: parts.d_h,
        alpha,
        d,
        attributions: parts.attributions,
        counting: parts.counting,
        components,
        decision: if triggered.is_empty() { Decision::Normal } else { Decision::Anomalous },
        triggered,
    })
}

/// A trained model paired with its feature extractor.
pub struct Detector {
    model: ComponentModel,
    extractor: Box<dyn FeatureExtractor>,
}

impl Detector {
    pub fn new(model: ComponentModel, extractor: Box<dyn FeatureExtractor>) -> Self {
        Self { model, extractor }
    }

    /// Uses the extractor recorded in the model's configuration.
    pub fn from_model(model: ComponentModel) -> Result<Self> {
        let extractor = build_extractor(&model.config.features)?;
        Ok(Self { model, extractor })
    }

    pub fn model(&self) -> &ComponentModel {
        &self.model
    }

    pub fn extractor(&self) -> &dyn FeatureExtractor {
        self.extractor.as_ref()
    }

    pub fn prepare(&self, sample: &Sample) -> Sample {
        prepare(sample, &self.model.config)
    }

    /// Segmentation of an already prepared sample.
    pub fn segment(&self, sample: &Sample) -> Result<SegmentationField> {
        segment(sample, self.extractor.as_ref(), &self.model.prototypes, &self.model.config)
    }

    pub fn regions(&self, seg: &SegmentationField) -> Result<Vec<RegionMask>> {
        extract_regions(seg, self.model.kept(), &self.model.c_stars(), self.model.config.region.method)
    }

    pub fn observe_segmentation(&self, sample: &Sample, seg: &SegmentationField) -> Result<Observation> {
        observe_regions(&self.regions(seg)?, &rgb_to_lab(&sample.image), &self.model.config)
    }

    pub fn score(&self, sample: &Sample, policy: &PolicyConfig) -> Result<AnomalyReport> {
        let prepared = self.prepare(sample);
        let seg = self.segment(&prepared)?;
        let obs = self.observe_segmentation(&prepared, &seg)?;
        score_observation(&self.model, &obs, policy, &sample.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EnsembleMode {
    Add,
    /// Each score divided by its training-set mean before adding.
    NormalizedAdd { own_mean: f64, external_mean: f64 },
}

pub fn ensemble(d: f64, external: f64, mode: EnsembleMode) -> Result<f64> {
    if !external.is_finite() {
        return Err(Error::param(format!("external score must be finite, got {external}")));
    }
    match mode {
        EnsembleMode::Add => Ok(d + external),
        EnsembleMode::NormalizedAdd { own_mean, external_mean } => {
            if own_mean == 0.0 || external_mean == 0.0 || !own_mean.is_finite() || !external_mean.is_finite() {
                return Err(Error::param("ensemble normalization needs finite nonzero training means"));
            }
            Ok(d / own_mean + external / external_mean)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentLabel {
    Component(usize),
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ComponentLabel,
    /// `(y, x)` of the first maximal pixel in raster order.
    pub peak: (usize, usize),
    pub peak_value: f64,
    /// Peak value, or 0 for background anomalies under `ignore_background`.
    pub score: f64,
}

/// Assigns the peak of an external anomaly map to the component winning
/// that pixel, or to the background when the winner is not a kept id.
pub fn classify_anomaly(
    map: &ScalarField,
    seg: &SegmentationField,
    model: &ComponentModel,
    policy: &PolicyConfig,
) -> Result<Classification> {
    if map.height() != seg.height() || map.width() != seg.width() {
        return Err(Error::dims(format!(
            "anomaly map {}x{} vs segmentation {}x{}",
            map.height(),
            map.width(),
            seg.height(),
            seg.width()
        )));
    }
    let mut peak = 0;
    for (i, &v) in map.values().iter().enumerate() {
        if v > map.values()[peak] {
            peak = i;
        }
    }
    let peak_value = map.values()[peak];
    let winner = seg.argmax(peak);
    let label = if model.kept().contains(&winner) { ComponentLabel::Component(winner) } else { ComponentLabel::Background };
    let score = if label == ComponentLabel::Background && policy.ignore_background { 0.0 } else { peak_value };
    Ok(Classification { label, peak: (peak / map.width(), peak % map.width()), peak_value, score })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny_model;

    fn obs(area: f64, color: f64, regions: &[f64]) -> Observation {
        Observation { features: vec![ComponentFeatures { area, color, empty: area == 0.0 }], region_areas: vec![regions.to_vec()] }
    }

    #[test]
    fn policy_toml_round_trip() {
        let mut p = PolicyConfig::default();
        p.weights.insert(3, 0.0);
        p.weights.insert(1, 2.5);
        p.thresholds.insert(1, 0.75);
        p.global_threshold = Some(1.5);
        p.ignore_background = true;
        p.counting_enabled.insert(3, false);
        let s = p.to_toml_string();
        assert!(s.contains("[policy.weights]"), "{s}");
        assert_eq!(PolicyConfig::from_toml_str(&s).unwrap(), p);
        assert_eq!(PolicyConfig::from_toml_str("[policy]\n").unwrap(), PolicyConfig::default());
        assert!(PolicyConfig::from_toml_str("[policy.weights]\n1 = -1.0\n").is_err());
        assert!(PolicyConfig::from_toml_str("[policy]\nbogus = 1\n").is_err());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PolicyConfig>(&json).unwrap(), p);
    }

    #[test]
    fn fused_score_is_exact() {
        let mut m = tiny_model();
        for alpha in [0.0, 0.5, 1.7] {
            m.config.detector.alpha = alpha;
            let r = score_observation(&m, &obs(130.0, 0.2, &[50.0, 35.0, 33.0]), &PolicyConfig::default(), "x").unwrap();
            assert_eq!(r.d, r.d_g + alpha * r.d_h);
            if alpha == 0.0 {
                assert_eq!(r.d, r.d_g);
            }
        }
    }

    #[test]
    fn decision_rules() {
        let m = tiny_model();
        let o = obs(130.0, 0.3, &[50.0, 33.0, 33.0]);
        let mut p = PolicyConfig { global_threshold: Some(1e9), ..Default::default() };
        let r = score_observation(&m, &o, &p, "x").unwrap();
        assert_eq!(r.decision, Decision::Normal);
        p.thresholds.insert(1, r.attributions[0].contribution / 2.0);
        let r2 = score_observation(&m, &o, &p, "x").unwrap();
        assert_eq!(r2.decision, Decision::Anomalous);
        assert_eq!(r2.triggered, vec!["component:1".to_string()]);
        assert_eq!((r2.d_g, r2.d_h), (r.d_g, r.d_h));
        let p = PolicyConfig { global_threshold: Some(r.d / 2.0), ..Default::default() };
        assert_eq!(score_observation(&m, &o, &p, "x").unwrap().triggered, vec!["global".to_string()]);
    }

    #[test]
    fn zero_weight_and_disabled_counting_remove_component() {
        let m = tiny_model();
        let mut p = PolicyConfig::default();
        p.weights.insert(1, 0.0);
        p.counting_enabled.insert(1, false);
        let a = score_observation(&m, &obs(100.0, 0.3, &[50.0]), &p, "a").unwrap();
        let b = score_observation(&m, &obs(3.0, -9.0, &[1.0, 2.0, 3.0, 4.0]), &p, "b").unwrap();
        assert_eq!((a.d_g, a.d_h, a.d), (0.0, 0.0, 0.0));
        assert_eq!((b.d_g, b.d_h, b.d), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble(2.0, 0.0, EnsembleMode::Add).unwrap(), 2.0);
        assert_eq!(ensemble(2.0, 3.0, EnsembleMode::Add).unwrap(), 5.0);
        let n = EnsembleMode::NormalizedAdd { own_mean: 2.0, external_mean: 10.0 };
        assert_eq!(ensemble(2.0, 10.0, n).unwrap(), 2.0);
        assert!(ensemble(1.0, f64::NAN, EnsembleMode::Add).is_err());
        assert!(ensemble(1.0, 1.0, EnsembleMode::NormalizedAdd { own_mean: 0.0, external_mean: 1.0 }).is_err());
    }

    fn three_band_seg() -> SegmentationField {
        // Component 0 on the left (background in the tiny model), 1 in the
        // middle (kept), 2 on the right (noise).
        let ch = |lo: usize, hi: usize| ScalarField::from_fn(6, 9, move |_, x| if (lo..hi).contains(&x) { 0.8 } else { 0.1 });
        SegmentationField::from_channels(&[ch(0, 3), ch(3, 6), ch(6, 9)]).unwrap()
    }

    #[test]
    fn classification_rules() {
        let m = tiny_model();
        let seg = three_band_seg();
        let blob = |cx: usize| ScalarField::from_fn(6, 9, move |y, x| if y == 2 && x == cx { 0.9 } else if y == 2 && x.abs_diff(cx) == 1 { 0.5 } else { 0.0 });
        let c = classify_anomaly(&blob(4), &seg, &m, &PolicyConfig::default()).unwrap();
        assert_eq!((c.label, c.peak, c.score), (ComponentLabel::Component(1), (2, 4), 0.9));

        let p = PolicyConfig { ignore_background: true, ..Default::default() };
        let c = classify_anomaly(&blob(1), &seg, &m, &p).unwrap();
        assert_eq!((c.label, c.score, c.peak_value), (ComponentLabel::Background, 0.0, 0.9));
        let c = classify_anomaly(&blob(1), &seg, &m, &PolicyConfig::default()).unwrap();
        assert_eq!(c.score, 0.9);
        // Dropped noise components count as background too.
        assert_eq!(classify_anomaly(&blob(7), &seg, &m, &p).unwrap().label, ComponentLabel::Background);

        // Straddling blob: the peak pixel decides.
        let straddle = ScalarField::from_fn(6, 9, |_, x| match x { 2 => 0.7, 3 => 0.8, _ => 0.0 });
        assert_eq!(classify_anomaly(&straddle, &seg, &m, &p).unwrap().label, ComponentLabel::Component(1));
        assert!(classify_anomaly(&ScalarField::filled(5, 9, 0.0), &seg, &m, &p).is_err());
    }
}
