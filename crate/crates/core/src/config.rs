//! Run configuration. Resolution order: defaults, then a TOML file, then
//! caller overrides (CLI flags).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub image: ImageConfig,
    pub features: FeaturesConfig,
    pub segmentation: SegmentationConfig,
    pub filter: FilterConfig,
    pub region: RegionConfig,
    pub metrology: MetrologyConfig,
    pub counting: CountingConfig,
    pub detector: DetectorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image: ImageConfig::default(),
            features: FeaturesConfig::default(),
            segmentation: SegmentationConfig::default(),
            filter: FilterConfig::default(),
            region: RegionConfig::default(),
            metrology: MetrologyConfig::default(),
            counting: CountingConfig::default(),
            detector: DetectorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    /// Square side every input is resized to; 0 keeps the native size.
    pub size: usize,
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self { size: 224 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Mock,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub extractor: ExtractorKind,
    pub dir: Option<PathBuf>,
    pub stride: usize,
    pub coreset_ratio: f64,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self { extractor: ExtractorKind::Mock, dir: None, stride: 8, coreset_ratio: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrfModeKind {
    Exact,
    Subsampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfConfig {
    pub enabled: bool,
    pub a: f64,
    pub b: f64,
    pub theta_alpha: f64,
    pub theta_beta: f64,
    pub theta_gamma: f64,
    pub iterations: usize,
    pub mode: CrfModeKind,
    /// Far-field pixels sampled per iteration in subsampled mode (every
    /// pixel when the image is smaller).
    pub far_samples: usize,
}

impl Default for CrfConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            a: 4.0,
            b: 3.0,
            theta_alpha: 67.0,
            theta_beta: 3.0,
            theta_gamma: 1.0,
            iterations: 2,
            mode: CrfModeKind::Subsampled,
            far_samples: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub k: usize,
    pub temperature: f64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub crf: CrfConfig,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { k: 5, temperature: 0.1, kmeans_max_iter: 300, kmeans_tol: 1e-6, crf: CrfConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub corner_window: usize,
    pub noise_max_threshold: f64,
    pub noise_filter_size: usize,
    /// Training image id used for component selection; `None` picks the
    /// lexicographically first.
    pub reference_image: Option<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { corner_window: 5, noise_max_threshold: 0.5, noise_filter_size: 11, reference_image: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMethod {
    AdaptiveOtsu,
    Otsu,
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceKind {
    Relative,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub method: RegionMethod,
    pub candidates: Vec<f64>,
    pub variance: VarianceKind,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            method: RegionMethod::AdaptiveOtsu,
            candidates: vec![1.0, 1.1, 1.2, 1.3, 1.4],
            variance: VarianceKind::Relative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "A")]
    Area,
    #[serde(rename = "A+Co")]
    AreaColor,
}

impl FeatureSet {
    /// Entries per component in the global vector.
    pub fn width(self) -> usize {
        match self {
            FeatureSet::Area => 1,
            FeatureSet::AreaColor => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetrologyConfig {
    pub k: usize,
    pub color_eps: f64,
    pub features: FeatureSet,
}

impl Default for MetrologyConfig {
    fn default() -> Self {
        Self { k: 5, color_eps: 1e-3, features: FeatureSet::AreaColor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingConfig {
    pub enabled: bool,
    pub min_area_frac: f64,
    pub eps_frac: f64,
    pub min_samples: usize,
    pub k: usize,
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self { enabled: true, min_area_frac: 0.001, eps_frac: 0.10, min_samples: 10, k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Weight of the counting score in `D = D_G + alpha * D_H`.
    pub alpha: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.segmentation.k < 2 {
            return bad(format!("segmentation.k must be >= 2, got {}", self.segmentation.k));
        }
        if !(self.segmentation.temperature > 0.0) {
            return bad("segmentation.temperature must be positive".into());
        }
        let crf = &self.segmentation.crf;
        if !(crf.theta_alpha > 0.0 && crf.theta_beta > 0.0 && crf.theta_gamma > 0.0) {
            return bad("CRF bandwidths must be positive".into());
        }
        if crf.far_samples == 0 {
            return bad("segmentation.crf.far_samples must be positive".into());
        }
        if !(self.features.coreset_ratio > 0.0 && self.features.coreset_ratio <= 1.0) {
            return bad(format!("features.coreset_ratio must be in (0, 1], got {}", self.features.coreset_ratio));
        }
        if self.features.stride == 0 {
            return bad("features.stride must be positive".into());
        }
        if self.features.extractor == ExtractorKind::File && self.features.dir.is_none() {
            return bad("features.dir is required when features.extractor = \"file\"".into());
        }
        if self.filter.noise_filter_size % 2 == 0 {
            return bad("filter.noise_filter_size must be odd".into());
        }
        if self.region.candidates.is_empty() || self.region.candidates.iter().any(|c| !(*c > 0.0)) {
            return bad("region.candidates must be a non-empty list of positive scales".into());
        }
        if self.metrology.k == 0 || self.counting.k == 0 {
            return bad("kNN k must be >= 1".into());
        }
        if self.counting.min_samples == 0 {
            return bad("counting.min_samples must be >= 1".into());
        }
        if !self.detector.alpha.is_finite() || self.detector.alpha < 0.0 {
            return bad("detector.alpha must be finite and non-negative".into());
        }
        Ok(())
    }
}
