//! Synthetic multi-component products with injected defects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::data::Image;
use crate::error::{Error, Result};
use crate::region::RegionMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Rect { height: f64, width: f64 },
    Circle { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub shape: Shape,
    pub color: [u8; 3],
    /// Instance centres `(y, x)` in pixels.
    pub anchors: Vec<(f64, f64)>,
    /// Where an extra instance goes; `None` disables that defect.
    pub extra_anchor: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub size: usize,
    pub background: [u8; 3],
    pub noise_sigma: f64,
    /// Maximum per-axis shift of an instance, pixels.
    pub position_jitter: f64,
    /// Maximum relative size change of an instance.
    pub size_jitter: f64,
    /// Relative size change of the size-change defect.
    pub size_defect: f64,
    pub scratch_color: [u8; 3],
    pub components: Vec<ComponentSpec>,
}

impl Default for SceneSpec {
    /// Red body, blue cap, two green pins on a dark gray canvas.
    fn default() -> Self {
        Self {
            size: 224,
            background: [60, 60, 60],
            noise_sigma: 2.0,
            position_jitter: 6.0,
            size_jitter: 0.04,
            size_defect: 0.35,
            scratch_color: [210, 210, 210],
            components: vec![
                ComponentSpec {
                    name: "body".into(),
                    shape: Shape::Rect { height: 50.0, width: 70.0 },
                    color: [200, 40, 40],
                    anchors: vec![(65.0, 80.0)],
                    extra_anchor: None,
                },
                ComponentSpec {
                    name: "cap".into(),
                    shape: Shape::Rect { height: 40.0, width: 40.0 },
                    color: [50, 80, 200],
                    anchors: vec![(65.0, 165.0)],
                    extra_anchor: None,
                },
                ComponentSpec {
                    name: "pin".into(),
                    shape: Shape::Circle { radius: 14.0 },
                    color: [40, 170, 60],
                    anchors: vec![(160.0, 60.0), (160.0, 112.0)],
                    extra_anchor: Some((160.0, 164.0)),
                },
            ],
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::param("scene has no components"));
        }
        let grow = 1.0 + self.size_jitter.max(self.size_defect);
        for c in &self.components {
            let (hy, hx) = match c.shape {
                Shape::Rect { height, width } => (height / 2.0, width / 2.0),
                Shape::Circle { radius } => (radius, radius),
            };
            for &(y, x) in c.anchors.iter().chain(c.extra_anchor.iter()) {
                let (ry, rx) = (hy * grow + self.position_jitter, hx * grow + self.position_jitter);
                if y - ry < 0.0 || x - rx < 0.0 || y + ry > self.size as f64 || x + rx > self.size as f64 {
                    return Err(Error::param(format!("component `{}` can leave the canvas", c.name)));
                }
            }
        }
        Ok(())
    }
}

/// One drawn instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub component: usize,
    pub center: (f64, f64),
    pub scale: f64,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Missing,
    ExtraInstance,
    ColorSwap,
    SizeChange,
    Scratch,
}

impl DefectKind {
    pub const ALL: [DefectKind; 5] =
        [DefectKind::Missing, DefectKind::ExtraInstance, DefectKind::ColorSwap, DefectKind::SizeChange, DefectKind::Scratch];

    pub fn name(self) -> &'static str {
        match self {
            DefectKind::Missing => "missing",
            DefectKind::ExtraInstance => "extra_instance",
            DefectKind::ColorSwap => "color_swap",
            DefectKind::SizeChange => "size_change",
            DefectKind::Scratch => "scratch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_logical(self) -> bool {
        self != DefectKind::Scratch
    }
}

#[derive(Debug, Clone)]
pub struct ProductImage {
    pub id: String,
    /// `good` or a defect name.
    pub kind: String,
    pub image: Image,
    /// Ground truth per spec component.
    pub masks: Vec<RegionMask>,
    pub counts: Vec<usize>,
    pub instances: Vec<Instance>,
}

fn normal_layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Instance> {
    let mut out = Vec::new();
    for (k, c) in spec.components.iter().enumerate() {
        for &(y, x) in &c.anchors {
            let j = spec.position_jitter;
            let dy = if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
            let dx = if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
            let s = spec.size_jitter;
            let scale = 1.0 + if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
            out.push(Instance { component: k, center: (y + dy, x + dx), scale, color: c.color });
        }
    }
    out
}

fn covers(spec: &SceneSpec, inst: &Instance, y: usize, x: usize) -> bool {
    let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
    let (dy, dx) = (py - inst.center.0, px - inst.center.1);
    match spec.components[inst.component].shape {
        Shape::Rect { height, width } => dy.abs() <= height * inst.scale / 2.0 && dx.abs() <= width * inst.scale / 2.0,
        Shape::Circle { radius } => dy * dy + dx * dx <= (radius * inst.scale).powi(2),
    }
}

/// Draws instances in order over the background, adds pixel noise seeded by
/// `noise_seed` and overlays an optional scratch polyline. Returns the image
/// and one ground-truth mask per spec component.
pub fn render(
    spec: &SceneSpec,
    instances: &[Instance],
    noise_seed: u64,
    scratch: Option<((f64, f64), (f64, f64))>,
) -> (Image, Vec<RegionMask>) {
    let n = spec.size;
    let mut owner: Vec<Option<usize>> = vec![None; n * n];
    for (i, inst) in instances.iter().enumerate() {
        for y in 0..n {
            for x in 0..n {
                if covers(spec, inst, y, x) {
                    owner[y * n + x] = Some(i);
                }
            }
        }
    }
    let on_scratch = |y: usize, x: usize| {
        scratch.is_some_and(|((y0, x0), (y1, x1))| {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let (vy, vx) = (y1 - y0, x1 - x0);
            let t = (((py - y0) * vy + (px - x0) * vx) / (vy * vy + vx * vx)).clamp(0.0, 1.0);
            let (cy, cx) = (y0 + t * vy, x0 + t * vx);
            (py - cy).powi(2) + (px - cx).powi(2) <= 1.0
        })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let image = Image::from_fn(n, n, |y, x| {
        let base = if on_scratch(y, x) {
            spec.scratch_color
        } else {
            owner[y * n + x].map_or(spec.background, |i| instances[i].color)
        };
        let mut px = [0u8; 3];
        for c in 0..3 {
            let e: f64 = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            px[c] = (base[c] as f64 + e).round().clamp(0.0, 255.0) as u8;
        }
        px
    });
    let masks = (0..spec.components.len())
        .map(|k| RegionMask::from_fn(n, n, |y, x| owner[y * n + x].is_some_and(|i| instances[i].component == k)))
        .collect();
    (image, masks)
}

fn counts(spec: &SceneSpec, instances: &[Instance]) -> Vec<usize> {
    (0..spec.components.len()).map(|k| instances.iter().filter(|i| i.component == k).count()).collect()
}

fn make(spec: &SceneSpec, id: String, kind: &str, instances: Vec<Instance>, noise_seed: u64, scratch: Option<((f64, f64), (f64, f64))>) -> ProductImage {
    let (image, masks) = render(spec, &instances, noise_seed, scratch);
    ProductImage { id, kind: kind.to_string(), image, masks, counts: counts(spec, &instances), instances }
}

/// A normal product from `seed`.
pub fn gen_normal(spec: &SceneSpec, seed: u64, id: impl Into<String>) -> ProductImage {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, 0));
    let layout = normal_layout(spec, &mut rng);
    make(spec, id.into(), "good", layout, derive_seed(seed, 2, 0), None)
}

/// The normal product from `seed` with one defect applied. Randomness of
/// the defect comes from a stream separate from the base layout.
pub fn gen_defect(spec: &SceneSpec, kind: DefectKind, seed: u64, id: impl Into<String>) -> Result<ProductImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, 0));
    let mut layout = normal_layout(spec, &mut rng);
    let mut drng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3, 0));
    let noise_seed = derive_seed(seed, 2, 0);
    let nc = spec.components.len();
    let mut scratch = None;
    match kind {
        DefectKind::Missing => {
            let k = drng.random_range(0..nc);
            layout.retain(|i| i.component != k);
        }
        DefectKind::ExtraInstance => {
            let candidates: Vec<usize> = (0..nc).filter(|&k| spec.components[k].extra_anchor.is_some()).collect();
            if candidates.is_empty() {
                return Err(Error::param("no component defines an extra anchor"));
            }
            let k = candidates[drng.random_range(0..candidates.len())];
            let (y, x) = spec.components[k].extra_anchor.unwrap();
            let scale = 1.0 + drng.random_range(-spec.size_jitter..=spec.size_jitter);
            layout.push(Instance { component: k, center: (y, x), scale, color: spec.components[k].color });
        }
        DefectKind::ColorSwap => {
            if nc < 2 {
                return Err(Error::param("colour swap needs two components"));
            }
            let a = drng.random_range(0..nc);
            let b = (a + drng.random_range(1..nc)) % nc;
            let (ca, cb) = (spec.components[a].color, spec.components[b].color);
            for inst in &mut layout {
                if inst.component == a {
                    inst.color = cb;
                } else if inst.component == b {
                    inst.color = ca;
                }
            }
        }
        DefectKind::SizeChange => {
            let k = drng.random_range(0..nc);
            let factor = if drng.random::<bool>() { 1.0 + spec.size_defect } else { 1.0 - spec.size_defect };
            for inst in layout.iter_mut().filter(|i| i.component == k) {
                inst.scale *= factor;
            }
        }
        DefectKind::Scratch => {
            let inst = layout[drng.random_range(0..layout.len())];
            let half = match spec.components[inst.component].shape {
                Shape::Rect { height, width } => height.min(width) * inst.scale / 2.0,
                Shape::Circle { radius } => radius * inst.scale,
            } * 0.7;
            let angle: f64 = drng.random_range(0.0..std::f64::consts::PI);
            let (dy, dx) = (half * angle.sin(), half * angle.cos());
            scratch = Some(((inst.center.0 - dy, inst.center.1 - dx), (inst.center.0 + dy, inst.center.1 + dx)));
        }
    }
    Ok(make(spec, id.into(), kind.name(), layout, noise_seed, scratch))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_test_good: usize,
    pub defects: Vec<(DefectKind, usize)>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            n_train: 50,
            n_test_good: 40,
            defects: vec![(DefectKind::Missing, 20), (DefectKind::ExtraInstance, 20), (DefectKind::ColorSwap, 20)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProductDataset {
    pub train: Vec<ProductImage>,
    pub test: Vec<ProductImage>,
}

pub fn gen_product_dataset(spec: &SceneSpec, split: &SplitSpec, seed: u64) -> Result<ProductDataset> {
    spec.validate()?;
    let train = (0..split.n_train).map(|i| gen_normal(spec, derive_seed(seed, 10, i as u64), format!("{i:03}"))).collect();
    let mut test: Vec<ProductImage> =
        (0..split.n_test_good).map(|i| gen_normal(spec, derive_seed(seed, 11, i as u64), format!("{i:03}"))).collect();
    for (d, &(kind, n)) in split.defects.iter().enumerate() {
        for i in 0..n {
            test.push(gen_defect(spec, kind, derive_seed(seed, 100 + d as u64, i as u64), format!("{i:03}"))?);
        }
    }
    Ok(ProductDataset { train, test })
}
