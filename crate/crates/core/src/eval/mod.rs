//! Evaluation: AUROC, synthetic datasets and the benchmark harness.

mod auroc;
mod benchmark;
mod circles;
mod dataset;
mod product;

pub use self::auroc::{auroc, auroc_split, LabeledScore};
pub use self::benchmark::{run_benchmark, summarize, BenchmarkReport, ImageRecord, KindAuroc};
pub use self::circles::{gen_circle_class, gen_circle_dataset, gen_circle_image, CircleConfig, CircleImage};
pub use self::dataset::{load_dataset, load_split, write_dataset, Dataset, GOOD};
pub use self::product::{
    gen_product_dataset, render, ComponentSpec, DefectKind, Instance, ProductDataset, ProductImage, SceneSpec, Shape,
    SplitSpec,
};

/// SplitMix64 step, used to derive independent per-item seeds.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
