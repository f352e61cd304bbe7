//! Image, field and feature-map containers shared by the whole pipeline.

mod color;
mod feature_file;
mod field;
mod image;

pub use self::color::{rgb_to_lab, srgb_pixel_to_lab, LabImage};
pub use self::feature_file::{read_feature_file, write_feature_file, FeatureMap, FEATURE_MAGIC};
pub use self::field::{bilinear_coords, mean_filter, ScalarField};
pub use self::image::{Image, Sample};
