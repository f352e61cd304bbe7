//! Component-aware logical anomaly detection.
//!
//! Product images are split into semantic components by clustering dense
//! patch descriptors, every reserved component is measured (area, colour,
//! instance counts), and test images are scored by their distance to the
//! nearest normal training images in that measurement space.

pub mod config;
pub mod counting;
pub mod detector;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod filter;
pub mod knn;
pub mod metrology;
pub mod model;
pub mod region;
pub mod segment;

pub use crate::config::RunConfig;
pub use crate::error::{Error, Result};
