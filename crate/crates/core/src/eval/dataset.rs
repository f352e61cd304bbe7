//! MVTec-style directory layout:
//! `<root>/train/good/*.png`, `<root>/test/<kind>/*.png` and optional
//! `<root>/ground_truth/<kind>/<stem>.png` label maps.

use std::fs;
use std::path::{Path, PathBuf};

use super::product::ProductDataset;
use crate::data::{Image, Sample};
use crate::error::{Error, Result};

pub const GOOD: &str = "good";

/// Test and training images; sample ids are paths relative to the root
/// without extension (for example `test/missing/003`).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub train: Vec<Sample>,
    /// `(sample, kind)`; kind is `good` for normal images.
    pub test: Vec<(Sample, String)>,
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn sample_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// PNG images in `<root>/<rel>`, sorted by file name.
pub fn load_split(root: &Path, rel: &str) -> Result<Vec<Sample>> {
    let dir = root.join(rel);
    png_files(&dir)?
        .into_iter()
        .map(|p| Ok(Sample::new(sample_id(root, &p), Image::load_png(&p)?)))
        .collect()
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let train_dir = root.join("train").join(GOOD);
    let train = if train_dir.is_dir() { load_split(root, "train/good")? } else { Vec::new() };
    if train.is_empty() {
        return Err(Error::EmptyDataset(train_dir));
    }
    let mut test = Vec::new();
    let test_dir = root.join("test");
    if test_dir.is_dir() {
        let mut kinds: Vec<String> = fs::read_dir(&test_dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        kinds.sort();
        for kind in kinds {
            for s in load_split(root, &format!("test/{kind}"))? {
                test.push((s, kind.clone()));
            }
        }
    }
    Ok(Dataset { root: root.to_path_buf(), train, test })
}

/// Label map: 0 for background, k+1 for spec component k.
fn label_map(masks: &[crate::region::RegionMask]) -> Image {
    let (h, w) = (masks[0].height(), masks[0].width());
    Image::from_fn(h, w, |y, x| {
        let v = masks.iter().position(|m| m.get(y, x)).map_or(0, |k| (k + 1) as u8);
        [v, v, v]
    })
}

pub fn write_dataset(ds: &ProductDataset, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    let write = |split: &str, kind: &str, p: &super::product::ProductImage| -> Result<()> {
        let dir = root.join(split).join(kind);
        fs::create_dir_all(&dir)?;
        p.image.save_png(dir.join(format!("{}.png", p.id)))?;
        if split == "test" {
            let gt = root.join("ground_truth").join(kind);
            fs::create_dir_all(&gt)?;
            label_map(&p.masks).save_png(gt.join(format!("{}.png", p.id)))?;
        }
        Ok(())
    };
    for p in &ds.train {
        write("train", GOOD, p)?;
    }
    for p in &ds.test {
        write("test", &p.kind, p)?;
    }
    Ok(())
}
