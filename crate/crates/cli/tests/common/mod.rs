#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use cmad_cli::commands::{cmd_gen, cmd_train, resolve_config, GenSpec, Overrides};
use cmad::eval::{DefectKind, SplitSpec};

pub const CONFIG: &str = "seed = 5\n[image]\nsize = 112\n[metrology]\nk = 3\n[counting]\nmin_samples = 3\n";

pub fn gen_spec() -> GenSpec {
    GenSpec {
        seed: 21,
        split: SplitSpec {
            n_train: 8,
            n_test_good: 3,
            defects: vec![(DefectKind::Missing, 2), (DefectKind::ExtraInstance, 2), (DefectKind::ColorSwap, 2)],
        },
        ..GenSpec::default()
    }
}

/// A generated dataset, its config file and a trained model, shared by
/// every test in one binary.
pub struct Fixture {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
    pub dataset: PathBuf,
    pub config: PathBuf,
    pub model: PathBuf,
}

pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let dataset = root.join("data");
        cmd_gen(&gen_spec(), &dataset).unwrap();
        let config = root.join("run.toml");
        std::fs::write(&config, CONFIG).unwrap();
        let cfg = resolve_config(Some(&config), &Overrides::default()).unwrap();
        let model = root.join("model.cmad");
        cmd_train(&dataset, &cfg, &model).unwrap();
        Fixture { _dir: dir, root, dataset, config, model }
    })
}

pub fn first_png(dir: &Path) -> PathBuf {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files.into_iter().find(|p| p.extension().is_some_and(|x| x == "png")).unwrap()
}
