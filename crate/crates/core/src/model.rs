//! Trained component model and its binary file format.
//!
//! Layout: magic `CMAD`, format version (u32 LE), then tagged sections, each
//! a 4-byte tag, a u64 LE payload length and the payload. Numbers are stored
//! little-endian so a round trip is bit-exact. Unknown tags are skipped.

use std::path::Path;

use crate::config::RunConfig;
use crate::counting::{AreaGroups, HistogramBank};
use crate::error::{Error, Result};
use crate::filter::ReservedComponents;
use crate::metrology::{Normalizers, VectorBank};
use crate::region::ScaleChoice;
use crate::segment::ComponentPrototypes;

pub const MODEL_MAGIC: [u8; 4] = *b"CMAD";
pub const MODEL_VERSION: u32 = 1;

/// Leave-one-out scores of the training images under unit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingScores {
    pub ids: Vec<String>,
    pub d_g: Vec<f64>,
    pub d_h: Vec<f64>,
}

impl TrainingScores {
    pub fn fused(&self, alpha: f64) -> Vec<f64> {
        self.d_g.iter().zip(&self.d_h).map(|(g, h)| g + alpha * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentModel {
    pub config: RunConfig,
    pub reference_image: String,
    pub prototypes: ComponentPrototypes,
    pub reserved: ReservedComponents,
    /// Per kept component, in kept order.
    pub scales: Vec<ScaleChoice>,
    pub normalizers: Normalizers,
    pub vectors: VectorBank,
    /// Per kept component.
    pub groups: Vec<AreaGroups>,
    /// Per kept component.
    pub histograms: Vec<HistogramBank>,
    pub training: TrainingScores,
}

impl ComponentModel {
    pub fn kept(&self) -> &[usize] {
        &self.reserved.kept
    }

    pub fn c_stars(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s.c_star).collect()
    }

    /// Largest leave-one-out training score, the default decision threshold.
    pub fn default_threshold(&self) -> f64 {
        self.training.fused(self.config.detector.alpha).into_iter().fold(0.0, f64::max)
    }

    /// Mean leave-one-out training score, used to normalize ensembles.
    pub fn mean_training_score(&self) -> f64 {
        let d = self.training.fused(self.config.detector.alpha);
        if d.is_empty() {
            0.0
        } else {
            d.iter().sum::<f64>() / d.len() as f64
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.reserved.kept.len();
        let ok = self.scales.len() == n
            && self.normalizers.area_means.len() == n
            && self.normalizers.color_means.len() == n
            && self.vectors.components == n
            && self.groups.len() == n
            && self.histograms.len() == n
            && self.reserved.total() == self.prototypes.k
            && self.groups.iter().zip(&self.histograms).all(|(g, h)| g.len() == h.dim)
            && self.training.d_g.len() == self.training.ids.len()
            && self.training.d_h.len() == self.training.ids.len();
        if ok {
            Ok(())
        } else {
            Err(Error::Corrupt("per-component tables disagree with the kept set".into()))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        let mut section = |tag: &[u8; 4], w: Writer| {
            out.extend_from_slice(tag);
            out.extend_from_slice(&(w.0.len() as u64).to_le_bytes());
            out.extend_from_slice(&w.0);
        };

        let mut w = Writer::default();
        w.str(&serde_json::to_string(&self.config).expect("config serializes"));
        section(b"CONF", w);

        let mut w = Writer::default();
        w.str(&self.reference_image);
        w.u64(self.training.ids.len() as u64);
        for id in &self.training.ids {
            w.str(id);
        }
        section(b"IMGS", w);

        let mut w = Writer::default();
        w.u64(self.prototypes.k as u64);
        w.u64(self.prototypes.dim as u64);
        w.f64s(&self.prototypes.centers);
        section(b"PROT", w);

        let mut w = Writer::default();
        for ids in [&self.reserved.kept, &self.reserved.noise, &self.reserved.background] {
            w.usizes(ids);
        }
        section(b"KEEP", w);

        let mut w = Writer::default();
        w.u64(self.scales.len() as u64);
        for s in &self.scales {
            w.f64(s.c_star);
            w.f64s(&s.candidates);
            w.f64s(&s.scores);
        }
        section(b"CALI", w);

        let mut w = Writer::default();
        w.u64(self.normalizers.n_train as u64);
        w.f64s(&self.normalizers.area_means);
        w.f64s(&self.normalizers.color_means);
        section(b"NORM", w);

        let mut w = Writer::default();
        w.u64(self.vectors.width as u64);
        w.u64(self.vectors.components as u64);
        w.f64s(&self.vectors.vectors);
        section(b"VBNK", w);

        let mut w = Writer::default();
        w.u64(self.groups.len() as u64);
        for g in &self.groups {
            w.f64s(&g.centroids);
        }
        section(b"GRPS", w);

        let mut w = Writer::default();
        w.u64(self.histograms.len() as u64);
        for h in &self.histograms {
            w.u64(h.dim as u64);
            w.f64s(&h.rows);
        }
        section(b"HBNK", w);

        let mut w = Writer::default();
        w.f64s(&self.training.d_g);
        w.f64s(&self.training.d_h);
        section(b"TSCR", w);

        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated { expected: 8, found: bytes.len() });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MODEL_MAGIC {
            return Err(Error::BadMagic { expected: MODEL_MAGIC, found: magic });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: MODEL_VERSION });
        }
        let mut sections: Vec<([u8; 4], &[u8])> = Vec::new();
        let mut r = Reader { buf: bytes, pos: 8 };
        while r.pos < bytes.len() {
            let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
            let len = r.u64()? as usize;
            sections.push((tag, r.take(len)?));
        }
        let get = |tag: &[u8; 4]| -> Result<Reader<'_>> {
            sections
                .iter()
                .find(|(t, _)| t == tag)
                .map(|(_, p)| Reader { buf: p, pos: 0 })
                .ok_or_else(|| Error::Corrupt(format!("missing section {}", String::from_utf8_lossy(tag))))
        };

        let config: RunConfig = serde_json::from_str(&get(b"CONF")?.str()?)
            .map_err(|e| Error::Corrupt(format!("config section: {e}")))?;

        let mut r = get(b"IMGS")?;
        let reference_image = r.str()?;
        let n = r.len()?;
        let ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;

        let mut r = get(b"PROT")?;
        let (k, dim) = (r.u64()? as usize, r.u64()? as usize);
        let prototypes = ComponentPrototypes { k, dim, centers: r.f64s()? };
        if prototypes.centers.len() != k * dim {
            return Err(Error::Corrupt("prototype table size".into()));
        }

        let mut r = get(b"KEEP")?;
        let reserved = ReservedComponents { kept: r.usizes()?, noise: r.usizes()?, background: r.usizes()? };

        let mut r = get(b"CALI")?;
        let n = r.len()?;
        let scales = (0..n)
            .map(|_| Ok(ScaleChoice { c_star: r.f64()?, candidates: r.f64s()?, scores: r.f64s()? }))
            .collect::<Result<Vec<_>>>()?;

        let mut r = get(b"NORM")?;
        let normalizers = Normalizers { n_train: r.u64()? as usize, area_means: r.f64s()?, color_means: r.f64s()? };

        let mut r = get(b"VBNK")?;
        let vectors = VectorBank { width: r.u64()? as usize, components: r.u64()? as usize, vectors: r.f64s()? };

        let mut r = get(b"GRPS")?;
        let n = r.len()?;
        let groups = (0..n).map(|_| Ok(AreaGroups { centroids: r.f64s()? })).collect::<Result<Vec<_>>>()?;

        let mut r = get(b"HBNK")?;
        let n = r.len()?;
        let histograms = (0..n)
            .map(|_| Ok(HistogramBank { dim: r.u64()? as usize, rows: r.f64s()? }))
            .collect::<Result<Vec<_>>>()?;

        let mut r = get(b"TSCR")?;
        let training = TrainingScores { ids, d_g: r.f64s()?, d_h: r.f64s()? };

        let model = ComponentModel {
            config,
            reference_image,
            prototypes,
            reserved,
            scales,
            normalizers,
            vectors,
            groups,
            histograms,
            training,
        };
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }

    fn usizes(&mut self, v: &[usize]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.u64(x as u64));
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated { expected: self.pos.saturating_add(n), found: self.buf.len() }),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Element count, bounded by the remaining bytes so corrupt lengths
    /// cannot trigger huge allocations.
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n > remaining {
            return Err(Error::Truncated { expected: n as usize, found: remaining as usize });
        }
        Ok(n as usize)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len()?;
        (0..n).map(|_| Ok(self.u64()? as usize)).collect()
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Corrupt(format!("string: {e}")))
    }
}
