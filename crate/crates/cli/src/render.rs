//! Component overlays and per-component masks at the input resolution.

use cmad::data::{Image, Sample};
use cmad::detector::{score_observation, AnomalyReport, Detector, PolicyConfig};
use cmad::region::RegionMask;
use cmad::segment::SegmentationField;
use cmad::Result;

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

/// Colour of the `j`-th kept component.
pub fn palette(j: usize) -> [u8; 3] {
    PALETTE[j % PALETTE.len()]
}

/// Region masks of the kept components, in kept order, at the size of the
/// original image.
pub struct Rendered {
    pub overlay: Image,
    pub masks: Vec<(usize, RegionMask)>,
}

fn blend(a: u8, b: u8) -> u8 {
    ((a as u16 + b as u16) / 2) as u8
}

pub fn overlay(image: &Image, masks: &[(usize, RegionMask)]) -> Image {
    Image::from_fn(image.height(), image.width(), |y, x| {
        let px = image.pixel(y, x);
        match masks.iter().position(|(_, m)| m.get(y, x)) {
            Some(j) => {
                let c = palette(j);
                [blend(px[0], c[0]), blend(px[1], c[1]), blend(px[2], c[2])]
            }
            None => px,
        }
    })
}

pub fn mask_image(mask: &RegionMask) -> Image {
    Image::from_fn(mask.height(), mask.width(), |y, x| if mask.get(y, x) { [255; 3] } else { [0; 3] })
}

fn render_field(det: &Detector, sample: &Sample, seg: &SegmentationField) -> Result<Rendered> {
    let (h, w) = (sample.image.height(), sample.image.width());
    let full = if seg.height() == h && seg.width() == w { seg.clone() } else { seg.resize(h, w) };
    let masks: Vec<(usize, RegionMask)> = det.model().kept().iter().copied().zip(det.regions(&full)?).collect();
    Ok(Rendered { overlay: overlay(&sample.image, &masks), masks })
}

pub fn render(det: &Detector, sample: &Sample) -> Result<Rendered> {
    let seg = det.segment(&det.prepare(sample))?;
    render_field(det, sample, &seg)
}

/// Scores a sample and renders its overlay from a single segmentation.
pub fn score_and_render(det: &Detector, sample: &Sample, policy: &PolicyConfig) -> Result<(AnomalyReport, Rendered)> {
    let prepared = det.prepare(sample);
    let seg = det.segment(&prepared)?;
    let obs = det.observe_segmentation(&prepared, &seg)?;
    let report = score_observation(det.model(), &obs, policy, &sample.id)?;
    Ok((report, render_field(det, sample, &seg)?))
}
