//! sRGB (D65) to CIELAB conversion.

use super::Image;

// Linear sRGB -> XYZ, D65.
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

// Reference white is the image of RGB (1,1,1) so that neutral inputs map to a = b = 0.
const WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

const DELTA: f64 = 6.0 / 29.0;

#[inline]
fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one 8-bit sRGB pixel to (L, a, b).
pub fn srgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let mut xyz = [0.0; 3];
    for (row, out) in SRGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Per-pixel CIELAB triples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    height: usize,
    width: usize,
    data: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }
}

pub fn rgb_to_lab(img: &Image) -> LabImage {
    // Runs of identical pixels are common; reuse the previous conversion.
    let mut last: Option<([u8; 3], [f64; 3])> = None;
    let data = img
        .as_raw()
        .chunks_exact(3)
        .map(|p| {
            let rgb = [p[0], p[1], p[2]];
            match last {
                Some((k, v)) if k == rgb => v,
                _ => {
                    let v = srgb_pixel_to_lab(rgb);
                    last = Some((rgb, v));
                    v
                }
            }
        })
        .collect();
    LabImage { height: img.height(), width: img.width(), data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn white_and_black() {
        let w = srgb_pixel_to_lab([255, 255, 255]);
        assert_abs_diff_eq!(w[0], 100.0, epsilon = 1e-3);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-3);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-3);
        assert_eq!(srgb_pixel_to_lab([0, 0, 0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn mid_gray_matches_reference() {
        // Frozen from an independent evaluation of the CIE L* formula
        // (kappa/epsilon form) for sRGB 128.
        let g = srgb_pixel_to_lab([128, 128, 128]);
        assert_abs_diff_eq!(g[0], 53.585013452169036, epsilon = 1e-9);
        assert!(g[1].abs() < 1e-6 && g[2].abs() < 1e-6);
    }

    #[test]
    fn saturated_red_matches_reference() {
        let r = srgb_pixel_to_lab([200, 40, 40]);
        assert_abs_diff_eq!(r[0], 44.16717686296437, epsilon = 1e-6);
        assert_abs_diff_eq!(r[1], 60.86530084514652, epsilon = 1e-6);
        assert_abs_diff_eq!(r[2], 40.84270355997196, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn gray_is_neutral(v in 0u8..=255) {
            let lab = srgb_pixel_to_lab([v, v, v]);
            prop_assert!(lab[1].abs() < 1e-6);
            prop_assert!(lab[2].abs() < 1e-6);
            prop_assert!((0.0..=100.0 + 1e-9).contains(&lab[0]));
        }
    }
}
