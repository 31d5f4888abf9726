//! Image augmentation pipeline.
//!
//! Transforms are applied in a fixed order with the standard parameters:
//! horizontal flip (p=0.5), grayscale (p=0.01), rotation (+/-10 degrees),
//! color jitter (brightness/contrast/saturation 0.2, hue 0.1), perspective
//! (distortion 0.2, p=0.5), per-channel normalization, and random erasing
//! (p=0.5, area 2-20%, aspect 0.3-3.3, random fill). All randomness comes
//! from the caller's generator, so a fixed seed reproduces the exact output.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// H x W x 3 image, channel-last row-major, values in [0, 1] until
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::Shape {
                op: "image".into(),
                details: format!(
                    "{}x{}x3 needs {} values, got {}",
                    height,
                    width,
                    height * width * 3,
                    data.len()
                ),
            });
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Image {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * 3 + c] = value;
    }

    fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Bilinear sample with zero fill outside the image.
fn sample_bilinear(img: &Image, y: f64, x: f64, c: usize) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let dx = x - x0;
    let dy = y - y0;
    let mut value = 0.0;
    for (yy, wy) in [(y0, 1.0 - dy), (y0 + 1.0, dy)] {
        for (xx, wx) in [(x0, 1.0 - dx), (x0 + 1.0, dx)] {
            let weight = wy * wx;
            if weight == 0.0 {
                continue;
            }
            if yy >= 0.0 && xx >= 0.0 && (yy as usize) < img.height && (xx as usize) < img.width {
                value += weight * img.at(yy as usize, xx as usize, c);
            }
        }
    }
    value
}

/// Mirrors the image left-right.
pub fn horizontal_flip(img: &Image) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                out.set(y, x, c, img.at(y, img.width - 1 - x, c));
            }
        }
    }
    out
}

/// Standard luma conversion replicated across channels.
pub fn to_grayscale(img: &Image) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let l = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            for c in 0..3 {
                out.set(y, x, c, l);
            }
        }
    }
    out
}

/// Rotation about the image center, bilinear, zero fill.
pub fn rotate(img: &Image, angle_degrees: f64) -> Image {
    let angle = angle_degrees.to_radians();
    let (sin, cos) = angle.sin_cos();
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;
    let mut out = Image::filled(img.height, img.width, 0.0);
    for y in 0..img.height {
        for x in 0..img.width {
            let ry = y as f64 - cy;
            let rx = x as f64 - cx;
            // Inverse rotation of the output coordinate.
            let src_x = cos * rx + sin * ry + cx;
            let src_y = -sin * rx + cos * ry + cy;
            for c in 0..3 {
                out.set(y, x, c, sample_bilinear(img, src_y, src_x, c));
            }
        }
    }
    out
}

fn mean_luma(img: &Image) -> f64 {
    let mut total = 0.0;
    for y in 0..img.height {
        for x in 0..img.width {
            total += 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
        }
    }
    total / (img.height * img.width) as f64
}

fn blend_toward(img: &mut Image, factor: f64, target: impl Fn(&Image, usize, usize, usize) -> f64) {
    let reference = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                let t = target(&reference, y, x, c);
                let v = factor * reference.at(y, x, c) + (1.0 - factor) * t;
                img.set(y, x, c, v.clamp(0.0, 1.0));
            }
        }
    }
}

fn adjust_hue(img: &mut Image, shift: f64) {
    for y in 0..img.height {
        for x in 0..img.width {
            let (r, g, b) = (img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r, g, b) = hsv_to_rgb((h + shift).rem_euclid(1.0), s, v);
            img.set(y, x, 0, r);
            img.set(y, x, 1, g);
            img.set(y, x, 2, b);
        }
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}

/// Color jitter configuration: maximum relative change per property.
#[derive(Debug, Clone, Copy)]
pub struct ColorJitter {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

/// Applies brightness/contrast/saturation/hue jitter in a randomized order.
/// Factors are uniform in [max(0, 1-f), 1+f]; hue shift in [-hue, hue].
pub fn color_jitter(img: &Image, jitter: &ColorJitter, rng: &mut Rng) -> Image {
    let mut out = img.clone();
    let brightness = rng.uniform_in((1.0 - jitter.brightness).max(0.0), 1.0 + jitter.brightness);
    let contrast = rng.uniform_in((1.0 - jitter.contrast).max(0.0), 1.0 + jitter.contrast);
    let saturation = rng.uniform_in((1.0 - jitter.saturation).max(0.0), 1.0 + jitter.saturation);
    let hue = rng.uniform_in(-jitter.hue, jitter.hue);
    let mut order = [0usize, 1, 2, 3];
    rng.shuffle(&mut order);
    for op in order {
        match op {
            0 => blend_toward(&mut out, brightness, |_, _, _, _| 0.0),
            1 => {
                let gray = mean_luma(&out);
                blend_toward(&mut out, contrast, move |_, _, _, _| gray);
            }
            2 => blend_toward(&mut out, saturation, |img, y, x, _| {
                0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2)
            }),
            _ => adjust_hue(&mut out, hue),
        }
    }
    out
}

/// Solves the 3x3 homography mapping each `from` corner onto its `to`
/// counterpart (last coefficient fixed at 1).
fn homography(from: [(f64, f64); 4], to: [(f64, f64); 4]) -> [f64; 9] {
    // Build the 8x9 system rows for h: [x y 1 0 0 0 -x'x -x'y | x'] etc.
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = from[i];
        let (xp, yp) = to[i];
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -xp * x, -xp * y, xp];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -yp * x, -yp * y, yp];
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        let pivot_row = a[col];
        for (row, coefficients) in a.iter_mut().enumerate() {
            if row == col || coefficients[col] == 0.0 {
                continue;
            }
            let factor = coefficients[col] / p;
            for (entry, &pivot) in coefficients.iter_mut().zip(pivot_row.iter()).skip(col) {
                *entry -= factor * pivot;
            }
        }
    }
    let mut h = [0.0f64; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    h[8] = 1.0;
    h
}

/// Random four-corner perspective warp with the given distortion scale.
pub fn random_perspective(img: &Image, distortion: f64, rng: &mut Rng) -> Image {
    let h = img.height as f64 - 1.0;
    let w = img.width as f64 - 1.0;
    let dx = distortion * w / 2.0;
    let dy = distortion * h / 2.0;
    let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let displaced = [
        (rng.uniform_in(0.0, dx), rng.uniform_in(0.0, dy)),
        (w - rng.uniform_in(0.0, dx), rng.uniform_in(0.0, dy)),
        (w - rng.uniform_in(0.0, dx), h - rng.uniform_in(0.0, dy)),
        (rng.uniform_in(0.0, dx), h - rng.uniform_in(0.0, dy)),
    ];
    // Map output pixels back into the source image.
    let back = homography(displaced, corners);
    let mut out = Image::filled(img.height, img.width, 0.0);
    for y in 0..img.height {
        for x in 0..img.width {
            let (xf, yf) = (x as f64, y as f64);
            let denom = back[6] * xf + back[7] * yf + back[8];
            let src_x = (back[0] * xf + back[1] * yf + back[2]) / denom;
            let src_y = (back[3] * xf + back[4] * yf + back[5]) / denom;
            for c in 0..3 {
                out.set(y, x, c, sample_bilinear(img, src_y, src_x, c));
            }
        }
    }
    out
}

/// Per-channel standardization: (x - mean) / std.
pub fn normalize(img: &Image, mean: [f64; 3], std: [f64; 3]) -> Image {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                out.set(y, x, c, (img.at(y, x, c) - mean[c]) / std[c]);
            }
        }
    }
    out
}

/// A rectangle chosen by the erasing sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EraseRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Samples an erase rectangle whose measured area fraction stays within
/// `scale` and whose height/width ratio stays within `ratio`. Falls back to
/// a centered square when rejection sampling fails to fit.
pub fn sample_erase_rect(
    rng: &mut Rng,
    height: usize,
    width: usize,
    scale: (f64, f64),
    ratio: (f64, f64),
) -> EraseRect {
    let area = (height * width) as f64;
    for _ in 0..100 {
        let target_area = area * rng.uniform_in(scale.0, scale.1);
        let aspect = (rng.uniform_in(ratio.0.ln(), ratio.1.ln())).exp();
        let h = (target_area * aspect).sqrt().round() as usize;
        let w = (target_area / aspect).sqrt().round() as usize;
        if h == 0 || w == 0 || h > height || w > width {
            continue;
        }
        let fraction = (h * w) as f64 / area;
        let measured_ratio = h as f64 / w as f64;
        if fraction < scale.0 || fraction > scale.1 {
            continue;
        }
        if measured_ratio < ratio.0 || measured_ratio > ratio.1 {
            continue;
        }
        return EraseRect {
            top: rng.index(height - h + 1),
            left: rng.index(width - w + 1),
            height: h,
            width: w,
        };
    }
    // Square fallback near the middle of the scale range.
    let side = ((area * (scale.0 + scale.1) / 2.0).sqrt().round() as usize)
        .clamp(1, height.min(width));
    EraseRect {
        top: rng.index(height - side + 1),
        left: rng.index(width - side + 1),
        height: side,
        width: side,
    }
}

/// Overwrites a sampled rectangle with random values.
pub fn random_erase(
    img: &Image,
    rng: &mut Rng,
    scale: (f64, f64),
    ratio: (f64, f64),
) -> (Image, EraseRect) {
    let rect = sample_erase_rect(rng, img.height, img.width, scale, ratio);
    let mut out = img.clone();
    for y in rect.top..rect.top + rect.height {
        for x in rect.left..rect.left + rect.width {
            for c in 0..3 {
                out.set(y, x, c, rng.uniform());
            }
        }
    }
    (out, rect)
}

/// The full augmentation pipeline with its fixed parameters.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub flip_p: f64,
    pub grayscale_p: f64,
    pub rotation_degrees: f64,
    pub jitter: ColorJitter,
    pub perspective_distortion: f64,
    pub perspective_p: f64,
    pub normalize_mean: [f64; 3],
    pub normalize_std: [f64; 3],
    pub erase_p: f64,
    pub erase_scale: (f64, f64),
    pub erase_ratio: (f64, f64),
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline {
            flip_p: 0.5,
            grayscale_p: 0.01,
            rotation_degrees: 10.0,
            jitter: ColorJitter {
                brightness: 0.2,
                contrast: 0.2,
                saturation: 0.2,
                hue: 0.1,
            },
            perspective_distortion: 0.2,
            perspective_p: 0.5,
            normalize_mean: [0.485, 0.456, 0.406],
            normalize_std: [0.229, 0.224, 0.225],
            erase_p: 0.5,
            erase_scale: (0.02, 0.2),
            erase_ratio: (0.3, 3.3),
        }
    }
}

impl Pipeline {
    /// Applies every transform in the declared order. The input must hold
    /// values in [0, 1]; the output is normalized and unbounded.
    pub fn apply(&self, img: &Image, rng: &mut Rng) -> Result<Image> {
        if !img.in_unit_range() {
            return Err(Error::OutOfRange {
                dim: "image".into(),
                value: f64::NAN,
                range: "[0, 1]".into(),
            });
        }
        let mut out = img.clone();
        if rng.chance(self.flip_p) {
            out = horizontal_flip(&out);
        }
        if rng.chance(self.grayscale_p) {
            out = to_grayscale(&out);
        }
        let angle = rng.uniform_in(-self.rotation_degrees, self.rotation_degrees);
        out = rotate(&out, angle);
        out = color_jitter(&out, &self.jitter, rng);
        if rng.chance(self.perspective_p) {
            out = random_perspective(&out, self.perspective_distortion, rng);
        }
        out = normalize(&out, self.normalize_mean, self.normalize_std);
        if rng.chance(self.erase_p) {
            // Erasing runs after normalization; random fill values are drawn
            // uniform and land in normalized units.
            let rect = sample_erase_rect(rng, out.height, out.width, self.erase_scale, self.erase_ratio);
            for y in rect.top..rect.top + rect.height {
                for x in rect.left..rect.left + rect.width {
                    for c in 0..3 {
                        out.set(y, x, c, rng.uniform());
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Applies the default pipeline.
pub fn augment(img: &Image, rng: &mut Rng) -> Result<Image> {
    Pipeline::default().apply(img, rng)
}
