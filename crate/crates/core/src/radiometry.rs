//! Color-space conversion, image-quality metrics, and preprocessing operators.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::image::Image8;
use crate::numeric::{compensated_sum, CompensatedSum};

/// Linear RGB to XYZ for sRGB primaries, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];
const LAB_DELTA: f64 = 6.0 / 29.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DYNAMIC_RANGE: f64 = 255.0;
pub const WB_GAIN_MIN: f64 = 0.25;
pub const WB_GAIN_MAX: f64 = 4.0;

/// BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn white_point() -> [f64; 3] {
    RGB_TO_XYZ.map(|row| row[0] + row[1] + row[2])
}

pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn srgb_encode(l: f64) -> f64 {
    if l <= 0.0031308 {
        12.92 * l
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    }
}

fn decode_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| std::array::from_fn(|i| srgb_decode(i as f64 / 255.0)))
}

/// 8-bit sRGB value to linear [0,1].
pub fn linearize(v: u8) -> f64 {
    decode_lut()[v as usize]
}

/// Linear value to 8-bit sRGB, clipping to [0,1].
pub fn delinearize(l: f64) -> u8 {
    (srgb_encode(l.clamp(0.0, 1.0)) * 255.0).round().clamp(0.0, 255.0) as u8
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t * t * t
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

/// CIE Lab of one 8-bit sRGB pixel (D65 white).
pub fn srgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(linearize);
    let xyz = RGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    let wp = white_point();
    let f = [lab_f(xyz[0] / wp[0]), lab_f(xyz[1] / wp[1]), lab_f(xyz[2] / wp[2])];
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// Inverse of [`srgb_pixel_to_lab`], rounded and clipped to 8 bits.
pub fn lab_pixel_to_srgb(lab: [f64; 3]) -> [u8; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let wp = white_point();
    let xyz = [wp[0] * lab_f_inv(fx), wp[1] * lab_f_inv(fy), wp[2] * lab_f_inv(fz)];
    XYZ_TO_RGB.map(|row| delinearize(row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: u32,
    pub height: u32,
    /// Row-major `[L, a, b]` per pixel.
    pub data: Vec<[f64; 3]>,
}

fn require_rgb(img: &Image8) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!("expected 3 channels, got {}", img.channels())));
    }
    Ok(())
}

fn require_same_shape(a: &Image8, b: &Image8) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn srgb_to_lab(img: &Image8) -> Result<LabImage> {
    require_rgb(img)?;
    let data = img
        .data()
        .par_chunks_exact(3)
        .map(|p| srgb_pixel_to_lab([p[0], p[1], p[2]]))
        .collect();
    Ok(LabImage {
        width: img.width(),
        height: img.height(),
        data,
    })
}

pub fn lab_to_srgb(lab: &LabImage) -> Result<Image8> {
    let data = lab.data.par_iter().flat_map_iter(|&p| lab_pixel_to_srgb(p)).collect();
    Image8::new(lab.width, lab.height, 3, data)
}

/// Per-pixel inclusion mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub included: Vec<bool>,
}

impl Mask {
    /// Nonzero pixels of a grayscale image are included.
    pub fn from_image(img: &Image8) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::invalid("mask must be a single-channel image"));
        }
        Ok(Self {
            width: img.width(),
            height: img.height(),
            included: img.data().iter().map(|&v| v != 0).collect(),
        })
    }

    pub fn from_rect(width: u32, height: u32, rect: Rect) -> Result<Self> {
        rect.check(width, height)?;
        let included = (0..height)
            .flat_map(|y| (0..width).map(move |x| rect.contains(x, y)))
            .collect();
        Ok(Self {
            width,
            height,
            included,
        })
    }

    pub fn count(&self) -> usize {
        self.included.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Signed mean of `a - b` per channel.
    pub mean_l_diff: f64,
    pub mean_a_diff: f64,
    pub mean_b_diff: f64,
    pub pixels: usize,
}

/// ΔE*76 statistics between two sRGB images; `a` is the reconstruction and
/// `b` the reference.
pub fn delta_e_stats(a: &Image8, b: &Image8, mask: Option<&Mask>) -> Result<DeltaEStats> {
    require_rgb(a)?;
    require_rgb(b)?;
    require_same_shape(a, b)?;
    delta_e_stats_lab(&srgb_to_lab(a)?, &srgb_to_lab(b)?, mask)
}

pub fn delta_e_stats_lab(a: &LabImage, b: &LabImage, mask: Option<&Mask>) -> Result<DeltaEStats> {
    if (a.width, a.height) != (b.width, b.height) || a.data.len() != b.data.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if let Some(m) = mask {
        if (m.width, m.height) != (a.width, a.height) {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs image {}x{}",
                m.width, m.height, a.width, a.height
            )));
        }
    }
    let diffs: Vec<[f64; 3]> = a
        .data
        .iter()
        .zip(&b.data)
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m.included[*i]))
        .map(|(_, (p, q))| [p[0] - q[0], p[1] - q[1], p[2] - q[2]])
        .collect();
    if diffs.is_empty() {
        return Err(Error::invalid("mask selects no pixels"));
    }
    let n = diffs.len() as f64;
    let de: Vec<f64> = diffs
        .iter()
        .map(|d| (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
        .collect();
    let mean = compensated_sum(de.iter().copied()) / n;
    let var = compensated_sum(de.iter().map(|e| (e - mean) * (e - mean))) / n;
    let channel = |c: usize| compensated_sum(diffs.iter().map(|d| d[c])) / n;
    Ok(DeltaEStats {
        mean,
        std: var.sqrt(),
        min: de.iter().copied().fold(f64::INFINITY, f64::min),
        max: de.iter().copied().fold(0.0, f64::max),
        mean_l_diff: channel(0),
        mean_a_diff: channel(1),
        mean_b_diff: channel(2),
        pixels: diffs.len(),
    })
}

/// Peak signal-to-noise ratio in dB over all channels; `+inf` for identical images.
pub fn psnr(a: &Image8, b: &Image8) -> Result<f64> {
    require_same_shape(a, b)?;
    let sq: Vec<f64> = a
        .data()
        .par_iter()
        .zip(b.data().par_iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .collect();
    let mse = compensated_sum(sq) / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / mse).log10())
}

/// Luma plane (BT.601 for RGB, identity for gray), row-major.
pub fn luma(img: &Image8) -> Vec<f64> {
    match img.channels() {
        1 => img.data().iter().map(|&v| v as f64).collect(),
        _ => img
            .data()
            .chunks_exact(3)
            .map(|p| LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64)
            .collect(),
    }
}

/// Normalized 1-D Gaussian taps of length [`SSIM_WINDOW`].
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let raw: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = raw.iter().sum();
    raw.map(|v| v / s)
}

/// Mean SSIM over all valid 11x11 window positions, computed on luma.
pub fn ssim(a: &Image8, b: &Image8) -> Result<f64> {
    require_same_shape(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "image {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let x = luma(a);
    let y = luma(b);
    let g = gaussian_taps();
    let c1 = (SSIM_K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE).powi(2);
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;

    // Horizontal pass of x, y, x^2, y^2, xy over every row.
    let horizontal: Vec<[f64; 5]> = (0..h * ow)
        .into_par_iter()
        .map(|i| {
            let (row, col) = (i / ow, i % ow);
            let mut acc = [0.0; 5];
            for (k, &gk) in g.iter().enumerate() {
                let p = row * w + col + k;
                let (xv, yv) = (x[p], y[p]);
                acc[0] += gk * xv;
                acc[1] += gk * yv;
                acc[2] += gk * xv * xv;
                acc[3] += gk * yv * yv;
                acc[4] += gk * xv * yv;
            }
            acc
        })
        .collect();

    let rows: Vec<f64> = (0..oh)
        .into_par_iter()
        .map(|row| {
            let mut sum = CompensatedSum::new();
            for col in 0..ow {
                let mut m = [0.0; 5];
                for (k, &gk) in g.iter().enumerate() {
                    let hv = &horizontal[(row + k) * ow + col];
                    for c in 0..5 {
                        m[c] += gk * hv[c];
                    }
                }
                let (mx, my) = (m[0], m[1]);
                let vx = m[2] - mx * mx;
                let vy = m[3] - my * my;
                let cov = m[4] - mx * my;
                sum.add(((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
            }
            sum.value()
        })
        .collect();
    Ok(compensated_sum(rows) / (ow * oh) as f64)
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self { x, y, width, height }
    }

    fn check(&self, img_w: u32, img_h: u32) -> Result<()> {
        let fits = |o: u32, len: u32, max: u32| o.checked_add(len).is_some_and(|e| e <= max);
        if self.width == 0 || self.height == 0 || !fits(self.x, self.width, img_w) || !fits(self.y, self.height, img_h) {
            return Err(Error::invalid(format!(
                "rect {}x{}+{}+{} outside image {img_w}x{img_h}",
                self.width, self.height, self.x, self.y
            )));
        }
        Ok(())
    }

    fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x - self.x < self.width && y >= self.y && y - self.y < self.height
    }
}

pub fn crop(img: &Image8, rect: Rect) -> Result<Image8> {
    rect.check(img.width(), img.height())?;
    let c = img.channels() as usize;
    let stride = img.width() as usize * c;
    let mut data = Vec::with_capacity(rect.width as usize * rect.height as usize * c);
    for y in rect.y..rect.y + rect.height {
        let start = y as usize * stride + rect.x as usize * c;
        data.extend_from_slice(&img.data()[start..start + rect.width as usize * c]);
    }
    Image8::new(rect.width, rect.height, img.channels(), data)
}

/// Clipped-histogram equalization lookup table for one tile.
fn tile_lut(hist: &[u32; 256], total: u32, clip_limit: f64) -> [u8; 256] {
    let mut hist = *hist;
    if clip_limit.is_finite() {
        let clip = ((clip_limit * total as f64 / 256.0) as u32).max(1);
        let mut excess = 0u32;
        for h in hist.iter_mut() {
            if *h > clip {
                excess += *h - clip;
                *h = clip;
            }
        }
        let batch = excess / 256;
        let residual = excess % 256;
        for h in hist.iter_mut() {
            *h += batch;
        }
        if let Some(step) = 256u32.checked_div(residual) {
            let step = step.max(1) as usize;
            for h in hist.iter_mut().step_by(step).take(residual as usize) {
                *h += 1;
            }
        }
    }
    let mut cdf = 0u64;
    std::array::from_fn(|i| {
        cdf += hist[i] as u64;
        ((cdf * 255) as f64 / total as f64).round().min(255.0) as u8
    })
}

/// Tile edges splitting `len` into `n` nearly equal parts.
fn tile_edges(len: usize, n: usize) -> Vec<usize> {
    (0..=n).map(|i| i * len / n).collect()
}

/// Lower tile and blend weight for a pixel center between tile centers.
fn interp_coord(p: usize, centers: &[f64]) -> (usize, usize, f64) {
    let pc = p as f64 + 0.5;
    if pc <= centers[0] {
        return (0, 0, 0.0);
    }
    let last = centers.len() - 1;
    if pc >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= pc) - 1;
    (i, i + 1, (pc - centers[i]) / (centers[i + 1] - centers[i]))
}

fn clahe_plane(plane: &[u8], w: usize, h: usize, clip_limit: f64, tiles: (u32, u32)) -> Vec<u8> {
    let (tx, ty) = (tiles.0 as usize, tiles.1 as usize);
    let xe = tile_edges(w, tx);
    let ye = tile_edges(h, ty);
    let luts: Vec<[u8; 256]> = (0..tx * ty)
        .into_par_iter()
        .map(|t| {
            let (i, j) = (t % tx, t / tx);
            let mut hist = [0u32; 256];
            for y in ye[j]..ye[j + 1] {
                for &v in &plane[y * w + xe[i]..y * w + xe[i + 1]] {
                    hist[v as usize] += 1;
                }
            }
            let total = ((xe[i + 1] - xe[i]) * (ye[j + 1] - ye[j])) as u32;
            tile_lut(&hist, total, clip_limit)
        })
        .collect();
    let xc: Vec<f64> = (0..tx).map(|i| (xe[i] + xe[i + 1]) as f64 / 2.0).collect();
    let yc: Vec<f64> = (0..ty).map(|j| (ye[j] + ye[j + 1]) as f64 / 2.0).collect();
    let mut out = vec![0u8; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let (j0, j1, wy) = interp_coord(y, &yc);
        for (x, o) in row.iter_mut().enumerate() {
            let (i0, i1, wx) = interp_coord(x, &xc);
            let v = plane[y * w + x] as usize;
            let l = |i: usize, j: usize| luts[j * tx + i][v] as f64;
            let top = (1.0 - wx) * l(i0, j0) + wx * l(i1, j0);
            let bottom = (1.0 - wx) * l(i0, j1) + wx * l(i1, j1);
            *o = ((1.0 - wy) * top + wy * bottom).round().clamp(0.0, 255.0) as u8;
        }
    });
    out
}

/// Contrast-limited adaptive histogram equalization.
///
/// `clip_limit` is relative to a uniform histogram (OpenCV convention) and may
/// be `f64::INFINITY`. RGB input is equalized on BT.601 luma and each channel
/// is rescaled by the luma ratio.
pub fn clahe(img: &Image8, clip_limit: f64, tiles: (u32, u32)) -> Result<Image8> {
    if clip_limit.is_nan() || clip_limit < 1.0 {
        return Err(Error::invalid(format!("clip limit must be >= 1, got {clip_limit}")));
    }
    if tiles.0 == 0 || tiles.1 == 0 || tiles.0 > img.width() || tiles.1 > img.height() {
        return Err(Error::invalid(format!(
            "tile grid {}x{} invalid for image {}x{}",
            tiles.0,
            tiles.1,
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.channels() == 1 {
        let out = clahe_plane(img.data(), w, h, clip_limit, tiles);
        return Image8::new(img.width(), img.height(), 1, out);
    }
    let y = luma(img);
    let y8: Vec<u8> = y.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let eq = clahe_plane(&y8, w, h, clip_limit, tiles);
    let data = img
        .data()
        .par_chunks_exact(3)
        .zip(y.par_iter().zip(eq.par_iter()))
        .flat_map_iter(|(p, (&yv, &e))| {
            let out: [u8; 3] = if yv <= 0.0 {
                [e; 3]
            } else {
                let r = e as f64 / yv;
                std::array::from_fn(|c| (p[c] as f64 * r).round().clamp(0.0, 255.0) as u8)
            };
            out
        })
        .collect();
    Image8::new(img.width(), img.height(), 3, data)
}

fn map_linear(img: &Image8, f: impl Fn(usize, f64) -> f64 + Sync) -> Result<Image8> {
    let c = img.channels() as usize;
    let data = img
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &v)| delinearize(f(i % c, linearize(v))))
        .collect();
    Image8::new(img.width(), img.height(), img.channels(), data)
}

/// Linear-domain channel means.
pub fn linear_channel_means(img: &Image8) -> Vec<f64> {
    let c = img.channels() as usize;
    (0..c)
        .map(|ch| {
            compensated_sum(img.data().iter().skip(ch).step_by(c).map(|&v| linearize(v))) / img.pixel_count() as f64
        })
        .collect()
}

/// Gray-world gains (relative to green) in linear RGB, clamped to [0.25, 4].
pub fn grayworld_gains(img: &Image8) -> Result<[f64; 3]> {
    require_rgb(img)?;
    let m = linear_channel_means(img);
    if m.iter().any(|&v| v <= 0.0) {
        return Err(Error::Degenerate("zero-mean channel".into()));
    }
    Ok([0, 1, 2].map(|c| (m[1] / m[c]).clamp(WB_GAIN_MIN, WB_GAIN_MAX)))
}

pub fn white_balance_grayworld(img: &Image8) -> Result<Image8> {
    let gains = grayworld_gains(img)?;
    map_linear(img, |c, l| l * gains[c])
}

/// Rescales linear intensities by `reference_exposure / exposure`, clipping at white.
pub fn exposure_normalize(img: &Image8, exposure: f64, reference_exposure: f64) -> Result<Image8> {
    for (name, v) in [("exposure", exposure), ("reference exposure", reference_exposure)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
        }
    }
    let k = reference_exposure / exposure;
    map_linear(img, |_, l| l * k)
}
