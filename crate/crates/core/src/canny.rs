//! Canny edge detection on 8-bit RGB images.
//!
//! Pipeline: integer luma, separable Gaussian blur, 3×3 Sobel gradients,
//! non-maximum suppression, double-threshold hysteresis with 8-connectivity.
//! Convolutions replicate the border. Thresholds apply to the L2 Sobel
//! magnitude of the 0–255 luma image (no further normalization), so the
//! familiar 50/150 pair keeps its usual meaning.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f64,
    /// Side length of the square Gaussian kernel; must be odd.
    pub kernel_size: usize,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.4,
            kernel_size: 5,
            low_threshold: 50.0,
            high_threshold: 150.0,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "canny sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.kernel_size < 3 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "canny kernel size must be odd and >= 3, got {}",
                self.kernel_size
            )));
        }
        if !(self.low_threshold >= 0.0 && self.low_threshold <= self.high_threshold) {
            return Err(Error::InvalidArgument(format!(
                "canny thresholds must satisfy 0 <= low <= high, got low={} high={}",
                self.low_threshold, self.high_threshold
            )));
        }
        Ok(())
    }
}

/// Binary edge map, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<bool>,
}

impl EdgeMap {
    pub fn count(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / (self.width * self.height) as f64
    }

    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.edges[y * self.width + x]
    }
}

/// `round(0.299 R + 0.587 G + 0.114 B)`, half away from zero.
pub fn luma(img: &RgbImage) -> Vec<u8> {
    img.pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

fn gaussian_kernel(sigma: f64, size: usize) -> Vec<f64> {
    let radius = (size / 2) as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|k| k / total).collect()
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

fn blur(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * row[clamp_index(x as isize + k as isize - radius, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let yy = clamp_index(y as isize + k as isize - radius, height);
                acc += w * tmp[yy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn sobel(src: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| src[clamp_index(y, height) * width + clamp_index(x, width)];
    let mut gx = vec![0.0; src.len()];
    let mut gy = vec![0.0; src.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let i = y as usize * width + x as usize;
            gx[i] = (at(x + 1, y - 1) - at(x - 1, y - 1))
                + 2.0 * (at(x + 1, y) - at(x - 1, y))
                + (at(x + 1, y + 1) - at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) - at(x - 1, y - 1))
                + 2.0 * (at(x, y + 1) - at(x, y - 1))
                + (at(x + 1, y + 1) - at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

const TAN_22_5: f64 = 0.414_213_562_373_095_03;
const TAN_67_5: f64 = 2.414_213_562_373_095;

/// Keeps local maxima along the quantized gradient direction. Ties along the
/// horizontal and vertical axes keep the first pixel (`>` on the preceding
/// neighbour, `>=` on the following one) so a symmetric ridge thins to one
/// pixel; diagonal comparisons are strict on both sides. Neighbours outside
/// the image count as zero magnitude.
fn non_maximum_suppression(
    mag: &[f64],
    gx: &[f64],
    gy: &[f64],
    width: usize,
    height: usize,
    low: f64,
) -> Vec<f64> {
    let m = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            0.0
        } else {
            mag[y as usize * width + x as usize]
        }
    };
    let mut out = vec![0.0; mag.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let i = y as usize * width + x as usize;
            let v = mag[i];
            if v <= low {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            let keep = if ay <= TAN_22_5 * ax {
                v > m(x - 1, y) && v >= m(x + 1, y)
            } else if ay >= TAN_67_5 * ax {
                v > m(x, y - 1) && v >= m(x, y + 1)
            } else if (gx[i] > 0.0) == (gy[i] > 0.0) {
                v > m(x - 1, y - 1) && v > m(x + 1, y + 1)
            } else {
                v > m(x + 1, y - 1) && v > m(x - 1, y + 1)
            };
            if keep {
                out[i] = v;
            }
        }
    }
    out
}

fn hysteresis(thin: &[f64], width: usize, height: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edges = vec![false; thin.len()];
    let mut stack = Vec::new();
    for start in 0..thin.len() {
        if edges[start] || thin[start] <= high {
            continue;
        }
        edges[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if !edges[j] && thin[j] > low {
                        edges[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    edges
}

pub fn canny(img: &RgbImage, params: &CannyParams) -> EdgeMap {
    let (width, height) = (img.width() as usize, img.height() as usize);
    let gray: Vec<f64> = luma(img).into_iter().map(f64::from).collect();
    let kernel = gaussian_kernel(params.sigma, params.kernel_size);
    let blurred = blur(&gray, width, height, &kernel);
    let (gx, gy) = sobel(&blurred, width, height);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let thin = non_maximum_suppression(&mag, &gx, &gy, width, height, params.low_threshold);
    let edges = hysteresis(
        &thin,
        width,
        height,
        params.low_threshold,
        params.high_threshold,
    );
    EdgeMap {
        width,
        height,
        edges,
    }
}

/// Fraction of pixels marked as edges, in `[0, 1]`.
pub fn edge_density(img: &RgbImage, params: &CannyParams) -> f64 {
    canny(img, params).density()
}
