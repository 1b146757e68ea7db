//! Deterministic synthetic grayscale images for tests, benchmarks, and
//! corpus generation. Everything here is seeded and reproducible across
//! platforms: randomness comes from an embedded SplitMix64 generator.

use crate::error::Result;
use crate::image::GrayImage;
use std::io::Write;
use std::path::Path;

/// Minimal deterministic RNG (SplitMix64), good enough for placing blobs
/// and generating noise without pulling a dependency into the library.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Black image with additive Gaussian blobs, one `(x, y, sigma, amplitude)`
/// tuple per blob, clamped to `[0, 1]`.
pub fn gaussian_blobs(width: usize, height: usize, blobs: &[(f64, f64, f64, f64)]) -> GrayImage {
    let mut pixels = vec![0.0f64; width * height];
    for &(cx, cy, sigma, amp) in blobs {
        let inv = 1.0 / (2.0 * sigma * sigma);
        for y in 0..height {
            for x in 0..width {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                pixels[y * width + x] += amp * (-d2 * inv).exp();
            }
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    GrayImage::from_pixels(width, height, pixels)
}

/// Linear intensity ramp from 0 to 1 along the direction `angle`
/// (0 = increasing left to right, pi/2 = increasing top to bottom).
pub fn linear_ramp(width: usize, height: usize, angle: f64) -> GrayImage {
    let (sin_a, cos_a) = angle.sin_cos();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let proj = |x: usize, y: usize| x as f64 * cos_a + y as f64 * sin_a;
    for &(x, y) in &[(0, 0), (width - 1, 0), (0, height - 1), (width - 1, height - 1)] {
        let p = proj(x, y);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels = (0..width * height)
        .map(|i| (proj(i % width, i / width) - lo) / span)
        .collect();
    GrayImage::from_pixels(width, height, pixels)
}

/// Uniform noise in `[0, 1)`, reproducible from the seed.
pub fn noise_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = SplitMix64::new(seed);
    let pixels = (0..width * height).map(|_| rng.next_f64()).collect();
    GrayImage::from_pixels(width, height, pixels)
}

/// A reproducible scene of `blob_count` Gaussian blobs with randomized
/// positions, sizes, and contrasts on a mid-gray background. Blobs keep a
/// margin from the border so their extrema stay inside the image.
pub fn textured_scene(width: usize, height: usize, seed: u64, blob_count: usize) -> GrayImage {
    let mut rng = SplitMix64::new(seed);
    let margin = 12.0;
    let mut pixels = vec![0.35f64; width * height];
    for _ in 0..blob_count {
        let cx = rng.range(margin, width as f64 - margin);
        let cy = rng.range(margin, height as f64 - margin);
        let sigma = rng.range(2.0, 5.0);
        let amp = rng.range(0.3, 0.65) * if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        let inv = 1.0 / (2.0 * sigma * sigma);
        for y in 0..height {
            for x in 0..width {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                pixels[y * width + x] += amp * (-d2 * inv).exp();
            }
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    GrayImage::from_pixels(width, height, pixels)
}

/// Writes the image as a binary (P5) PGM file, quantizing to 8 bits.
pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(img.width() * img.height() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    out.extend(
        img.pixels()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    std::fs::write(path, out)?;
    Ok(())
}
