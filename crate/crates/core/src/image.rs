//! Grayscale image loading and integral images.
//!
//! Input is binary PGM (P5) with maxval 255 only. Intensities are normalized
//! to `[0, 1]` at load so descriptor magnitudes and SAD thresholds stay
//! independent of bit depth. The integral image provides constant-time box
//! sums, the primitive every box filter downstream is built from.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image from row-major intensities. Panics if the buffer
    /// length does not match `width * height`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer length mismatch");
        GrayImage { width, height, pixels }
    }

    /// Builds an image from raw 8-bit samples, dividing by 255.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Self {
        let pixels = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::from_pixels(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Cumulative-sum table: entry (x, y) holds the sum of all intensities with
/// x' <= x and y' <= y.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

/// Loads a binary PGM (P5, maxval 255) file.
///
/// The header is whitespace- and comment-tolerant (`#` to end of line).
/// Distinct failures map to distinct error variants: missing file (`Io`),
/// malformed or non-P5 header (`PgmHeader`), maxval other than 255
/// (`PgmMaxval`), short pixel payload (`PgmTruncated`).
pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes)
}

/// Parses PGM bytes already in memory. See [`load_pgm`].
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cursor = 0usize;

    let magic = next_token(bytes, &mut cursor)
        .ok_or_else(|| header_err("missing magic number"))?;
    if magic != b"P5" {
        return Err(header_err(&format!(
            "expected P5, found {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }

    let width = parse_dim(bytes, &mut cursor, "width")?;
    let height = parse_dim(bytes, &mut cursor, "height")?;
    let maxval = parse_dim(bytes, &mut cursor, "maxval")?;
    if maxval != 255 {
        return Err(Error::PgmMaxval { maxval: maxval as u32 });
    }
    if width == 0 || height == 0 {
        return Err(header_err("zero width or height"));
    }

    // Exactly one whitespace byte separates the header from the raster.
    if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
        return Err(header_err("missing separator before pixel data"));
    }
    cursor += 1;

    let expected = width * height;
    let data = &bytes[cursor..];
    if data.len() < expected {
        return Err(Error::PgmTruncated { expected, got: data.len() });
    }
    Ok(GrayImage::from_bytes(width, height, &data[..expected]))
}

fn header_err(reason: &str) -> Error {
    Error::PgmHeader { reason: reason.to_string() }
}

/// Reads the next whitespace-delimited token, skipping `#` comments.
fn next_token(bytes: &[u8], cursor: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    if *cursor >= bytes.len() {
        return None;
    }
    let start = *cursor;
    while *cursor < bytes.len()
        && !bytes[*cursor].is_ascii_whitespace()
        && bytes[*cursor] != b'#'
    {
        *cursor += 1;
    }
    Some(bytes[start..*cursor].to_vec())
}

fn parse_dim(bytes: &[u8], cursor: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, cursor)
        .ok_or_else(|| header_err(&format!("missing {what}")))?;
    std::str::from_utf8(&tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| header_err(&format!("unparseable {what}")))
}

/// Builds the integral image of `img`.
pub fn build_integral(img: &GrayImage) -> IntegralImage {
    let (w, h) = (img.width, img.height);
    let mut table = vec![0.0f64; w * h];
    for y in 0..h {
        let mut row_sum = 0.0;
        for x in 0..w {
            row_sum += img.pixels[y * w + x];
            table[y * w + x] = row_sum + if y > 0 { table[(y - 1) * w + x] } else { 0.0 };
        }
    }
    IntegralImage { width: w, height: h, table }
}

impl IntegralImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Sum of intensities over the inclusive rectangle `[x0, x1] x [y0, y1]`.
    ///
    /// Coordinates outside the image are clamped to the border, so a
    /// rectangle that sticks out contributes only its in-image part and a
    /// rectangle entirely outside sums to zero.
    pub fn box_sum(&self, x0: i64, y0: i64, x1: i64, y1: i64) -> f64 {
        let x0 = x0.max(0);
        let y0 = y0.max(0);
        let x1 = x1.min(self.width as i64 - 1);
        let y1 = y1.min(self.height as i64 - 1);
        if x0 > x1 || y0 > y1 {
            return 0.0;
        }
        let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
        let at = |x: usize, y: usize| self.table[y * self.width + x];
        let mut sum = at(x1, y1);
        if x0 > 0 {
            sum -= at(x0 - 1, y1);
        }
        if y0 > 0 {
            sum -= at(x1, y0 - 1);
        }
        if x0 > 0 && y0 > 0 {
            sum += at(x0 - 1, y0 - 1);
        }
        sum
    }
}
