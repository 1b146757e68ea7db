//! Static SVG overlays: the image raster with kept keypoints circled and
//! the common-area centroid marked.
//!
//! The raster is embedded as a base64 data URI in 8-bit grayscale BMP —
//! trivially encodable without dependencies and rendered by every browser.

use crate::error::Result;
use crate::geometry::VerifiedMatch;
use crate::image::GrayImage;
use std::fmt::Write as _;
use std::path::Path;

/// Which side of the verified pairs to draw on the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlaySide {
    /// Query-side keypoints and centroid (`keypoint_a`, `center_a`).
    Query,
    /// Candidate-side keypoints and centroid (`keypoint_b`, `center_b`).
    Candidate,
}

/// Encodes the image as an 8-bit grayscale BMP (palette + bottom-up rows).
fn encode_bmp(img: &GrayImage) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let row_size = (w + 3) & !3;
    let data_offset = 14 + 40 + 256 * 4;
    let file_size = data_offset + row_size * h;
    let mut out = Vec::with_capacity(file_size);

    out.extend_from_slice(b"BM");
    out.extend_from_slice(&(file_size as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(data_offset as u32).to_le_bytes());

    out.extend_from_slice(&40u32.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&8u16.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&((row_size * h) as u32).to_le_bytes());
    out.extend_from_slice(&2835i32.to_le_bytes());
    out.extend_from_slice(&2835i32.to_le_bytes());
    out.extend_from_slice(&256u32.to_le_bytes());
    out.extend_from_slice(&256u32.to_le_bytes());

    for i in 0..=255u8 {
        out.extend_from_slice(&[i, i, i, 0]);
    }
    for y in (0..h).rev() {
        for x in 0..w {
            out.push((img.get(x, y) * 255.0).round().clamp(0.0, 255.0) as u8);
        }
        out.resize(out.len() + (row_size - w), 0);
    }
    out
}

const BASE64_ALPHABET: &[u8; 64] =
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

fn base64(data: &[u8]) -> String {
    let mut out = String::with_capacity(data.len().div_ceil(3) * 4);
    for chunk in data.chunks(3) {
        let b = [chunk[0], *chunk.get(1).unwrap_or(&0), *chunk.get(2).unwrap_or(&0)];
        let n = (u32::from(b[0]) << 16) | (u32::from(b[1]) << 8) | u32::from(b[2]);
        let chars = [
            BASE64_ALPHABET[(n >> 18) as usize & 63],
            BASE64_ALPHABET[(n >> 12) as usize & 63],
            BASE64_ALPHABET[(n >> 6) as usize & 63],
            BASE64_ALPHABET[n as usize & 63],
        ];
        out.push(chars[0] as char);
        out.push(chars[1] as char);
        out.push(if chunk.len() > 1 { chars[2] as char } else { '=' });
        out.push(if chunk.len() > 2 { chars[3] as char } else { '=' });
    }
    out
}

/// Writes a static SVG overlay: the raster, one small circle per kept
/// keypoint on the chosen side (radius proportional to keypoint scale), and
/// one larger circle at their centroid. No markers when nothing was kept.
pub fn render_overlay(
    img: &GrayImage,
    verified: &VerifiedMatch,
    side: OverlaySide,
    out_path: &Path,
) -> Result<()> {
    let (w, h) = (img.width(), img.height());
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(
        svg,
        "  <image href=\"data:image/bmp;base64,{}\" width=\"{w}\" height=\"{h}\"/>",
        base64(&encode_bmp(img))
    );

    let mut max_radius = 0.0f64;
    for pair in &verified.kept {
        let kp = match side {
            OverlaySide::Query => &pair.keypoint_a,
            OverlaySide::Candidate => &pair.keypoint_b,
        };
        let r = 2.0 * f64::from(kp.scale);
        max_radius = max_radius.max(r);
        let _ = writeln!(
            svg,
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r:.2}\" fill=\"none\" stroke=\"#ff3030\" stroke-width=\"1\"/>",
            kp.x, kp.y
        );
    }
    let center = match side {
        OverlaySide::Query => verified.center_a,
        OverlaySide::Candidate => verified.center_b,
    };
    if let Some((cx, cy)) = center {
        let _ = writeln!(
            svg,
            "  <circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"#ffd020\" stroke-width=\"2\"/>",
            2.0 * max_radius
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(out_path, svg)?;
    Ok(())
}
