//! Pairwise geometric consistency: reject descriptor pairs whose spatial
//! arrangement disagrees with the rest.
//!
//! Two candidate pairs support each other when the segment between their
//! query-side keypoints and the segment between their candidate-side
//! keypoints agree in direction — measured relative to the keypoint
//! orientations, making the test rotation-invariant — and in length ratio.
//! A pair survives only with enough supporters; the survivors' centroids
//! mark the common area on each image.

use crate::matcher::MatchPair;
use rayon::prelude::*;

/// Tolerances of the consistency test.
#[derive(Debug, Clone)]
pub struct GeometryParams {
    /// Maximum circular difference between orientation-relative segment
    /// angles, radians.
    pub angle_tolerance: f64,
    /// Allowed candidate/query segment length ratio, inclusive;
    /// lower < 1 < upper.
    pub distance_ratio_band: (f64, f64),
    /// A pair must be supported by at least this fraction of the other
    /// pairs...
    pub min_support_fraction: f64,
    /// ...and by no fewer than this many, whichever is larger.
    pub min_support_count: usize,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            angle_tolerance: 0.15,
            distance_ratio_band: (0.8, 1.25),
            min_support_fraction: 0.3,
            min_support_count: 2,
        }
    }
}

/// The kept/rejected partition of one candidate image's pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifiedMatch {
    pub kept: Vec<MatchPair>,
    pub rejected: Vec<MatchPair>,
    /// Centroid of kept query-side keypoints; None when nothing was kept.
    pub center_a: Option<(f64, f64)>,
    /// Centroid of kept candidate-side keypoints.
    pub center_b: Option<(f64, f64)>,
}

/// Absolute circular difference between two angles, in `[0, pi]`.
fn circular_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Whether pairs `p` and `q` are geometrically consistent: the segment
/// p→q measured on the query side must agree with the candidate side in
/// orientation-relative angle (checked from both endpoints' orientations)
/// and in length ratio. Coincident keypoints on either side never support
/// anything.
pub fn pair_consistency(p: &MatchPair, q: &MatchPair, params: &GeometryParams) -> bool {
    let seg_ax = f64::from(q.keypoint_a.x) - f64::from(p.keypoint_a.x);
    let seg_ay = f64::from(q.keypoint_a.y) - f64::from(p.keypoint_a.y);
    let seg_bx = f64::from(q.keypoint_b.x) - f64::from(p.keypoint_b.x);
    let seg_by = f64::from(q.keypoint_b.y) - f64::from(p.keypoint_b.y);
    let len_a = seg_ax.hypot(seg_ay);
    let len_b = seg_bx.hypot(seg_by);
    if len_a == 0.0 || len_b == 0.0 {
        return false;
    }

    let ratio = len_b / len_a;
    if ratio < params.distance_ratio_band.0 || ratio > params.distance_ratio_band.1 {
        return false;
    }

    // Segment direction relative to the orientation at the p endpoints...
    let fwd_a = seg_ay.atan2(seg_ax) - f64::from(p.keypoint_a.orientation);
    let fwd_b = seg_by.atan2(seg_bx) - f64::from(p.keypoint_b.orientation);
    if circular_diff(fwd_a, fwd_b) > params.angle_tolerance {
        return false;
    }
    // ...and the reverse segment relative to the q endpoints.
    let rev_a = (-seg_ay).atan2(-seg_ax) - f64::from(q.keypoint_a.orientation);
    let rev_b = (-seg_by).atan2(-seg_bx) - f64::from(q.keypoint_b.orientation);
    circular_diff(rev_a, rev_b) <= params.angle_tolerance
}

/// Single-pass support voting: pair i is kept iff at least
/// `max(min_support_count, ceil(min_support_fraction * (n-1)))` of the
/// other pairs are consistent with it. No re-estimation rounds.
pub fn filter_pairs(pairs: &[MatchPair], params: &GeometryParams) -> VerifiedMatch {
    let n = pairs.len();
    let needed = params
        .min_support_count
        .max((params.min_support_fraction * (n.saturating_sub(1)) as f64).ceil() as usize);
    let supports: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && pair_consistency(&pairs[i], &pairs[j], params))
                .count()
        })
        .collect();

    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (pair, &support) in pairs.iter().zip(&supports) {
        if support >= needed {
            kept.push(pair.clone());
        } else {
            rejected.push(pair.clone());
        }
    }
    let centroid = |side_a: bool| -> Option<(f64, f64)> {
        if kept.is_empty() {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for p in &kept {
            let k = if side_a { &p.keypoint_a } else { &p.keypoint_b };
            sx += f64::from(k.x);
            sy += f64::from(k.y);
        }
        Some((sx / kept.len() as f64, sy / kept.len() as f64))
    };
    let center_a = centroid(true);
    let center_b = centroid(false);
    VerifiedMatch { kept, rejected, center_a, center_b }
}
