//! Exact SAD-threshold matching between two dictionaries by simultaneous
//! pruned descent, plus the brute-force baseline and the combinations
//! metric it is measured against.
//!
//! The descent walks both tries level by level, accumulating a lower bound
//! on the SAD of every descriptor pair below the current node pair: the sum
//! of separations between the interval chains. Intervals that overlap
//! contribute zero; disjoint intervals contribute their gap. Since every
//! stored descriptor element lies inside its node interval, the bound never
//! exceeds the true SAD, so pruning at `bound >= threshold` cannot lose a
//! pair — the final decision is always an exact SAD over the verbatim leaf
//! descriptors.

use crate::dictionary::{DescriptorDictionary, DictionaryNode, KeypointRecord, DICT_DEPTH};
use crate::error::{Error, Result};
use crate::surf::Descriptor;

/// Sum of absolute differences (L1 distance) between two descriptors,
/// accumulated in double precision.
pub fn sad(a: &Descriptor, b: &Descriptor) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs())
        .sum()
}

/// One similar-descriptor pair found by matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub keypoint_a: KeypointRecord,
    pub keypoint_b: KeypointRecord,
    pub sad: f64,
}

/// Outcome of one dictionary-vs-dictionary match.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    /// Exact SAD evaluations performed at leaf level.
    pub comparisons: u64,
    /// Exhaustive baseline: query count x candidate count.
    pub combinations: u64,
    /// Node-pair interval tests during the descent (diagnostic only).
    pub node_visits: u64,
}

/// Separation between two intervals; zero when they overlap.
fn gap(a: &DictionaryNode, b: &DictionaryNode) -> f64 {
    let below = f64::from(b.lo) - f64::from(a.hi);
    let above = f64::from(a.lo) - f64::from(b.hi);
    below.max(above).max(0.0)
}

fn match_level(
    a_nodes: &[DictionaryNode],
    b_nodes: &[DictionaryNode],
    depth: usize,
    acc: f64,
    threshold: f64,
    out: &mut MatchResult,
) {
    for a in a_nodes {
        for b in b_nodes {
            out.node_visits += 1;
            let bound = acc + gap(a, b);
            if bound >= threshold {
                // b-siblings are sorted by lo and disjoint: once b lies
                // right of a by the full remaining budget, so do the rest.
                if f64::from(b.lo) > f64::from(a.hi) {
                    break;
                }
                continue;
            }
            if depth == DICT_DEPTH {
                for ra in &a.records {
                    for rb in &b.records {
                        out.comparisons += 1;
                        let s = sad(&ra.descriptor, &rb.descriptor);
                        if s < threshold {
                            out.pairs.push(MatchPair {
                                keypoint_a: ra.clone(),
                                keypoint_b: rb.clone(),
                                sad: s,
                            });
                        }
                    }
                }
            } else {
                match_level(&a.children, &b.children, depth + 1, bound, threshold, out);
            }
        }
    }
}

/// Finds exactly the cross-image descriptor pairs with SAD below
/// `threshold` — the same set the brute-force double loop would produce —
/// while pruning subtree pairs whose interval lower bound already reaches
/// the threshold.
pub fn match_dictionaries(
    query: &DescriptorDictionary,
    candidate: &DescriptorDictionary,
    threshold: f64,
) -> Result<MatchResult> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::Parameter(format!(
            "SAD threshold must be positive, got {threshold}"
        )));
    }
    let mut out = MatchResult {
        pairs: Vec::new(),
        comparisons: 0,
        combinations: u64::from(query.descriptor_count) * u64::from(candidate.descriptor_count),
        node_visits: 0,
    };
    match_level(&query.roots, &candidate.roots, 1, 0.0, threshold, &mut out);
    out
        .pairs
        .sort_by(|p, q| {
            (p.keypoint_a.keypoint_id, p.keypoint_b.keypoint_id)
                .cmp(&(q.keypoint_a.keypoint_id, q.keypoint_b.keypoint_id))
        });
    Ok(out)
}

/// One pair found by the exhaustive baseline, identified by input indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BruteForcePair {
    pub index_a: usize,
    pub index_b: usize,
}

/// Outcome of the exhaustive baseline match.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub pairs: Vec<BruteForcePair>,
    /// Always exactly `a.len() * b.len()`.
    pub comparisons: u64,
}

/// The baseline the dictionary exists to avoid: every descriptor of `a`
/// against every descriptor of `b`.
pub fn brute_force_match(a: &[Descriptor], b: &[Descriptor], threshold: f64) -> BruteForceResult {
    let mut pairs = Vec::new();
    for (i, da) in a.iter().enumerate() {
        for (j, db) in b.iter().enumerate() {
            if sad(da, db) < threshold {
                pairs.push(BruteForcePair { index_a: i, index_b: j });
            }
        }
    }
    BruteForceResult { pairs, comparisons: (a.len() as u64) * (b.len() as u64) }
}

/// The exhaustive-comparison count of one query against a collection:
/// query count times the collection's total point count (the total includes
/// the query's own points when the query belongs to the collection).
pub fn combinations(query_count: u64, collection_counts: &[u64]) -> u64 {
    query_count * collection_counts.iter().sum::<u64>()
}
