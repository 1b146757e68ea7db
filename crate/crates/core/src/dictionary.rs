//! Depth-64 interval trie over descriptor elements with tolerance grouping,
//! and its binary file format.
//!
//! Each level of the trie corresponds to one descriptor element. Values
//! within the grouping tolerance share a node, whose `[lo, hi]` interval
//! covers them; the exact descriptors are kept verbatim in leaf payloads, so
//! grouping only affects the index shape, never match results. A dictionary
//! is write-once: built for one image, persisted as an `.sdic` file, then
//! only read.

use crate::error::{Error, Result};
use crate::surf::{Descriptor, Keypoint};
use std::path::Path;

pub const DICT_MAGIC: [u8; 4] = *b"SDIC";
pub const DICT_VERSION: u16 = 1;
pub const DICT_DEPTH: usize = 64;

/// Default grouping tolerance in descriptor units: an order of magnitude
/// below the SAD similarity threshold 0.5 spread over 64 elements.
pub const DEFAULT_TOLERANCE: f32 = 0.05;

/// One trie node: a grouped value interval at its element position.
/// Interior nodes carry children; depth-64 nodes carry the payload records.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryNode {
    pub lo: f32,
    pub hi: f32,
    /// Sorted by `lo`, pairwise disjoint. Empty at depth 64.
    pub children: Vec<DictionaryNode>,
    /// Non-empty exactly at depth 64.
    pub records: Vec<KeypointRecord>,
}

impl DictionaryNode {
    fn new(v: f32) -> Self {
        DictionaryNode { lo: v, hi: v, children: Vec::new(), records: Vec::new() }
    }
}

/// Keypoint data stored at a leaf: geometry plus the verbatim descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointRecord {
    pub keypoint_id: u32,
    pub x: f32,
    pub y: f32,
    pub scale: f32,
    pub orientation: f32,
    pub laplacian_sign: i8,
    pub descriptor: Descriptor,
}

impl KeypointRecord {
    pub fn from_feature(kp: &Keypoint, descriptor: Descriptor) -> Self {
        KeypointRecord {
            keypoint_id: kp.id,
            x: kp.x as f32,
            y: kp.y as f32,
            scale: kp.scale as f32,
            orientation: kp.orientation as f32,
            laplacian_sign: kp.laplacian_sign,
            descriptor,
        }
    }
}

/// A complete per-image dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorDictionary {
    pub image_id: String,
    pub tolerance: f32,
    pub roots: Vec<DictionaryNode>,
    pub descriptor_count: u32,
}

/// Node-sharing statistics of one dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryStats {
    pub node_count: usize,
    pub leaf_count: usize,
    /// node_count / (64 * descriptor_count); 1.0 means no sharing at all,
    /// 0.0 for the empty dictionary.
    pub compression_ratio: f64,
}

/// Picks the child of `children` that should absorb value `v`, extending its
/// interval, or inserts a new `[v, v]` child. Returns the child index.
///
/// Eligibility: the extended interval must keep width <= tolerance and stay
/// disjoint from every sibling (without the disjointness condition, the
/// smallest-width rule could extend a neighbor across an existing interval).
/// Among eligible children the smallest resulting width wins, ties broken by
/// lower resulting lo. A containing child is always eligible, so a fresh
/// `[v, v]` node can never overlap anything.
fn choose_or_insert(children: &mut Vec<DictionaryNode>, v: f32, tolerance: f32) -> usize {
    let mut best: Option<(usize, f32, f32)> = None;
    for (i, child) in children.iter().enumerate() {
        let lo = child.lo.min(v);
        let hi = child.hi.max(v);
        let width = hi - lo;
        if width > tolerance {
            continue;
        }
        let disjoint = children
            .iter()
            .enumerate()
            .all(|(j, s)| j == i || hi < s.lo || s.hi < lo);
        if !disjoint {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bw, blo)) => width < bw || (width == bw && lo < blo),
        };
        if better {
            best = Some((i, width, lo));
        }
    }
    match best {
        Some((i, _, _)) => {
            let child = &mut children[i];
            child.lo = child.lo.min(v);
            child.hi = child.hi.max(v);
            i
        }
        None => {
            let pos = children.partition_point(|c| c.lo < v);
            children.insert(pos, DictionaryNode::new(v));
            pos
        }
    }
}

/// Builds the dictionary by inserting records in ascending keypoint_id
/// order, grouping each descriptor element into the per-depth intervals.
pub fn build_dictionary(
    image_id: impl Into<String>,
    mut records: Vec<KeypointRecord>,
    tolerance: f32,
) -> Result<DescriptorDictionary> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::Parameter(format!(
            "grouping tolerance must be positive, got {tolerance}"
        )));
    }
    records.sort_by_key(|r| r.keypoint_id);
    let mut dict = DescriptorDictionary {
        image_id: image_id.into(),
        tolerance,
        roots: Vec::new(),
        descriptor_count: records.len() as u32,
    };
    for record in records {
        let mut level = &mut dict.roots;
        for depth in 0..DICT_DEPTH {
            let idx = choose_or_insert(level, record.descriptor.0[depth], tolerance);
            let node = &mut level[idx];
            if depth == DICT_DEPTH - 1 {
                node.records.push(record);
                break;
            }
            level = &mut node.children;
        }
    }
    Ok(dict)
}

/// Counts nodes and depth-64 leaves; compression_ratio per the definition
/// on [`DictionaryStats`].
pub fn stats(dict: &DescriptorDictionary) -> DictionaryStats {
    fn walk(node: &DictionaryNode, depth: usize, nodes: &mut usize, leaves: &mut usize) {
        *nodes += 1;
        if depth == DICT_DEPTH {
            *leaves += 1;
        }
        for child in &node.children {
            walk(child, depth + 1, nodes, leaves);
        }
    }
    let mut node_count = 0;
    let mut leaf_count = 0;
    for root in &dict.roots {
        walk(root, 1, &mut node_count, &mut leaf_count);
    }
    let compression_ratio = if dict.descriptor_count == 0 {
        0.0
    } else {
        node_count as f64 / (DICT_DEPTH as f64 * dict.descriptor_count as f64)
    };
    DictionaryStats { node_count, leaf_count, compression_ratio }
}

// ---------------------------------------------------------------------------
// Binary format (all little-endian): magic "SDIC", version u16, tolerance
// f32, descriptor_count u32, image_id (u16 length + UTF-8), then the root
// subtrees in pre-order until end of file. Interior node = lo f32, hi f32,
// child_count u16; depth-64 node = lo, hi, payload_count u16, records.
// ---------------------------------------------------------------------------

fn write_record(out: &mut Vec<u8>, r: &KeypointRecord) {
    out.extend_from_slice(&r.keypoint_id.to_le_bytes());
    out.extend_from_slice(&r.x.to_le_bytes());
    out.extend_from_slice(&r.y.to_le_bytes());
    out.extend_from_slice(&r.scale.to_le_bytes());
    out.extend_from_slice(&r.orientation.to_le_bytes());
    out.push(r.laplacian_sign as u8);
    for v in r.descriptor.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_node(out: &mut Vec<u8>, node: &DictionaryNode, depth: usize) -> Result<()> {
    out.extend_from_slice(&node.lo.to_le_bytes());
    out.extend_from_slice(&node.hi.to_le_bytes());
    if depth == DICT_DEPTH {
        let n = u16::try_from(node.records.len()).map_err(|_| Error::DictInvariant {
            reason: format!("leaf payload of {} records exceeds format limit", node.records.len()),
        })?;
        out.extend_from_slice(&n.to_le_bytes());
        for r in &node.records {
            write_record(out, r);
        }
    } else {
        let n = u16::try_from(node.children.len()).map_err(|_| Error::DictInvariant {
            reason: format!("node with {} children exceeds format limit", node.children.len()),
        })?;
        out.extend_from_slice(&n.to_le_bytes());
        for child in &node.children {
            write_node(out, child, depth + 1)?;
        }
    }
    Ok(())
}

/// Encodes the dictionary into the binary format.
pub fn to_bytes(dict: &DescriptorDictionary) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&DICT_MAGIC);
    out.extend_from_slice(&DICT_VERSION.to_le_bytes());
    out.extend_from_slice(&dict.tolerance.to_le_bytes());
    out.extend_from_slice(&dict.descriptor_count.to_le_bytes());
    let id = dict.image_id.as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| Error::DictInvariant {
        reason: format!("image id of {} bytes exceeds format limit", id.len()),
    })?;
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    for root in &dict.roots {
        write_node(&mut out, root, 1)?;
    }
    Ok(out)
}

/// Writes the dictionary to `path` in the binary format.
pub fn serialize(dict: &DescriptorDictionary, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(dict)?)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::DictTruncated);
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i8(&mut self) -> Result<i8> {
        Ok(self.take(1)?[0] as i8)
    }

    fn done(&self) -> bool {
        self.pos == self.data.len()
    }
}

fn read_record(c: &mut Cursor) -> Result<KeypointRecord> {
    let keypoint_id = c.u32()?;
    let x = c.f32()?;
    let y = c.f32()?;
    let scale = c.f32()?;
    let orientation = c.f32()?;
    let laplacian_sign = c.i8()?;
    let mut descriptor = [0.0f32; DICT_DEPTH];
    for v in &mut descriptor {
        *v = c.f32()?;
    }
    Ok(KeypointRecord { keypoint_id, x, y, scale, orientation, laplacian_sign, descriptor: Descriptor(descriptor) })
}

fn read_node(c: &mut Cursor, depth: usize) -> Result<DictionaryNode> {
    let lo = c.f32()?;
    let hi = c.f32()?;
    let mut node = DictionaryNode { lo, hi, children: Vec::new(), records: Vec::new() };
    let count = c.u16()? as usize;
    if depth == DICT_DEPTH {
        node.records.reserve(count);
        for _ in 0..count {
            node.records.push(read_record(c)?);
        }
    } else {
        node.children.reserve(count);
        for _ in 0..count {
            node.children.push(read_node(c, depth + 1)?);
        }
    }
    Ok(node)
}

/// Checks every structural invariant of a freshly parsed dictionary.
fn validate(dict: &DescriptorDictionary) -> Result<()> {
    fn check(
        node: &DictionaryNode,
        depth: usize,
        tolerance: f32,
        path: &mut [(f32, f32); DICT_DEPTH],
        total: &mut u64,
    ) -> Result<()> {
        if node.lo.is_nan() || node.hi.is_nan() || node.lo > node.hi {
            return Err(Error::DictInvariant {
                reason: format!("interval [{}, {}] at depth {depth} is inverted", node.lo, node.hi),
            });
        }
        if node.hi - node.lo > tolerance {
            return Err(Error::DictInvariant {
                reason: format!(
                    "interval [{}, {}] at depth {depth} is wider than tolerance {tolerance}",
                    node.lo, node.hi
                ),
            });
        }
        path[depth - 1] = (node.lo, node.hi);
        if depth == DICT_DEPTH {
            if node.records.is_empty() {
                return Err(Error::DictInvariant {
                    reason: "depth-64 node with empty payload".to_string(),
                });
            }
            for r in &node.records {
                if r.laplacian_sign != 1 && r.laplacian_sign != -1 {
                    return Err(Error::DictInvariant {
                        reason: format!("laplacian sign {} is not +/-1", r.laplacian_sign),
                    });
                }
                for (k, (&v, &(lo, hi))) in
                    r.descriptor.values().iter().zip(path.iter()).enumerate()
                {
                    if !(lo <= v && v <= hi) {
                        return Err(Error::DictInvariant {
                            reason: format!(
                                "record {}: element {k} value {v} outside its path interval [{lo}, {hi}]",
                                r.keypoint_id
                            ),
                        });
                    }
                }
            }
            *total += node.records.len() as u64;
        } else {
            if node.children.is_empty() {
                return Err(Error::DictInvariant {
                    reason: format!("path ends at depth {depth}, expected {DICT_DEPTH}"),
                });
            }
            check_siblings(&node.children, depth + 1)?;
            for child in &node.children {
                check(child, depth + 1, tolerance, path, total)?;
            }
        }
        Ok(())
    }

    fn check_siblings(children: &[DictionaryNode], depth: usize) -> Result<()> {
        for pair in children.windows(2) {
            if pair[0].hi >= pair[1].lo {
                return Err(Error::DictInvariant {
                    reason: format!(
                        "siblings [{}, {}] and [{}, {}] at depth {depth} are not disjoint and sorted",
                        pair[0].lo, pair[0].hi, pair[1].lo, pair[1].hi
                    ),
                });
            }
        }
        Ok(())
    }

    if dict.tolerance.is_nan() || dict.tolerance <= 0.0 {
        return Err(Error::DictInvariant {
            reason: format!("tolerance {} is not positive", dict.tolerance),
        });
    }
    check_siblings(&dict.roots, 1)?;
    let mut total = 0u64;
    let mut path = [(0.0f32, 0.0f32); DICT_DEPTH];
    for root in &dict.roots {
        check(root, 1, dict.tolerance, &mut path, &mut total)?;
    }
    if total != u64::from(dict.descriptor_count) {
        return Err(Error::DictInvariant {
            reason: format!(
                "header declares {} descriptors but leaves hold {total}",
                dict.descriptor_count
            ),
        });
    }
    Ok(())
}

/// Decodes a dictionary from the binary format, verifying all invariants.
pub fn from_bytes(data: &[u8]) -> Result<DescriptorDictionary> {
    let mut c = Cursor { data, pos: 0 };
    let magic = c.take(4)?;
    if magic != DICT_MAGIC {
        return Err(Error::DictMagic { found: magic.try_into().unwrap() });
    }
    let version = c.u16()?;
    if version != DICT_VERSION {
        return Err(Error::DictVersion { found: version });
    }
    let tolerance = c.f32()?;
    let descriptor_count = c.u32()?;
    let id_len = c.u16()? as usize;
    let image_id = String::from_utf8(c.take(id_len)?.to_vec())
        .map_err(|_| Error::DictInvariant { reason: "image id is not valid UTF-8".to_string() })?;
    let mut roots = Vec::new();
    while !c.done() {
        roots.push(read_node(&mut c, 1)?);
    }
    let dict = DescriptorDictionary { image_id, tolerance, roots, descriptor_count };
    validate(&dict)?;
    Ok(dict)
}

/// Reads a dictionary file written by [`serialize`].
pub fn deserialize(path: &Path) -> Result<DescriptorDictionary> {
    let data = std::fs::read(path)?;
    from_bytes(&data)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;

    /// A record whose descriptor is given explicitly; geometry fields are
    /// derived from the id so round-trip tests exercise them too.
    pub fn record_with(id: u32, descriptor: [f32; 64]) -> KeypointRecord {
        KeypointRecord {
            keypoint_id: id,
            x: id as f32 * 1.5 + 0.25,
            y: id as f32 * 0.75 + 3.0,
            scale: 1.2 + id as f32 * 0.1,
            orientation: (id as f32 * 0.37) % std::f32::consts::TAU,
            laplacian_sign: if id.is_multiple_of(2) { 1 } else { -1 },
            descriptor: Descriptor(descriptor),
        }
    }

    /// A unit-norm descriptor with uniformly random direction.
    pub fn random_unit_descriptor<R: Rng>(rng: &mut R) -> [f32; 64] {
        let mut v = [0.0f64; 64];
        for x in &mut v {
            *x = rng.gen_range(-1.0..1.0);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
        let mut out = [0.0f32; 64];
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o = (x / norm) as f32;
        }
        out
    }

    /// Records whose descriptors are noisy copies of `centers.len()` shared
    /// cluster centers — the clustered regime where grouping pays off.
    pub fn clustered_records<R: Rng>(
        rng: &mut R,
        centers: &[[f32; 64]],
        count: usize,
        noise: f64,
    ) -> Vec<KeypointRecord> {
        (0..count)
            .map(|i| {
                let center = &centers[rng.gen_range(0..centers.len())];
                let mut d = [0.0f32; 64];
                for (o, &c) in d.iter_mut().zip(center.iter()) {
                    *o = (f64::from(c) + rng.gen_range(-noise..noise)) as f32;
                }
                record_with(i as u32, d)
            })
            .collect()
    }
}
