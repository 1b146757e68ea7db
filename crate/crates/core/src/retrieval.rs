//! Collection-level workflows: build dictionary files for an image
//! directory, run a query image against a stored index, and produce the
//! all-vs-all statistics table.
//!
//! Per-image and per-candidate work is parallelized; every report is
//! assembled in a fixed order (sorted filenames, explicit ranking rules) so
//! identical inputs always produce byte-identical output.

use crate::dictionary::{
    build_dictionary, deserialize, stats, to_bytes, DescriptorDictionary, KeypointRecord,
};
use crate::error::{Error, Result};
use crate::geometry::{filter_pairs, GeometryParams, VerifiedMatch};
use crate::image::{build_integral, load_pgm, GrayImage};
use crate::matcher::{combinations, match_dictionaries};
use crate::surf::{extract_features, DetectorParams};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Detects keypoints in `img` and packages them as dictionary records.
pub fn extract_records(img: &GrayImage, detector: &DetectorParams) -> Vec<KeypointRecord> {
    let ii = build_integral(img);
    extract_features(&ii, detector)
        .into_iter()
        .map(|(kp, desc)| KeypointRecord::from_feature(&kp, desc))
        .collect()
}

#[derive(Debug, Clone)]
pub struct IndexOptions {
    pub tolerance: f32,
    pub detector: DetectorParams,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions { tolerance: crate::dictionary::DEFAULT_TOLERANCE, detector: DetectorParams::default() }
    }
}

/// One summary line of `index_directory`.
#[derive(Debug, Clone)]
pub struct IndexSummary {
    pub image_id: String,
    pub keypoint_count: usize,
    pub node_count: usize,
    pub file_size: u64,
}

/// Result of indexing a directory: per-image summaries plus the files that
/// had to be skipped (path, reason).
#[derive(Debug, Clone)]
pub struct IndexOutcome {
    pub summaries: Vec<IndexSummary>,
    pub skipped: Vec<(PathBuf, String)>,
}

fn sorted_files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| e.eq_ignore_ascii_case(ext))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

/// Builds one `.sdic` file per PGM image in `image_dir`. Unreadable images
/// are skipped and reported; it is an error only if no image can be
/// processed at all.
pub fn index_directory(
    image_dir: &Path,
    out_dir: &Path,
    opts: &IndexOptions,
) -> Result<IndexOutcome> {
    let files = sorted_files_with_extension(image_dir, "pgm")?;
    if files.is_empty() {
        return Err(Error::NoImagesFound(image_dir.to_path_buf()));
    }
    std::fs::create_dir_all(out_dir)?;
    let results: Vec<(PathBuf, Result<IndexSummary>)> = files
        .par_iter()
        .map(|path| {
            let outcome = (|| {
                let img = load_pgm(path)?;
                let records = extract_records(&img, &opts.detector);
                let id = file_stem(path);
                let dict = build_dictionary(id.clone(), records, opts.tolerance)?;
                let bytes = to_bytes(&dict)?;
                std::fs::write(out_dir.join(format!("{id}.sdic")), &bytes)?;
                Ok(IndexSummary {
                    image_id: id,
                    keypoint_count: dict.descriptor_count as usize,
                    node_count: stats(&dict).node_count,
                    file_size: bytes.len() as u64,
                })
            })();
            (path.clone(), outcome)
        })
        .collect();

    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    for (path, outcome) in results {
        match outcome {
            Ok(s) => summaries.push(s),
            Err(e) => skipped.push((path, e.to_string())),
        }
    }
    if summaries.is_empty() {
        return Err(Error::AllImagesFailed { count: skipped.len() });
    }
    Ok(IndexOutcome { summaries, skipped })
}

/// Loads every `.sdic` file of `index_dir`, sorted by filename.
pub fn load_index(index_dir: &Path) -> Result<Vec<DescriptorDictionary>> {
    let files = sorted_files_with_extension(index_dir, "sdic")?;
    if files.is_empty() {
        return Err(Error::EmptyIndex(index_dir.to_path_buf()));
    }
    files.iter().map(|p| deserialize(p)).collect()
}

#[derive(Debug, Clone)]
pub struct QueryOptions {
    pub sad_threshold: f64,
    pub min_pairs: usize,
    pub tolerance: f32,
    pub detector: DetectorParams,
    pub geometry: GeometryParams,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            sad_threshold: 0.5,
            min_pairs: 5,
            tolerance: crate::dictionary::DEFAULT_TOLERANCE,
            detector: DetectorParams::default(),
            geometry: GeometryParams::default(),
        }
    }
}

/// One candidate image's line in a query report.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    pub candidate_id: String,
    pub point_count: u32,
    /// Raw SAD pairs before geometric verification (diagnostic).
    pub raw_pairs: usize,
    /// Geometrically verified pairs — the ranking key.
    pub verified_pairs: usize,
    pub comparisons: u64,
}

/// Ranked outcome of one query against the index.
#[derive(Debug, Clone)]
pub struct QueryReport {
    pub query_id: String,
    pub query_point_count: usize,
    /// Sorted by verified pairs descending, ties by candidate id ascending.
    pub rows: Vec<QueryRow>,
    /// The rows with verified pairs >= min_pairs.
    pub related: Vec<QueryRow>,
    pub total_comparisons: u64,
    /// Query point count times the collection's total point count.
    pub total_combinations: u64,
    /// Set when the query produced nothing to match.
    pub notice: Option<String>,
}

/// Matches a query image against every dictionary in the index and applies
/// geometric verification per candidate. Returns the ranked report plus
/// each candidate's kept/rejected partition (in report row order) for
/// overlay rendering.
pub fn query_index(
    query_image: &Path,
    index_dir: &Path,
    opts: &QueryOptions,
) -> Result<(QueryReport, Vec<(String, VerifiedMatch)>)> {
    let dicts = load_index(index_dir)?;
    let img = load_pgm(query_image)?;
    let query_id = file_stem(query_image);
    let records = extract_records(&img, &opts.detector);
    let query_count = records.len();
    let counts: Vec<u64> = dicts.iter().map(|d| u64::from(d.descriptor_count)).collect();
    let total_combinations = combinations(query_count as u64, &counts);
    if query_count == 0 {
        return Ok((
            QueryReport {
                query_id,
                query_point_count: 0,
                rows: Vec::new(),
                related: Vec::new(),
                total_comparisons: 0,
                total_combinations,
                notice: Some("query image produced no keypoints; nothing to match".to_string()),
            },
            Vec::new(),
        ));
    }
    let query_dict = build_dictionary(query_id.clone(), records, opts.tolerance)?;

    let mut per_candidate: Vec<(QueryRow, VerifiedMatch)> = dicts
        .par_iter()
        .map(|candidate| {
            let matched = match_dictionaries(&query_dict, candidate, opts.sad_threshold)?;
            let verified = filter_pairs(&matched.pairs, &opts.geometry);
            Ok((
                QueryRow {
                    candidate_id: candidate.image_id.clone(),
                    point_count: candidate.descriptor_count,
                    raw_pairs: matched.pairs.len(),
                    verified_pairs: verified.kept.len(),
                    comparisons: matched.comparisons,
                },
                verified,
            ))
        })
        .collect::<Result<_>>()?;

    per_candidate.sort_by(|(a, _), (b, _)| {
        b.verified_pairs
            .cmp(&a.verified_pairs)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    let total_comparisons = per_candidate.iter().map(|(r, _)| r.comparisons).sum();
    let rows: Vec<QueryRow> = per_candidate.iter().map(|(r, _)| r.clone()).collect();
    let related: Vec<QueryRow> =
        rows.iter().filter(|r| r.verified_pairs >= opts.min_pairs).cloned().collect();
    let verified =
        per_candidate.into_iter().map(|(r, v)| (r.candidate_id, v)).collect();
    Ok((
        QueryReport {
            query_id,
            query_point_count: query_count,
            rows,
            related,
            total_comparisons,
            total_combinations,
            notice: None,
        },
        verified,
    ))
}

/// One row of the all-vs-all statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageReport {
    pub image_id: String,
    pub point_count: u32,
    /// Verified pairs aggregated over the whole collection (self included).
    pub matched: u64,
    pub comparisons: u64,
    /// point_count x total collection point count.
    pub combinations: u64,
    /// 100 x comparisons / combinations.
    pub performance: f64,
}

/// All-vs-all matching across the index: one aggregated row per image.
pub fn stats_index(
    index_dir: &Path,
    sad_threshold: f64,
    geometry: &GeometryParams,
) -> Result<Vec<ImageReport>> {
    let dicts = load_index(index_dir)?;
    let total_points: u64 = dicts.iter().map(|d| u64::from(d.descriptor_count)).sum();
    dicts
        .par_iter()
        .map(|query| {
            let mut matched = 0u64;
            let mut comparisons = 0u64;
            for candidate in &dicts {
                let result = match_dictionaries(query, candidate, sad_threshold)?;
                let verified = filter_pairs(&result.pairs, geometry);
                matched += verified.kept.len() as u64;
                comparisons += result.comparisons;
            }
            let combos = u64::from(query.descriptor_count) * total_points;
            Ok(ImageReport {
                image_id: query.image_id.clone(),
                point_count: query.descriptor_count,
                matched,
                comparisons,
                combinations: combos,
                performance: if combos == 0 {
                    0.0
                } else {
                    100.0 * comparisons as f64 / combos as f64
                },
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Report rendering. TSV is the machine interface; the aligned tables are
// cosmetic. Both are deterministic down to the byte.
// ---------------------------------------------------------------------------

/// Stats rows as TSV, schema `image points matched comparisons combinations
/// performance_pct`.
pub fn stats_tsv(rows: &[ImageReport]) -> String {
    let mut out = String::from("image\tpoints\tmatched\tcomparisons\tcombinations\tperformance_pct\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.4}",
            r.image_id, r.point_count, r.matched, r.comparisons, r.combinations, r.performance
        );
    }
    out
}

fn render_aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cells: &[String]| {
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "{cell:>w$}");
            }
        }
        out.push('\n');
    };
    let header_cells: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    emit(&mut out, &header_cells);
    for row in rows {
        emit(&mut out, row);
    }
    out
}

/// Stats rows as a human-readable aligned table.
pub fn stats_table(rows: &[ImageReport]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.image_id.clone(),
                r.point_count.to_string(),
                r.matched.to_string(),
                r.comparisons.to_string(),
                r.combinations.to_string(),
                format!("{:.2}%", r.performance),
            ]
        })
        .collect();
    render_aligned(
        &["image", "points", "matched", "comparisons", "combinations", "performance"],
        &cells,
    )
}

/// Query rows as TSV, one line per candidate; `related` flags the rows
/// meeting the min-pairs bar.
pub fn query_tsv(report: &QueryReport) -> String {
    let mut out =
        String::from("candidate\tpoints\traw_pairs\tverified\tcomparisons\trelated\n");
    for r in &report.rows {
        let related = report.related.iter().any(|q| q.candidate_id == r.candidate_id);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.candidate_id,
            r.point_count,
            r.raw_pairs,
            r.verified_pairs,
            r.comparisons,
            u8::from(related)
        );
    }
    out
}

/// Query report as human-readable text: summary, ranked table, related list.
pub fn query_table(report: &QueryReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "query {} ({} keypoints), {} comparisons of {} combinations ({:.4}%)",
        report.query_id,
        report.query_point_count,
        report.total_comparisons,
        report.total_combinations,
        if report.total_combinations == 0 {
            0.0
        } else {
            100.0 * report.total_comparisons as f64 / report.total_combinations as f64
        }
    );
    if let Some(notice) = &report.notice {
        let _ = writeln!(out, "notice: {notice}");
        return out;
    }
    let cells: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.candidate_id.clone(),
                r.point_count.to_string(),
                r.raw_pairs.to_string(),
                r.verified_pairs.to_string(),
                r.comparisons.to_string(),
            ]
        })
        .collect();
    out.push_str(&render_aligned(
        &["candidate", "points", "raw_pairs", "verified", "comparisons"],
        &cells,
    ));
    if report.related.is_empty() {
        let _ = writeln!(out, "related: none");
    } else {
        let ids: Vec<&str> = report.related.iter().map(|r| r.candidate_id.as_str()).collect();
        let _ = writeln!(out, "related: {}", ids.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use std::path::Path;

    fn write_scene(dir: &Path, name: &str, seed: u64, blobs: usize) {
        let img = synth::textured_scene(96, 96, seed, blobs);
        synth::write_pgm(&img, &dir.join(name)).unwrap();
    }

    #[test]
    fn indexing_writes_one_dictionary_per_image() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("index");
        for (i, name) in ["a.pgm", "b.pgm", "c.pgm"].iter().enumerate() {
            write_scene(dir.path(), name, 100 + i as u64, 12);
        }
        let outcome = index_directory(dir.path(), &out, &IndexOptions::default()).unwrap();
        assert_eq!(outcome.summaries.len(), 3);
        assert!(outcome.skipped.is_empty());
        let ids: Vec<&str> = outcome.summaries.iter().map(|s| s.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"], "summaries must follow sorted filename order");
        for s in &outcome.summaries {
            let path = out.join(format!("{}.sdic", s.image_id));
            assert_eq!(std::fs::metadata(&path).unwrap().len(), s.file_size);
            let dict = crate::dictionary::deserialize(&path).unwrap();
            assert_eq!(dict.descriptor_count as usize, s.keypoint_count);
            assert_eq!(crate::dictionary::stats(&dict).node_count, s.node_count);
        }
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("index");
        assert!(matches!(
            index_directory(dir.path(), &out, &IndexOptions::default()),
            Err(Error::NoImagesFound(_))
        ));
    }

    #[test]
    fn unreadable_images_are_skipped_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("index");
        write_scene(dir.path(), "good.pgm", 5, 12);
        std::fs::write(dir.path().join("bad.pgm"), b"not a pgm").unwrap();
        let outcome = index_directory(dir.path(), &out, &IndexOptions::default()).unwrap();
        assert_eq!(outcome.summaries.len(), 1);
        assert_eq!(outcome.skipped.len(), 1);
        assert!(outcome.skipped[0].0.ends_with("bad.pgm"));
    }

    #[test]
    fn all_unreadable_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("index");
        std::fs::write(dir.path().join("bad.pgm"), b"nope").unwrap();
        assert!(matches!(
            index_directory(dir.path(), &out, &IndexOptions::default()),
            Err(Error::AllImagesFailed { count: 1 })
        ));
    }

    #[test]
    fn self_query_ranks_itself_first() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("index");
        for (i, name) in ["a.pgm", "b.pgm", "c.pgm"].iter().enumerate() {
            write_scene(dir.path(), name, 200 + 3 * i as u64, 14);
        }
        index_directory(dir.path(), &out, &IndexOptions::default()).unwrap();
        let (report, verified) =
            query_index(&dir.path().join("b.pgm"), &out, &QueryOptions::default()).unwrap();
        assert_eq!(report.query_id, "b");
        assert!(!report.rows.is_empty());
        assert_eq!(report.rows[0].candidate_id, "b", "self must rank first: {:?}", report.rows);
        assert!(report.rows[0].verified_pairs > 0);
        assert_eq!(verified.len(), report.rows.len());
        assert_eq!(verified[0].0, "b");
        // Identity correspondences survive verification with SAD exactly 0.
        let self_kept = &verified[0].1.kept;
        assert!(self_kept
            .iter()
            .any(|p| p.keypoint_a.keypoint_id == p.keypoint_b.keypoint_id && p.sad == 0.0));
    }

    #[test]
    fn featureless_query_reports_a_notice() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("index");
        write_scene(dir.path(), "a.pgm", 1, 12);
        index_directory(dir.path(), &out, &IndexOptions::default()).unwrap();
        let flat = crate::image::GrayImage::from_pixels(32, 32, vec![0.5; 32 * 32]);
        let flat_path = dir.path().join("flat.pgm");
        synth::write_pgm(&flat, &flat_path).unwrap();
        let (report, verified) = query_index(&flat_path, &out, &QueryOptions::default()).unwrap();
        assert!(report.rows.is_empty());
        assert!(report.notice.is_some());
        assert!(verified.is_empty());
        assert!(query_table(&report).contains("notice:"));
    }

    #[test]
    fn missing_index_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("index");
        std::fs::create_dir_all(&empty).unwrap();
        write_scene(dir.path(), "q.pgm", 2, 10);
        assert!(matches!(
            query_index(&dir.path().join("q.pgm"), &empty, &QueryOptions::default()),
            Err(Error::EmptyIndex(_))
        ));
    }

    #[test]
    fn stats_rows_are_internally_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("index");
        write_scene(dir.path(), "a.pgm", 40, 12);
        write_scene(dir.path(), "b.pgm", 41, 12);
        index_directory(dir.path(), &out, &IndexOptions::default()).unwrap();
        let rows = stats_index(&out, 0.5, &GeometryParams::default()).unwrap();
        assert_eq!(rows.len(), 2);
        let total: u64 = rows.iter().map(|r| u64::from(r.point_count)).sum();
        for r in &rows {
            assert_eq!(r.combinations, u64::from(r.point_count) * total);
            assert!(r.comparisons <= r.combinations);
            let expect = 100.0 * r.comparisons as f64 / r.combinations as f64;
            assert!((r.performance - expect).abs() < 1e-12);
            assert!((0.0..=100.0).contains(&r.performance));
        }
        let tsv = stats_tsv(&rows);
        assert!(tsv.starts_with("image\tpoints\tmatched\tcomparisons\tcombinations\tperformance_pct\n"));
        assert_eq!(tsv.lines().count(), 3);
    }

    #[test]
    fn duplicate_image_matches_itself_via_stats() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("index");
        // Two byte-identical images under different names.
        write_scene(dir.path(), "a.pgm", 7, 12);
        let bytes = std::fs::read(dir.path().join("a.pgm")).unwrap();
        std::fs::write(dir.path().join("a2.pgm"), bytes).unwrap();
        index_directory(dir.path(), &out, &IndexOptions::default()).unwrap();
        let rows = stats_index(&out, 0.5, &GeometryParams::default()).unwrap();
        for r in &rows {
            assert!(
                r.matched >= u64::from(r.point_count),
                "image {} matched {} of {} points",
                r.image_id,
                r.matched,
                r.point_count
            );
        }
    }

    #[test]
    fn translated_corpus_is_fully_related() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        std::fs::create_dir_all(&images).unwrap();
        let mut rng = synth::SplitMix64::new(77);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..10)
            .map(|_| {
                (
                    rng.range(25.0, 75.0),
                    rng.range(25.0, 75.0),
                    rng.range(2.5, 4.0),
                    rng.range(0.5, 1.0),
                )
            })
            .collect();
        let base = synth::gaussian_blobs(128, 128, &blobs);
        synth::write_pgm(&base, &dir.path().join("query.pgm")).unwrap();
        for (i, (dx, dy)) in [(3.0, 0.0), (0.0, 4.0), (-5.0, 2.0), (6.0, 6.0), (-4.0, -3.0)]
            .iter()
            .enumerate()
        {
            let moved: Vec<(f64, f64, f64, f64)> =
                blobs.iter().map(|&(x, y, s, a)| (x + dx, y + dy, s, a)).collect();
            let img = synth::gaussian_blobs(128, 128, &moved);
            synth::write_pgm(&img, &images.join(format!("shift{i}.pgm"))).unwrap();
        }
        let out = dir.path().join("index");
        index_directory(&images, &out, &IndexOptions::default()).unwrap();
        let (report, _) =
            query_index(&dir.path().join("query.pgm"), &out, &QueryOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 5);
        assert_eq!(report.related.len(), 5, "all shifted copies must be related: {:?}", report.rows);
    }
}
