//! End-to-end tests of the `sdic` binary: exit codes, report formats, file
//! outputs, and run-to-run determinism.

use std::path::Path;
use std::process::{Command, Output};

use sdic_core::synth::{noise_image, textured_scene, write_pgm};

fn sdic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdic"))
        .args(args)
        .output()
        .expect("failed to launch sdic")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Three deterministic textured scenes, enough keypoints each to pass the
/// default min-pairs bar when queried against themselves.
fn write_corpus(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for seed in 1..=3u64 {
        let img = textured_scene(128, 128, seed, 12);
        write_pgm(&img, &dir.join(format!("scene{seed}.pgm"))).unwrap();
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn index_builds_one_dictionary_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    let index = dir.path().join("index");
    write_corpus(&images);

    let out = sdic(&["index", path_str(&images), "--out", path_str(&index)]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("indexed ")).count(), 3);
    for seed in 1..=3 {
        assert!(text.contains(&format!("indexed scene{seed}: ")), "missing scene{seed}");
        assert!(index.join(format!("scene{seed}.sdic")).is_file());
    }
}

#[test]
fn index_skips_corrupt_images_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    let index = dir.path().join("index");
    write_corpus(&images);
    std::fs::write(images.join("broken.pgm"), b"P5 not a real header").unwrap();

    let out = sdic(&["index", path_str(&images), "--out", path_str(&index)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("warning: skipped"), "stderr: {}", stderr(&out));
    assert!(!index.join("broken.sdic").exists());
    assert!(index.join("scene1.sdic").is_file());
}

#[test]
fn index_of_directory_without_images_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();

    let out = sdic(&["index", path_str(&empty), "--out", path_str(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no PGM images"), "stderr: {}", stderr(&out));
}

#[test]
fn bad_arguments_are_usage_errors() {
    let cases: &[&[&str]] = &[
        &["query", "img.pgm", "--index", "idx", "--ratio-band", "1.2:0.8"],
        &["query", "img.pgm", "--index", "idx", "--ratio-band", "abc"],
        &["query", "img.pgm", "--index", "idx", "--sad-threshold", "-1"],
        &["index", "images", "--out", "idx", "--octaves", "9"],
        &["index", "images", "--out", "idx", "--tolerance", "0"],
        &["frobnicate"],
        &[],
    ];
    for args in cases {
        let out = sdic(args);
        assert_eq!(out.status.code(), Some(1), "args {args:?}: {}", stderr(&out));
    }
}

#[test]
fn help_and_version_exit_zero() {
    let help = sdic(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = stdout(&help);
    for word in ["index", "query", "stats"] {
        assert!(text.contains(word), "--help does not mention `{word}`");
    }
    assert_eq!(sdic(&["--version"]).status.code(), Some(0));
}

#[test]
fn query_ranks_self_first_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    let index = dir.path().join("index");
    write_corpus(&images);
    assert_eq!(sdic(&["index", path_str(&images), "--out", path_str(&index)]).status.code(), Some(0));

    let tsv = dir.path().join("report.tsv");
    let overlays = dir.path().join("overlays");
    let out = sdic(&[
        "query",
        path_str(&images.join("scene2.pgm")),
        "--index",
        path_str(&index),
        "--tsv",
        path_str(&tsv),
        "--overlay-dir",
        path_str(&overlays),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let text = stdout(&out);
    assert!(text.starts_with("query scene2 ("), "got: {text}");
    let first_row = text.lines().nth(2).unwrap_or_default();
    assert!(first_row.starts_with("scene2"), "self not ranked first: {first_row}");
    assert!(text.lines().any(|l| l.starts_with("related: ") && l.contains("scene2")));

    let report = std::fs::read_to_string(&tsv).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("candidate\tpoints\traw_pairs\tverified\tcomparisons\trelated")
    );
    let first = lines.next().unwrap();
    assert!(first.starts_with("scene2\t"), "first TSV row: {first}");
    assert!(first.ends_with("\t1"), "self row not flagged related: {first}");

    let svg_path = overlays.join("scene2_vs_scene2.svg");
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.contains("<svg"), "no svg element in {}", svg_path.display());
    assert!(svg.contains("<circle"), "no markers in {}", svg_path.display());
}

#[test]
fn noise_query_relates_to_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    let index = dir.path().join("index");
    write_corpus(&images);
    assert_eq!(sdic(&["index", path_str(&images), "--out", path_str(&index)]).status.code(), Some(0));

    let noise = dir.path().join("noise.pgm");
    write_pgm(&noise_image(128, 128, 77), &noise).unwrap();
    let out = sdic(&["query", path_str(&noise), "--index", path_str(&index)]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("related: none") || text.contains("notice: "),
        "got: {text}"
    );
}

#[test]
fn query_against_missing_index_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    write_corpus(&images);
    let empty = dir.path().join("not-an-index");
    std::fs::create_dir_all(&empty).unwrap();

    let out = sdic(&[
        "query",
        path_str(&images.join("scene1.pgm")),
        "--index",
        path_str(&empty),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no .sdic dictionaries"), "stderr: {}", stderr(&out));
}

#[test]
fn stats_writes_the_six_column_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    let index = dir.path().join("index");
    write_corpus(&images);
    assert_eq!(sdic(&["index", path_str(&images), "--out", path_str(&index)]).status.code(), Some(0));

    let tsv = dir.path().join("stats.tsv");
    let out = sdic(&["stats", "--index", path_str(&index), "--tsv", path_str(&tsv)]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("image"), "table header missing");

    let report = std::fs::read_to_string(&tsv).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("image\tpoints\tmatched\tcomparisons\tcombinations\tperformance_pct")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row.split('\t').count(), 6, "row: {row}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    write_corpus(&images);

    let mut tsv_bytes = Vec::new();
    let out_dirs = [dir.path().join("run1"), dir.path().join("run2")];
    for out_dir in &out_dirs {
        let out = sdic(&["index", path_str(&images), "--out", path_str(out_dir)]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        let tsv = out_dir.join("stats.tsv");
        let out = sdic(&["stats", "--index", path_str(out_dir), "--tsv", path_str(&tsv)]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        tsv_bytes.push(std::fs::read(&tsv).unwrap());
    }

    for seed in 1..=3 {
        let name = format!("scene{seed}.sdic");
        let first = std::fs::read(out_dirs[0].join(&name)).unwrap();
        let second = std::fs::read(out_dirs[1].join(&name)).unwrap();
        assert_eq!(first, second, "{name} differs between runs");
    }
    assert_eq!(tsv_bytes[0], tsv_bytes[1], "stats TSV differs between runs");
}
