//! `sdic` — build descriptor dictionaries for an image collection, query an
//! image against them, and print the comparison statistics table.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use sdic_core::geometry::GeometryParams;
use sdic_core::overlay::{render_overlay, OverlaySide};
use sdic_core::retrieval::{
    index_directory, query_index, query_table, query_tsv, stats_index, stats_table, stats_tsv,
    IndexOptions, QueryOptions,
};
use sdic_core::surf::{DetectorParams, DEFAULT_HESSIAN_THRESHOLD};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sdic",
    version,
    about = "Content-based image retrieval over tolerance-grouped descriptor dictionaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features from every PGM in a directory and write one .sdic
    /// dictionary file per image.
    Index {
        /// Directory containing binary (P5) PGM images.
        image_dir: PathBuf,
        /// Output directory for the .sdic files.
        #[arg(long)]
        out: PathBuf,
        /// Grouping tolerance of the dictionary intervals.
        #[arg(long, default_value_t = 0.05, value_parser = positive_f32)]
        tolerance: f32,
        /// Minimum Hessian determinant for keypoint detection.
        #[arg(long = "hessian-threshold", default_value_t = DEFAULT_HESSIAN_THRESHOLD, value_parser = positive_f64)]
        hessian_threshold: f64,
        /// Scale-space octaves.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=8))]
        octaves: u32,
        /// Filter layers per octave (at least 3 for extrema detection).
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(3..=8))]
        layers: u32,
    },
    /// Match one query image against an index and rank the candidates.
    Query {
        /// The query image (binary PGM).
        image: PathBuf,
        /// Directory of .sdic files built by `index`.
        #[arg(long)]
        index: PathBuf,
        /// Maximum SAD for two descriptors to count as similar.
        #[arg(long = "sad-threshold", default_value_t = 0.5, value_parser = positive_f64)]
        sad_threshold: f64,
        /// Verified pairs required to call a candidate related.
        #[arg(long = "min-pairs", default_value_t = 5)]
        min_pairs: usize,
        /// Angular tolerance of the geometric consistency test, radians.
        #[arg(long = "angle-tol", default_value_t = 0.15, value_parser = positive_f64)]
        angle_tol: f64,
        /// Allowed segment length ratio band, formatted LOW:HIGH with
        /// LOW < 1 < HIGH.
        #[arg(long = "ratio-band", default_value = "0.8:1.25", value_parser = parse_ratio_band)]
        ratio_band: (f64, f64),
        /// Write one SVG overlay per related candidate into this directory.
        #[arg(long = "overlay-dir")]
        overlay_dir: Option<PathBuf>,
        /// Write the machine-readable report here.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// All-vs-all comparison statistics for an index.
    Stats {
        /// Directory of .sdic files built by `index`.
        #[arg(long)]
        index: PathBuf,
        /// Write the machine-readable table here.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
}

fn positive_f32(s: &str) -> Result<f32, String> {
    let v: f32 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` must be a positive number"))
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` must be a positive number"))
    }
}

fn parse_ratio_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}` is not in LOW:HIGH form"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("`{lo}` is not a number"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("`{hi}` is not a number"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < 1.0 && 1.0 < hi && lo > 0.0) {
        return Err(format!("ratio band must satisfy 0 < LOW < 1 < HIGH, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn run(command: Command) -> sdic_core::Result<()> {
    match command {
        Command::Index { image_dir, out, tolerance, hessian_threshold, octaves, layers } => {
            let opts = IndexOptions {
                tolerance,
                detector: DetectorParams {
                    hessian_threshold,
                    octaves: octaves as usize,
                    layers_per_octave: layers as usize,
                    initial_step: 1,
                },
            };
            let outcome = index_directory(&image_dir, &out, &opts)?;
            for (path, reason) in &outcome.skipped {
                eprintln!("warning: skipped {}: {reason}", path.display());
            }
            for s in &outcome.summaries {
                println!(
                    "indexed {}: {} keypoints, {} nodes, {} bytes",
                    s.image_id, s.keypoint_count, s.node_count, s.file_size
                );
            }
            Ok(())
        }
        Command::Query {
            image,
            index,
            sad_threshold,
            min_pairs,
            angle_tol,
            ratio_band,
            overlay_dir,
            tsv,
        } => {
            let opts = QueryOptions {
                sad_threshold,
                min_pairs,
                geometry: GeometryParams {
                    angle_tolerance: angle_tol,
                    distance_ratio_band: ratio_band,
                    ..GeometryParams::default()
                },
                ..QueryOptions::default()
            };
            let (report, verified) = query_index(&image, &index, &opts)?;
            print!("{}", query_table(&report));
            if let Some(path) = tsv {
                std::fs::write(&path, query_tsv(&report))?;
            }
            if let Some(dir) = overlay_dir {
                std::fs::create_dir_all(&dir)?;
                let query_img = sdic_core::load_pgm(&image)?;
                for row in &report.related {
                    let Some((_, v)) = verified.iter().find(|(id, _)| *id == row.candidate_id)
                    else {
                        continue;
                    };
                    let out_path =
                        dir.join(format!("{}_vs_{}.svg", report.query_id, row.candidate_id));
                    render_overlay(&query_img, v, OverlaySide::Query, &out_path)?;
                    println!("overlay written: {}", out_path.display());
                }
            }
            Ok(())
        }
        Command::Stats { index, tsv } => {
            let rows = stats_index(&index, 0.5, &GeometryParams::default())?;
            print!("{}", stats_table(&rows));
            if let Some(path) = tsv {
                std::fs::write(&path, stats_tsv(&rows))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
