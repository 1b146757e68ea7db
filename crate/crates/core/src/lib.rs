//! Content-based image retrieval on tolerance-grouped descriptor
//! dictionaries.
//!
//! The pipeline: load a grayscale image ([`image`]), detect SURF-style
//! keypoints and their 64-element descriptors ([`surf`]), index them in a
//! depth-64 interval trie persisted as an `.sdic` file ([`dictionary`]),
//! find all cross-image descriptor pairs under a SAD threshold by pruned
//! trie descent ([`matcher`]), reject geometrically inconsistent pairs
//! ([`geometry`]), and report per-image match statistics with the
//! comparisons-vs-combinations efficiency metric ([`retrieval`],
//! [`overlay`]). [`synth`] provides the deterministic synthetic images the
//! test suites run on.

pub mod dictionary;
pub mod error;
pub mod geometry;
pub mod image;
pub mod matcher;
pub mod overlay;
pub mod retrieval;
pub mod surf;
pub mod synth;

pub use dictionary::{
    build_dictionary, deserialize, serialize, stats, DescriptorDictionary, DictionaryNode,
    DictionaryStats, KeypointRecord, DEFAULT_TOLERANCE,
};
pub use error::{Error, Result};
pub use geometry::{filter_pairs, pair_consistency, GeometryParams, VerifiedMatch};
pub use image::{build_integral, load_pgm, GrayImage, IntegralImage};
pub use matcher::{
    brute_force_match, combinations, match_dictionaries, sad, BruteForcePair, BruteForceResult,
    MatchPair, MatchResult,
};
pub use overlay::{render_overlay, OverlaySide};
pub use retrieval::{
    index_directory, query_index, stats_index, ImageReport, IndexOptions, QueryOptions,
    QueryReport, QueryRow,
};
pub use surf::{
    assign_orientation, compute_descriptor, detect_keypoints, extract_features, hessian_response,
    Descriptor, DetectorParams, Keypoint, DEFAULT_HESSIAN_THRESHOLD,
};
