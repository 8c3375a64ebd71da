//! Shazam-style audio fingerprinting: spectrogram, peak constellation,
//! combinatorial hashing, per-game inverted index, and offset-aligned
//! query matching.

pub mod hash;
pub mod index;
pub mod matcher;
pub mod peaks;
pub mod spectrogram;

pub use hash::{hash_constellation, pack_hash, unpack_hash, Fingerprint};
pub use index::{FingerprintError, FingerprintIndex, FingerprintParams, PieceMeta, Posting};
pub use matcher::{match_query, MatchPolicy, MatchResult};
pub use peaks::{detect_peaks, Peak, PeakConstellation};
pub use spectrogram::{compute_spectrogram, Spectrogram};
