//! Per-game inverted index from landmark hashes to postings, with a
//! bit-exact binary file format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "NVFP" | version u16
//! window u32 | hop u32 | nbhd_frames u32 | nbhd_bins u32 | amp_min f32
//! fan_out u32 | max_delta u32 | sample_rate u32
//! game_id: len u32 + utf8
//! piece count u32, then per piece: name (len u32 + utf8), hash_count u64, duration f64
//! hash entry count u64, then per hash ascending:
//!   hash u32 | posting count u32 | (piece u32, anchor u32) ...
//! ```
//!
//! Serialization is canonical (hashes ascending, postings sorted by
//! piece then anchor), so load followed by re-serialization reproduces
//! the file byte for byte.

use super::hash::{hash_constellation, Fingerprint};
use super::peaks::detect_peaks;
use super::spectrogram::compute_spectrogram;
use crate::audio::AudioBuffer;
use rayon::prelude::*;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"NVFP";
const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("duplicate piece id {0:?}")]
    DuplicatePieceId(String),
    #[error("audio is {actual} Hz but the fingerprint parameters expect {expected} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },
    #[error("query parameters do not match the index: {0}")]
    ParamMismatch(String),
    #[error("bad index file: {0}")]
    BadFormat(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Everything that determines the fingerprints of a buffer. Indexes
/// record their parameters; queries must run with equal ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintParams {
    pub window_size: u32,
    pub hop: u32,
    /// Peak neighborhood radius in frames.
    pub neighborhood_frames: u32,
    /// Peak neighborhood radius in bins.
    pub neighborhood_bins: u32,
    pub amp_min: f32,
    pub fan_out: u32,
    pub max_delta_frames: u32,
    pub sample_rate: u32,
}

impl Default for FingerprintParams {
    fn default() -> FingerprintParams {
        FingerprintParams {
            window_size: 4096,
            hop: 2048,
            neighborhood_frames: 20,
            neighborhood_bins: 20,
            amp_min: 10.0,
            fan_out: 15,
            max_delta_frames: 200,
            sample_rate: 44_100,
        }
    }
}

impl FingerprintParams {
    /// Same analysis chain at a different sample rate.
    pub fn at_sample_rate(sample_rate: u32) -> FingerprintParams {
        FingerprintParams {
            sample_rate,
            ..FingerprintParams::default()
        }
    }

    /// Full landmark pipeline: STFT, peak picking, pair hashing.
    /// Exact `(hash, anchor)` duplicates are dropped so one landmark
    /// never votes twice in the same offset bin.
    pub fn fingerprint(&self, audio: &AudioBuffer) -> Result<Vec<Fingerprint>, FingerprintError> {
        if audio.sample_rate != self.sample_rate {
            return Err(FingerprintError::SampleRateMismatch {
                expected: self.sample_rate,
                actual: audio.sample_rate,
            });
        }
        let spec = compute_spectrogram(audio, self.window_size as usize, self.hop as usize);
        let peaks = detect_peaks(
            &spec,
            (self.neighborhood_frames as usize, self.neighborhood_bins as usize),
            self.amp_min,
        );
        let mut fingerprints = hash_constellation(
            &peaks,
            self.fan_out as usize,
            self.max_delta_frames as usize,
            super::hash::bin_shift_for_window(self.window_size),
        );
        let mut seen = std::collections::HashSet::with_capacity(fingerprints.len());
        fingerprints.retain(|fp| seen.insert((fp.hash, fp.anchor_frame)));
        Ok(fingerprints)
    }

    /// Seconds spanned by `frames` STFT hops.
    pub fn frames_to_seconds(&self, frames: i64) -> f64 {
        frames as f64 * self.hop as f64 / self.sample_rate as f64
    }
}

/// Per-piece bookkeeping carried by the index.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceMeta {
    pub name: String,
    pub hash_count: u64,
    pub duration_seconds: f64,
}

/// One occurrence of a hash: which piece and at which anchor frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Posting {
    pub piece: u32,
    pub anchor_frame: u32,
}

/// Inverted index over the fingerprints of one game's pieces.
#[derive(Debug, Clone)]
pub struct FingerprintIndex {
    pub game_id: String,
    pub params: FingerprintParams,
    pieces: Vec<PieceMeta>,
    postings: HashMap<u32, Vec<Posting>>,
}

impl FingerprintIndex {
    /// Fingerprint every render (in parallel) and merge the postings in
    /// input order. Piece ids must be unique.
    pub fn build(
        game_id: &str,
        renders: &[(String, AudioBuffer)],
        params: &FingerprintParams,
    ) -> Result<FingerprintIndex, FingerprintError> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in renders {
            if !seen.insert(name.as_str()) {
                return Err(FingerprintError::DuplicatePieceId(name.clone()));
            }
        }

        let per_piece: Vec<(Vec<Fingerprint>, f64)> = renders
            .par_iter()
            .map(|(_, audio)| params.fingerprint(audio).map(|f| (f, audio.duration_seconds())))
            .collect::<Result<_, _>>()?;

        let mut index = FingerprintIndex {
            game_id: game_id.to_string(),
            params: params.clone(),
            pieces: Vec::with_capacity(renders.len()),
            postings: HashMap::new(),
        };
        for ((name, _), (fingerprints, duration)) in renders.iter().zip(per_piece) {
            let piece = index.pieces.len() as u32;
            index.pieces.push(PieceMeta {
                name: name.clone(),
                hash_count: fingerprints.len() as u64,
                duration_seconds: duration,
            });
            for fp in fingerprints {
                index.postings.entry(fp.hash).or_default().push(Posting {
                    piece,
                    anchor_frame: fp.anchor_frame,
                });
            }
        }
        Ok(index)
    }

    /// Merge another index into this one, renumbering its piece ids.
    /// Parameters and game id must agree and piece names stay unique.
    pub fn merge(&mut self, other: &FingerprintIndex) -> Result<(), FingerprintError> {
        if other.params != self.params {
            return Err(FingerprintError::ParamMismatch(
                "cannot merge indexes built with different parameters".into(),
            ));
        }
        for meta in &other.pieces {
            if self.pieces.iter().any(|p| p.name == meta.name) {
                return Err(FingerprintError::DuplicatePieceId(meta.name.clone()));
            }
        }
        let offset = self.pieces.len() as u32;
        self.pieces.extend(other.pieces.iter().cloned());
        for (hash, postings) in &other.postings {
            let target = self.postings.entry(*hash).or_default();
            target.extend(postings.iter().map(|p| Posting {
                piece: p.piece + offset,
                anchor_frame: p.anchor_frame,
            }));
        }
        Ok(())
    }

    pub fn pieces(&self) -> &[PieceMeta] {
        &self.pieces
    }

    pub fn piece_name(&self, piece: u32) -> &str {
        &self.pieces[piece as usize].name
    }

    pub fn postings(&self, hash: u32) -> Option<&[Posting]> {
        self.postings.get(&hash).map(|v| v.as_slice())
    }

    /// Total posting entries across all hashes.
    pub fn posting_count(&self) -> usize {
        self.postings.values().map(|v| v.len()).sum()
    }

    /// Posting lists as a multiset, for equality checks across build
    /// orders.
    pub fn posting_multiset(&self) -> Vec<(u32, String, u32)> {
        let mut all: Vec<(u32, String, u32)> = self
            .postings
            .iter()
            .flat_map(|(hash, postings)| {
                postings.iter().map(move |p| {
                    (*hash, self.pieces[p.piece as usize].name.clone(), p.anchor_frame)
                })
            })
            .collect();
        all.sort();
        all
    }

    /// Canonical byte encoding of the whole index.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let p = &self.params;
        for v in [
            p.window_size,
            p.hop,
            p.neighborhood_frames,
            p.neighborhood_bins,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&p.amp_min.to_le_bytes());
        for v in [p.fan_out, p.max_delta_frames, p.sample_rate] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        write_string(&mut out, &self.game_id);
        out.extend_from_slice(&(self.pieces.len() as u32).to_le_bytes());
        for piece in &self.pieces {
            write_string(&mut out, &piece.name);
            out.extend_from_slice(&piece.hash_count.to_le_bytes());
            out.extend_from_slice(&piece.duration_seconds.to_le_bytes());
        }

        let mut hashes: Vec<u32> = self.postings.keys().copied().collect();
        hashes.sort_unstable();
        out.extend_from_slice(&(hashes.len() as u64).to_le_bytes());
        for hash in hashes {
            let mut postings = self.postings[&hash].clone();
            postings.sort_unstable();
            out.extend_from_slice(&hash.to_le_bytes());
            out.extend_from_slice(&(postings.len() as u32).to_le_bytes());
            for posting in postings {
                out.extend_from_slice(&posting.piece.to_le_bytes());
                out.extend_from_slice(&posting.anchor_frame.to_le_bytes());
            }
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<FingerprintIndex, FingerprintError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(FingerprintError::BadFormat("missing NVFP magic".into()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(FingerprintError::BadFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let params = FingerprintParams {
            window_size: r.u32()?,
            hop: r.u32()?,
            neighborhood_frames: r.u32()?,
            neighborhood_bins: r.u32()?,
            amp_min: f32::from_le_bytes(r.take(4)?.try_into().unwrap()),
            fan_out: r.u32()?,
            max_delta_frames: r.u32()?,
            sample_rate: r.u32()?,
        };
        let game_id = r.string()?;
        let piece_count = r.u32()? as usize;
        let mut pieces = Vec::with_capacity(piece_count);
        for _ in 0..piece_count {
            pieces.push(PieceMeta {
                name: r.string()?,
                hash_count: r.u64()?,
                duration_seconds: f64::from_le_bytes(r.take(8)?.try_into().unwrap()),
            });
        }
        let hash_count = r.u64()? as usize;
        let mut postings = HashMap::with_capacity(hash_count);
        for _ in 0..hash_count {
            let hash = r.u32()?;
            let count = r.u32()? as usize;
            let mut list = Vec::with_capacity(count);
            for _ in 0..count {
                let piece = r.u32()?;
                if piece as usize >= pieces.len() {
                    return Err(FingerprintError::BadFormat(format!(
                        "posting references piece {piece} of {}",
                        pieces.len()
                    )));
                }
                list.push(Posting {
                    piece,
                    anchor_frame: r.u32()?,
                });
            }
            postings.insert(hash, list);
        }
        Ok(FingerprintIndex {
            game_id,
            params,
            pieces,
            postings,
        })
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), FingerprintError> {
        let path = path.as_ref();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.serialize()))
            .map_err(|source| FingerprintError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FingerprintIndex, FingerprintError> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| FingerprintError::Io {
                path: path.display().to_string(),
                source,
            })?;
        FingerprintIndex::deserialize(&bytes)
    }
}

fn write_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FingerprintError> {
        if self.bytes.len() - self.pos < n {
            return Err(FingerprintError::BadFormat(format!(
                "truncated: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, FingerprintError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FingerprintError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FingerprintError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, FingerprintError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| FingerprintError::BadFormat("non-utf8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{ChannelKind, NoteEvent, SymbolicPiece, TempoMap};
    use crate::synth::{render_piece, SynthConfig};

    fn params() -> FingerprintParams {
        FingerprintParams::at_sample_rate(22_050)
    }

    fn test_render(seed: u64) -> AudioBuffer {
        let mut piece = SymbolicPiece::new(480, TempoMap::constant(500_000.0));
        for i in 0..24u64 {
            let pitch = 52 + ((seed * 37 + i * 11) % 30) as u8;
            piece
                .channel_mut(ChannelKind::P1)
                .notes
                .push(NoteEvent::new(i * 480, 480, pitch, 100));
        }
        render_piece(&piece, &SynthConfig::with_sample_rate(22_050))
    }

    #[test]
    fn empty_render_list_builds_empty_index() {
        let index = FingerprintIndex::build("game", &[], &params()).unwrap();
        assert!(index.pieces().is_empty());
        assert_eq!(index.posting_count(), 0);
    }

    #[test]
    fn single_piece_postings_sum_to_its_hash_count() {
        let renders = vec![("a".to_string(), test_render(1))];
        let index = FingerprintIndex::build("game", &renders, &params()).unwrap();
        assert_eq!(index.posting_count() as u64, index.pieces()[0].hash_count);
        assert!(index.pieces()[0].hash_count > 0, "fixture produced no hashes");
    }

    #[test]
    fn identical_audio_under_two_ids_posts_both_with_equal_anchors() {
        let audio = test_render(2);
        let renders = vec![("a".to_string(), audio.clone()), ("b".to_string(), audio)];
        let index = FingerprintIndex::build("game", &renders, &params()).unwrap();
        let multiset = index.posting_multiset();
        let from_a: Vec<(u32, u32)> = multiset
            .iter()
            .filter(|(_, name, _)| name == "a")
            .map(|(h, _, f)| (*h, *f))
            .collect();
        let from_b: Vec<(u32, u32)> = multiset
            .iter()
            .filter(|(_, name, _)| name == "b")
            .map(|(h, _, f)| (*h, *f))
            .collect();
        assert_eq!(from_a, from_b);
        assert!(!from_a.is_empty());
    }

    #[test]
    fn duplicate_piece_id_is_rejected() {
        let renders = vec![
            ("a".to_string(), test_render(1)),
            ("a".to_string(), test_render(2)),
        ];
        let err = FingerprintIndex::build("game", &renders, &params()).unwrap_err();
        assert!(matches!(err, FingerprintError::DuplicatePieceId(_)));
    }

    #[test]
    fn sample_rate_mismatch_is_rejected() {
        let renders = vec![("a".to_string(), test_render(1))];
        let err = FingerprintIndex::build("game", &renders, &FingerprintParams::default())
            .unwrap_err();
        assert!(matches!(err, FingerprintError::SampleRateMismatch { .. }));
    }

    #[test]
    fn build_is_associative_under_merge() {
        let a = ("a".to_string(), test_render(1));
        let b = ("b".to_string(), test_render(2));
        let together =
            FingerprintIndex::build("game", &[a.clone(), b.clone()], &params()).unwrap();
        let mut merged = FingerprintIndex::build("game", &[a], &params()).unwrap();
        merged
            .merge(&FingerprintIndex::build("game", &[b], &params()).unwrap())
            .unwrap();
        assert_eq!(together.posting_multiset(), merged.posting_multiset());
    }

    #[test]
    fn serialization_round_trips_bit_identically() {
        let renders = vec![
            ("alpha".to_string(), test_render(1)),
            ("beta".to_string(), test_render(2)),
        ];
        let index = FingerprintIndex::build("game", &renders, &params()).unwrap();
        let bytes = index.serialize();
        let reloaded = FingerprintIndex::deserialize(&bytes).unwrap();
        assert_eq!(reloaded.serialize(), bytes);
        assert_eq!(reloaded.game_id, "game");
        assert_eq!(reloaded.pieces(), index.pieces());
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let renders = vec![("a".to_string(), test_render(1))];
        let index = FingerprintIndex::build("game", &renders, &params()).unwrap();
        let bytes = index.serialize();
        let err = FingerprintIndex::deserialize(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, FingerprintError::BadFormat(_)));
        let err = FingerprintIndex::deserialize(b"WAVE").unwrap_err();
        assert!(matches!(err, FingerprintError::BadFormat(_)));
    }
}
