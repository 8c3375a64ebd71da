//! NES video-music toolkit.
//!
//! Builds the audio side of a video-to-chiptune pairing pipeline:
//! parse four-voice MIDI pieces, render them with NES timbres, build
//! per-game audio fingerprint indexes, slice gameplay audio into clips,
//! match every clip back to its source piece, and analyze symbolic
//! music with objective structure metrics, a compound-token codec, and
//! a genre taxonomy.

pub mod audio;
pub mod fingerprint;
pub mod genre;
pub mod metrics;
pub mod pairing;
pub mod procgen;
pub mod segment;
pub mod symbolic;
pub mod synth;
pub mod tokenizer;

pub use audio::AudioBuffer;
pub use fingerprint::{FingerprintIndex, FingerprintParams, MatchPolicy, MatchResult};
pub use metrics::MetricsReport;
pub use pairing::{GameEntry, PairingRecord, PairingStatus, PipelineParams};
pub use segment::ClipSpec;
pub use symbolic::{Channel, ChannelKind, NoteEvent, SymbolicPiece, TempoEvent, TempoMap};
pub use tokenizer::{CompoundToken, TokenSequence};
