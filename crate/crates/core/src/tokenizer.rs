//! Compound-token codec for four-voice pieces.
//!
//! A piece quantized to sixteenth-note timesteps becomes a stream of
//! rhythmic scaffolding tokens (one bar token plus four beat tokens per
//! bar, each carrying onset strength and bar density) interleaved with
//! melodic tokens (instrument, pitch, duration in sixteenths) that
//! follow their governing beat. The stream ends with an end-of-song
//! marker and can be padded with more of them up to a configured
//! maximum length.
//!
//! Melodic tokens carry no sub-beat offset, so `decode` places notes at
//! their governing beat; `decode(encode(p))` reproduces `p` exactly
//! (up to velocity, which the attributes do not carry) whenever `p`'s
//! onsets are beat-aligned and durations sit on the sixteenth grid, and
//! `encode . decode . encode = encode` holds for every piece.

use crate::symbolic::{
    sixteenth_len, sixteenth_slot, ChannelKind, NoteEvent, SymbolicPiece, TempoMap,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sixteenth slots per beat and beats per bar on the 4/4 grid.
pub const SLOTS_PER_BEAT: u64 = 4;
pub const BEATS_PER_BAR: u64 = 4;

/// Longest representable note duration, in sixteenths.
pub const MAX_DURATION_SLOTS: u64 = 64;

/// Resolution and tempo of decoded pieces.
pub const DECODE_TPQ: u32 = 480;
pub const DECODE_VELOCITY: u8 = 100;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("encoded length {tokens} exceeds the maximum sequence length {max}")]
    TooLong { tokens: usize, max: usize },
    #[error("melodic token at position {index} before any beat token")]
    MelodicBeforeBeat { index: usize },
    #[error("beat token at position {index} before any bar token")]
    BeatBeforeBar { index: usize },
    #[error("bar at position {index} carries {beats} beat tokens (expected {BEATS_PER_BAR})")]
    WrongBeatCount { index: usize, beats: u64 },
    #[error("line {line}: {message}")]
    BadLine { line: usize, message: String },
}

/// Grid position kind of a rhythmic token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timestep {
    Bar,
    Beat,
}

/// One sequence element. Rhythmic tokens carry the timestep kind plus
/// strength/density; melodic tokens carry instrument/pitch/duration;
/// the end-of-song marker carries nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "token_type", rename_all = "snake_case")]
pub enum CompoundToken {
    Rhythmic {
        timestep_type: Timestep,
        /// Channels with an onset on this beat, 0..=4.
        strength: u8,
        /// Bucketed onset count of the enclosing bar.
        density: u8,
    },
    Melodic {
        instrument: ChannelKind,
        pitch: u8,
        /// Sixteenth counts, 1..=64.
        duration: u8,
    },
    Eos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerConfig {
    /// Padding/validation ceiling for sequence length.
    pub max_len: usize,
    /// Lower bounds of the density buckets, ascending from 0.
    pub density_bounds: Vec<u32>,
}

impl Default for TokenizerConfig {
    fn default() -> TokenizerConfig {
        TokenizerConfig {
            max_len: 10_000,
            density_bounds: vec![0, 1, 2, 3, 4, 6, 8, 12, 16],
        }
    }
}

impl TokenizerConfig {
    /// Index of the bucket holding `count`.
    pub fn density_bucket(&self, count: u32) -> u8 {
        let mut bucket = 0;
        for (i, bound) in self.density_bounds.iter().enumerate() {
            if count >= *bound {
                bucket = i as u8;
            }
        }
        bucket
    }
}

/// Token stream for one piece.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<CompoundToken>,
}

impl TokenSequence {
    /// Pad with end-of-song markers up to `len` (no-op when already
    /// longer).
    pub fn pad_to(&mut self, len: usize) {
        while self.tokens.len() < len {
            self.tokens.push(CompoundToken::Eos);
        }
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for token in &self.tokens {
            out.push_str(&serde_json::to_string(token).expect("tokens serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<TokenSequence, TokenizerError> {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            tokens.push(serde_json::from_str(line).map_err(|e| TokenizerError::BadLine {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(TokenSequence { tokens })
    }
}

/// Per-beat (strength, density) pairs, beat 0 of bar 0 first. These are
/// exactly the attributes [`encode`] writes into its beat tokens,
/// exposed standalone as conditioning signals.
pub fn rhythm_features(piece: &SymbolicPiece) -> Vec<(u8, u8)> {
    rhythm_features_with(piece, &TokenizerConfig::default())
}

pub fn rhythm_features_with(piece: &SymbolicPiece, config: &TokenizerConfig) -> Vec<(u8, u8)> {
    let grid = Grid::of(piece, config);
    let mut features = Vec::with_capacity((grid.bars * BEATS_PER_BAR) as usize);
    for bar in 0..grid.bars {
        for beat in 0..BEATS_PER_BAR {
            features.push((grid.strength(bar, beat), grid.density[bar as usize]));
        }
    }
    features
}

/// Quantized view of a piece: onsets snapped to the nearest sixteenth
/// (ties down) and grouped by beat.
struct Grid {
    bars: u64,
    /// Onset channel sets per beat (bit per channel).
    beat_channels: Vec<u8>,
    /// Density bucket per bar.
    density: Vec<u8>,
    /// (beat index, channel, pitch, duration slots), sorted for emission.
    notes: Vec<(u64, ChannelKind, u8, u8)>,
}

impl Grid {
    fn of(piece: &SymbolicPiece, config: &TokenizerConfig) -> Grid {
        let tpq = piece.ticks_per_quarter;
        let mut notes = Vec::with_capacity(piece.note_count());
        let mut last_onset_slot = 0u64;
        for channel in &piece.channels {
            for note in &channel.notes {
                let slot = sixteenth_slot(note.onset, tpq);
                let duration = sixteenth_len(note.duration, tpq).min(MAX_DURATION_SLOTS) as u8;
                last_onset_slot = last_onset_slot.max(slot);
                notes.push((slot / SLOTS_PER_BEAT, channel.kind, note.pitch, duration));
            }
        }
        let bars = if notes.is_empty() {
            1
        } else {
            last_onset_slot / (SLOTS_PER_BEAT * BEATS_PER_BAR) + 1
        };

        let beats = (bars * BEATS_PER_BAR) as usize;
        let mut beat_channels = vec![0u8; beats];
        let mut bar_onsets = vec![0u32; bars as usize];
        for (beat, kind, _, _) in &notes {
            beat_channels[*beat as usize] |= 1 << kind.index();
            bar_onsets[(*beat / BEATS_PER_BAR) as usize] += 1;
        }
        let density = bar_onsets
            .into_iter()
            .map(|count| config.density_bucket(count))
            .collect();

        notes.sort_by_key(|(beat, kind, pitch, duration)| {
            (*beat, kind.index(), *pitch, *duration)
        });
        Grid {
            bars,
            beat_channels,
            density,
            notes,
        }
    }

    fn strength(&self, bar: u64, beat: u64) -> u8 {
        self.beat_channels[(bar * BEATS_PER_BAR + beat) as usize].count_ones() as u8
    }
}

/// Encode a piece with default configuration.
pub fn encode(piece: &SymbolicPiece) -> Result<TokenSequence, TokenizerError> {
    encode_with(piece, &TokenizerConfig::default())
}

/// Encode: per bar one bar token (carrying its first beat's strength
/// and the bar density) and four beat tokens, each followed by that
/// beat's notes in channel order P1, P2, TR, NO then pitch ascending.
/// A single end-of-song marker terminates the stream.
pub fn encode_with(
    piece: &SymbolicPiece,
    config: &TokenizerConfig,
) -> Result<TokenSequence, TokenizerError> {
    let grid = Grid::of(piece, config);
    let mut tokens = Vec::new();
    let mut note_cursor = 0usize;
    for bar in 0..grid.bars {
        let density = grid.density[bar as usize];
        tokens.push(CompoundToken::Rhythmic {
            timestep_type: Timestep::Bar,
            strength: grid.strength(bar, 0),
            density,
        });
        for beat in 0..BEATS_PER_BAR {
            tokens.push(CompoundToken::Rhythmic {
                timestep_type: Timestep::Beat,
                strength: grid.strength(bar, beat),
                density,
            });
            let beat_index = bar * BEATS_PER_BAR + beat;
            while note_cursor < grid.notes.len() && grid.notes[note_cursor].0 == beat_index {
                let (_, instrument, pitch, duration) = grid.notes[note_cursor];
                tokens.push(CompoundToken::Melodic {
                    instrument,
                    pitch,
                    duration,
                });
                note_cursor += 1;
            }
        }
    }
    tokens.push(CompoundToken::Eos);
    if tokens.len() > config.max_len {
        return Err(TokenizerError::TooLong {
            tokens: tokens.len(),
            max: config.max_len,
        });
    }
    Ok(TokenSequence { tokens })
}

/// Decode a token stream back into a piece on the sixteenth grid.
/// Notes land at their governing beat; velocity is fixed at
/// [`DECODE_VELOCITY`]; reading stops at the first end-of-song marker.
pub fn decode(sequence: &TokenSequence) -> Result<SymbolicPiece, TokenizerError> {
    let mut piece = SymbolicPiece::new(DECODE_TPQ, TempoMap::constant(500_000.0));
    let ticks_per_slot = (DECODE_TPQ / 4) as u64;

    let mut bar: Option<u64> = None;
    let mut beat_in_bar: u64 = 0;
    let mut bars_seen: u64 = 0;
    for (index, token) in sequence.tokens.iter().enumerate() {
        match token {
            CompoundToken::Rhythmic {
                timestep_type: Timestep::Bar,
                ..
            } => {
                if bar.is_some() && beat_in_bar != BEATS_PER_BAR {
                    return Err(TokenizerError::WrongBeatCount {
                        index,
                        beats: beat_in_bar,
                    });
                }
                bar = Some(bars_seen);
                bars_seen += 1;
                beat_in_bar = 0;
            }
            CompoundToken::Rhythmic {
                timestep_type: Timestep::Beat,
                ..
            } => {
                if bar.is_none() {
                    return Err(TokenizerError::BeatBeforeBar { index });
                }
                if beat_in_bar == BEATS_PER_BAR {
                    return Err(TokenizerError::WrongBeatCount {
                        index,
                        beats: beat_in_bar + 1,
                    });
                }
                beat_in_bar += 1;
            }
            CompoundToken::Melodic {
                instrument,
                pitch,
                duration,
            } => {
                let Some(current_bar) = bar else {
                    return Err(TokenizerError::MelodicBeforeBeat { index });
                };
                if beat_in_bar == 0 {
                    return Err(TokenizerError::MelodicBeforeBeat { index });
                }
                let beat = current_bar * BEATS_PER_BAR + (beat_in_bar - 1);
                let onset = beat * SLOTS_PER_BEAT * ticks_per_slot;
                let ticks = (*duration).max(1) as u64 * ticks_per_slot;
                piece.channel_mut(*instrument).notes.push(NoteEvent::new(
                    onset,
                    ticks,
                    *pitch,
                    DECODE_VELOCITY,
                ));
            }
            CompoundToken::Eos => break,
        }
    }
    for channel in piece.channels.iter_mut() {
        channel.resort();
    }
    Ok(piece)
}
