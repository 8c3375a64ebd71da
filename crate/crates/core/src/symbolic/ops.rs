//! Piece-level transforms: completeness filtering, monophony
//! normalization, and training-set augmentation.

use super::{ChannelKind, NoteEvent, SymbolicPiece};

/// A file counts as a complete piece when it plays strictly longer than
/// this many seconds; anything shorter is treated as a sound effect.
pub const COMPLETE_PIECE_MIN_SECONDS: f64 = 8.0;

/// Keep exactly the pieces longer than [`COMPLETE_PIECE_MIN_SECONDS`],
/// preserving input order.
pub fn filter_complete_pieces(pieces: Vec<SymbolicPiece>) -> Vec<SymbolicPiece> {
    pieces
        .into_iter()
        .filter(|p| p.duration_seconds() > COMPLETE_PIECE_MIN_SECONDS)
        .collect()
}

/// Which note survives when two notes start on the same tick of a
/// melodic voice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Keep the higher-pitched note (default).
    #[default]
    HigherPitch,
    /// Keep the lower-pitched note.
    LowerPitch,
}

/// Enforce monophony on P1/P2/TR: a note overlapped by a later onset is
/// truncated to end at that onset, zero-length remnants are dropped, and
/// same-onset collisions resolve per `tie_break`. The noise voice is
/// left untouched.
pub fn normalize_monophony(piece: &SymbolicPiece, tie_break: TieBreak) -> SymbolicPiece {
    let mut out = piece.clone();
    for kind in [ChannelKind::P1, ChannelKind::P2, ChannelKind::TR] {
        let channel = out.channel_mut(kind);
        channel.resort();
        let mut kept: Vec<NoteEvent> = Vec::with_capacity(channel.notes.len());
        for note in channel.notes.drain(..) {
            match kept.last_mut() {
                Some(last) if last.onset == note.onset => {
                    // Sorted by pitch ascending, so `note` is the higher one.
                    if tie_break == TieBreak::HigherPitch {
                        *last = note;
                    }
                }
                Some(last) if last.end() > note.onset => {
                    last.duration = note.onset - last.onset;
                    kept.push(note);
                }
                _ => kept.push(note),
            }
        }
        channel.notes = kept;
    }
    out
}

/// Semitone offsets covering all twelve keys with minimal clamping.
pub const TRANSPOSE_OFFSETS: std::ops::RangeInclusive<i8> = -5..=6;
/// Tempo scale factors: 10% slower, unchanged, 10% faster.
pub const TEMPO_FACTORS: [f64; 3] = [0.9, 1.0, 1.1];
/// Velocity scale factors: 10% softer, unchanged, 10% louder.
pub const VELOCITY_FACTORS: [f64; 3] = [0.9, 1.0, 1.1];

/// Full augmentation cross product: 12 transpositions x 3 tempo factors
/// x 3 velocity factors = 108 variants, in a fixed deterministic order.
/// Transposition skips the noise voice; notes whose transposed pitch
/// leaves 0..=127 are dropped; velocities clamp to 1..=127. The
/// (0, 1.0, 1.0) variant is the piece itself.
pub fn augment(piece: &SymbolicPiece) -> Vec<SymbolicPiece> {
    let mut variants = Vec::with_capacity(108);
    for offset in TRANSPOSE_OFFSETS {
        for tempo_factor in TEMPO_FACTORS {
            for velocity_factor in VELOCITY_FACTORS {
                variants.push(make_variant(piece, offset, tempo_factor, velocity_factor));
            }
        }
    }
    variants
}

fn make_variant(
    piece: &SymbolicPiece,
    offset: i8,
    tempo_factor: f64,
    velocity_factor: f64,
) -> SymbolicPiece {
    let mut out = SymbolicPiece::new(piece.ticks_per_quarter, piece.tempo_map.scaled(tempo_factor));
    for channel in &piece.channels {
        let transpose = if channel.kind.is_melodic() { offset } else { 0 };
        let notes = out.channel_mut(channel.kind);
        for note in &channel.notes {
            let pitch = note.pitch as i16 + transpose as i16;
            if !(0..=127).contains(&pitch) {
                continue;
            }
            let velocity = scale_velocity(note.velocity, velocity_factor);
            notes.notes.push(NoteEvent::new(note.onset, note.duration, pitch as u8, velocity));
        }
    }
    out
}

fn scale_velocity(velocity: u8, factor: f64) -> u8 {
    if factor == 1.0 {
        return velocity;
    }
    ((velocity as f64 * factor).round() as i64).clamp(1, 127) as u8
}
