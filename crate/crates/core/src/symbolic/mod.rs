//! Four-voice symbolic piece model.
//!
//! A piece holds note events for the four NES synthesizer voices (two
//! pulses, triangle, noise) on a tick timeline, plus a tempo map that
//! makes wall-clock time derivable. Parsing and writing of Standard
//! MIDI Files lives in [`smf`]; filtering, monophony normalization and
//! augmentation live in [`ops`].

pub mod ops;
pub mod smf;

use serde::{Deserialize, Serialize};

/// Default tempo when a file declares none: 500,000 us per quarter (120 bpm).
pub const DEFAULT_US_PER_QUARTER: f64 = 500_000.0;

/// The four NES voices carried by the piece model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    /// First pulse-wave voice.
    P1,
    /// Second pulse-wave voice.
    P2,
    /// Triangle-wave voice.
    TR,
    /// Noise voice.
    NO,
}

impl ChannelKind {
    /// All four voices in canonical order.
    pub const ALL: [ChannelKind; 4] = [
        ChannelKind::P1,
        ChannelKind::P2,
        ChannelKind::TR,
        ChannelKind::NO,
    ];

    /// Position in [`Self::ALL`].
    pub fn index(self) -> usize {
        match self {
            ChannelKind::P1 => 0,
            ChannelKind::P2 => 1,
            ChannelKind::TR => 2,
            ChannelKind::NO => 3,
        }
    }

    /// Pulse and triangle voices carry pitched notes; noise does not.
    pub fn is_melodic(self) -> bool {
        !matches!(self, ChannelKind::NO)
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::P1 => "P1",
            ChannelKind::P2 => "P2",
            ChannelKind::TR => "TR",
            ChannelKind::NO => "NO",
        }
    }

    /// Case-insensitive name lookup ("p1", "P2", ...).
    pub fn from_name(name: &str) -> Option<ChannelKind> {
        match name.trim().to_ascii_lowercase().as_str() {
            "p1" => Some(ChannelKind::P1),
            "p2" => Some(ChannelKind::P2),
            "tr" => Some(ChannelKind::TR),
            "no" => Some(ChannelKind::NO),
            _ => None,
        }
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One note on one voice. `onset` and `duration` are in ticks; a valid
/// note has `duration >= 1`, `pitch <= 127` and `velocity` in `1..=127`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset: u64,
    pub duration: u64,
    pub pitch: u8,
    pub velocity: u8,
}

impl NoteEvent {
    pub fn new(onset: u64, duration: u64, pitch: u8, velocity: u8) -> NoteEvent {
        NoteEvent {
            onset,
            duration,
            pitch,
            velocity,
        }
    }

    /// First tick after the note ends.
    pub fn end(&self) -> u64 {
        self.onset + self.duration
    }

    /// Octave-independent pitch identity.
    pub fn pitch_class(&self) -> u8 {
        self.pitch % 12
    }
}

/// Notes of one voice, kept sorted by onset with ties broken by pitch
/// ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub kind: ChannelKind,
    pub notes: Vec<NoteEvent>,
}

impl Channel {
    pub fn new(kind: ChannelKind) -> Channel {
        Channel {
            kind,
            notes: Vec::new(),
        }
    }

    pub fn with_notes(kind: ChannelKind, mut notes: Vec<NoteEvent>) -> Channel {
        notes.sort_by_key(|n| (n.onset, n.pitch));
        Channel { kind, notes }
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Restore the (onset, pitch) sort order after in-place edits.
    pub fn resort(&mut self) {
        self.notes.sort_by_key(|n| (n.onset, n.pitch));
    }
}

/// One tempo-map entry: from `tick` onward, a quarter note lasts
/// `us_per_quarter` microseconds.
///
/// The value is kept as a real number so tempo-scaled variants keep
/// their wall-clock duration exact; serialization to SMF rounds to the
/// 24-bit integer the format requires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempoEvent {
    pub tick: u64,
    pub us_per_quarter: f64,
}

/// Piecewise-constant tempo over the tick timeline. Non-empty, sorted
/// by tick, and always anchored with an entry at tick 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempoMap {
    entries: Vec<TempoEvent>,
}

impl TempoMap {
    /// Single tempo for the whole piece.
    pub fn constant(us_per_quarter: f64) -> TempoMap {
        TempoMap {
            entries: vec![TempoEvent {
                tick: 0,
                us_per_quarter,
            }],
        }
    }

    /// Build from arbitrary events: sorts by tick, keeps the last entry
    /// for a repeated tick, and anchors tick 0 with the default tempo
    /// when no entry starts there.
    pub fn from_events(mut events: Vec<TempoEvent>) -> TempoMap {
        events.sort_by_key(|e| e.tick);
        let mut entries: Vec<TempoEvent> = Vec::with_capacity(events.len() + 1);
        for ev in events {
            match entries.last_mut() {
                Some(last) if last.tick == ev.tick => *last = ev,
                _ => entries.push(ev),
            }
        }
        if entries.first().map(|e| e.tick) != Some(0) {
            entries.insert(
                0,
                TempoEvent {
                    tick: 0,
                    us_per_quarter: DEFAULT_US_PER_QUARTER,
                },
            );
        }
        TempoMap { entries }
    }

    pub fn entries(&self) -> &[TempoEvent] {
        &self.entries
    }

    /// Wall-clock seconds from tick 0 to `tick`, integrating each tempo
    /// segment.
    pub fn seconds_at_tick(&self, tick: u64, ticks_per_quarter: u32) -> f64 {
        let tpq = ticks_per_quarter as f64;
        let mut seconds = 0.0;
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.tick >= tick {
                break;
            }
            let segment_end = self
                .entries
                .get(i + 1)
                .map(|next| next.tick.min(tick))
                .unwrap_or(tick);
            let ticks = (segment_end - entry.tick) as f64;
            seconds += ticks * entry.us_per_quarter / (tpq * 1e6);
        }
        seconds
    }

    /// Divide every segment's microseconds-per-quarter by `factor`
    /// (factor 1.1 plays 10% faster).
    pub fn scaled(&self, factor: f64) -> TempoMap {
        TempoMap {
            entries: self
                .entries
                .iter()
                .map(|e| TempoEvent {
                    tick: e.tick,
                    us_per_quarter: e.us_per_quarter / factor,
                })
                .collect(),
        }
    }
}

/// Nearest sixteenth-note grid point for a tick offset, ties rounding
/// down. `ticks_per_quarter` quarters split into 4 slots each.
pub fn sixteenth_slot(tick: u64, ticks_per_quarter: u32) -> u64 {
    let tpq = ticks_per_quarter as u64;
    let scaled = tick * 4;
    let quotient = scaled / tpq;
    let remainder = scaled % tpq;
    if remainder * 2 > tpq {
        quotient + 1
    } else {
        quotient
    }
}

/// Duration in sixteenth slots (at least 1), same rounding as
/// [`sixteenth_slot`].
pub fn sixteenth_len(duration: u64, ticks_per_quarter: u32) -> u64 {
    sixteenth_slot(duration, ticks_per_quarter).max(1)
}

/// A tempo-mapped four-voice piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicPiece {
    pub channels: [Channel; 4],
    pub ticks_per_quarter: u32,
    pub tempo_map: TempoMap,
}

impl SymbolicPiece {
    /// Empty piece with the given resolution and tempo map.
    pub fn new(ticks_per_quarter: u32, tempo_map: TempoMap) -> SymbolicPiece {
        assert!(ticks_per_quarter > 0, "ticks_per_quarter must be positive");
        SymbolicPiece {
            channels: [
                Channel::new(ChannelKind::P1),
                Channel::new(ChannelKind::P2),
                Channel::new(ChannelKind::TR),
                Channel::new(ChannelKind::NO),
            ],
            ticks_per_quarter,
            tempo_map,
        }
    }

    pub fn channel(&self, kind: ChannelKind) -> &Channel {
        &self.channels[kind.index()]
    }

    pub fn channel_mut(&mut self, kind: ChannelKind) -> &mut Channel {
        &mut self.channels[kind.index()]
    }

    pub fn note_count(&self) -> usize {
        self.channels.iter().map(|c| c.notes.len()).sum()
    }

    /// Tick of the last note-off across all voices (0 when empty).
    pub fn last_tick(&self) -> u64 {
        self.channels
            .iter()
            .flat_map(|c| c.notes.iter())
            .map(|n| n.end())
            .max()
            .unwrap_or(0)
    }

    /// Wall-clock time of the last note-off, integrating the tempo map
    /// piecewise. An empty piece has duration 0.
    pub fn duration_seconds(&self) -> f64 {
        self.tempo_map
            .seconds_at_tick(self.last_tick(), self.ticks_per_quarter)
    }

    /// Seconds from the start of the piece to `tick`.
    pub fn seconds_at_tick(&self, tick: u64) -> f64 {
        self.tempo_map.seconds_at_tick(tick, self.ticks_per_quarter)
    }
}
