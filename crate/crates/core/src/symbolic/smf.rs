//! Standard MIDI File reader and writer for the four-voice piece model.
//!
//! Reads format 0 and format 1 files. Note-on/note-off pairs are
//! resolved into [`NoteEvent`]s, tempo meta events feed the tempo map,
//! and (track, MIDI channel) groups are assigned to the four NES voices
//! by a configurable mapping rule. Writing produces a format-1 file
//! with one tempo track and one named track per voice; `parse(write(p))`
//! reproduces `p` whenever the tempo values fit the format's 24-bit
//! field.

use super::{ChannelKind, NoteEvent, SymbolicPiece, TempoEvent, TempoMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmfError {
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("unsupported SMF feature: {0}")]
    Unsupported(String),
    #[error("truncated chunk: {0}")]
    Truncated(String),
    #[error("malformed track {track}: {message}")]
    MalformedTrack { track: usize, message: String },
    #[error("dangling note-on at tick {tick} on track {track} (pitch {pitch})")]
    DanglingNoteOn { track: usize, tick: u64, pitch: u8 },
    #[error(
        "{count} note-bearing voices but only 4 NES channels; \
         unmapped: {unmapped}; supply an explicit voice mapping"
    )]
    TooManyVoices { count: usize, unmapped: String },
    #[error("voice mapping: {0}")]
    BadMapping(String),
}

/// One explicit mapping rule: notes from `track` (optionally restricted
/// to one MIDI channel) go to `voice`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoiceRule {
    pub track: usize,
    pub midi_channel: Option<u8>,
    pub voice: ChannelKind,
}

/// Track/channel to NES-voice assignment policy.
///
/// Resolution order per note group: explicit rules first, then track
/// names ("P1", "P2", "TR", "NO", case-insensitive) when enabled, then
/// first-come order over the voices that are still free.
#[derive(Debug, Clone)]
pub struct VoiceMap {
    pub rules: Vec<VoiceRule>,
    pub use_track_names: bool,
}

impl Default for VoiceMap {
    fn default() -> VoiceMap {
        VoiceMap {
            rules: Vec::new(),
            use_track_names: true,
        }
    }
}

impl VoiceMap {
    /// Parse a mapping file: one `track[.channel]=voice` rule per line,
    /// `#` comments allowed, e.g. `0=P1` or `3.9=NO`.
    pub fn parse(text: &str) -> Result<VoiceMap, SmfError> {
        let mut rules = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (lhs, rhs) = line.split_once('=').ok_or_else(|| {
                SmfError::BadMapping(format!("line {}: expected track[.channel]=voice", lineno + 1))
            })?;
            let voice = ChannelKind::from_name(rhs).ok_or_else(|| {
                SmfError::BadMapping(format!("line {}: unknown voice {:?}", lineno + 1, rhs.trim()))
            })?;
            let lhs = lhs.trim();
            let (track_str, channel) = match lhs.split_once('.') {
                Some((t, c)) => {
                    let ch: u8 = c.trim().parse().map_err(|_| {
                        SmfError::BadMapping(format!("line {}: bad channel {:?}", lineno + 1, c))
                    })?;
                    (t, Some(ch))
                }
                None => (lhs, None),
            };
            let track: usize = track_str.trim().parse().map_err(|_| {
                SmfError::BadMapping(format!("line {}: bad track {:?}", lineno + 1, track_str))
            })?;
            rules.push(VoiceRule {
                track,
                midi_channel: channel,
                voice,
            });
        }
        Ok(VoiceMap { rules, use_track_names: true })
    }

    fn explicit_voice(&self, track: usize, midi_channel: u8) -> Option<ChannelKind> {
        // A channel-specific rule beats a whole-track rule.
        self.rules
            .iter()
            .find(|r| r.track == track && r.midi_channel == Some(midi_channel))
            .or_else(|| {
                self.rules
                    .iter()
                    .find(|r| r.track == track && r.midi_channel.is_none())
            })
            .map(|r| r.voice)
    }
}

/// Parse SMF bytes into a piece with the default voice mapping.
pub fn parse_midi(bytes: &[u8]) -> Result<SymbolicPiece, SmfError> {
    parse_midi_with(bytes, &VoiceMap::default())
}

/// Parse SMF bytes into a piece with an explicit voice mapping.
pub fn parse_midi_with(bytes: &[u8], map: &VoiceMap) -> Result<SymbolicPiece, SmfError> {
    let mut cursor = Cursor::new(bytes);
    let header = parse_header(&mut cursor)?;

    let mut tracks = Vec::with_capacity(header.track_count);
    for track_index in 0..header.track_count {
        let chunk = next_track_chunk(&mut cursor, track_index)?;
        tracks.push(parse_track(chunk, track_index)?);
    }

    let tempo_events: Vec<TempoEvent> = tracks
        .iter()
        .flat_map(|t| t.tempo_events.iter().copied())
        .collect();
    let tempo_map = TempoMap::from_events(tempo_events);

    let mut piece = SymbolicPiece::new(header.ticks_per_quarter, tempo_map);
    assign_voices(&tracks, map, &mut piece)?;
    Ok(piece)
}

struct Header {
    track_count: usize,
    ticks_per_quarter: u32,
}

struct ParsedTrack {
    index: usize,
    name: Option<String>,
    tempo_events: Vec<TempoEvent>,
    /// Notes grouped by MIDI channel, in the order channels first appear.
    note_groups: Vec<(u8, Vec<NoteEvent>)>,
}

/// Byte cursor over the raw file.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Cursor<'a> {
        Cursor { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], SmfError> {
        if self.remaining() < n {
            return Err(SmfError::Truncated(format!(
                "{what}: needed {n} bytes, {} left",
                self.remaining()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, SmfError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn parse_header(cursor: &mut Cursor) -> Result<Header, SmfError> {
    let magic = cursor
        .take(4, "header magic")
        .map_err(|_| SmfError::BadHeader("file shorter than a header chunk".into()))?;
    if magic != b"MThd" {
        return Err(SmfError::BadHeader(format!(
            "expected MThd, found {:02x?}",
            magic
        )));
    }
    let length = cursor.u32("header length")?;
    if length < 6 {
        return Err(SmfError::BadHeader(format!("header length {length} < 6")));
    }
    let body = cursor.take(length as usize, "header body")?;
    let format = u16::from_be_bytes([body[0], body[1]]);
    if format > 1 {
        return Err(SmfError::Unsupported(format!("SMF format {format}")));
    }
    let track_count = u16::from_be_bytes([body[2], body[3]]) as usize;
    let division = u16::from_be_bytes([body[4], body[5]]);
    if division & 0x8000 != 0 {
        return Err(SmfError::Unsupported("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(SmfError::BadHeader("zero ticks per quarter".into()));
    }
    Ok(Header {
        track_count,
        ticks_per_quarter: division as u32,
    })
}

fn next_track_chunk<'a>(cursor: &mut Cursor<'a>, track: usize) -> Result<&'a [u8], SmfError> {
    // Skip alien chunks, as the SMF spec requires.
    loop {
        let magic = cursor.take(4, "track chunk magic")?;
        let length = cursor.u32("track chunk length")? as usize;
        let body = cursor.take(length, "track chunk body")?;
        if magic == b"MTrk" {
            return Ok(body);
        }
        log::debug!("skipping unknown chunk {:02x?} before track {track}", magic);
    }
}

fn read_varlen(cursor: &mut Cursor, track: usize) -> Result<u32, SmfError> {
    let mut value: u32 = 0;
    for _ in 0..4 {
        let byte = cursor.take(1, "variable-length quantity")?[0];
        value = (value << 7) | (byte & 0x7F) as u32;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
    }
    Err(SmfError::MalformedTrack {
        track,
        message: "variable-length quantity longer than 4 bytes".into(),
    })
}

fn parse_track(body: &[u8], index: usize) -> Result<ParsedTrack, SmfError> {
    let mut cursor = Cursor::new(body);
    let mut tick: u64 = 0;
    let mut running_status: Option<u8> = None;
    let mut name: Option<String> = None;
    let mut tempo_events = Vec::new();
    // (channel, pitch) -> (onset tick, velocity)
    let mut open_notes: std::collections::HashMap<(u8, u8), (u64, u8)> =
        std::collections::HashMap::new();
    let mut note_groups: Vec<(u8, Vec<NoteEvent>)> = Vec::new();

    fn group(groups: &mut Vec<(u8, Vec<NoteEvent>)>, channel: u8) -> &mut Vec<NoteEvent> {
        if let Some(i) = groups.iter().position(|(c, _)| *c == channel) {
            &mut groups[i].1
        } else {
            groups.push((channel, Vec::new()));
            &mut groups.last_mut().unwrap().1
        }
    }

    let close_note = |groups: &mut Vec<(u8, Vec<NoteEvent>)>,
                          open: &mut std::collections::HashMap<(u8, u8), (u64, u8)>,
                          channel: u8,
                          pitch: u8,
                          off_tick: u64| {
        if let Some((onset, velocity)) = open.remove(&(channel, pitch)) {
            // Zero-length notes are inaudible; drop them.
            if off_tick > onset {
                group(groups, channel).push(NoteEvent::new(onset, off_tick - onset, pitch, velocity));
            }
        }
    };

    while cursor.remaining() > 0 {
        tick += read_varlen(&mut cursor, index)? as u64;
        let first = cursor.take(1, "event status")?[0];
        let status = if first & 0x80 != 0 {
            if first < 0xF0 {
                running_status = Some(first);
            }
            first
        } else {
            cursor.pos -= 1; // data byte: re-read under running status
            running_status.ok_or(SmfError::MalformedTrack {
                track: index,
                message: format!("data byte {first:#04x} with no running status"),
            })?
        };

        match status & 0xF0 {
            0x80 => {
                let data = cursor.take(2, "note-off data")?;
                close_note(&mut note_groups, &mut open_notes, status & 0x0F, data[0] & 0x7F, tick);
            }
            0x90 => {
                let data = cursor.take(2, "note-on data")?;
                let channel = status & 0x0F;
                let pitch = data[0] & 0x7F;
                let velocity = data[1] & 0x7F;
                if velocity == 0 {
                    close_note(&mut note_groups, &mut open_notes, channel, pitch, tick);
                } else {
                    // Retrigger of a held pitch ends the held note here.
                    close_note(&mut note_groups, &mut open_notes, channel, pitch, tick);
                    open_notes.insert((channel, pitch), (tick, velocity));
                }
            }
            0xA0 | 0xB0 | 0xE0 => {
                cursor.take(2, "two-byte channel event")?;
            }
            0xC0 | 0xD0 => {
                cursor.take(1, "one-byte channel event")?;
            }
            0xF0 => match status {
                // Sysex and meta events cancel running status.
                0xF0 | 0xF7 => {
                    running_status = None;
                    let len = read_varlen(&mut cursor, index)? as usize;
                    cursor.take(len, "sysex body")?;
                }
                0xFF => {
                    running_status = None;
                    let meta_type = cursor.take(1, "meta type")?[0];
                    let len = read_varlen(&mut cursor, index)? as usize;
                    let data = cursor.take(len, "meta body")?;
                    match meta_type {
                        0x03 if name.is_none() => {
                            name = Some(String::from_utf8_lossy(data).into_owned());
                        }
                        0x51 => {
                            if len != 3 {
                                return Err(SmfError::MalformedTrack {
                                    track: index,
                                    message: format!("tempo meta of length {len}"),
                                });
                            }
                            let uspq =
                                u32::from_be_bytes([0, data[0], data[1], data[2]]) as f64;
                            tempo_events.push(TempoEvent {
                                tick,
                                us_per_quarter: uspq,
                            });
                        }
                        0x2F => break,
                        _ => {}
                    }
                }
                other => {
                    return Err(SmfError::MalformedTrack {
                        track: index,
                        message: format!("unsupported status byte {other:#04x}"),
                    })
                }
            },
            _ => unreachable!("status bytes always have the high bit set"),
        }
    }

    if let Some(((_, pitch), (onset, _))) = open_notes
        .iter()
        .min_by_key(|((ch, pitch), (onset, _))| (*onset, *ch, *pitch))
        .map(|(k, v)| (*k, *v))
    {
        return Err(SmfError::DanglingNoteOn {
            track: index,
            tick: onset,
            pitch,
        });
    }

    for (_, notes) in &mut note_groups {
        notes.sort_by_key(|n| (n.onset, n.pitch));
    }

    Ok(ParsedTrack {
        index,
        name,
        tempo_events,
        note_groups,
    })
}

fn assign_voices(
    tracks: &[ParsedTrack],
    map: &VoiceMap,
    piece: &mut SymbolicPiece,
) -> Result<(), SmfError> {
    let mut taken = [false; 4];
    // (track, midi channel, notes, resolved voice)
    let mut groups: Vec<(usize, u8, &Vec<NoteEvent>, Option<ChannelKind>)> = Vec::new();

    for track in tracks {
        let named_voice = if map.use_track_names {
            track.name.as_deref().and_then(ChannelKind::from_name)
        } else {
            None
        };
        for (channel, notes) in &track.note_groups {
            if notes.is_empty() {
                continue;
            }
            let voice = map
                .explicit_voice(track.index, *channel)
                .or(named_voice);
            if let Some(v) = voice {
                taken[v.index()] = true;
            }
            groups.push((track.index, *channel, notes, voice));
        }
    }

    // Remaining groups fill the free voices in P1, P2, TR, NO order.
    let mut unmapped = Vec::new();
    for (track, channel, _, voice) in groups.iter_mut() {
        if voice.is_none() {
            match ChannelKind::ALL.iter().find(|k| !taken[k.index()]) {
                Some(free) => {
                    taken[free.index()] = true;
                    *voice = Some(*free);
                }
                None => unmapped.push(format!("track {track} channel {channel}")),
            }
        }
    }
    if !unmapped.is_empty() {
        return Err(SmfError::TooManyVoices {
            count: groups.len(),
            unmapped: unmapped.join(", "),
        });
    }

    for (_, _, notes, voice) in groups {
        let kind = voice.expect("every group resolved above");
        piece.channel_mut(kind).notes.extend(notes.iter().copied());
    }
    for channel in piece.channels.iter_mut() {
        channel.resort();
    }
    Ok(())
}

/// Serialize a piece as a format-1 SMF: track 0 carries the tempo map,
/// tracks 1-4 carry one named voice each (P1, P2, TR, NO).
pub fn write_midi(piece: &SymbolicPiece) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&5u16.to_be_bytes());
    out.extend_from_slice(&(piece.ticks_per_quarter as u16).to_be_bytes());

    let mut tempo_track = TrackWriter::new();
    for entry in piece.tempo_map.entries() {
        let uspq = (entry.us_per_quarter.round() as i64).clamp(1, 0xFF_FFFF) as u32;
        let bytes = uspq.to_be_bytes();
        tempo_track.event(entry.tick, &[0xFF, 0x51, 0x03, bytes[1], bytes[2], bytes[3]]);
    }
    tempo_track.finish(&mut out);

    for kind in ChannelKind::ALL {
        let channel = piece.channel(kind);
        let midi_channel = kind.index() as u8;
        let mut track = TrackWriter::new();
        let name = kind.name().as_bytes();
        let mut name_event = vec![0xFF, 0x03, name.len() as u8];
        name_event.extend_from_slice(name);
        track.event(0, &name_event);

        // Note-offs sort before note-ons at the same tick so back-to-back
        // notes never read as overlapping.
        let mut events: Vec<(u64, u8, Vec<u8>)> = Vec::with_capacity(channel.notes.len() * 2);
        for note in &channel.notes {
            events.push((
                note.onset,
                1,
                vec![0x90 | midi_channel, note.pitch, note.velocity],
            ));
            events.push((note.end(), 0, vec![0x80 | midi_channel, note.pitch, 0]));
        }
        events.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
        for (tick, _, bytes) in events {
            track.event(tick, &bytes);
        }
        track.finish(&mut out);
    }
    out
}

struct TrackWriter {
    bytes: Vec<u8>,
    last_tick: u64,
}

impl TrackWriter {
    fn new() -> TrackWriter {
        TrackWriter {
            bytes: Vec::new(),
            last_tick: 0,
        }
    }

    fn event(&mut self, tick: u64, payload: &[u8]) {
        let delta = tick - self.last_tick;
        self.last_tick = tick;
        self.write_varlen(delta as u32);
        self.bytes.extend_from_slice(payload);
    }

    fn write_varlen(&mut self, mut value: u32) {
        let mut stack = [0u8; 4];
        let mut n = 0;
        loop {
            stack[n] = (value & 0x7F) as u8;
            value >>= 7;
            n += 1;
            if value == 0 {
                break;
            }
        }
        for i in (0..n).rev() {
            let mut byte = stack[i];
            if i > 0 {
                byte |= 0x80;
            }
            self.bytes.push(byte);
        }
    }

    fn finish(mut self, out: &mut Vec<u8>) {
        self.event(self.last_tick, &[0xFF, 0x2F, 0x00]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(self.bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.bytes);
    }
}
