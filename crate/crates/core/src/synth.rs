//! Renders symbolic pieces to mono PCM with NES-voice timbres.
//!
//! P1/P2 are band-limited pulse waves (additive series up to Nyquist,
//! played back through a per-pitch wavetable), TR is the console's
//! 32-step amplitude-quantized triangle, and NO is a 15-bit LFSR noise
//! stream clocked from a 16-entry period table indexed by `pitch % 16`.
//! Rendering is deterministic: the same piece and config produce
//! bit-identical samples.

use crate::audio::AudioBuffer;
use crate::symbolic::{ChannelKind, SymbolicPiece};
use std::collections::HashMap;

/// NTSC CPU clock driving the noise timer.
const CPU_HZ: f64 = 1_789_773.0;

/// 32-step triangle sequence.
const TRIANGLE_STEPS: [u8; 32] = [
    15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0, //
    0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15,
];

/// Noise timer periods (NTSC), indexed by `pitch % 16`.
const NOISE_PERIODS: [u16; 16] = [
    4, 8, 16, 32, 64, 96, 128, 160, 202, 254, 380, 508, 762, 1016, 2034, 4068,
];

/// Peak target after mixing: -1 dBFS.
pub const MIX_PEAK: f32 = 0.89;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: u32,
    /// Pulse duty fraction; the console offers 0.125, 0.25, 0.5, 0.75.
    pub pulse_duty: f32,
    /// Per-voice gain in P1, P2, TR, NO order.
    pub master_gain: [f32; 4],
    /// Linear fade appended after each note-off, in seconds.
    pub release: f64,
    /// Exponential amplitude decay rate per second over a note's body,
    /// shaping the flat sustain into the console's typical envelope
    /// fall-off.
    pub note_decay: f64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            sample_rate: 44_100,
            pulse_duty: 0.5,
            // Noise sits below the tonal voices: percussion at full
            // scale buries the spectral lines the fingerprinter needs.
            master_gain: [1.0, 1.0, 1.0, 0.5],
            release: 0.01,
            note_decay: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn with_sample_rate(sample_rate: u32) -> SynthConfig {
        SynthConfig {
            sample_rate,
            ..SynthConfig::default()
        }
    }
}

/// Equal temperament around A4 = 440 Hz.
pub fn pitch_to_hz(pitch: u8) -> f64 {
    440.0 * 2f64.powf((pitch as f64 - 69.0) / 12.0)
}

fn buffer_len(piece_seconds: f64, config: &SynthConfig) -> usize {
    ((piece_seconds + config.release) * config.sample_rate as f64).round() as usize
}

/// Render one voice of the piece into a buffer spanning the whole piece
/// (plus the release tail). An empty channel renders as silence.
pub fn render_channel(
    piece: &SymbolicPiece,
    kind: ChannelKind,
    config: &SynthConfig,
) -> AudioBuffer {
    assert!(config.sample_rate >= 8000, "sample rate below 8 kHz");
    assert!(config.master_gain.iter().all(|g| *g >= 0.0), "negative gain");
    let len = buffer_len(piece.duration_seconds(), config);
    let mut samples = vec![0.0f32; len];
    let channel = piece.channel(kind);
    let gain = config.master_gain[kind.index()];
    if gain > 0.0 {
        match kind {
            ChannelKind::P1 | ChannelKind::P2 => {
                let mut tables = PulseTables::new(config.pulse_duty, config.sample_rate);
                for note in &channel.notes {
                    render_pulse(piece, note, gain, config, &mut tables, &mut samples);
                }
            }
            ChannelKind::TR => {
                for note in &channel.notes {
                    render_triangle(piece, note, gain, config, &mut samples);
                }
            }
            ChannelKind::NO => {
                for note in &channel.notes {
                    render_noise(piece, note, gain, config, &mut samples);
                }
            }
        }
    }
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    AudioBuffer::new(samples, config.sample_rate)
}

/// Render and mix all four voices, peak-normalized to [`MIX_PEAK`] when
/// the mix is nonzero.
pub fn render_piece(piece: &SymbolicPiece, config: &SynthConfig) -> AudioBuffer {
    let len = buffer_len(piece.duration_seconds(), config);
    let mut mix = vec![0.0f32; len];
    for kind in ChannelKind::ALL {
        let rendered = render_channel(piece, kind, config);
        for (acc, s) in mix.iter_mut().zip(rendered.samples.iter()) {
            *acc += *s;
        }
    }
    let peak = mix.iter().fold(0.0f32, |acc, s| acc.max(s.abs()));
    if peak > 0.0 {
        let scale = MIX_PEAK / peak;
        for s in &mut mix {
            *s *= scale;
        }
    }
    AudioBuffer::new(mix, config.sample_rate)
}

/// Sample span and envelope of one note: exponentially decaying level
/// over the note body, then a linear release.
struct NoteSpan {
    start: usize,
    off: usize,
    end: usize,
    decay_per_sample: f64,
}

fn note_span(piece: &SymbolicPiece, note: &crate::symbolic::NoteEvent, config: &SynthConfig, buffer_len: usize) -> NoteSpan {
    let sr = config.sample_rate as f64;
    let on_s = piece.seconds_at_tick(note.onset);
    let off_s = piece.seconds_at_tick(note.end());
    let start = ((on_s * sr).round() as usize).min(buffer_len);
    let off = ((off_s * sr).round() as usize).min(buffer_len);
    let end = (((off_s + config.release) * sr).round() as usize).min(buffer_len);
    NoteSpan {
        start,
        off,
        end,
        decay_per_sample: config.note_decay / sr,
    }
}

fn envelope(span: &NoteSpan, i: usize) -> f32 {
    let body = (-span.decay_per_sample * (i.min(span.off) - span.start) as f64).exp() as f32;
    if i < span.off {
        body
    } else if span.end > span.off {
        body * (1.0 - (i - span.off) as f32 / (span.end - span.off) as f32)
    } else {
        0.0
    }
}

/// Band-limited pulse wavetables, one per pitch, shared across the notes
/// of a channel render.
struct PulseTables {
    duty: f32,
    sample_rate: u32,
    tables: HashMap<u8, Vec<f32>>,
}

const PULSE_TABLE_LEN: usize = 2048;

impl PulseTables {
    fn new(duty: f32, sample_rate: u32) -> PulseTables {
        PulseTables {
            duty,
            sample_rate,
            tables: HashMap::new(),
        }
    }

    fn table(&mut self, pitch: u8) -> &[f32] {
        let duty = self.duty as f64;
        let sample_rate = self.sample_rate;
        self.tables.entry(pitch).or_insert_with(|| {
            let freq = pitch_to_hz(pitch);
            let harmonics = ((sample_rate as f64 / 2.0) / freq).floor() as usize;
            let mut table = vec![0.0f32; PULSE_TABLE_LEN];
            for k in 1..=harmonics {
                let amp = 2.0 / (k as f64 * std::f64::consts::PI)
                    * (std::f64::consts::PI * k as f64 * duty).sin();
                if amp == 0.0 {
                    continue;
                }
                for (i, slot) in table.iter_mut().enumerate() {
                    let phase = i as f64 / PULSE_TABLE_LEN as f64;
                    *slot += (amp * (2.0 * std::f64::consts::PI * k as f64 * phase).cos()) as f32;
                }
            }
            table
        })
    }
}

fn render_pulse(
    piece: &SymbolicPiece,
    note: &crate::symbolic::NoteEvent,
    gain: f32,
    config: &SynthConfig,
    tables: &mut PulseTables,
    out: &mut [f32],
) {
    let span = note_span(piece, note, config, out.len());
    let table = tables.table(note.pitch);
    let amp = gain * note.velocity as f32 / 127.0;
    let step = pitch_to_hz(note.pitch) / config.sample_rate as f64;
    let mut phase = 0.0f64;
    for i in span.start..span.end {
        let pos = phase * PULSE_TABLE_LEN as f64;
        let idx = pos as usize;
        let frac = (pos - idx as f64) as f32;
        let a = table[idx % PULSE_TABLE_LEN];
        let b = table[(idx + 1) % PULSE_TABLE_LEN];
        out[i] += amp * envelope(&span, i) * (a + (b - a) * frac);
        phase += step;
        if phase >= 1.0 {
            phase -= 1.0;
        }
    }
}

fn render_triangle(
    piece: &SymbolicPiece,
    note: &crate::symbolic::NoteEvent,
    gain: f32,
    config: &SynthConfig,
    out: &mut [f32],
) {
    let span = note_span(piece, note, config, out.len());
    let amp = gain * note.velocity as f32 / 127.0;
    let step = pitch_to_hz(note.pitch) / config.sample_rate as f64;
    let mut phase = 0.0f64;
    for i in span.start..span.end {
        let slot = ((phase * 32.0) as usize).min(31);
        let value = TRIANGLE_STEPS[slot] as f32 / 7.5 - 1.0;
        out[i] += amp * envelope(&span, i) * value;
        phase += step;
        if phase >= 1.0 {
            phase -= 1.0;
        }
    }
}

fn render_noise(
    piece: &SymbolicPiece,
    note: &crate::symbolic::NoteEvent,
    gain: f32,
    config: &SynthConfig,
    out: &mut [f32],
) {
    let span = note_span(piece, note, config, out.len());
    let amp = gain * note.velocity as f32 / 127.0;
    let period = NOISE_PERIODS[note.pitch as usize % 16] as f64;
    let steps_per_sample = CPU_HZ / (period * config.sample_rate as f64);
    // Constant seed keeps renders bit-identical.
    let mut lfsr: u16 = 1;
    let mut acc = 0.0f64;
    for i in span.start..span.end {
        acc += steps_per_sample;
        while acc >= 1.0 {
            let feedback = (lfsr ^ (lfsr >> 1)) & 1;
            lfsr = (lfsr >> 1) | (feedback << 14);
            acc -= 1.0;
        }
        let value = if lfsr & 1 == 1 { 1.0 } else { -1.0 };
        out[i] += amp * envelope(&span, i) * value;
    }
}
