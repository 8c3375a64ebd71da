//! Seeded generators for synthetic corpora: four-voice pieces for index
//! and metric exercises, plus sound-effect-style interference for
//! robustness checks. Same seed, same output.

use crate::audio::AudioBuffer;
use crate::symbolic::{ChannelKind, NoteEvent, SymbolicPiece, TempoMap};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Ticks per quarter used by generated pieces; 480 divides cleanly into
/// sixteenths.
pub const GEN_TPQ: u32 = 480;
const SIXTEENTH: u64 = (GEN_TPQ / 4) as u64;

/// Deterministic generator of musical-ish four-voice pieces.
pub struct PieceGen {
    rng: ChaCha8Rng,
}

impl PieceGen {
    pub fn new(seed: u64) -> PieceGen {
        PieceGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A piece lasting at least `min_seconds`: independent random walks
    /// on every voice so pieces do not loop (periodic material would
    /// make excerpts ambiguous against their own repeats). All onsets
    /// and durations sit on the sixteenth grid.
    pub fn piece(&mut self, min_seconds: f64) -> SymbolicPiece {
        let rng = &mut self.rng;
        // Continuous tempo draw: shared tempo grids across pieces would
        // make their landmark deltas collide.
        let us_per_quarter = rng.gen_range(360_000..=625_000) as f64;
        let mut piece = SymbolicPiece::new(GEN_TPQ, TempoMap::constant(us_per_quarter));

        let seconds_per_bar = 4.0 * us_per_quarter / 1e6;
        let bars = (min_seconds / seconds_per_bar).ceil() as u64 + 1;
        let end = bars * 16 * SIXTEENTH;

        let root = rng.gen_range(40..=70u8);
        let scale: [u8; 7] = *[
            [0, 2, 4, 5, 7, 9, 11], // major
            [0, 2, 3, 5, 7, 8, 10], // natural minor
            [0, 2, 3, 5, 7, 8, 11], // harmonic minor
            [0, 2, 3, 5, 7, 9, 10], // dorian
            [0, 2, 4, 5, 7, 9, 10], // mixolydian
            [0, 1, 3, 5, 7, 8, 10], // phrygian
            [0, 2, 4, 6, 8, 10, 11], // whole-tone flavored
            [0, 3, 5, 6, 7, 10, 11], // blues flavored
        ]
        .choose(rng)
        .unwrap();
        let pitch_at = |degree: i32, base: u8| -> u8 {
            let octave = degree.div_euclid(7);
            let step = scale[degree.rem_euclid(7) as usize];
            (base as i32 + 12 * octave + step as i32).clamp(24, 108) as u8
        };

        // Melody: fast walk over two octaves with rests.
        let mut degree: i32 = rng.gen_range(7..14);
        let mut tick = 0u64;
        while tick < end {
            let slots = *[1u64, 2, 2, 3, 4].choose(rng).unwrap();
            let dur = slots * SIXTEENTH;
            if rng.gen_bool(0.9) {
                degree = (degree + rng.gen_range(-3..=3)).clamp(0, 20);
                piece.channel_mut(ChannelKind::P1).notes.push(NoteEvent::new(
                    tick,
                    dur,
                    pitch_at(degree, root),
                    rng.gen_range(70..=120),
                ));
            }
            tick += dur;
        }

        // Counter-melody: slower walk an octave down, sparser.
        let mut degree: i32 = rng.gen_range(0..7);
        let mut tick = 0u64;
        while tick < end {
            let slots = *[2u64, 4, 4, 6, 8].choose(rng).unwrap();
            let dur = slots * SIXTEENTH;
            if rng.gen_bool(0.75) {
                degree = (degree + rng.gen_range(-2..=2)).clamp(0, 13);
                piece.channel_mut(ChannelKind::P2).notes.push(NoteEvent::new(
                    tick,
                    dur,
                    pitch_at(degree, root - 12),
                    rng.gen_range(60..=105),
                ));
            }
            tick += dur;
        }

        // Bass: low walk with octave jumps.
        let mut degree: i32 = rng.gen_range(0..7);
        let mut tick = 0u64;
        while tick < end {
            let slots = *[4u64, 4, 8, 12].choose(rng).unwrap();
            let dur = slots * SIXTEENTH;
            degree = (degree + *[-4, -2, -1, 1, 2, 4, 7, -7].choose(rng).unwrap()).clamp(-7, 10);
            piece.channel_mut(ChannelKind::TR).notes.push(NoteEvent::new(
                tick,
                dur,
                pitch_at(degree, root - 24),
                rng.gen_range(80..=127),
            ));
            tick += dur;
        }

        // Percussion: per-bar density, random periods.
        let mut tick = 0u64;
        while tick < end {
            let hit_chance = rng.gen_range(0.2..0.7);
            let bar_end = tick + 16 * SIXTEENTH;
            while tick < bar_end.min(end) {
                if rng.gen_bool(hit_chance) {
                    piece.channel_mut(ChannelKind::NO).notes.push(NoteEvent::new(
                        tick,
                        SIXTEENTH,
                        rng.gen_range(0..16u8),
                        rng.gen_range(60..=110),
                    ));
                }
                tick += 2 * SIXTEENTH;
            }
        }

        for channel in piece.channels.iter_mut() {
            channel.resort();
        }
        piece
    }
}

/// Sound-effect-style interference: square-wave bleeps over white-noise
/// bursts, the kind of audio that rides on top of game music.
pub fn interference(seed: u64, seconds: f64, sample_rate: u32) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_F00D);
    let n = (seconds * sample_rate as f64).round() as usize;
    let mut samples = vec![0.0f32; n];

    // Bleeps: short square tones at random frequencies.
    let mut t = 0usize;
    while t < n {
        t += (rng.gen_range(0.05..0.5) * sample_rate as f64) as usize;
        let dur = (rng.gen_range(0.04..0.3) * sample_rate as f64) as usize;
        let freq = rng.gen_range(200.0..4000.0f64);
        let amp = rng.gen_range(0.3..0.9f32);
        let period = sample_rate as f64 / freq;
        for i in t..(t + dur).min(n) {
            let phase = (i - t) as f64 / period;
            let value = if phase.fract() < 0.5 { amp } else { -amp };
            samples[i] += value;
        }
        t += dur;
    }

    // Noise bursts.
    let mut t = 0usize;
    while t < n {
        t += (rng.gen_range(0.2..1.0) * sample_rate as f64) as usize;
        let dur = (rng.gen_range(0.03..0.25) * sample_rate as f64) as usize;
        let amp = rng.gen_range(0.2..0.6f32);
        for i in t..(t + dur).min(n) {
            samples[i] += amp * rng.gen_range(-1.0..1.0f32);
        }
        t += dur;
    }

    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    AudioBuffer::new(samples, sample_rate)
}

/// Mix interference into a signal at the requested signal-to-noise
/// ratio (in dB, measured over the whole clip), rescaling the result
/// when the sum leaves [-1, 1].
pub fn mix_at_snr(signal: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> AudioBuffer {
    assert_eq!(signal.sample_rate, noise.sample_rate);
    let signal_power = signal.rms().powi(2);
    let noise_power = noise.rms().powi(2);
    let scale = if noise_power > 0.0 && signal_power > 0.0 {
        (signal_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt() as f32
    } else {
        1.0
    };
    let mut samples: Vec<f32> = signal
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| s + scale * noise.samples.get(i).copied().unwrap_or(0.0))
        .collect();
    let peak = samples.iter().fold(0.0f32, |acc, s| acc.max(s.abs()));
    if peak > 1.0 {
        for s in &mut samples {
            *s /= peak;
        }
    }
    AudioBuffer::new(samples, signal.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_piece() {
        let a = PieceGen::new(7).piece(30.0);
        let b = PieceGen::new(7).piece(30.0);
        assert_eq!(a, b);
        assert_ne!(a, PieceGen::new(8).piece(30.0));
    }

    #[test]
    fn generated_pieces_meet_the_duration_floor() {
        for seed in 0..5 {
            let piece = PieceGen::new(seed).piece(30.0);
            assert!(piece.duration_seconds() >= 30.0, "seed {seed}");
            for kind in ChannelKind::ALL {
                assert!(!piece.channel(kind).is_empty(), "seed {seed} {kind}");
            }
        }
    }

    #[test]
    fn interference_is_deterministic_and_bounded() {
        let a = interference(3, 5.0, 22_050);
        let b = interference(3, 5.0, 22_050);
        assert_eq!(a, b);
        assert!(a.peak() <= 1.0);
        assert!(a.rms() > 0.0);
    }

    #[test]
    fn snr_mix_hits_the_requested_ratio_before_rescale() {
        let signal = interference(1, 5.0, 22_050);
        let noise = interference(2, 5.0, 22_050);
        let mixed = mix_at_snr(&signal, &noise, 0.0);
        assert_eq!(mixed.len(), signal.len());
        assert!(mixed.peak() <= 1.0 + 1e-6);
    }
}
