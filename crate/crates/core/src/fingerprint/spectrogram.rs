//! Hann-windowed magnitude STFT on a log scale.

use crate::audio::AudioBuffer;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Floor added to squared magnitudes before the log, so digital silence
/// maps to a finite value instead of negative infinity.
pub const LOG_EPSILON: f32 = 1e-10;

/// Log-magnitude spectrogram, row-major `[frame][bin]`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    values: Vec<f32>,
    pub frames: usize,
    pub bins: usize,
    pub window_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn value(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.bins + bin]
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.bins..(frame + 1) * self.bins]
    }

    /// Center frequency of `bin` in Hz.
    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.window_size as f64
    }
}

/// Compute the STFT of `audio`: Hann window, `window_size/2 + 1` bins
/// per frame, `floor((n - window) / hop) + 1` frames, each value scaled
/// as `10 * log10(mag^2 + epsilon)`.
///
/// `window_size` must be a power of two and `0 < hop <= window_size`.
/// Audio shorter than one window yields an empty spectrogram.
pub fn compute_spectrogram(audio: &AudioBuffer, window_size: usize, hop: usize) -> Spectrogram {
    assert!(
        window_size.is_power_of_two() && window_size > 1,
        "window_size must be a power of two, got {window_size}"
    );
    assert!(
        hop > 0 && hop <= window_size,
        "hop must be in 1..={window_size}, got {hop}"
    );

    let bins = window_size / 2 + 1;
    let n = audio.samples.len();
    let frames = if n >= window_size {
        (n - window_size) / hop + 1
    } else {
        0
    };

    let window: Vec<f32> = (0..window_size)
        .map(|i| {
            0.5 - 0.5
                * (2.0 * std::f64::consts::PI * i as f64 / window_size as f64).cos() as f32
        })
        .collect();

    let fft = FftPlanner::new().plan_fft_forward(window_size);
    let mut values = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex::new(0.0f32, 0.0f32); window_size];
    for frame in 0..frames {
        let start = frame * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(audio.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        values.extend(
            buf[..bins]
                .iter()
                .map(|c| 10.0 * (c.norm_sqr() + LOG_EPSILON).log10()),
        );
    }

    Spectrogram {
        values,
        frames,
        bins,
        window_size,
        hop,
        sample_rate: audio.sample_rate,
    }
}
