//! Combinatorial hashing of peak pairs into packed 32-bit codes.
//!
//! A hash packs the anchor bin (10 bits), the target bin (10 bits), and
//! the frame delta between them (12 bits): `f1 << 22 | f2 << 12 | dt`.
//! Bins above 1023 clamp into the top slot.

use super::peaks::PeakConstellation;

/// Largest bin value representable in 10 bits.
pub const MAX_PACKED_BIN: u32 = 0x3FF;
/// Largest frame delta representable in 12 bits.
pub const MAX_PACKED_DELTA: u32 = 0xFFF;

/// One landmark hash with the frame where its anchor peak sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fingerprint {
    pub hash: u32,
    pub anchor_frame: u32,
}

/// Pack (anchor bin, target bin, frame delta) into 32 bits. Bins clamp
/// to 10 bits; `delta` must fit 12 bits.
pub fn pack_hash(f1: u32, f2: u32, delta: u32) -> u32 {
    debug_assert!((1..=MAX_PACKED_DELTA).contains(&delta));
    (f1.min(MAX_PACKED_BIN) << 22) | (f2.min(MAX_PACKED_BIN) << 12) | delta
}

/// Inverse of [`pack_hash`] over the declared bit ranges.
pub fn unpack_hash(hash: u32) -> (u32, u32, u32) {
    (hash >> 22, (hash >> 12) & MAX_PACKED_BIN, hash & MAX_PACKED_DELTA)
}

/// Right-shift that folds a spectrogram of `window_size/2 + 1` bins
/// into the 10-bit hash field. Distinct peaks of one frame stay
/// distinct after shifting because peak picking keeps them at least a
/// neighborhood radius apart.
pub fn bin_shift_for_window(window_size: u32) -> u32 {
    window_size.ilog2().saturating_sub(11)
}

/// Pair every anchor peak with up to `fan_out` later peaks whose frame
/// delta lies in `1..=max_delta_frames`, in (frame, bin) order. Bins
/// are scaled down by `bin_shift` before packing; the packed delta is
/// the rounded difference of refined peak times, which keeps hashes
/// stable when the analysis grid of a query is offset from the indexed
/// one. The result is deterministic for a fixed constellation.
pub fn hash_constellation(
    peaks: &PeakConstellation,
    fan_out: usize,
    max_delta_frames: usize,
    bin_shift: u32,
) -> Vec<Fingerprint> {
    assert!(fan_out >= 1, "fan_out must be >= 1");
    let max_delta = (max_delta_frames as u32).min(MAX_PACKED_DELTA);
    let peaks = &peaks.peaks;
    let mut fingerprints = Vec::new();
    for (i, anchor) in peaks.iter().enumerate() {
        let mut paired = 0;
        for target in &peaks[i + 1..] {
            if target.frame == anchor.frame {
                continue;
            }
            if target.frame - anchor.frame > max_delta {
                break; // peaks are frame-sorted; later ones only get farther
            }
            let delta = (target.refined_frame - anchor.refined_frame).round() as i64;
            if delta < 1 || delta > max_delta as i64 {
                continue;
            }
            fingerprints.push(Fingerprint {
                hash: pack_hash(anchor.bin >> bin_shift, target.bin >> bin_shift, delta as u32),
                anchor_frame: anchor.frame,
            });
            paired += 1;
            if paired == fan_out {
                break;
            }
        }
    }
    fingerprints
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::peaks::Peak;
    use proptest::prelude::*;

    fn constellation(coords: &[(u32, u32)]) -> PeakConstellation {
        PeakConstellation {
            peaks: coords
                .iter()
                .map(|&(frame, bin)| Peak::at(frame, bin, 20.0))
                .collect(),
        }
    }

    #[test]
    fn two_peaks_make_one_recoverable_fingerprint() {
        let fps = hash_constellation(&constellation(&[(0, 100), (3, 200)]), 15, 200, 0);
        assert_eq!(fps.len(), 1);
        assert_eq!(unpack_hash(fps[0].hash), (100, 200, 3));
        assert_eq!(fps[0].anchor_frame, 0);
    }

    #[test]
    fn fan_out_caps_pairs_per_anchor() {
        let fan_out = 4;
        let mut coords = vec![(0u32, 100u32)];
        for i in 0..fan_out as u32 + 5 {
            coords.push((i + 1, 150 + i));
        }
        let fps = hash_constellation(&constellation(&coords), fan_out, 200, 0);
        let from_first_anchor = fps.iter().filter(|f| f.anchor_frame == 0).count();
        assert_eq!(from_first_anchor, fan_out);
    }

    #[test]
    fn same_frame_peaks_are_skipped_without_consuming_fan_out() {
        let fps = hash_constellation(&constellation(&[(0, 100), (0, 300), (2, 200)]), 1, 200, 0);
        // First anchor skips its same-frame sibling, then pairs with frame 2.
        let first: Vec<_> = fps.iter().filter(|f| f.anchor_frame == 0).collect();
        assert_eq!(first.len(), 2); // one from each of the two frame-0 anchors
        assert_eq!(unpack_hash(first[0].hash), (100, 200, 2));
        assert_eq!(unpack_hash(first[1].hash), (300, 200, 2));
    }

    #[test]
    fn delta_beyond_range_is_dropped() {
        let fps = hash_constellation(&constellation(&[(0, 100), (500, 200)]), 15, 200, 0);
        assert!(fps.is_empty());
    }

    #[test]
    fn hashing_is_deterministic() {
        let c = constellation(&[(0, 10), (1, 900), (5, 40), (9, 1023), (30, 77)]);
        assert_eq!(hash_constellation(&c, 15, 200, 1), hash_constellation(&c, 15, 200, 1));
    }

    #[test]
    fn oversized_bins_clamp_into_ten_bits() {
        let fps = hash_constellation(&constellation(&[(0, 2048), (3, 1500)]), 15, 200, 1);
        assert_eq!(unpack_hash(fps[0].hash), (1023, 750, 3));
    }

    proptest! {
        #[test]
        fn pack_unpack_is_a_bijection(
            f1 in 0u32..=MAX_PACKED_BIN,
            f2 in 0u32..=MAX_PACKED_BIN,
            delta in 1u32..=MAX_PACKED_DELTA,
        ) {
            let hash = pack_hash(f1, f2, delta);
            prop_assert_eq!(unpack_hash(hash), (f1, f2, delta));
        }

        #[test]
        fn distinct_triples_hash_distinctly(
            a in (0u32..=MAX_PACKED_BIN, 0u32..=MAX_PACKED_BIN, 1u32..=MAX_PACKED_DELTA),
            b in (0u32..=MAX_PACKED_BIN, 0u32..=MAX_PACKED_BIN, 1u32..=MAX_PACKED_DELTA),
        ) {
            prop_assert_eq!(a == b, pack_hash(a.0, a.1, a.2) == pack_hash(b.0, b.1, b.2));
        }
    }
}
