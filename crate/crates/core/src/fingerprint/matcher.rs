//! Query matching: offset-aligned vote accumulation over hash
//! collisions.

use super::hash::Fingerprint;
use super::index::{FingerprintError, FingerprintIndex, FingerprintParams};
use crate::audio::AudioBuffer;
use std::collections::HashMap;

/// Acceptance thresholds for a match. With `reject` off, the best bin
/// always wins, however weak (the permissive argmax behavior).
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPolicy {
    pub min_matches: u32,
    pub min_confidence: f64,
    pub reject: bool,
}

impl Default for MatchPolicy {
    fn default() -> MatchPolicy {
        MatchPolicy {
            min_matches: 10,
            min_confidence: 0.01,
            reject: true,
        }
    }
}

impl MatchPolicy {
    pub fn permissive() -> MatchPolicy {
        MatchPolicy {
            reject: false,
            ..MatchPolicy::default()
        }
    }
}

/// Outcome of one query against one index.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Winning piece, or none when the query was rejected.
    pub piece_id: Option<String>,
    /// Database frame minus query frame for the winning bin.
    pub aligned_offset_frames: i64,
    /// Votes in the winning bin.
    pub aligned_matches: u32,
    /// Votes in the second-best bin (0 when there is none).
    pub runner_up_matches: u32,
    pub query_hash_count: u32,
    /// `aligned_matches / max(query_hash_count, 1)`.
    pub confidence: f64,
}

impl MatchResult {
    fn rejected(query_hash_count: u32) -> MatchResult {
        MatchResult {
            piece_id: None,
            aligned_offset_frames: 0,
            aligned_matches: 0,
            runner_up_matches: 0,
            query_hash_count,
            confidence: 0.0,
        }
    }
}

/// Match a query buffer against an index built with equal parameters.
///
/// Every hash collision votes in a bin keyed by (piece, database anchor
/// minus query anchor); the fullest bin wins, ties broken by smaller
/// piece id then smaller offset. Queries whose best bin fails the
/// policy thresholds come back with `piece_id: None`.
pub fn match_query(
    index: &FingerprintIndex,
    query: &AudioBuffer,
    params: &FingerprintParams,
    policy: &MatchPolicy,
) -> Result<MatchResult, FingerprintError> {
    if *params != index.params {
        return Err(FingerprintError::ParamMismatch(format!(
            "query {params:?} vs index {:?}",
            index.params
        )));
    }
    let fingerprints = params.fingerprint(query)?;
    Ok(match_fingerprints(index, &fingerprints, policy))
}

/// Vote accumulation over precomputed query fingerprints.
pub fn match_fingerprints(
    index: &FingerprintIndex,
    fingerprints: &[Fingerprint],
    policy: &MatchPolicy,
) -> MatchResult {
    let query_hash_count = fingerprints.len() as u32;
    let mut bins: HashMap<(u32, i64), u32> = HashMap::new();
    for fp in fingerprints {
        if let Some(postings) = index.postings(fp.hash) {
            for posting in postings {
                let offset = posting.anchor_frame as i64 - fp.anchor_frame as i64;
                *bins.entry((posting.piece, offset)).or_insert(0) += 1;
            }
        }
    }
    if bins.is_empty() {
        return MatchResult::rejected(query_hash_count);
    }

    // Total order: more votes first, then smaller piece id, then smaller
    // offset, so the winner is independent of map iteration order.
    let better = |a: &((u32, i64), u32), b: &((u32, i64), u32)| -> bool {
        let ((piece_a, offset_a), votes_a) = a;
        let ((piece_b, offset_b), votes_b) = b;
        votes_a
            .cmp(votes_b)
            .then_with(|| index.piece_name(*piece_b).cmp(index.piece_name(*piece_a)))
            .then_with(|| offset_b.cmp(offset_a))
            .is_gt()
    };
    let mut best: Option<((u32, i64), u32)> = None;
    let mut second: Option<((u32, i64), u32)> = None;
    for entry in bins.into_iter() {
        match &best {
            Some(current_best) if !better(&entry, current_best) => {
                if second.as_ref().is_none_or(|s| better(&entry, s)) {
                    second = Some(entry);
                }
            }
            _ => {
                second = best.take();
                best = Some(entry);
            }
        }
    }

    let ((piece, offset), votes) = best.expect("bins checked non-empty");
    let confidence = votes as f64 / query_hash_count.max(1) as f64;
    let accepted =
        !policy.reject || (votes >= policy.min_matches && confidence >= policy.min_confidence);
    MatchResult {
        piece_id: accepted.then(|| index.piece_name(piece).to_string()),
        aligned_offset_frames: offset,
        aligned_matches: votes,
        runner_up_matches: second.map(|(_, v)| v).unwrap_or(0),
        query_hash_count,
        confidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::index::FingerprintIndex;
    use crate::procgen::{interference, PieceGen};
    use crate::synth::{render_piece, SynthConfig};
    use rayon::prelude::*;

    const SR: u32 = 22_050;

    fn corpus(count: u64) -> Vec<(String, AudioBuffer)> {
        let synth = SynthConfig::with_sample_rate(SR);
        (0..count)
            .map(|seed| {
                let piece = PieceGen::new(seed).piece(35.0);
                (format!("piece-{seed:03}"), render_piece(&piece, &synth))
            })
            .collect()
    }

    fn excerpt(audio: &AudioBuffer, start_s: f64, len_s: f64) -> AudioBuffer {
        audio.slice(
            (start_s * SR as f64) as usize,
            (len_s * SR as f64) as usize,
        )
    }

    #[test]
    fn clean_excerpt_retrieves_its_piece_with_aligned_offset() {
        let params = FingerprintParams::at_sample_rate(SR);
        let renders = corpus(6);
        let index = FingerprintIndex::build("game", &renders, &params).unwrap();

        let start_s = 12.0;
        let query = excerpt(&renders[3].1, start_s, 15.0);
        let result = match_query(&index, &query, &params, &MatchPolicy::default()).unwrap();
        assert_eq!(result.piece_id.as_deref(), Some("piece-003"));
        let expected_frames = (start_s * SR as f64 / params.hop as f64).round() as i64;
        assert!(
            (result.aligned_offset_frames - expected_frames).abs() <= 1,
            "offset {} vs expected {expected_frames}",
            result.aligned_offset_frames
        );
        assert!(result.aligned_matches > result.runner_up_matches);
        assert!(result.confidence > 0.0 && result.confidence <= 1.0);
        assert!(result.aligned_matches <= result.query_hash_count);
    }

    #[test]
    fn short_clean_excerpts_always_win_their_piece() {
        let params = FingerprintParams::at_sample_rate(SR);
        let renders = corpus(5);
        let index = FingerprintIndex::build("game", &renders, &params).unwrap();
        for (i, (name, audio)) in renders.iter().enumerate() {
            let query = excerpt(audio, 3.0 + i as f64, 5.0);
            let result = match_query(&index, &query, &params, &MatchPolicy::default()).unwrap();
            assert_eq!(result.piece_id.as_deref(), Some(name.as_str()));
            assert!(result.aligned_matches > result.runner_up_matches);
        }
    }

    #[test]
    fn interference_only_queries_are_rejected() {
        let params = FingerprintParams::at_sample_rate(SR);
        let index = FingerprintIndex::build("game", &corpus(5), &params).unwrap();
        let mut rejections = 0;
        for seed in 0..20 {
            let noise = interference(seed, 15.0, SR);
            let result = match_query(&index, &noise, &params, &MatchPolicy::default()).unwrap();
            if result.piece_id.is_none() {
                rejections += 1;
            }
        }
        assert!(rejections >= 16, "only {rejections}/20 rejected");
    }

    #[test]
    fn permissive_policy_always_reports_a_best_effort_piece() {
        let params = FingerprintParams::at_sample_rate(SR);
        let index = FingerprintIndex::build("game", &corpus(3), &params).unwrap();
        let mut named = 0;
        for seed in 0..5 {
            let noise = interference(seed, 15.0, SR);
            let result = match_query(&index, &noise, &params, &MatchPolicy::permissive()).unwrap();
            if result.piece_id.is_some() {
                named += 1;
            }
        }
        // Square bleeps collide with some pulse-wave landmark somewhere.
        assert!(named >= 4, "permissive mode named only {named}/5");
    }

    #[test]
    fn equal_vote_ties_break_toward_smaller_piece_id() {
        let params = FingerprintParams::at_sample_rate(SR);
        let audio = corpus(1).remove(0).1;
        // Build order is not lexicographic; the tie must go to "alpha".
        let renders = vec![
            ("beta".to_string(), audio.clone()),
            ("alpha".to_string(), audio.clone()),
        ];
        let index = FingerprintIndex::build("game", &renders, &params).unwrap();
        let query = excerpt(&audio, 5.0, 10.0);
        let result = match_query(&index, &query, &params, &MatchPolicy::default()).unwrap();
        assert_eq!(result.piece_id.as_deref(), Some("alpha"));
        assert_eq!(result.aligned_matches, result.runner_up_matches);
    }

    #[test]
    fn parameter_mismatch_is_an_error() {
        let params = FingerprintParams::at_sample_rate(SR);
        let index = FingerprintIndex::build("game", &corpus(1), &params).unwrap();
        let query = AudioBuffer::silence(SR as usize, SR);
        let mut other = params.clone();
        other.fan_out += 1;
        let err = match_query(&index, &query, &other, &MatchPolicy::default()).unwrap_err();
        assert!(matches!(err, FingerprintError::ParamMismatch(_)));
    }

    #[test]
    fn concurrent_queries_equal_serial_results() {
        let params = FingerprintParams::at_sample_rate(SR);
        let renders = corpus(4);
        let index = FingerprintIndex::build("game", &renders, &params).unwrap();
        let queries: Vec<AudioBuffer> = (0..8)
            .map(|i| excerpt(&renders[i % renders.len()].1, 2.0 + i as f64, 10.0))
            .collect();
        let serial: Vec<MatchResult> = queries
            .iter()
            .map(|q| match_query(&index, q, &params, &MatchPolicy::default()).unwrap())
            .collect();
        let parallel: Vec<MatchResult> = queries
            .par_iter()
            .map(|q| match_query(&index, q, &params, &MatchPolicy::default()).unwrap())
            .collect();
        assert_eq!(serial, parallel);
    }
}
