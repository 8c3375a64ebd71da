//! Property tests of the model-level laws: serialization fixed points,
//! normalization idempotence, augmentation monotonicity, and tokenizer
//! normal forms over randomized pieces.

use nesvm_core::symbolic::ops::{augment, normalize_monophony, TieBreak};
use nesvm_core::symbolic::smf::{parse_midi, write_midi};
use nesvm_core::symbolic::{ChannelKind, NoteEvent, SymbolicPiece, TempoMap};
use nesvm_core::tokenizer;
use proptest::prelude::*;

fn arb_piece() -> impl Strategy<Value = SymbolicPiece> {
    let note = (0u64..4000, 1u64..800, 0u8..=127, 1u8..=127)
        .prop_map(|(onset, duration, pitch, velocity)| NoteEvent::new(onset, duration, pitch, velocity));
    let channel_notes = prop::collection::vec(note, 0..12);
    (
        prop::collection::vec(channel_notes, 4..=4),
        120u32..=960,
        400_000u32..=1_200_000,
    )
        .prop_map(|(channels, tpq, uspq)| {
            let mut piece = SymbolicPiece::new(tpq, TempoMap::constant(uspq as f64));
            for (kind, notes) in ChannelKind::ALL.iter().zip(channels) {
                piece.channel_mut(*kind).notes = notes;
                piece.channel_mut(*kind).resort();
            }
            piece
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// parse(write(.)) is a fixed point on the parse image.
    #[test]
    fn parse_write_parse_fixed_point(piece in arb_piece()) {
        let image = parse_midi(&write_midi(&piece)).unwrap();
        let again = parse_midi(&write_midi(&image)).unwrap();
        prop_assert_eq!(again, image);
    }

    #[test]
    fn normalize_monophony_is_idempotent(piece in arb_piece()) {
        for tie in [TieBreak::HigherPitch, TieBreak::LowerPitch] {
            let once = normalize_monophony(&piece, tie);
            prop_assert_eq!(normalize_monophony(&once, tie), once);
        }
    }

    #[test]
    fn normalized_melodic_channels_never_overlap(piece in arb_piece()) {
        let normalized = normalize_monophony(&piece, TieBreak::default());
        for kind in [ChannelKind::P1, ChannelKind::P2, ChannelKind::TR] {
            for pair in normalized.channel(kind).notes.windows(2) {
                prop_assert!(pair[0].end() <= pair[1].onset, "{kind}: {pair:?}");
            }
        }
        // Noise voice untouched.
        prop_assert_eq!(
            &normalized.channel(ChannelKind::NO).notes,
            &piece.channel(ChannelKind::NO).notes
        );
    }

    #[test]
    fn augmentation_laws(piece in arb_piece()) {
        let variants = augment(&piece);
        prop_assert_eq!(variants.len(), 108);
        prop_assert!(variants.iter().any(|v| *v == piece), "identity variant present");
        for variant in &variants {
            prop_assert!(variant.note_count() <= piece.note_count());
            for channel in &variant.channels {
                for note in &channel.notes {
                    prop_assert!((1..=127).contains(&note.velocity));
                }
            }
        }
    }

    #[test]
    fn filter_is_idempotent_on_random_pieces(pieces in prop::collection::vec(arb_piece(), 0..6)) {
        use nesvm_core::symbolic::ops::filter_complete_pieces;
        let once = filter_complete_pieces(pieces);
        let twice = filter_complete_pieces(once.clone());
        prop_assert_eq!(twice, once);
    }

    /// encode -> decode -> encode is the tokenizer's normal form.
    #[test]
    fn tokenizer_normal_form(piece in arb_piece()) {
        let first = tokenizer::encode(&piece).unwrap();
        let cycled = tokenizer::encode(&tokenizer::decode(&first).unwrap()).unwrap();
        prop_assert_eq!(cycled, first);
    }
}
