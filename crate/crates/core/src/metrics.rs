//! Objective structure metrics over symbolic pieces, and side-by-side
//! corpus comparison reports.
//!
//! Five metrics: grooving pattern similarity (rhythmic consistency of
//! neighboring bars), number of unique pitch classes, pitch class
//! histogram entropy (base 2), pitch range, and mean notes sounding
//! concurrently. Pitch-based metrics cover the melodic voices only (the
//! noise voice's "pitch" selects a timer period); groove and polyphony
//! take all four voices. A metric that is undefined for a piece (no
//! melodic notes, fewer than two bars) is reported absent and excluded
//! from corpus means.

use crate::symbolic::{sixteenth_len, sixteenth_slot, ChannelKind, SymbolicPiece};
use thiserror::Error;

/// Sixteenth slots per bar; the grid assumes 4/4.
pub const SLOTS_PER_BAR: u64 = 16;

const MELODIC: [ChannelKind; 3] = [ChannelKind::P1, ChannelKind::P2, ChannelKind::TR];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("piece set {0:?} is empty")]
    EmptySet(String),
}

/// The five structure metrics of one piece; `None` marks a metric that
/// is undefined for it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub groove_similarity: Option<f64>,
    pub unique_pitch_classes: Option<f64>,
    pub pitch_class_entropy: Option<f64>,
    pub pitch_range: Option<f64>,
    pub polyphony: Option<f64>,
}

pub fn piece_metrics(piece: &SymbolicPiece) -> MetricsReport {
    MetricsReport {
        groove_similarity: grooving_similarity(piece),
        unique_pitch_classes: unique_pitch_classes(piece),
        pitch_class_entropy: pitch_class_entropy(piece),
        pitch_range: pitch_range(piece),
        polyphony: polyphony(piece),
    }
}

/// Shannon entropy (bits) of the normalized pitch-class histogram of
/// melodic note onsets. `None` without melodic notes.
pub fn pitch_class_entropy(piece: &SymbolicPiece) -> Option<f64> {
    let mut counts = [0u64; 12];
    for kind in MELODIC {
        for note in &piece.channel(kind).notes {
            counts[note.pitch_class() as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let mut entropy = 0.0;
    for count in counts {
        if count > 0 {
            let p = count as f64 / total as f64;
            entropy -= p * p.log2();
        }
    }
    Some(entropy)
}

/// Mean similarity of neighboring bars' 16-slot binary onset vectors:
/// `1 - hamming/16` per pair. `None` with fewer than two bars.
pub fn grooving_similarity(piece: &SymbolicPiece) -> Option<f64> {
    let bars = onset_bars(piece)?;
    if bars.len() < 2 {
        return None;
    }
    let total: f64 = bars
        .windows(2)
        .map(|pair| 1.0 - (pair[0] ^ pair[1]).count_ones() as f64 / SLOTS_PER_BAR as f64)
        .sum();
    Some(total / (bars.len() - 1) as f64)
}

/// Binary onset vector per bar (bit = any-channel onset in the slot),
/// covering bar 0 through the bar of the last onset.
fn onset_bars(piece: &SymbolicPiece) -> Option<Vec<u16>> {
    let mut last_slot = None;
    for channel in &piece.channels {
        for note in &channel.notes {
            let slot = sixteenth_slot(note.onset, piece.ticks_per_quarter);
            last_slot = Some(last_slot.map_or(slot, |l: u64| l.max(slot)));
        }
    }
    let last_slot = last_slot?;
    let mut bars = vec![0u16; (last_slot / SLOTS_PER_BAR + 1) as usize];
    for channel in &piece.channels {
        for note in &channel.notes {
            let slot = sixteenth_slot(note.onset, piece.ticks_per_quarter);
            bars[(slot / SLOTS_PER_BAR) as usize] |= 1 << (slot % SLOTS_PER_BAR);
        }
    }
    Some(bars)
}

/// Highest melodic pitch minus lowest. `None` without melodic notes.
pub fn pitch_range(piece: &SymbolicPiece) -> Option<f64> {
    let pitches = melodic_pitches(piece);
    let max = pitches.iter().max()?;
    let min = pitches.iter().min()?;
    Some((max - min) as f64)
}

/// Count of distinct pitch classes among melodic notes.
pub fn unique_pitch_classes(piece: &SymbolicPiece) -> Option<f64> {
    let pitches = melodic_pitches(piece);
    if pitches.is_empty() {
        return None;
    }
    let mut seen = [false; 12];
    for pitch in pitches {
        seen[(pitch % 12) as usize] = true;
    }
    Some(seen.iter().filter(|s| **s).count() as f64)
}

fn melodic_pitches(piece: &SymbolicPiece) -> Vec<u8> {
    MELODIC
        .iter()
        .flat_map(|kind| piece.channel(*kind).notes.iter().map(|n| n.pitch))
        .collect()
}

/// Mean number of simultaneously sounding notes (all four voices) over
/// the sixteenth slots where at least one note sounds.
pub fn polyphony(piece: &SymbolicPiece) -> Option<f64> {
    let mut occupancy: Vec<u32> = Vec::new();
    for channel in &piece.channels {
        for note in &channel.notes {
            let start = sixteenth_slot(note.onset, piece.ticks_per_quarter);
            let len = sixteenth_len(note.duration, piece.ticks_per_quarter);
            let end = (start + len) as usize;
            if occupancy.len() < end {
                occupancy.resize(end, 0);
            }
            for slot in &mut occupancy[start as usize..end] {
                *slot += 1;
            }
        }
    }
    let occupied: Vec<u32> = occupancy.into_iter().filter(|c| *c > 0).collect();
    if occupied.is_empty() {
        return None;
    }
    Some(occupied.iter().map(|c| *c as f64).sum::<f64>() / occupied.len() as f64)
}

/// Mean and exclusion counts of one metric over one piece set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub included: usize,
    pub absent: usize,
}

/// Display order of the five metrics in reports.
pub const METRIC_NAMES: [&str; 5] = [
    "Grooving Pattern Similarity",
    "Number of Unique Pitch Classes",
    "Pitch Class Histogram Entropy",
    "Pitch Range",
    "Number of Notes Played Concurrently",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusColumn {
    pub name: String,
    pub piece_count: usize,
    /// One summary per [`METRIC_NAMES`] entry.
    pub metrics: [MetricSummary; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub columns: Vec<CorpusColumn>,
}

/// Per-set means of all five metrics. Pieces with an absent metric are
/// excluded from that metric's mean and counted.
pub fn corpus_report(sets: &[(String, Vec<SymbolicPiece>)]) -> Result<CorpusReport, MetricsError> {
    let mut columns = Vec::with_capacity(sets.len());
    for (name, pieces) in sets {
        if pieces.is_empty() {
            return Err(MetricsError::EmptySet(name.clone()));
        }
        let reports: Vec<MetricsReport> = pieces.iter().map(piece_metrics).collect();
        let summarize = |select: fn(&MetricsReport) -> Option<f64>| {
            let values: Vec<f64> = reports.iter().filter_map(select).collect();
            MetricSummary {
                mean: if values.is_empty() {
                    None
                } else {
                    Some(values.iter().sum::<f64>() / values.len() as f64)
                },
                included: values.len(),
                absent: reports.len() - values.len(),
            }
        };
        columns.push(CorpusColumn {
            name: name.clone(),
            piece_count: pieces.len(),
            metrics: [
                summarize(|r| r.groove_similarity),
                summarize(|r| r.unique_pitch_classes),
                summarize(|r| r.pitch_class_entropy),
                summarize(|r| r.pitch_range),
                summarize(|r| r.polyphony),
            ],
        });
    }
    Ok(CorpusReport { columns })
}

impl CorpusReport {
    /// Aligned text table, one metric per row, one set per column.
    pub fn render_text(&self) -> String {
        let name_width = METRIC_NAMES.iter().map(|n| n.len()).max().unwrap_or(0);
        let col_width = self
            .columns
            .iter()
            .map(|c| c.name.len().max(10))
            .max()
            .unwrap_or(10);
        let mut out = String::new();
        out.push_str(&format!("{:name_width$}", "Metric"));
        for column in &self.columns {
            out.push_str(&format!("  {:>col_width$}", column.name));
        }
        out.push('\n');
        for (i, metric_name) in METRIC_NAMES.iter().enumerate() {
            out.push_str(&format!("{metric_name:name_width$}"));
            for column in &self.columns {
                match column.metrics[i].mean {
                    Some(mean) => out.push_str(&format!("  {mean:>col_width$.3}")),
                    None => out.push_str(&format!("  {:>col_width$}", "-")),
                }
            }
            out.push('\n');
        }
        for column in &self.columns {
            for (i, summary) in column.metrics.iter().enumerate() {
                if summary.absent > 0 {
                    out.push_str(&format!(
                        "note: {}: {} of {} pieces in {} undefined, excluded\n",
                        METRIC_NAMES[i], summary.absent, column.piece_count, column.name
                    ));
                }
            }
        }
        out
    }

    /// Machine-readable rows: `set,pieces,metric,mean,included,absent`.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("set,pieces,metric,mean,included,absent\n");
        for column in &self.columns {
            for (i, summary) in column.metrics.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    column.name,
                    column.piece_count,
                    METRIC_NAMES[i],
                    summary.mean.map(|m| format!("{m:.6}")).unwrap_or_default(),
                    summary.included,
                    summary.absent
                ));
            }
        }
        out
    }
}
