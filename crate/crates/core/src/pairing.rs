//! End-to-end pipeline: filter and synthesize a game's pieces, build
//! its fingerprint index, match every gameplay clip, and emit the
//! pairing manifest.

use crate::audio::read_wav;
use crate::fingerprint::{match_query, FingerprintError, FingerprintIndex, FingerprintParams, MatchPolicy};
use crate::segment::DEFAULT_CLIP_SECONDS;
use crate::symbolic::ops::{normalize_monophony, TieBreak, COMPLETE_PIECE_MIN_SECONDS};
use crate::symbolic::smf::parse_midi;
use crate::synth::{render_piece, SynthConfig};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("game title is empty")]
    EmptyTitle,
    #[error("no complete pieces in {midi_dir} for game {game_id:?} ({parsed} parsed, {skipped} unreadable)")]
    NoCompletePieces {
        game_id: String,
        midi_dir: String,
        parsed: usize,
        skipped: usize,
    },
    #[error("audit sample of {n} exceeds manifest size {len}")]
    AuditTooLarge { n: usize, len: usize },
    #[error("bad games file {path}, line {line}: {message}")]
    BadGamesFile {
        path: String,
        line: usize,
        message: String,
    },
    #[error("bad manifest {path}, line {line}: {message}")]
    BadManifest {
        path: String,
        line: usize,
        message: String,
    },
    #[error("bad audit worksheet line {line}: {message}")]
    BadWorksheet { line: usize, message: String },
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PairingError + '_ {
    move |source| PairingError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One game's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameEntry {
    pub game_id: String,
    pub title: String,
    pub midi_dir: PathBuf,
    pub clips_dir: PathBuf,
}

/// Long-play search query for a game title.
pub fn longplay_query(game_title: &str) -> Result<String, PairingError> {
    let title = game_title.trim();
    if title.is_empty() {
        return Err(PairingError::EmptyTitle);
    }
    Ok(format!("{title} NES World of Longplay"))
}

/// Everything the pipeline needs to run reproducibly.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub fingerprint: FingerprintParams,
    pub policy: MatchPolicy,
    pub tie_break: TieBreak,
    /// Flag the result ambiguous when the runner-up bin holds at least
    /// `1 - window` of the winner's votes; `None` keeps the pure argmax
    /// behavior.
    pub ambiguity_window: Option<f64>,
    /// Voice gains, duty and release for synthesis; the sample rate
    /// always follows `fingerprint.sample_rate`.
    pub synth: SynthConfig,
}

impl Default for PipelineParams {
    fn default() -> PipelineParams {
        PipelineParams {
            fingerprint: FingerprintParams::default(),
            policy: MatchPolicy::default(),
            tie_break: TieBreak::default(),
            ambiguity_window: Some(0.10),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineParams {
    pub fn at_sample_rate(sample_rate: u32) -> PipelineParams {
        let mut params = PipelineParams::default();
        params.fingerprint.sample_rate = sample_rate;
        params
    }

    fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            sample_rate: self.fingerprint.sample_rate,
            ..self.synth.clone()
        }
    }
}

/// What happened while building one game's index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub game_id: String,
    pub pieces_indexed: usize,
    /// Pieces dropped by the 8-second completeness filter.
    pub filtered_short: usize,
    /// Files that failed to parse, skipped with a warning.
    pub skipped_unreadable: usize,
    pub total_hashes: u64,
    pub index_path: PathBuf,
}

/// Parse, filter, normalize, synthesize and fingerprint every MIDI file
/// under `entry.midi_dir`, persisting the index to
/// `out_dir/{game_id}.nvfp`. Unreadable files are skipped and counted;
/// a game with no surviving piece is an error.
pub fn build_game_db(
    entry: &GameEntry,
    params: &PipelineParams,
    out_dir: &Path,
) -> Result<BuildReport, PairingError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&entry.midi_dir)
        .map_err(io_err(&entry.midi_dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
        })
        .collect();
    paths.sort();

    let mut skipped = 0usize;
    let mut named_pieces = Vec::with_capacity(paths.len());
    for path in &paths {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        match parse_midi(&bytes) {
            Ok(piece) => {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                named_pieces.push((name, piece));
            }
            Err(err) => {
                log::warn!("skipping unreadable {}: {err}", path.display());
                skipped += 1;
            }
        }
    }
    let parsed = named_pieces.len();

    // Same rule as filter_complete_pieces, keeping the name pairing.
    let survivors: Vec<(String, crate::symbolic::SymbolicPiece)> = named_pieces
        .into_iter()
        .filter(|(_, piece)| piece.duration_seconds() > COMPLETE_PIECE_MIN_SECONDS)
        .map(|(name, piece)| (name, normalize_monophony(&piece, params.tie_break)))
        .collect();
    let filtered_short = parsed - survivors.len();
    if survivors.is_empty() {
        return Err(PairingError::NoCompletePieces {
            game_id: entry.game_id.clone(),
            midi_dir: entry.midi_dir.display().to_string(),
            parsed,
            skipped,
        });
    }

    let synth = params.synth_config();
    let renders: Vec<(String, crate::audio::AudioBuffer)> = survivors
        .par_iter()
        .map(|(name, piece)| (name.clone(), render_piece(piece, &synth)))
        .collect();

    let index = FingerprintIndex::build(&entry.game_id, &renders, &params.fingerprint)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let index_path = out_dir.join(format!("{}.nvfp", entry.game_id));
    index.write_to(&index_path)?;

    Ok(BuildReport {
        game_id: entry.game_id.clone(),
        pieces_indexed: index.pieces().len(),
        filtered_short,
        skipped_unreadable: skipped,
        total_hashes: index.pieces().iter().map(|p| p.hash_count).sum(),
        index_path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingStatus {
    Matched,
    NoMatch,
    Ambiguous,
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingRecord {
    pub clip_id: String,
    pub game_id: String,
    pub start_s: f64,
    pub status: PairingStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub piece_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offset_s: Option<f64>,
    pub matches: u32,
    pub confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Match every `.wav` under `clips_dir` (recursively) against the
/// index. Unreadable clips degrade to `no_match` records with a
/// diagnostic note. Records come back sorted by clip id.
pub fn pair_clips(
    index: &FingerprintIndex,
    clips_dir: &Path,
    params: &PipelineParams,
) -> Result<Vec<PairingRecord>, PairingError> {
    let mut clip_paths = Vec::new();
    collect_wavs(clips_dir, &mut clip_paths)?;
    clip_paths.sort();
    let starts = load_clip_starts(clips_dir);

    let game_id = index.game_id.clone();
    let mut records: Vec<PairingRecord> = clip_paths
        .par_iter()
        .map(|path| {
            let clip_id = clip_id_for(clips_dir, path, &game_id);
            let start_s = starts
                .get(&clip_id)
                .copied()
                .unwrap_or_else(|| fallback_start(&clip_id));
            match read_wav(path) {
                Ok(audio) => match match_query(index, &audio, &params.fingerprint, &params.policy)
                {
                    Ok(result) => {
                        let ambiguous = params.ambiguity_window.is_some_and(|window| {
                            result.piece_id.is_some()
                                && result.runner_up_matches as f64
                                    >= (1.0 - window) * result.aligned_matches as f64
                        });
                        let offset_s = params.fingerprint.frames_to_seconds(result.aligned_offset_frames);
                        if let (Some(piece), false) = (&result.piece_id, ambiguous) {
                            PairingRecord {
                                clip_id,
                                game_id: game_id.clone(),
                                start_s,
                                status: PairingStatus::Matched,
                                piece_id: Some(piece.clone()),
                                offset_s: Some(offset_s),
                                matches: result.aligned_matches,
                                confidence: result.confidence,
                                note: None,
                            }
                        } else {
                            PairingRecord {
                                clip_id,
                                game_id: game_id.clone(),
                                start_s,
                                status: if ambiguous {
                                    PairingStatus::Ambiguous
                                } else {
                                    PairingStatus::NoMatch
                                },
                                piece_id: None,
                                offset_s: None,
                                matches: result.aligned_matches,
                                confidence: result.confidence,
                                note: ambiguous.then(|| {
                                    format!(
                                        "top bin {} vs runner-up {} within ambiguity window",
                                        result.aligned_matches, result.runner_up_matches
                                    )
                                }),
                            }
                        }
                    }
                    Err(err) => unreadable_record(clip_id, &game_id, start_s, err.to_string()),
                },
                Err(err) => unreadable_record(clip_id, &game_id, start_s, err.to_string()),
            }
        })
        .collect();
    records.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(records)
}

fn unreadable_record(
    clip_id: String,
    game_id: &str,
    start_s: f64,
    message: String,
) -> PairingRecord {
    PairingRecord {
        clip_id,
        game_id: game_id.to_string(),
        start_s,
        status: PairingStatus::NoMatch,
        piece_id: None,
        offset_s: None,
        matches: 0,
        confidence: 0.0,
        note: Some(message),
    }
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), PairingError> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    Ok(())
}

fn clip_id_for(clips_dir: &Path, path: &Path, game_id: &str) -> String {
    let relative = path
        .strip_prefix(clips_dir)
        .unwrap_or(path)
        .with_extension("");
    let relative = relative.to_string_lossy().replace('\\', "/");
    if relative.contains('/') {
        relative
    } else {
        format!("{game_id}/{relative}")
    }
}

/// Starts recorded by the slicer, when its `clips.jsonl` sits in the
/// clips directory.
fn load_clip_starts(clips_dir: &Path) -> std::collections::HashMap<String, f64> {
    let mut starts = std::collections::HashMap::new();
    let path = clips_dir.join("clips.jsonl");
    if let Ok(file) = std::fs::File::open(path) {
        for line in std::io::BufReader::new(file).lines().map_while(Result::ok) {
            if let Ok(spec) = serde_json::from_str::<crate::segment::ClipSpec>(&line) {
                starts.insert(spec.clip_id, spec.start);
            }
        }
    }
    starts
}

/// Without slicer metadata, derive the start from the clip index in the
/// id, assuming default-length clips.
fn fallback_start(clip_id: &str) -> f64 {
    clip_id
        .rsplit('/')
        .next()
        .and_then(|stem| stem.parse::<u64>().ok())
        .map(|index| index as f64 * DEFAULT_CLIP_SECONDS)
        .unwrap_or(0.0)
}

/// Matched / no-match / ambiguous counts of a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairingSummary {
    pub matched: usize,
    pub no_match: usize,
    pub ambiguous: usize,
}

impl PairingSummary {
    pub fn total(&self) -> usize {
        self.matched + self.no_match + self.ambiguous
    }
}

impl std::fmt::Display for PairingSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} clips: {} matched, {} no_match, {} ambiguous",
            self.total(),
            self.matched,
            self.no_match,
            self.ambiguous
        )
    }
}

pub fn summarize(records: &[PairingRecord]) -> PairingSummary {
    let mut summary = PairingSummary::default();
    for record in records {
        match record.status {
            PairingStatus::Matched => summary.matched += 1,
            PairingStatus::NoMatch => summary.no_match += 1,
            PairingStatus::Ambiguous => summary.ambiguous += 1,
        }
    }
    summary
}

pub fn write_manifest(records: &[PairingRecord], path: &Path) -> Result<(), PairingError> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(out.as_bytes()).map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<PairingRecord>, PairingError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(line).map_err(|e| PairingError::BadManifest {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(records)
}

/// Deterministic audit worksheet: a seeded sample of `n` manifest rows
/// as CSV with a blank verdict column for human annotation.
pub fn audit_sample(
    records: &[PairingRecord],
    n: usize,
    seed: u64,
) -> Result<String, PairingError> {
    if n > records.len() {
        return Err(PairingError::AuditTooLarge {
            n,
            len: records.len(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, records.len(), n).into_vec();
    chosen.sort_unstable();

    let mut out = String::from("clip_id,piece_id,offset_s,confidence,verdict\n");
    for i in chosen {
        let record = &records[i];
        out.push_str(&format!(
            "{},{},{},{:.4},\n",
            record.clip_id,
            record.piece_id.as_deref().unwrap_or(""),
            record
                .offset_s
                .map(|o| format!("{o:.2}"))
                .unwrap_or_default(),
            record.confidence
        ));
    }
    Ok(out)
}

/// Tally of a filled audit worksheet. Verdicts: `correct`, `incorrect`,
/// `sfx_only` (clip has no music to match); blank rows count as
/// unfilled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuditSummary {
    pub correct: usize,
    pub incorrect: usize,
    pub sfx_only: usize,
    pub unfilled: usize,
}

impl AuditSummary {
    /// Accuracy over music-bearing clips.
    pub fn accuracy(&self) -> Option<f64> {
        let judged = self.correct + self.incorrect;
        (judged > 0).then(|| self.correct as f64 / judged as f64)
    }
}

pub fn audit_accuracy(worksheet_csv: &str) -> Result<AuditSummary, PairingError> {
    let mut summary = AuditSummary::default();
    for (i, line) in worksheet_csv.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let verdict = line.rsplit(',').next().unwrap_or("").trim();
        match verdict.to_ascii_lowercase().as_str() {
            "correct" => summary.correct += 1,
            "incorrect" => summary.incorrect += 1,
            "sfx_only" | "sfx" => summary.sfx_only += 1,
            "" => summary.unfilled += 1,
            other => {
                return Err(PairingError::BadWorksheet {
                    line: i + 1,
                    message: format!("unknown verdict {other:?}"),
                })
            }
        }
    }
    Ok(summary)
}

/// Load game entries from a JSON-lines file.
pub fn load_games(path: &Path) -> Result<Vec<GameEntry>, PairingError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut games = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        games.push(
            serde_json::from_str(line).map_err(|e| PairingError::BadGamesFile {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(games)
}

/// Result of a full pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub builds: Vec<BuildReport>,
    pub summary: PairingSummary,
    pub manifest_path: PathBuf,
}

/// Run the whole pipeline: per game, build the index and pair its
/// clips; write one manifest per game plus a combined `manifest.jsonl`
/// sorted by clip id. Reruns on identical inputs produce byte-identical
/// outputs.
pub fn run_pipeline(
    games: &[GameEntry],
    params: &PipelineParams,
    out_dir: &Path,
) -> Result<PipelineReport, PairingError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    // Games are independent: build and pair them in parallel, then
    // assemble in input order so the combined manifest is stable.
    let per_game: Vec<(BuildReport, Vec<PairingRecord>)> = games
        .par_iter()
        .map(|entry| {
            let report = build_game_db(entry, params, out_dir)?;
            let index = FingerprintIndex::load(&report.index_path)?;
            let records = pair_clips(&index, &entry.clips_dir, params)?;
            write_manifest(
                &records,
                &out_dir.join(format!("{}.manifest.jsonl", entry.game_id)),
            )?;
            Ok((report, records))
        })
        .collect::<Result<_, PairingError>>()?;

    let mut builds = Vec::with_capacity(games.len());
    let mut all_records = Vec::new();
    for (report, records) in per_game {
        builds.push(report);
        all_records.extend(records);
    }
    all_records.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&all_records, &manifest_path)?;
    Ok(PipelineReport {
        builds,
        summary: summarize(&all_records),
        manifest_path,
    })
}
