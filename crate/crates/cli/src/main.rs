//! `nesvm` command line: synthesis, slicing, fingerprint databases,
//! clip pairing, audits, structure metrics, token codec, and genre
//! statistics.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nesvm_core::audio::write_wav;
use nesvm_core::fingerprint::{FingerprintIndex, FingerprintParams, MatchPolicy};
use nesvm_core::genre::{self, BroadGenre};
use nesvm_core::metrics::corpus_report;
use nesvm_core::pairing::{
    audit_accuracy, audit_sample, build_game_db, load_games, longplay_query, pair_clips,
    read_manifest, run_pipeline, summarize, write_manifest, GameEntry, PipelineParams,
};
use nesvm_core::segment::{extract_audio, slice_clips, DecoderConfig, DEFAULT_CLIP_SECONDS};
use nesvm_core::symbolic::ops::normalize_monophony;
use nesvm_core::symbolic::smf::{parse_midi, parse_midi_with, write_midi, VoiceMap};
use nesvm_core::synth::{render_piece, SynthConfig};
use nesvm_core::tokenizer::{decode as detokenize, encode_with, TokenSequence, TokenizerConfig};
use nesvm_core::SymbolicPiece;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "nesvm", version, about = "NES video-music toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct FingerprintArgs {
    /// Sample rate everything runs at.
    #[arg(long, default_value_t = 44_100)]
    sr: u32,
    /// STFT window size (power of two).
    #[arg(long, default_value_t = 4096)]
    window: u32,
    /// STFT hop in samples.
    #[arg(long, default_value_t = 2048)]
    hop: u32,
    /// Peak neighborhood radius, frames.
    #[arg(long, default_value_t = 20)]
    nbhd_frames: u32,
    /// Peak neighborhood radius, bins.
    #[arg(long, default_value_t = 20)]
    nbhd_bins: u32,
    /// Minimum log-magnitude for a peak.
    #[arg(long, default_value_t = 10.0)]
    amp_min: f32,
    /// Pairings per anchor peak.
    #[arg(long, default_value_t = 15)]
    fan_out: u32,
    /// Largest anchor-to-target frame delta.
    #[arg(long, default_value_t = 200)]
    max_delta: u32,
}

impl FingerprintArgs {
    fn params(&self) -> Result<FingerprintParams> {
        if !self.window.is_power_of_two() || self.window < 2 {
            bail!("--window must be a power of two, got {}", self.window);
        }
        if self.hop == 0 || self.hop > self.window {
            bail!("--hop must be in 1..={}, got {}", self.window, self.hop);
        }
        if self.fan_out == 0 {
            bail!("--fan-out must be at least 1");
        }
        Ok(FingerprintParams {
            window_size: self.window,
            hop: self.hop,
            neighborhood_frames: self.nbhd_frames,
            neighborhood_bins: self.nbhd_bins,
            amp_min: self.amp_min,
            fan_out: self.fan_out,
            max_delta_frames: self.max_delta,
            sample_rate: self.sr,
        })
    }
}

#[derive(Args, Clone)]
struct MatchArgs {
    /// Reject matches with fewer aligned votes.
    #[arg(long, default_value_t = 10)]
    min_matches: u32,
    /// Reject matches below this votes/query-hashes ratio.
    #[arg(long, default_value_t = 0.01)]
    min_confidence: f64,
    /// Always take the best bin, however weak.
    #[arg(long)]
    no_reject: bool,
    /// Disable the ambiguous status for near-tied top bins.
    #[arg(long)]
    no_ambiguity: bool,
}

impl MatchArgs {
    fn apply(&self, params: &mut PipelineParams) {
        params.policy = MatchPolicy {
            min_matches: self.min_matches,
            min_confidence: self.min_confidence,
            reject: !self.no_reject,
        };
        if self.no_ambiguity {
            params.ambiguity_window = None;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a MIDI piece to a mono WAV with NES voices.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 44_100)]
        sr: u32,
        /// Pulse duty fraction (0.125, 0.25, 0.5 or 0.75).
        #[arg(long, default_value_t = 0.5)]
        duty: f32,
        /// Voice mapping file (track[.channel]=voice lines).
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Slice media into fixed-length audio clips.
    Slice {
        #[arg(long = "in")]
        input: PathBuf,
        /// Clip length in seconds.
        #[arg(long, default_value_t = DEFAULT_CLIP_SECONDS)]
        len: f64,
        #[arg(long, default_value_t = 44_100)]
        sr: u32,
        #[arg(long)]
        out: PathBuf,
        /// Game id prefix for clip ids (defaults to the input stem).
        #[arg(long)]
        game: Option<String>,
        /// Keep the trailing sub-length fragment.
        #[arg(long)]
        keep_remainder: bool,
        /// Decoder command template (overrides NVM_DECODER_CMD).
        #[arg(long)]
        decoder_cmd: Option<String>,
        /// Cap on concurrent decoder subprocesses.
        #[arg(long, default_value_t = 4)]
        max_decoders: usize,
    },
    /// Build a game's fingerprint database from its MIDI directory.
    BuildDb {
        #[arg(long)]
        game_id: String,
        #[arg(long)]
        midi_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fingerprint: FingerprintArgs,
    },
    /// Match every clip in a directory against an index, emitting the
    /// pairing manifest.
    Pair {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        clips: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Draw a seeded audit sample from a manifest, or summarize a
    /// filled worksheet.
    Audit {
        #[arg(long, required_unless_present = "summarize")]
        manifest: Option<PathBuf>,
        #[arg(short, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tally verdicts of a filled worksheet instead of sampling.
        #[arg(long)]
        summarize: Option<PathBuf>,
    },
    /// Run the whole pipeline over a games file: build every index,
    /// pair every clip, write manifests.
    Pipeline {
        /// JSONL of {game_id, title, midi_dir, clips_dir}.
        #[arg(long)]
        games: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fingerprint: FingerprintArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Structure-metric comparison across named piece directories.
    Metrics {
        /// Repeated name=dir pairs, e.g. --dirs human=./human.
        #[arg(long, required = true, num_args = 1..)]
        dirs: Vec<String>,
        /// Output table; .csv extension switches to CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode a MIDI piece into compound tokens (JSONL).
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pad the sequence with end-of-song markers to this length.
        #[arg(long)]
        pad: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        max_len: usize,
    },
    /// Decode compound tokens back into a MIDI piece.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Genre taxonomy utilities.
    Genres {
        #[command(subcommand)]
        command: GenresCommand,
    },
    /// Print the long-play search query for a game title.
    LongplayQuery {
        title: String,
    },
}

#[derive(Subcommand)]
enum GenresCommand {
    /// Map a specific genre label to its broad store genre.
    Map { name: String },
    /// Histogram of broad genre labels from a CSV/label file.
    Stats { labels: PathBuf },
    /// Print the full mapping table as CSV.
    Export,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Render {
            input,
            out,
            sr,
            duty,
            map,
        } => {
            let piece = load_piece(&input, map.as_deref())?;
            let config = SynthConfig {
                sample_rate: sr,
                pulse_duty: duty,
                ..SynthConfig::default()
            };
            let audio = render_piece(&normalize_monophony(&piece, Default::default()), &config);
            write_wav(&audio, &out)?;
            println!(
                "rendered {} ({:.1} s) -> {}",
                input.display(),
                audio.duration_seconds(),
                out.display()
            );
        }
        Command::Slice {
            input,
            len,
            sr,
            out,
            game,
            keep_remainder,
            decoder_cmd,
            max_decoders,
        } => {
            if !(len > 0.0) {
                bail!("--len must be positive, got {len}");
            }
            let game_id = game.unwrap_or_else(|| {
                input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "game".to_string())
            });
            let mut decoder = match decoder_cmd {
                Some(cmd) => DecoderConfig::with_template(&cmd),
                None => DecoderConfig::default(),
            };
            decoder.max_processes = max_decoders;
            let audio = extract_audio(&input, sr, &decoder)?;
            let clips = slice_clips(&audio, len, &game_id, &input.display().to_string(), keep_remainder);

            let game_dir = out.join(&game_id);
            std::fs::create_dir_all(&game_dir)
                .with_context(|| format!("creating {}", game_dir.display()))?;
            let mut listing = String::new();
            for (spec, clip) in &clips {
                let index = spec.clip_id.rsplit('/').next().unwrap_or("00000");
                write_wav(clip, game_dir.join(format!("{index}.wav")))?;
                listing.push_str(&serde_json::to_string(spec)?);
                listing.push('\n');
            }
            std::fs::write(out.join("clips.jsonl"), listing)?;
            println!("{} clips of {:.0} s -> {}", clips.len(), len, out.display());
        }
        Command::BuildDb {
            game_id,
            midi_dir,
            out,
            fingerprint,
        } => {
            let mut params = PipelineParams::default();
            params.fingerprint = fingerprint.params()?;
            let entry = GameEntry {
                game_id,
                title: String::new(),
                midi_dir,
                clips_dir: PathBuf::new(),
            };
            let report = build_game_db(&entry, &params, &out)?;
            println!(
                "indexed {} pieces ({} filtered short, {} unreadable), {} hashes -> {}",
                report.pieces_indexed,
                report.filtered_short,
                report.skipped_unreadable,
                report.total_hashes,
                report.index_path.display()
            );
        }
        Command::Pair {
            index,
            clips,
            out,
            matching,
        } => {
            let index = FingerprintIndex::load(&index)?;
            let mut params = PipelineParams::default();
            params.fingerprint = index.params.clone();
            matching.apply(&mut params);
            let records = pair_clips(&index, &clips, &params)?;
            write_manifest(&records, &out)?;
            println!("{}", summarize(&records));
        }
        Command::Audit {
            manifest,
            n,
            seed,
            out,
            summarize: sheet,
        } => {
            if let Some(sheet) = sheet {
                let summary = audit_accuracy(&std::fs::read_to_string(&sheet)?)?;
                println!(
                    "correct {}, incorrect {}, sfx_only {}, unfilled {}",
                    summary.correct, summary.incorrect, summary.sfx_only, summary.unfilled
                );
                match summary.accuracy() {
                    Some(acc) => println!("accuracy on music-bearing clips: {:.1}%", 100.0 * acc),
                    None => println!("accuracy: no judged rows yet"),
                }
            } else {
                let manifest = manifest.expect("clap enforces manifest without --summarize");
                let records = read_manifest(&manifest)?;
                let worksheet = audit_sample(&records, n, seed)?;
                match out {
                    Some(path) => {
                        std::fs::write(&path, worksheet)?;
                        println!("wrote {n}-row audit worksheet to {}", path.display());
                    }
                    None => print!("{worksheet}"),
                }
            }
        }
        Command::Pipeline {
            games,
            out,
            fingerprint,
            matching,
        } => {
            let games = load_games(&games)?;
            let mut params = PipelineParams::default();
            params.fingerprint = fingerprint.params()?;
            matching.apply(&mut params);
            let report = run_pipeline(&games, &params, &out)?;
            for build in &report.builds {
                println!(
                    "{}: {} pieces indexed ({} filtered, {} unreadable)",
                    build.game_id, build.pieces_indexed, build.filtered_short, build.skipped_unreadable
                );
            }
            println!("{}", report.summary);
            println!("manifest: {}", report.manifest_path.display());
        }
        Command::Metrics { dirs, out } => {
            let mut sets = Vec::new();
            for spec in &dirs {
                let (name, dir) = spec
                    .split_once('=')
                    .with_context(|| format!("--dirs entry {spec:?} is not name=path"))?;
                sets.push((name.to_string(), load_pieces_dir(Path::new(dir))?));
            }
            let report = corpus_report(&sets)?;
            let text = report.render_text();
            print!("{text}");
            if let Some(path) = out {
                let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
                std::fs::write(&path, if csv { report.render_csv() } else { text })?;
                println!("wrote {}", path.display());
            }
        }
        Command::Encode {
            input,
            out,
            pad,
            max_len,
        } => {
            let piece = load_piece(&input, None)?;
            let config = TokenizerConfig {
                max_len,
                ..TokenizerConfig::default()
            };
            let mut sequence = encode_with(&normalize_monophony(&piece, Default::default()), &config)?;
            if let Some(len) = pad {
                sequence.pad_to(len);
            }
            std::fs::write(&out, sequence.to_jsonl())?;
            println!("{} tokens -> {}", sequence.tokens.len(), out.display());
        }
        Command::Decode { input, out } => {
            let sequence = TokenSequence::from_jsonl(&std::fs::read_to_string(&input)?)?;
            let piece = detokenize(&sequence)?;
            std::fs::write(&out, write_midi(&piece))?;
            println!("{} notes -> {}", piece.note_count(), out.display());
        }
        Command::Genres { command } => match command {
            GenresCommand::Map { name } => println!("{}", genre::map_genre(&name)?),
            GenresCommand::Stats { labels } => {
                let text = std::fs::read_to_string(&labels)?;
                let mut parsed = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    let field = line.rsplit(',').next().unwrap_or("").trim();
                    if field.is_empty() || field.starts_with('#') {
                        continue;
                    }
                    if i == 0 && BroadGenre::parse(field).is_err() {
                        continue; // header row
                    }
                    parsed.push(BroadGenre::parse(field)?);
                }
                print!("{}", genre::genre_histogram(&parsed).render_text());
            }
            GenresCommand::Export => print!("{}", genre::export_csv()),
        },
        Command::LongplayQuery { title } => println!("{}", longplay_query(&title)?),
    }
    Ok(())
}

fn load_piece(path: &Path, map: Option<&Path>) -> Result<SymbolicPiece> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let piece = match map {
        Some(map_path) => {
            let map = VoiceMap::parse(&std::fs::read_to_string(map_path)?)?;
            parse_midi_with(&bytes, &map)?
        }
        None => parse_midi(&bytes)?,
    };
    Ok(piece)
}

fn load_pieces_dir(dir: &Path) -> Result<Vec<SymbolicPiece>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
        })
        .collect();
    paths.sort();
    let mut pieces = Vec::with_capacity(paths.len());
    for path in paths {
        match parse_midi(&std::fs::read(&path)?) {
            Ok(piece) => pieces.push(piece),
            Err(err) => log::warn!("skipping {}: {err}", path.display()),
        }
    }
    if pieces.is_empty() {
        bail!("no readable MIDI files in {}", dir.display());
    }
    Ok(pieces)
}
