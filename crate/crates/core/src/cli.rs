//! Command-line surface. Each command reads a JSON run configuration, writes
//! its artifacts, and prints TSV on stdout; diagnostics go to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::annotator::{annotate_catalog, load_song_db, save_song_db, DEFAULT_CHUNK_WORDS};
use crate::corpus::{join_catalog, parse_emotion_corpus, parse_lyrics_catalog, parse_play_log};
use crate::embedder::load_embedding_store;
use crate::engine::{encode_query, recommend_top_k, RecommendConfig};
use crate::features::VaPoint;
use crate::memory::{
    accumulate_memory, build_profiles, load_memory_tables, save_memory_tables, UserProfile,
};
use crate::model::{
    evaluate_held_out, load_checkpoint, save_checkpoint, train, Predictor, TrainConfig,
};
use crate::{Checkpoint, EmbeddingStore, Error, MemoryTables, Result, SongDatabase};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Lower edge of the extreme-value test: values below this or above
/// [`EXTREME_HIGH`] count as extreme.
pub const EXTREME_LOW: f64 = 1.5;
pub const EXTREME_HIGH: f64 = 4.5;
pub const HISTOGRAM_WIDTH: f64 = 0.25;
pub const HISTOGRAM_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Train,
    Annotate,
    BuildMemory,
    Recommend,
    Stats,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum StatsSource {
    #[default]
    Corpus,
    Songdb,
}

#[derive(Debug, Parser)]
#[command(
    name = "moodrank",
    version,
    about = "Emotion-adaptive music recommendation"
)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// User id for personalised recommendations.
    #[arg(long)]
    pub user: Option<String>,
    /// Query text for `recommend`.
    #[arg(long)]
    pub text: Option<String>,
    /// Number of recommendations.
    #[arg(long)]
    pub k: Option<usize>,
    /// Read one query per line from stdin.
    #[arg(long)]
    pub repl: bool,
    /// Overrides the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset summarised by `stats`.
    #[arg(long, value_enum, default_value_t)]
    pub source: StatsSource,
}

/// File locations; relative paths are resolved against the config file's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub lyrics: Option<PathBuf>,
    pub playlog: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub song_db: Option<PathBuf>,
    pub user_emotion: Option<PathBuf>,
    pub emotion_artist: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for slot in [
            &mut self.corpus,
            &mut self.lyrics,
            &mut self.playlog,
            &mut self.embeddings,
            &mut self.checkpoint,
            &mut self.song_db,
            &mut self.user_emotion,
            &mut self.emotion_artist,
        ] {
            if let Some(p) = slot.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub train: TrainConfig,
    pub recommend: RecommendConfig,
    pub chunk_words: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            train: TrainConfig::default(),
            recommend: RecommendConfig::default(),
            chunk_words: DEFAULT_CHUNK_WORDS,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: e.line() as u64,
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.paths.resolve(base);
        if config.chunk_words == 0 {
            return Err(Error::InvalidArgument(
                "chunk_words must be positive".into(),
            ));
        }
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| Error::format("config", e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn required<'a>(slot: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    slot.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("config is missing paths.{name}")))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Contract(_) => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

pub fn cmd_train(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let sentences = parse_emotion_corpus(required(&config.paths.corpus, "corpus")?)?;
    let store: EmbeddingStore =
        load_embedding_store(required(&config.paths.embeddings, "embeddings")?)?;
    let checkpoint_path = required(&config.paths.checkpoint, "checkpoint")?;
    let outcome = train(&sentences, &store, &config.train)?;
    let checkpoint = Checkpoint {
        head: outcome.head,
        scaler: outcome.scaler,
        config: config.train.clone(),
    };
    save_checkpoint(&checkpoint, checkpoint_path)?;
    write_out(out, &outcome.report.to_tsv())
}

pub fn cmd_annotate(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let checkpoint: Checkpoint =
        load_checkpoint(required(&config.paths.checkpoint, "checkpoint")?)?;
    let store: EmbeddingStore =
        load_embedding_store(required(&config.paths.embeddings, "embeddings")?)?;
    let songs = parse_lyrics_catalog(required(&config.paths.lyrics, "lyrics")?)?;
    let db_path = required(&config.paths.song_db, "song_db")?;
    let predictor = Predictor {
        head: &checkpoint.head,
        scaler: &checkpoint.scaler,
        store: &store,
    };
    let annotation = annotate_catalog(
        &songs,
        &predictor,
        config.chunk_words,
        store.model_tag(),
        Some(checkpoint.scaler),
    )?;
    save_song_db(&annotation.db, db_path)?;
    for s in &annotation.skipped {
        let _ = writeln!(err, "skipped: {} - {}: {}", s.artist, s.title, s.reason);
    }
    write_out(
        out,
        &format!(
            "annotated\t{}\nskipped\t{}\n",
            annotation.db.len(),
            annotation.skipped.len()
        ),
    )
}

pub fn cmd_build_memory(
    config: &RunConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    let songs = parse_lyrics_catalog(required(&config.paths.lyrics, "lyrics")?)?;
    let plays = parse_play_log(required(&config.paths.playlog, "playlog")?)?;
    let db: SongDatabase = load_song_db(required(&config.paths.song_db, "song_db")?)?;
    let ue_path = required(&config.paths.user_emotion, "user_emotion")?;
    let ea_path = required(&config.paths.emotion_artist, "emotion_artist")?;
    let catalog = join_catalog(songs, plays);
    let counts = accumulate_memory(&catalog, &db)?;
    let matched_plays = counts.matched_plays;
    let tables = counts.normalize();
    if tables.is_empty() {
        let _ = writeln!(
            err,
            "warning: no played artist has annotated songs; memory tables are empty"
        );
    }
    save_memory_tables(&tables, ue_path, ea_path)?;
    write_out(
        out,
        &format!(
            "matched_artists\t{}\nmatched_plays\t{}\nusers\t{}\n",
            tables.artists().len(),
            matched_plays,
            tables.user_emotion.rows.len()
        ),
    )
}

/// Everything `recommend` needs, loaded once per process.
struct Recommender {
    checkpoint: Checkpoint,
    store: EmbeddingStore,
    db: SongDatabase,
    tables: MemoryTables,
    profiles: BTreeMap<String, UserProfile>,
    config: RecommendConfig,
}

impl Recommender {
    fn load(config: &RunConfig, k: Option<usize>) -> Result<Self> {
        let mut rec_config = config.recommend.clone();
        if let Some(k) = k {
            rec_config.k = k;
        }
        rec_config.validate()?;
        Ok(Recommender {
            checkpoint: load_checkpoint(required(&config.paths.checkpoint, "checkpoint")?)?,
            store: load_embedding_store(required(&config.paths.embeddings, "embeddings")?)?,
            db: load_song_db(required(&config.paths.song_db, "song_db")?)?,
            tables: load_memory_tables(
                required(&config.paths.user_emotion, "user_emotion")?,
                required(&config.paths.emotion_artist, "emotion_artist")?,
            )?,
            profiles: build_profiles(&parse_play_log(required(
                &config.paths.playlog,
                "playlog",
            )?)?)?,
            config: rec_config,
        })
    }

    fn answer(
        &self,
        user: Option<&str>,
        text: &str,
        out: &mut dyn Write,
        err: &mut dyn Write,
    ) -> Result<()> {
        let predictor = Predictor {
            head: &self.checkpoint.head,
            scaler: &self.checkpoint.scaler,
            store: &self.store,
        };
        let query = encode_query(user, text, &predictor)?;
        if let Some(user) = user {
            match self.profiles.get(user) {
                None => {
                    let _ = writeln!(
                        err,
                        "notice: user {user:?} has no play history; ranking the full catalog"
                    );
                }
                Some(p)
                    if !self
                        .db
                        .songs()
                        .iter()
                        .any(|s| s.artist_norm == p.top_artist_norm) =>
                {
                    let _ = writeln!(
                        err,
                        "notice: top artist {:?} has no annotated songs; ranking the full catalog",
                        p.top_artist_norm
                    );
                }
                Some(_) => {}
            }
        }
        let ranked = recommend_top_k(&query, &self.db, &self.tables, &self.profiles, &self.config)?;
        let mut text_out = format!(
            "query\t{}\nquery_va\t{:.6}\t{:.6}\nquery_bin\t{}\nrank\tartist\tsong\tv_pred\ta_pred\tscore\n",
            one_line(text),
            query.va.valence,
            query.va.arousal,
            query.bin.id()
        );
        for (i, s) in ranked.iter().enumerate() {
            text_out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
                i + 1,
                one_line(&s.song.artist_display),
                one_line(&s.song.title),
                s.song.va.valence,
                s.song.va.arousal,
                s.score
            ));
        }
        write_out(out, &text_out)
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Per-invocation options of `recommend`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecommendRequest<'a> {
    pub user: Option<&'a str>,
    pub text: Option<&'a str>,
    pub k: Option<usize>,
    pub repl: bool,
}

pub fn cmd_recommend(
    config: &RunConfig,
    request: RecommendRequest<'_>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    let RecommendRequest {
        user,
        text,
        k,
        repl,
    } = request;
    if !repl {
        match text {
            Some(t) if !t.trim().is_empty() => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "recommend needs a non-empty --text (or --repl)".into(),
                ))
            }
        }
    }
    let recommender = Recommender::load(config, k)?;
    if let Some(t) = text {
        recommender.answer(user, t, out, err)?;
    }
    if repl {
        for line in input.lines() {
            let line = line.map_err(|e| Error::io(Path::new("<stdin>"), e))?;
            if line.trim().is_empty() {
                continue;
            }
            if let Err(e) = recommender.answer(user, line.trim(), out, err) {
                let _ = writeln!(err, "error: {e}");
            }
            let _ = out.flush();
        }
    }
    Ok(())
}

/// Histogram over `[1, 5]` in 0.25-wide bins per axis, plus extreme counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaStats {
    pub count: usize,
    /// `[valence, arousal]` counts per bin. Values outside `[1, 5]` are
    /// clamped into the end bins; 5.0 itself falls in the last bin.
    pub histogram: [[usize; 2]; HISTOGRAM_BINS],
    /// `[valence, arousal]` counts below 1.5 or above 4.5.
    pub extremes: [usize; 2],
}

pub fn va_stats(points: &[VaPoint<f64>]) -> Result<VaStats> {
    if points.is_empty() {
        return Err(Error::Empty("no VA values to summarise"));
    }
    let mut histogram = [[0usize; 2]; HISTOGRAM_BINS];
    let mut extremes = [0usize; 2];
    for p in points {
        for (axis, x) in [p.valence, p.arousal].into_iter().enumerate() {
            let bin = ((x - 1.0) / HISTOGRAM_WIDTH)
                .floor()
                .clamp(0.0, (HISTOGRAM_BINS - 1) as f64);
            histogram[bin as usize][axis] += 1;
            if !(EXTREME_LOW..=EXTREME_HIGH).contains(&x) {
                extremes[axis] += 1;
            }
        }
    }
    Ok(VaStats {
        count: points.len(),
        histogram,
        extremes,
    })
}

impl VaStats {
    pub fn to_tsv(&self) -> String {
        let mut s = format!(
            "count\t{}\nbin_low\tbin_high\tvalence\tarousal\n",
            self.count
        );
        for (i, [v, a]) in self.histogram.iter().enumerate() {
            let lo = 1.0 + i as f64 * HISTOGRAM_WIDTH;
            s.push_str(&format!("{lo:.2}\t{:.2}\t{v}\t{a}\n", lo + HISTOGRAM_WIDTH));
        }
        s.push_str(&format!(
            "extreme_valence\t{}\nextreme_arousal\t{}\n",
            self.extremes[0], self.extremes[1]
        ));
        s
    }
}

pub fn cmd_stats(config: &RunConfig, source: StatsSource, out: &mut dyn Write) -> Result<()> {
    let points: Vec<VaPoint<f64>> = match source {
        StatsSource::Corpus => parse_emotion_corpus(required(&config.paths.corpus, "corpus")?)?
            .iter()
            .map(|s| VaPoint::new(s.valence, s.arousal))
            .collect(),
        StatsSource::Songdb => {
            let db: SongDatabase = load_song_db(required(&config.paths.song_db, "song_db")?)?;
            db.songs().iter().map(|s| s.va).collect()
        }
    };
    write_out(out, &va_stats(&points)?.to_tsv())
}

pub fn cmd_eval(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let checkpoint: Checkpoint =
        load_checkpoint(required(&config.paths.checkpoint, "checkpoint")?)?;
    let sentences = parse_emotion_corpus(required(&config.paths.corpus, "corpus")?)?;
    let store: EmbeddingStore =
        load_embedding_store(required(&config.paths.embeddings, "embeddings")?)?;
    let mut eval_config = checkpoint.config.clone();
    eval_config.seed = config.train.seed;
    if eval_config.seed != checkpoint.config.seed {
        let _ = writeln!(
            err,
            "warning: seed {} differs from the checkpoint's training seed {}; the validation split differs from training",
            eval_config.seed, checkpoint.config.seed
        );
    }
    let (loss, r2) = evaluate_held_out(
        &checkpoint.head,
        &checkpoint.scaler,
        &sentences,
        &store,
        &eval_config,
    )?;
    write_out(
        out,
        &format!(
            "seed\t{}\nval_loss\t{loss:.6}\nval_r2\t{r2:.6}\n",
            eval_config.seed
        ),
    )
}

pub fn run_args(
    args: &Args,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    match args.command {
        Command::Train => cmd_train(&config, out),
        Command::Annotate => cmd_annotate(&config, out, err),
        Command::BuildMemory => cmd_build_memory(&config, out, err),
        Command::Recommend => cmd_recommend(
            &config,
            RecommendRequest {
                user: args.user.as_deref(),
                text: args.text.as_deref(),
                k: args.k,
                repl: args.repl,
            },
            input,
            out,
            err,
        ),
        Command::Stats => cmd_stats(&config, args.source, out),
        Command::Eval => cmd_eval(&config, out, err),
    }
}

/// Parses `argv`, runs the command, and returns the process exit code.
pub fn main_with<I, S>(
    argv: I,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run_args(&args, input, out, err) {
        Ok(()) => {
            let _ = out.flush();
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
