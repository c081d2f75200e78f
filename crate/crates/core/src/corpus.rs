//! Input datasets: the labeled emotion corpus, the lyrics catalog and the
//! play log, plus artist-name normalization and the artist join.
//!
//! Labels are kept as `f64` here regardless of the scalar the model runs in;
//! they are converted when training examples are built.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::{Error, Result};

pub const VA_MIN: f64 = 1.0;
pub const VA_MAX: f64 = 5.0;

/// A sentence with human valence/arousal labels on the 1..=5 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionSentence {
    pub id: String,
    pub body: String,
    pub valence: f64,
    pub arousal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SongRecord {
    pub artist_raw: String,
    pub artist_norm: String,
    pub title: String,
    pub lyrics: String,
}

/// Summed plays of one artist by one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayRecord {
    pub user_id: String,
    pub artist_raw: String,
    pub artist_norm: String,
    pub play_count: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub songs: Vec<SongRecord>,
    pub plays: Vec<PlayRecord>,
    /// Normalized artist names present in both `songs` and `plays`.
    pub joined_artists: BTreeSet<String>,
}

/// Lowercases, applies NFKC, drops punctuation and symbols, and collapses
/// whitespace runs to single spaces.
pub fn normalize_artist_name(raw: &str) -> String {
    // Dropping characters can make neighbours compose under NFKC (Hangul
    // jamo, for example), so iterate to a fixed point.
    let mut current = normalize_once(raw);
    for _ in 0..4 {
        let next = normalize_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn normalize_once(raw: &str) -> String {
    let folded: String = raw
        .nfkc()
        .collect::<String>()
        .to_lowercase()
        .nfkc()
        .collect();
    let kept: String = folded
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut out = String::with_capacity(kept.len());
    for word in kept.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

fn has_word(text: &str) -> bool {
    text.split_whitespace().next().is_some()
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Resolves named columns in a header; extra columns are ignored.
fn column_indices<const N: usize>(
    path: &Path,
    headers: &csv::StringRecord,
    names: [&str; N],
) -> Result<[usize; N]> {
    let mut out = [0; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').trim() == name)
            .ok_or_else(|| Error::Parse {
                path: path.to_owned(),
                line: 1,
                message: format!("header is missing column {name:?}"),
            })?;
    }
    Ok(out)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_label(path: &Path, line: u64, column: &str, raw: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_owned(),
        line,
        message: format!("column {column}: {raw:?} is not a number"),
    })?;
    if !value.is_finite() || !(VA_MIN..=VA_MAX).contains(&value) {
        return Err(Error::Validation {
            path: path.to_owned(),
            line,
            message: format!("{column} = {value} is outside [{VA_MIN}, {VA_MAX}]"),
        });
    }
    Ok(value)
}

/// Parses a CSV with columns `id,text,V,A`.
pub fn parse_emotion_corpus(path: impl AsRef<Path>) -> Result<Vec<EmotionSentence>> {
    let path = path.as_ref();
    read_emotion_corpus(open(path)?, path)
}

/// Like [`parse_emotion_corpus`]; `path` is only used in error messages.
pub fn read_emotion_corpus(input: impl Read, path: &Path) -> Result<Vec<EmotionSentence>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let [id, text, v, a] = column_indices(path, &headers, ["id", "text", "V", "A"])?;

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        let body = &record[text];
        if !has_word(body) {
            return Err(Error::Validation {
                path: path.to_owned(),
                line,
                message: "text has no words".into(),
            });
        }
        out.push(EmotionSentence {
            id: record[id].to_owned(),
            body: body.to_owned(),
            valence: parse_label(path, line, "V", &record[v])?,
            arousal: parse_label(path, line, "A", &record[a])?,
        });
    }
    Ok(out)
}

/// Parses a CSV with columns `artist,song,text`. Repeated (artist, title)
/// pairs keep their first occurrence.
pub fn parse_lyrics_catalog(path: impl AsRef<Path>) -> Result<Vec<SongRecord>> {
    let path = path.as_ref();
    read_lyrics_catalog(open(path)?, path)
}

pub fn read_lyrics_catalog(input: impl Read, path: &Path) -> Result<Vec<SongRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let [artist, song, text] = column_indices(path, &headers, ["artist", "song", "text"])?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        let invalid = |message: &str| Error::Validation {
            path: path.to_owned(),
            line,
            message: message.to_owned(),
        };
        let artist_norm = normalize_artist_name(&record[artist]);
        if artist_norm.is_empty() {
            return Err(invalid("artist name is empty after normalization"));
        }
        if !has_word(&record[text]) {
            return Err(invalid("lyrics are empty"));
        }
        let title = record[song].to_owned();
        if !seen.insert((artist_norm.clone(), title.clone())) {
            continue;
        }
        out.push(SongRecord {
            artist_raw: record[artist].to_owned(),
            artist_norm,
            title,
            lyrics: record[text].to_owned(),
        });
    }
    Ok(out)
}

/// Parses a TSV with columns `user_id`, `artist_name`, `plays`. Rows for the
/// same (user, normalized artist) are summed into one record, placed where
/// the pair first appeared.
pub fn parse_play_log(path: impl AsRef<Path>) -> Result<Vec<PlayRecord>> {
    let path = path.as_ref();
    read_play_log(open(path)?, path)
}

pub fn read_play_log(input: impl Read, path: &Path) -> Result<Vec<PlayRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let [user, artist, plays] =
        column_indices(path, &headers, ["user_id", "artist_name", "plays"])?;

    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut out: Vec<PlayRecord> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        let raw_count = record[plays].trim();
        let count: i64 = raw_count.parse().map_err(|_| Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("plays: {raw_count:?} is not an integer"),
        })?;
        if count < 0 {
            return Err(Error::Validation {
                path: path.to_owned(),
                line,
                message: format!("negative play count {count}"),
            });
        }
        let artist_norm = normalize_artist_name(&record[artist]);
        if artist_norm.is_empty() {
            return Err(Error::Validation {
                path: path.to_owned(),
                line,
                message: "artist name is empty after normalization".into(),
            });
        }
        let user_id = record[user].to_owned();
        match index.get(&(user_id.clone(), artist_norm.clone())) {
            Some(&i) => out[i].play_count += count as u64,
            None => {
                index.insert((user_id.clone(), artist_norm.clone()), out.len());
                out.push(PlayRecord {
                    user_id,
                    artist_raw: record[artist].to_owned(),
                    artist_norm,
                    play_count: count as u64,
                });
            }
        }
    }
    Ok(out)
}

pub fn join_catalog(songs: Vec<SongRecord>, plays: Vec<PlayRecord>) -> Catalog {
    let song_artists: BTreeSet<&str> = songs.iter().map(|s| s.artist_norm.as_str()).collect();
    let joined_artists = plays
        .iter()
        .map(|p| p.artist_norm.as_str())
        .filter(|a| song_artists.contains(a))
        .map(str::to_owned)
        .collect();
    Catalog {
        songs,
        plays,
        joined_artists,
    }
}

fn write_error(path: &Path, err: csv::Error) -> Error {
    csv_error(path, err)
}

pub fn write_emotion_corpus(
    out: impl Write,
    path: &Path,
    sentences: &[EmotionSentence],
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(["id", "text", "V", "A"])
        .map_err(|e| write_error(path, e))?;
    for s in sentences {
        writer
            .write_record([
                s.id.as_str(),
                &s.body,
                &s.valence.to_string(),
                &s.arousal.to_string(),
            ])
            .map_err(|e| write_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lyrics_catalog(out: impl Write, path: &Path, songs: &[SongRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(["artist", "song", "text"])
        .map_err(|e| write_error(path, e))?;
    for s in songs {
        writer
            .write_record([&s.artist_raw, &s.title, &s.lyrics])
            .map_err(|e| write_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes the play log TSV. Fields must not contain tabs or line breaks.
pub fn write_play_log(out: impl Write, path: &Path, plays: &[PlayRecord]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(out);
    writer
        .write_record(["user_id", "artist_name", "plays"])
        .map_err(|e| write_error(path, e))?;
    for p in plays {
        writer
            .write_record([&p.user_id, &p.artist_raw, &p.play_count.to_string()])
            .map_err(|e| write_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
