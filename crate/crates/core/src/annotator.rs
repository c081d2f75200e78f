//! Song annotation: lyrics are cut into fixed-size word chunks, each chunk is
//! mapped to VA, and the song gets the unweighted mean of its chunks.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SongRecord;
use crate::embedder::text_key;
use crate::features::{VaPoint, VaScaler};
use crate::model::VaPredictor;
use crate::numfmt::round_sig;
use crate::{Error, Result, Scalar};

pub const DEFAULT_CHUNK_WORDS: usize = 50;
pub const SONG_DB_FORMAT: &str = "songdb.v1";
const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSong<T> {
    pub artist_norm: String,
    pub artist_display: String,
    pub title: String,
    pub va: VaPoint<T>,
    pub chunk_count: usize,
}

/// Annotated catalog; `(artist_norm, title)` pairs are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SongDatabase<T> {
    model_tag: String,
    scaler: Option<VaScaler<T>>,
    songs: Vec<AnnotatedSong<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedSong {
    pub artist: String,
    pub title: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Annotation<T> {
    pub db: SongDatabase<T>,
    pub skipped: Vec<SkippedSong>,
}

/// Consecutive non-overlapping windows of `chunk_words` words, each joined
/// with single spaces. The last window may be shorter.
///
/// These chunk strings are what the embedding store must be keyed on.
pub fn chunk_lyrics(lyrics: &str, chunk_words: usize) -> Result<Vec<String>> {
    if chunk_words == 0 {
        return Err(Error::InvalidArgument(
            "chunk_words must be positive".into(),
        ));
    }
    let words: Vec<&str> = lyrics.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::Empty("lyrics have no words"));
    }
    Ok(words.chunks(chunk_words).map(|c| c.join(" ")).collect())
}

pub fn annotate_song<T: Scalar>(
    song: &SongRecord,
    predictor: &impl VaPredictor<T>,
    chunk_words: usize,
) -> Result<AnnotatedSong<T>> {
    let chunks = chunk_lyrics(&song.lyrics, chunk_words)?;
    let mut predictions = Vec::with_capacity(chunks.len());
    let mut missing = Vec::new();
    for chunk in &chunks {
        match predictor.predict_va(chunk) {
            Ok(va) => predictions.push(va),
            Err(Error::EmbeddingNotFound { .. }) => missing.push(text_key(chunk)),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings { keys: missing });
    }
    let n = T::from_usize(predictions.len()).expect("chunk count fits scalar");
    let (v, a) = predictions
        .iter()
        .fold((T::zero(), T::zero()), |(v, a), p| {
            (v + p.valence, a + p.arousal)
        });
    let va = VaPoint::new(v / n, a / n);
    if !va.is_finite() {
        return Err(Error::contract(format!(
            "non-finite VA for {} - {}",
            song.artist_raw, song.title
        )));
    }
    Ok(AnnotatedSong {
        artist_norm: song.artist_norm.clone(),
        artist_display: song.artist_raw.clone(),
        title: song.title.clone(),
        va,
        chunk_count: chunks.len(),
    })
}

/// Annotates every song. Songs with missing chunk embeddings are reported in
/// `skipped` instead of failing the run; it is an error if nothing survives.
pub fn annotate_catalog<T: Scalar>(
    songs: &[SongRecord],
    predictor: &impl VaPredictor<T>,
    chunk_words: usize,
    model_tag: &str,
    scaler: Option<VaScaler<T>>,
) -> Result<Annotation<T>> {
    if songs.is_empty() {
        return Err(Error::Empty("catalog has no songs"));
    }
    let mut annotated = Vec::with_capacity(songs.len());
    let mut skipped = Vec::new();
    for song in songs {
        match annotate_song(song, predictor, chunk_words) {
            Ok(a) => annotated.push(a),
            Err(e @ Error::MissingEmbeddings { .. }) => skipped.push(SkippedSong {
                artist: song.artist_raw.clone(),
                title: song.title.clone(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if annotated.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "all {} songs were skipped for missing embeddings",
            skipped.len()
        )));
    }
    Ok(Annotation {
        db: SongDatabase::new(model_tag, scaler, annotated)?,
        skipped,
    })
}

#[derive(Serialize, Deserialize)]
struct ScalerDoc {
    mean: [f64; 2],
    std: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<ScalerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    artist_norm: String,
    artist: String,
    title: String,
    v: f64,
    a: f64,
    chunks: usize,
}

impl<T: Scalar> SongDatabase<T> {
    pub fn new(
        model_tag: impl Into<String>,
        scaler: Option<VaScaler<T>>,
        songs: Vec<AnnotatedSong<T>>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &songs {
            if !seen.insert((s.artist_norm.as_str(), s.title.as_str())) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate song {:?} - {:?}",
                    s.artist_norm, s.title
                )));
            }
        }
        Ok(SongDatabase {
            model_tag: model_tag.into(),
            scaler,
            songs,
        })
    }

    pub fn songs(&self) -> &[AnnotatedSong<T>] {
        &self.songs
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn scaler(&self) -> Option<&VaScaler<T>> {
        self.scaler.as_ref()
    }

    pub fn len(&self) -> usize {
        self.songs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.songs.is_empty()
    }

    pub fn write(&self, out: impl Write) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        let header = Header {
            format: SONG_DB_FORMAT.into(),
            model: self.model_tag.clone(),
            scaler: self.scaler.map(|s| ScalerDoc {
                mean: s.mean.map(|v| v.to_f64_lossy()),
                std: s.std.map(|v| v.to_f64_lossy()),
            }),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for s in &self.songs {
            let row = Row {
                artist_norm: s.artist_norm.clone(),
                artist: s.artist_display.clone(),
                title: s.title.clone(),
                v: round_sig(s.va.valence.to_f64_lossy(), SIGNIFICANT_DIGITS),
                a: round_sig(s.va.arousal.to_f64_lossy(), SIGNIFICANT_DIGITS),
                chunks: s.chunk_count,
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn read(input: impl Read, path: &Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let mut lines = BufReader::new(input).lines();
        let header_line = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(path, e))?,
            None => return Err(parse_err(1, "missing songdb header".into())),
        };
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
        if header.format != SONG_DB_FORMAT {
            return Err(Error::UnsupportedVersion {
                found: header.format,
                expected: SONG_DB_FORMAT.into(),
            });
        }
        let scaler = header.scaler.map(|s| VaScaler {
            mean: s.mean.map(T::lit),
            std: s.std.map(T::lit),
        });

        let mut seen = HashSet::new();
        let mut songs = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i as u64 + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line)
                .map_err(|e| parse_err(line_no, format!("bad row: {e}")))?;
            let va = VaPoint::new(T::lit(row.v), T::lit(row.a));
            if !va.is_finite() || row.chunks == 0 || row.artist_norm.is_empty() {
                return Err(parse_err(line_no, "invalid song row".into()));
            }
            if !seen.insert((row.artist_norm.clone(), row.title.clone())) {
                return Err(parse_err(
                    line_no,
                    format!("duplicate song {:?} - {:?}", row.artist_norm, row.title),
                ));
            }
            songs.push(AnnotatedSong {
                artist_norm: row.artist_norm,
                artist_display: row.artist,
                title: row.title,
                va,
                chunk_count: row.chunks,
            });
        }
        Ok(SongDatabase {
            model_tag: header.model,
            scaler,
            songs,
        })
    }
}

pub fn save_song_db<T: Scalar>(db: &SongDatabase<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    db.write(file).map_err(|e| Error::io(path, e))
}

pub fn load_song_db<T: Scalar>(path: impl AsRef<Path>) -> Result<SongDatabase<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    SongDatabase::read(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::normalize_artist_name;
    use proptest::prelude::*;

    fn song(artist: &str, title: &str, lyrics: &str) -> SongRecord {
        SongRecord {
            artist_raw: artist.into(),
            artist_norm: normalize_artist_name(artist),
            title: title.into(),
            lyrics: lyrics.into(),
        }
    }

    fn words(n: usize) -> String {
        (0..n)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn chunk_sizes() {
        let sizes = |n: usize| -> Vec<usize> {
            chunk_lyrics(&words(n), 50)
                .unwrap()
                .iter()
                .map(|c| c.split(' ').count())
                .collect()
        };
        assert_eq!(sizes(10), [10]);
        assert_eq!(sizes(120), [50, 50, 20]);
        assert_eq!(sizes(100), [50, 50]);
        assert!(matches!(chunk_lyrics(" \n\t", 50), Err(Error::Empty(_))));
        assert!(chunk_lyrics("a", 0).is_err());
    }

    #[test]
    fn chunks_collapse_whitespace() {
        let chunks = chunk_lyrics("one  two\nthree\tfour", 3).unwrap();
        assert_eq!(chunks, ["one two three", "four"]);
    }

    #[test]
    fn constant_predictor_gives_constant_song_va() {
        let constant = |_: &str| Ok(VaPoint::new(2.25, 4.5));
        for n in [1, 49, 50, 51, 333] {
            let s = annotate_song(&song("A", "T", &words(n)), &constant, 50).unwrap();
            assert_eq!(s.va, VaPoint::new(2.25, 4.5));
            assert_eq!(s.chunk_count, n.div_ceil(50));
        }
    }

    #[test]
    fn two_chunk_mean() {
        let predictor = |chunk: &str| {
            Ok(if chunk.starts_with("w0 ") {
                VaPoint::new(2.0, 3.0)
            } else {
                VaPoint::new(4.0, 3.0)
            })
        };
        let s = annotate_song(&song("A", "T", &words(100)), &predictor, 50).unwrap();
        assert_eq!(s.va, VaPoint::new(3.0, 3.0));
        assert_eq!(s.chunk_count, 2);
    }

    #[test]
    fn missing_chunks_are_listed() {
        let lyrics = words(120);
        let chunks = chunk_lyrics(&lyrics, 50).unwrap();
        let second = chunks[1].clone();
        let predictor = move |chunk: &str| {
            if chunk == second {
                Err(Error::EmbeddingNotFound {
                    key: text_key(chunk),
                })
            } else {
                Ok(VaPoint::new(3.0, 3.0))
            }
        };
        match annotate_song(&song("A", "T", &lyrics), &predictor, 50) {
            Err(Error::MissingEmbeddings { keys }) => assert_eq!(keys, [text_key(&chunks[1])]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn catalog_skips_songs_with_gaps() {
        let songs = vec![
            song("Enya", "Orinoco Flow", "sail away sail away"),
            song("Enya", "Gap", "nothing embedded here"),
            song("Opeth", "Ghost", "dark dark woods"),
        ];
        let predictor = |chunk: &str| {
            if chunk.starts_with("nothing") {
                Err(Error::EmbeddingNotFound {
                    key: text_key(chunk),
                })
            } else {
                Ok(VaPoint::new(3.0, 3.0))
            }
        };
        let out = annotate_catalog(&songs, &predictor, 50, "toy", None).unwrap();
        assert_eq!(out.db.len(), 2);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].title, "Gap");
        assert!(out.skipped[0]
            .reason
            .contains(&text_key("nothing embedded here")));

        let all_ok = |_: &str| Ok(VaPoint::new(1.0, 1.0));
        let out = annotate_catalog(&songs, &all_ok, 50, "toy", None).unwrap();
        assert_eq!((out.db.len(), out.skipped.len()), (3, 0));

        assert!(annotate_catalog::<f64>(&[], &all_ok, 50, "toy", None).is_err());
        let none = |c: &str| Err(Error::EmbeddingNotFound { key: text_key(c) });
        assert!(annotate_catalog::<f64>(&songs, &none, 50, "toy", None).is_err());
    }

    fn sample_db() -> SongDatabase<f64> {
        SongDatabase::new(
            "toy-encoder",
            Some(VaScaler {
                mean: [3.0, 2.9],
                std: [0.3, 0.25],
            }),
            vec![
                AnnotatedSong {
                    artist_norm: "kirk franklin".into(),
                    artist_display: "Kirk Franklin".into(),
                    title: "Oh Happy Day".into(),
                    va: VaPoint::new(3.481344, 3.186183),
                    chunk_count: 4,
                },
                AnnotatedSong {
                    artist_norm: "enya".into(),
                    artist_display: "Enya".into(),
                    title: "Orinoco \"Flow\"".into(),
                    va: VaPoint::new(1.0 / 3.0, 2.0),
                    chunk_count: 1,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn song_db_roundtrip() {
        let db = sample_db();
        let mut first = Vec::new();
        db.write(&mut first).unwrap();
        let text = String::from_utf8(first.clone()).unwrap();
        assert!(text.starts_with("{\"format\":\"songdb.v1\",\"model\":\"toy-encoder\""));
        assert!(text.contains("\"v\":3.481344,\"a\":3.186183,\"chunks\":4"));
        assert!(text.contains("\"v\":0.333333333"));

        let loaded = SongDatabase::<f64>::read(first.as_slice(), Path::new("db")).unwrap();
        assert_eq!(loaded.songs()[0], db.songs()[0]);
        assert_eq!(loaded.scaler(), db.scaler());
        let mut second = Vec::new();
        loaded.write(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn song_db_load_errors() {
        let mut buf = Vec::new();
        sample_db().write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();

        let dup = format!("{}\n{}\n{}\n", lines[0], lines[1], lines[1]);
        assert!(matches!(
            SongDatabase::<f64>::read(dup.as_bytes(), Path::new("db")),
            Err(Error::Parse { line: 3, .. })
        ));
        let corrupt = format!("{}\n{}\n{{\"artist_norm\":\n", lines[0], lines[1]);
        assert!(matches!(
            SongDatabase::<f64>::read(corrupt.as_bytes(), Path::new("db")),
            Err(Error::Parse { line: 3, .. })
        ));
        let v2 = text.replace("songdb.v1", "songdb.v2");
        assert!(matches!(
            SongDatabase::<f64>::read(v2.as_bytes(), Path::new("db")),
            Err(Error::UnsupportedVersion { .. })
        ));
    }

    proptest! {
        #[test]
        fn chunking_conserves_words(lyrics in "[a-z]{1,4}([ \n\t]{1,3}[a-z]{1,4}){0,300}", size in 1usize..80) {
            let chunks = chunk_lyrics(&lyrics, size).unwrap();
            let rejoined: Vec<&str> = chunks.iter().flat_map(|c| c.split(' ')).collect();
            let original: Vec<&str> = lyrics.split_whitespace().collect();
            prop_assert_eq!(rejoined, original);
            prop_assert!(chunks.iter().all(|c| crate::features::word_count(c) <= size));
        }
    }
}
