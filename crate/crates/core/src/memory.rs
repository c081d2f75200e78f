//! User profiles and the two memory tables (user x emotion, emotion x artist)
//! built from play logs joined to the annotated catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotator::SongDatabase;
use crate::corpus::{Catalog, PlayRecord};
use crate::features::{va_bin, EmotionBin, EMOTION_BINS};
use crate::{Error, Result, Scalar};

pub const MEMORY_TABLE_FORMAT: &str = "memtab.v1";
const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Engagement {
    Low,
    Medium,
    High,
    Super,
}

impl fmt::Display for Engagement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engagement::Low => "low",
            Engagement::Medium => "medium",
            Engagement::High => "high",
            Engagement::Super => "super",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: String,
    pub top_artist_norm: String,
    pub total_plays: u64,
    pub engagement: Engagement,
}

/// Most played artist; ties go to the lexicographically smallest name.
pub fn top_artist<'a>(plays: impl IntoIterator<Item = &'a PlayRecord>) -> Result<String> {
    let mut per_artist: BTreeMap<&str, u64> = BTreeMap::new();
    for p in plays {
        *per_artist.entry(&p.artist_norm).or_default() += p.play_count;
    }
    // BTreeMap iterates in ascending name order, so the first maximum wins.
    let mut best: Option<(&str, u64)> = None;
    for (artist, count) in per_artist {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((artist, count));
        }
    }
    best.map(|(a, _)| a.to_owned())
        .ok_or(Error::Empty("user has no play records"))
}

/// Q1..Q3 of the population by nearest rank, taking the element at 1-based
/// rank `floor(p * n) + 1` (clamped to `n`).
pub fn engagement_quartiles(all_totals: &[u64]) -> Result<[u64; 3]> {
    if all_totals.is_empty() {
        return Err(Error::Empty("engagement population"));
    }
    let mut sorted = all_totals.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let at = |quarters: usize| sorted[(quarters * n / 4 + 1).min(n) - 1];
    Ok([at(1), at(2), at(3)])
}

pub fn engagement_level(total_plays: u64, all_totals: &[u64]) -> Result<Engagement> {
    let [q1, q2, q3] = engagement_quartiles(all_totals)?;
    if !all_totals.contains(&total_plays) {
        return Err(Error::contract(format!(
            "total {total_plays} is not part of the engagement population"
        )));
    }
    Ok(if total_plays < q1 {
        Engagement::Low
    } else if total_plays < q2 {
        Engagement::Medium
    } else if total_plays < q3 {
        Engagement::High
    } else {
        Engagement::Super
    })
}

/// Profiles for every user in the log. All plays count here, matched to the
/// catalog or not.
pub fn build_profiles(plays: &[PlayRecord]) -> Result<BTreeMap<String, UserProfile>> {
    let mut by_user: BTreeMap<&str, Vec<&PlayRecord>> = BTreeMap::new();
    for p in plays {
        by_user.entry(&p.user_id).or_default().push(p);
    }
    let totals: Vec<u64> = by_user
        .values()
        .map(|ps| ps.iter().map(|p| p.play_count).sum())
        .collect();
    let mut out = BTreeMap::new();
    for ((user, ps), &total) in by_user.into_iter().zip(&totals) {
        out.insert(
            user.to_owned(),
            UserProfile {
                user_id: user.to_owned(),
                top_artist_norm: top_artist(ps.iter().copied())?,
                total_plays: total,
                engagement: engagement_level(total, &totals)?,
            },
        );
    }
    Ok(out)
}

/// Row-normalized distribution of each user's plays over emotion bins.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserEmotionTable<T> {
    pub rows: BTreeMap<String, [T; EMOTION_BINS]>,
}

/// For each emotion bin, a row-normalized distribution over artists.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionArtistTable<T> {
    pub rows: [BTreeMap<String, T>; EMOTION_BINS],
}

impl<T> Default for EmotionArtistTable<T> {
    fn default() -> Self {
        EmotionArtistTable {
            rows: std::array::from_fn(|_| BTreeMap::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryTables<T> {
    pub user_emotion: UserEmotionTable<T>,
    pub emotion_artist: EmotionArtistTable<T>,
}

/// Unnormalized play mass, before the row normalization step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryCounts<T> {
    pub user_emotion: UserEmotionTable<T>,
    pub emotion_artist: EmotionArtistTable<T>,
    /// Sum of play counts of records whose artist has annotated songs.
    pub matched_plays: u64,
}

/// Spreads every matched play record over its artist's annotated songs in
/// equal shares and accumulates the shares per emotion bin.
pub fn accumulate_memory<T: Scalar>(
    catalog: &Catalog,
    song_db: &SongDatabase<T>,
) -> Result<MemoryCounts<T>> {
    // artist -> songs per bin
    let mut artist_bins: BTreeMap<&str, [u64; EMOTION_BINS]> = BTreeMap::new();
    for song in song_db.songs() {
        if !catalog.joined_artists.contains(&song.artist_norm) {
            continue;
        }
        let bin = va_bin(song.va)?;
        artist_bins
            .entry(&song.artist_norm)
            .or_insert([0; EMOTION_BINS])[bin.id()] += 1;
    }

    // Summing integers into ordered maps makes the result independent of
    // record order.
    let mut plays: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for p in &catalog.plays {
        if artist_bins.contains_key(p.artist_norm.as_str()) {
            *plays.entry((&p.user_id, &p.artist_norm)).or_default() += p.play_count;
        }
    }

    let mut counts = MemoryCounts::<T>::default();
    for ((user, artist), count) in plays {
        counts.matched_plays += count;
        if count == 0 {
            continue;
        }
        let bins = &artist_bins[artist];
        let songs: u64 = bins.iter().sum();
        let row = counts
            .user_emotion
            .rows
            .entry(user.to_owned())
            .or_insert([T::zero(); EMOTION_BINS]);
        for (bin, &k) in bins.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let share = T::lit(count as f64) * T::lit(k as f64) / T::lit(songs as f64);
            row[bin] += share;
            *counts.emotion_artist.rows[bin]
                .entry(artist.to_owned())
                .or_insert(T::zero()) += share;
        }
    }
    Ok(counts)
}

impl<T: Scalar> MemoryCounts<T> {
    pub fn total_mass(&self) -> T {
        self.user_emotion.rows.values().flatten().copied().sum()
    }

    pub fn normalize(self) -> MemoryTables<T> {
        let mut user_emotion = UserEmotionTable::default();
        for (user, row) in self.user_emotion.rows {
            let total: T = row.iter().copied().sum();
            if total > T::zero() {
                user_emotion.rows.insert(user, row.map(|v| v / total));
            }
        }
        let mut emotion_artist = EmotionArtistTable::default();
        for (bin, row) in self.emotion_artist.rows.into_iter().enumerate() {
            let total: T = row.values().copied().sum();
            if total > T::zero() {
                emotion_artist.rows[bin] = row.into_iter().map(|(a, v)| (a, v / total)).collect();
            }
        }
        MemoryTables {
            user_emotion,
            emotion_artist,
        }
    }
}

pub fn build_memory_tables<T: Scalar>(
    catalog: &Catalog,
    song_db: &SongDatabase<T>,
) -> Result<MemoryTables<T>> {
    Ok(accumulate_memory(catalog, song_db)?.normalize())
}

impl<T: Scalar> MemoryTables<T> {
    pub fn lookup_mem_ue(&self, user_id: &str, bin: EmotionBin) -> T {
        self.user_emotion
            .rows
            .get(user_id)
            .map_or(T::zero(), |row| row[bin.id()])
    }

    pub fn lookup_mem_ea(&self, bin: EmotionBin, artist_norm: &str) -> T {
        self.emotion_artist.rows[bin.id()]
            .get(artist_norm)
            .copied()
            .unwrap_or(T::zero())
    }

    pub fn is_empty(&self) -> bool {
        self.user_emotion.rows.is_empty() && self.emotion_artist.rows.iter().all(|r| r.is_empty())
    }

    /// Artists appearing in any emotion-artist row.
    pub fn artists(&self) -> BTreeSet<&str> {
        self.emotion_artist
            .rows
            .iter()
            .flat_map(|r| r.keys().map(String::as_str))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(PartialEq, Eq, Clone, Copy, Debug)]
enum TableKind {
    UserEmotion,
    EmotionArtist,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    kind: TableKind,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserRow {
    user: String,
    p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtistRow {
    bin: usize,
    artists: BTreeMap<String, f64>,
}

fn write_line(out: &mut impl Write, value: &impl Serialize) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

fn check_distribution(values: impl Iterator<Item = f64>) -> std::result::Result<(), String> {
    let mut sum = 0.0;
    for v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("entry {v} outside [0, 1]"));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(format!("row sums to {sum}, not 1"));
    }
    Ok(())
}

fn read_header(
    lines: &mut impl Iterator<Item = std::io::Result<String>>,
    path: &Path,
    expected: TableKind,
) -> Result<()> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_owned(),
        line: 1,
        message,
    };
    let line = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err("missing memtab header".into())),
    };
    let value: serde_json::Value =
        serde_json::from_str(&line).map_err(|e| parse_err(format!("bad header: {e}")))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(MEMORY_TABLE_FORMAT) => {}
        Some(other) => {
            return Err(Error::UnsupportedVersion {
                found: other.to_owned(),
                expected: MEMORY_TABLE_FORMAT.into(),
            })
        }
        None => return Err(parse_err("header has no format tag".into())),
    }
    let header: Header =
        serde_json::from_value(value).map_err(|e| parse_err(format!("bad header: {e}")))?;
    if header.kind != expected {
        return Err(parse_err(format!(
            "expected a {expected:?} table, found {:?}",
            header.kind
        )));
    }
    Ok(())
}

fn data_lines<'a>(
    lines: impl Iterator<Item = std::io::Result<String>> + 'a,
    path: &'a Path,
) -> impl Iterator<Item = Result<(u64, String)>> + 'a {
    lines
        .enumerate()
        .map(move |(i, l)| l.map(|l| (i as u64 + 2, l)).map_err(|e| Error::io(path, e)))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

impl<T: Scalar> UserEmotionTable<T> {
    pub fn write(&self, out: impl Write) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        write_line(
            &mut out,
            &Header {
                format: MEMORY_TABLE_FORMAT.into(),
                kind: TableKind::UserEmotion,
            },
        )?;
        for (user, row) in &self.rows {
            write_line(
                &mut out,
                &UserRow {
                    user: user.clone(),
                    p: row.iter().map(|v| v.to_f64_lossy()).collect(),
                },
            )?;
        }
        out.flush()
    }

    pub fn read(input: impl Read, path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        read_header(&mut lines, path, TableKind::UserEmotion)?;
        let mut table = UserEmotionTable::default();
        for item in data_lines(lines, path) {
            let (line_no, line) = item?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: line_no,
                message,
            };
            let row: UserRow =
                serde_json::from_str(&line).map_err(|e| parse_err(format!("bad row: {e}")))?;
            let p: [f64; EMOTION_BINS] = row
                .p
                .try_into()
                .map_err(|_| parse_err(format!("expected {EMOTION_BINS} probabilities")))?;
            check_distribution(p.iter().copied()).map_err(parse_err)?;
            if table.rows.insert(row.user.clone(), p.map(T::lit)).is_some() {
                return Err(parse_err(format!("duplicate user {:?}", row.user)));
            }
        }
        Ok(table)
    }
}

impl<T: Scalar> EmotionArtistTable<T> {
    pub fn write(&self, out: impl Write) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        write_line(
            &mut out,
            &Header {
                format: MEMORY_TABLE_FORMAT.into(),
                kind: TableKind::EmotionArtist,
            },
        )?;
        for (bin, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            write_line(
                &mut out,
                &ArtistRow {
                    bin,
                    artists: row
                        .iter()
                        .map(|(a, v)| (a.clone(), v.to_f64_lossy()))
                        .collect(),
                },
            )?;
        }
        out.flush()
    }

    pub fn read(input: impl Read, path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        read_header(&mut lines, path, TableKind::EmotionArtist)?;
        let mut table = EmotionArtistTable::default();
        let mut seen = [false; EMOTION_BINS];
        for item in data_lines(lines, path) {
            let (line_no, line) = item?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: line_no,
                message,
            };
            let row: ArtistRow =
                serde_json::from_str(&line).map_err(|e| parse_err(format!("bad row: {e}")))?;
            if row.bin >= EMOTION_BINS {
                return Err(parse_err(format!(
                    "bin {} outside 0..{EMOTION_BINS}",
                    row.bin
                )));
            }
            if std::mem::replace(&mut seen[row.bin], true) {
                return Err(parse_err(format!("duplicate bin {}", row.bin)));
            }
            check_distribution(row.artists.values().copied()).map_err(parse_err)?;
            table.rows[row.bin] = row
                .artists
                .into_iter()
                .map(|(a, v)| (a, T::lit(v)))
                .collect();
        }
        Ok(table)
    }
}

fn save_with(path: &Path, write: impl FnOnce(File) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write(file).map_err(|e| Error::io(path, e))
}

/// Writes the two tables to their own `memtab.v1` files.
pub fn save_memory_tables<T: Scalar>(
    tables: &MemoryTables<T>,
    user_emotion_path: impl AsRef<Path>,
    emotion_artist_path: impl AsRef<Path>,
) -> Result<()> {
    save_with(user_emotion_path.as_ref(), |f| tables.user_emotion.write(f))?;
    save_with(emotion_artist_path.as_ref(), |f| {
        tables.emotion_artist.write(f)
    })
}

pub fn load_memory_tables<T: Scalar>(
    user_emotion_path: impl AsRef<Path>,
    emotion_artist_path: impl AsRef<Path>,
) -> Result<MemoryTables<T>> {
    let open = |p: &Path| File::open(p).map_err(|e| Error::io(p, e));
    let ue = user_emotion_path.as_ref();
    let ea = emotion_artist_path.as_ref();
    Ok(MemoryTables {
        user_emotion: UserEmotionTable::read(open(ue)?, ue)?,
        emotion_artist: EmotionArtistTable::read(open(ea)?, ea)?,
    })
}
