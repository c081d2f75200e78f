//! Ranking: `score = -|q - s| + w_ue * mem_ue + w_ea * mem_ea` over a
//! candidate pool restricted to the user's top artist when possible.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotator::{AnnotatedSong, SongDatabase};
use crate::features::{va_bin, EmotionBin, VaPoint};
use crate::memory::{MemoryTables, UserProfile};
use crate::model::VaPredictor;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendConfig {
    pub k: usize,
    pub weight_ue: f64,
    pub weight_ea: f64,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        RecommendConfig {
            k: 5,
            weight_ue: 1.0,
            weight_ea: 1.0,
        }
    }
}

impl RecommendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !self.weight_ue.is_finite() || !self.weight_ea.is_finite() {
            return Err(Error::InvalidArgument(
                "memory weights must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query<T> {
    pub user_id: Option<String>,
    pub body: String,
    pub va: VaPoint<T>,
    pub bin: EmotionBin,
}

impl<T: Scalar> Query<T> {
    /// A query at a known VA point, bypassing text encoding.
    pub fn at(user_id: Option<&str>, body: &str, va: VaPoint<T>) -> Result<Self> {
        Ok(Query {
            user_id: user_id.map(str::to_owned),
            body: body.to_owned(),
            bin: va_bin(va)?,
            va,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSong<'a, T> {
    pub song: &'a AnnotatedSong<T>,
    pub distance: T,
    pub mem_ue: T,
    pub mem_ea: T,
    pub score: T,
}

pub fn encode_query<T: Scalar>(
    user_id: Option<&str>,
    body: &str,
    predictor: &impl VaPredictor<T>,
) -> Result<Query<T>> {
    if body.trim().is_empty() {
        return Err(Error::InvalidArgument("query text is empty".into()));
    }
    Query::at(user_id, body, predictor.predict_va(body)?)
}

/// Songs by the user's top artist if there are any, otherwise every song.
pub fn candidate_pool<'a, T: Scalar>(
    query: &Query<T>,
    song_db: &'a SongDatabase<T>,
    profiles: &BTreeMap<String, UserProfile>,
) -> Result<Vec<&'a AnnotatedSong<T>>> {
    if song_db.is_empty() {
        return Err(Error::Empty("song database"));
    }
    let top_artist = query
        .user_id
        .as_deref()
        .and_then(|u| profiles.get(u))
        .map(|p| p.top_artist_norm.as_str());
    if let Some(artist) = top_artist {
        let familiar: Vec<_> = song_db
            .songs()
            .iter()
            .filter(|s| s.artist_norm == artist)
            .collect();
        if !familiar.is_empty() {
            return Ok(familiar);
        }
    }
    Ok(song_db.songs().iter().collect())
}

/// Both memory lookups use the query's emotion bin.
pub fn score_song<'a, T: Scalar>(
    query: &Query<T>,
    song: &'a AnnotatedSong<T>,
    tables: &MemoryTables<T>,
    config: &RecommendConfig,
) -> ScoredSong<'a, T> {
    let distance = query.va.distance(&song.va);
    let mem_ue = query
        .user_id
        .as_deref()
        .map_or(T::zero(), |u| tables.lookup_mem_ue(u, query.bin));
    let mem_ea = tables.lookup_mem_ea(query.bin, &song.artist_norm);
    let score = -distance + T::lit(config.weight_ue) * mem_ue + T::lit(config.weight_ea) * mem_ea;
    ScoredSong {
        song,
        distance,
        mem_ue,
        mem_ea,
        score,
    }
}

/// Descending score; ties by `(artist_norm, title)` ascending.
pub fn ranking_order<T: Scalar>(a: &ScoredSong<'_, T>, b: &ScoredSong<'_, T>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.song.artist_norm.cmp(&b.song.artist_norm))
        .then_with(|| a.song.title.cmp(&b.song.title))
}

pub fn recommend_top_k<'a, T: Scalar>(
    query: &Query<T>,
    song_db: &'a SongDatabase<T>,
    tables: &MemoryTables<T>,
    profiles: &BTreeMap<String, UserProfile>,
    config: &RecommendConfig,
) -> Result<Vec<ScoredSong<'a, T>>> {
    config.validate()?;
    let mut scored: Vec<_> = candidate_pool(query, song_db, profiles)?
        .into_iter()
        .map(|song| score_song(query, song, tables, config))
        .collect();
    scored.sort_by(ranking_order);
    scored.truncate(config.k);
    Ok(scored)
}
