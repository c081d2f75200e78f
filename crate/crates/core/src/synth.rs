//! Deterministic synthetic data: an emotion corpus whose labels are a noisy
//! linear function of the embeddings, a lyrics catalog, a play log, and a
//! hash-derived embedding store covering all of them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::annotator::chunk_lyrics;
use crate::cli::{Paths, RunConfig};
use crate::corpus::{
    normalize_artist_name, write_emotion_corpus, write_lyrics_catalog, write_play_log,
    EmotionSentence, PlayRecord, SongRecord,
};
use crate::embedder::{EmbeddingStore, EMBEDDING_DIM};
use crate::{Error, Result, Scalar};

pub const SYNTH_MODEL_TAG: &str = "synthetic-sha256-uniform";

/// Standard deviation of the label noise in standardized units.
pub const LABEL_NOISE: f64 = 0.1;

/// Corpus-scale units per standardized unit.
const VA_SPREAD: f64 = 0.5;

const WORDS: &[&str] = &[
    "amber", "bright", "calm", "dark", "drift", "echo", "ember", "fading", "glow", "heavy",
    "hollow", "honey", "iron", "light", "low", "midnight", "morning", "neon", "ocean", "pale",
    "quiet", "rain", "restless", "river", "rust", "silver", "slow", "storm", "sun", "tender",
    "thunder", "velvet", "warm", "wild", "winter", "wire",
];

const ARTIST_FIRST: &[&str] = &[
    "The", "Little", "Neon", "Saint", "Electric", "Velvet", "Paper", "Golden", "Broken", "Silent",
];
const ARTIST_SECOND: &[&str] = &[
    "Owls",
    "Rivers",
    "Machines",
    "Hearts",
    "Tigers",
    "Lanterns",
    "Foxes",
    "Satellites",
    "Kings",
];

/// Queries used by the demo workspace; their embeddings are always stored.
pub const DEMO_QUERIES: &[&str] = &[
    "i feel calm and content tonight",
    "so angry i could scream",
    "tired and a little sad",
    "excited for the weekend",
];

/// Hash-seeded embedding with coordinates uniform on `[-sqrt 3, sqrt 3]`
/// (zero mean, unit variance).
pub fn synthetic_embedding(body: &str, dim: usize) -> Vec<f64> {
    let digest = Sha256::digest(body.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let half_width = 3f64.sqrt();
    (0..dim)
        .map(|_| rng.gen_range(-half_width..half_width))
        .collect()
}

/// Standardized VA implied by an embedding, before noise.
pub fn linear_target(embedding: &[f64]) -> [f64; 2] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [
        r * (embedding[0] + embedding[1]),
        r * (embedding[2] - embedding[3]),
    ]
}

fn to_corpus_scale(z: f64) -> f64 {
    3.0 + VA_SPREAD * z
}

fn random_words(rng: &mut ChaCha8Rng, count: usize) -> Vec<&'static str> {
    (0..count)
        .map(|_| *WORDS.choose(rng).expect("vocabulary is non-empty"))
        .collect()
}

/// `n` sentences with unique bodies. Labels are
/// `3 + 0.5 * (linear_target(embedding) + noise)` with noise `N(0, 0.1^2)`.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<EmotionSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, LABEL_NOISE).expect("valid normal");
    (0..n)
        .map(|i| {
            let len = if rng.gen_bool(0.05) {
                rng.gen_range(100..=900)
            } else {
                rng.gen_range(2..=30)
            };
            let mut words = random_words(&mut rng, len);
            let tag = format!("s{i}");
            words.push(&tag);
            let body = words.join(" ");
            let z = linear_target(&synthetic_embedding(&body, EMBEDDING_DIM));
            EmotionSentence {
                id: format!("syn{i:05}"),
                valence: to_corpus_scale(z[0] + noise.sample(&mut rng)),
                arousal: to_corpus_scale(z[1] + noise.sample(&mut rng)),
                body,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub sentences: usize,
    pub artists: usize,
    pub songs_per_artist: usize,
    pub users: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            sentences: 400,
            artists: 12,
            songs_per_artist: 4,
            users: 20,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub sentences: Vec<EmotionSentence>,
    pub songs: Vec<SongRecord>,
    pub plays: Vec<PlayRecord>,
}

fn artist_name(i: usize) -> String {
    let first = ARTIST_FIRST[i % ARTIST_FIRST.len()];
    let second = ARTIST_SECOND[(i / ARTIST_FIRST.len() + i) % ARTIST_SECOND.len()];
    // Vary punctuation and case so the join depends on normalization.
    match i % 4 {
        0 => format!("{first} {second}"),
        1 => format!("{}  {}!", first.to_uppercase(), second),
        2 => format!("{first} & the {second}"),
        _ => format!("{first}-{second} ({i})"),
    }
}

/// A catalog and play log. Users also play one artist that is absent from
/// the catalog so that unmatched plays are exercised.
pub fn synthetic_world(spec: &WorldSpec) -> SyntheticWorld {
    let sentences = synthetic_corpus(spec.sentences, spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let artists: Vec<String> = (0..spec.artists).map(artist_name).collect();

    let mut songs = Vec::with_capacity(spec.artists * spec.songs_per_artist);
    for artist in &artists {
        for j in 0..spec.songs_per_artist {
            let len = rng.gen_range(20..=180);
            songs.push(SongRecord {
                artist_raw: artist.clone(),
                artist_norm: normalize_artist_name(artist),
                title: format!("{} {}", random_words(&mut rng, 2).join(" "), j + 1),
                lyrics: random_words(&mut rng, len).join(" "),
            });
        }
    }

    let mut plays = Vec::new();
    for u in 0..spec.users {
        let user_id = format!("user{u:03}");
        let mut liked: Vec<&String> = artists.iter().collect();
        liked.shuffle(&mut rng);
        let count = rng.gen_range(1..=artists.len().clamp(1, 4));
        for artist in liked.into_iter().take(count) {
            plays.push(PlayRecord {
                user_id: user_id.clone(),
                artist_raw: artist.clone(),
                artist_norm: normalize_artist_name(artist),
                play_count: rng.gen_range(1..=500),
            });
        }
        if u % 3 == 0 {
            plays.push(PlayRecord {
                user_id: user_id.clone(),
                artist_raw: "Nobody You Know".into(),
                artist_norm: normalize_artist_name("Nobody You Know"),
                play_count: rng.gen_range(1..=50),
            });
        }
    }

    SyntheticWorld {
        sentences,
        songs,
        plays,
    }
}

/// Store holding the synthetic embedding of every given text.
pub fn synthetic_store<'a, T: Scalar>(
    texts: impl IntoIterator<Item = &'a str>,
) -> Result<EmbeddingStore<T>> {
    let mut store = EmbeddingStore::new(EMBEDDING_DIM, SYNTH_MODEL_TAG);
    for text in texts {
        if !store.contains_text(text) {
            let values = synthetic_embedding(text, EMBEDDING_DIM)
                .into_iter()
                .map(T::lit)
                .collect();
            store.insert(text, values)?;
        }
    }
    Ok(store)
}

/// Store covering the world's sentences, lyric chunks, and the demo queries.
pub fn world_store<T: Scalar>(
    world: &SyntheticWorld,
    chunk_words: usize,
) -> Result<EmbeddingStore<T>> {
    let mut texts: Vec<String> = world.sentences.iter().map(|s| s.body.clone()).collect();
    for song in &world.songs {
        texts.extend(chunk_lyrics(&song.lyrics, chunk_words)?);
    }
    texts.extend(DEMO_QUERIES.iter().map(|q| q.to_string()));
    synthetic_store(texts.iter().map(String::as_str))
}

/// Writes the world's inputs and a `run.json` that points at them (and at
/// output locations in the same directory). Returns the config path.
pub fn write_workspace(
    dir: impl AsRef<Path>,
    world: &SyntheticWorld,
    config: &RunConfig,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path)
            .map(|f| (f, path.clone()))
            .map_err(|e| Error::io(&path, e))
    };
    let (f, path) = create("corpus.csv")?;
    write_emotion_corpus(f, &path, &world.sentences)?;
    let (f, path) = create("lyrics.csv")?;
    write_lyrics_catalog(f, &path, &world.songs)?;
    let (f, path) = create("plays.tsv")?;
    write_play_log(f, &path, &world.plays)?;
    world_store::<f64>(world, config.chunk_words)?.save(dir.join("embeddings.jsonl"))?;

    let run = RunConfig {
        paths: Paths {
            corpus: Some("corpus.csv".into()),
            lyrics: Some("lyrics.csv".into()),
            playlog: Some("plays.tsv".into()),
            embeddings: Some("embeddings.jsonl".into()),
            checkpoint: Some("head.ckpt.json".into()),
            song_db: Some("songs.jsonl".into()),
            user_emotion: Some("user_emotion.jsonl".into()),
            emotion_artist: Some("emotion_artist.jsonl".into()),
        },
        ..config.clone()
    };
    let config_path = dir.join("run.json");
    run.save(&config_path)?;
    Ok(config_path)
}
