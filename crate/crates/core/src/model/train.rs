use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::{gradients, Example};
use super::loss::{r_squared, smooth_l1};
use super::optim::{lr_at_step, Adam};
use super::{HeadShape, WideDeepHead};
use crate::corpus::EmotionSentence;
use crate::embedder::{text_key, EmbeddingStore};
use crate::features::{fit_scaler, VaPoint, VaScaler, WideFeature, LENGTH_BUCKETS};
use crate::{Error, Result, Scalar};

pub const MIN_TRAIN_SENTENCES: usize = 10;

const SPLIT_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_fraction: f64,
    pub smooth_l1_beta: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            base_lr: 2e-4,
            warmup_fraction: 0.1,
            smooth_l1_beta: 1.0,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArgument(msg.to_owned()));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return fail("base_lr must be positive");
        }
        if !(self.smooth_l1_beta > 0.0 && self.smooth_l1_beta.is_finite()) {
            return fail("smooth_l1_beta must be positive");
        }
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.warmup_fraction) || !open_unit(self.validation_fraction) {
            return fail("warmup_fraction and validation_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats<T> {
    pub epoch: usize,
    pub train_loss: T,
    pub val_loss: T,
    pub val_r2: T,
}

/// Per-epoch losses and R², all in standardized target space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport<T> {
    pub epochs: Vec<EpochStats<T>>,
}

impl<T: Scalar> TrainReport<T> {
    pub fn last(&self) -> Option<&EpochStats<T>> {
        self.epochs.last()
    }

    /// `epoch  train_loss  val_loss  val_r2` as TSV with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_loss\tval_r2\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\n",
                e.epoch,
                e.train_loss.to_f64_lossy(),
                e.val_loss.to_f64_lossy(),
                e.val_r2.to_f64_lossy()
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub head: WideDeepHead<T>,
    pub scaler: VaScaler<T>,
    pub report: TrainReport<T>,
}

/// Seeded train/validation split of `0..n`. Returns `(train, validation)`,
/// each in ascending order.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let val_count = if n < 2 {
        0
    } else {
        ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1)
    };
    let mut val = order[..val_count].to_vec();
    let mut train = order[val_count..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Mean Smooth-L1 loss and R² of the head over `examples`.
pub fn evaluate<T: Scalar>(
    head: &WideDeepHead<T>,
    examples: &[Example<'_, T>],
    beta: T,
) -> Result<(T, T)> {
    let mut preds = Vec::with_capacity(examples.len());
    for ex in examples {
        preds.push(head.forward(ex.deep, ex.wide)?);
    }
    let targets: Vec<[T; 2]> = examples.iter().map(|e| e.target).collect();
    let loss = smooth_l1(preds.as_flattened(), targets.as_flattened(), beta)?;
    Ok((loss, r_squared(&preds, &targets)?))
}

type SentenceInputs<'s, T> = (Vec<&'s [T]>, Vec<[T; LENGTH_BUCKETS]>);

/// Embeddings and length features for each sentence. Fails listing every
/// sentence without a stored embedding.
pub(crate) fn sentence_inputs<'s, T: Scalar>(
    sentences: &[EmotionSentence],
    store: &'s EmbeddingStore<T>,
) -> Result<SentenceInputs<'s, T>> {
    let mut embeddings = Vec::with_capacity(sentences.len());
    let mut missing = Vec::new();
    for s in sentences {
        match store.get_embedding(&s.body) {
            Ok(v) => embeddings.push(v),
            Err(_) => missing.push(text_key(&s.body)),
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingEmbeddings { keys: missing });
    }
    let wide = sentences
        .iter()
        .map(|s| WideFeature::from_text(&s.body).values::<T>())
        .collect();
    Ok((embeddings, wide))
}

pub(crate) fn label<T: Scalar>(s: &EmotionSentence) -> VaPoint<T> {
    VaPoint::new(T::lit(s.valence), T::lit(s.arousal))
}

/// Trains the default architecture for the store's embedding width.
pub fn train<T: Scalar>(
    sentences: &[EmotionSentence],
    store: &EmbeddingStore<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with_shape(
        sentences,
        store,
        config,
        &HeadShape::default_for(store.dim()),
    )
}

pub fn train_with_shape<T: Scalar>(
    sentences: &[EmotionSentence],
    store: &EmbeddingStore<T>,
    config: &TrainConfig,
    shape: &HeadShape,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if sentences.len() < MIN_TRAIN_SENTENCES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TRAIN_SENTENCES} sentences to train, got {}",
            sentences.len()
        )));
    }
    if shape.deep.first() != Some(&store.dim()) || shape.wide.first() != Some(&LENGTH_BUCKETS) {
        return Err(Error::contract(format!(
            "head inputs {:?}/{:?} do not match embedding dim {} and {LENGTH_BUCKETS} length buckets",
            shape.deep.first(),
            shape.wide.first(),
            store.dim()
        )));
    }
    let (embeddings, wide) = sentence_inputs(sentences, store)?;
    let (train_idx, val_idx) =
        split_indices(sentences.len(), config.validation_fraction, config.seed);

    let train_targets: Vec<VaPoint<T>> = train_idx.iter().map(|&i| label(&sentences[i])).collect();
    let scaler = fit_scaler(&train_targets)?;
    let example = |i: usize| Example {
        deep: embeddings[i],
        wide: &wide[i],
        target: scaler.standardize(label(&sentences[i])),
    };
    let train_set: Vec<Example<'_, T>> = train_idx.iter().map(|&i| example(i)).collect();
    let val_set: Vec<Example<'_, T>> = val_idx.iter().map(|&i| example(i)).collect();

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(INIT_STREAM);
    let mut head = WideDeepHead::init(shape, &mut init_rng)?;
    let mut adam = Adam::new(&head);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let beta = T::lit(config.smooth_l1_beta);
    let batches_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let mut step = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut report = TrainReport::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = T::zero();
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i]));
            let (loss, grads) = gradients(&head, &batch, beta)?;
            loss_sum += loss * T::from_usize(batch.len()).expect("batch fits scalar");
            let lr = T::lit(lr_at_step(step, total_steps, config));
            adam.update(&mut head, &grads, lr);
            step += 1;
        }
        let train_loss = loss_sum / T::from_usize(train_set.len()).expect("size fits scalar");
        let (val_loss, val_r2) = evaluate(&head, &val_set, beta)?;
        report.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_r2,
        });
    }

    Ok(TrainOutcome {
        head,
        scaler,
        report,
    })
}

/// Loss and R² of a trained head on the validation split that
/// `train_with_shape` derives from `validation_fraction` and `seed`, with
/// targets standardized by `scaler`.
pub fn evaluate_held_out<T: Scalar>(
    head: &WideDeepHead<T>,
    scaler: &VaScaler<T>,
    sentences: &[EmotionSentence],
    store: &EmbeddingStore<T>,
    config: &TrainConfig,
) -> Result<(T, T)> {
    config.validate()?;
    if sentences.len() < MIN_TRAIN_SENTENCES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TRAIN_SENTENCES} sentences to evaluate, got {}",
            sentences.len()
        )));
    }
    let (embeddings, wide) = sentence_inputs(sentences, store)?;
    let (_, val_idx) = split_indices(sentences.len(), config.validation_fraction, config.seed);
    let val_set: Vec<Example<'_, T>> = val_idx
        .iter()
        .map(|&i| Example {
            deep: embeddings[i],
            wide: &wide[i],
            target: scaler.standardize(label(&sentences[i])),
        })
        .collect();
    evaluate(head, &val_set, T::lit(config.smooth_l1_beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (train, val) = split_indices(100, 0.1, 7);
        assert_eq!(val.len(), 10);
        assert_eq!(train.len(), 90);
        let mut all: Vec<_> = train.iter().chain(&val).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.1, 7), (train, val.clone()));
        assert_ne!(split_indices(100, 0.1, 8).1, val);
        assert_eq!(split_indices(10, 0.01, 0).1.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                base_lr: 0.0,
                ..Default::default()
            },
            TrainConfig {
                warmup_fraction: 1.0,
                ..Default::default()
            },
            TrainConfig {
                validation_fraction: 0.0,
                ..Default::default()
            },
            TrainConfig {
                smooth_l1_beta: -1.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    fn sentence(i: usize) -> EmotionSentence {
        EmotionSentence {
            id: format!("s{i}"),
            body: format!("sentence number {i}"),
            valence: 1.0 + (i % 5) as f64 * 0.8,
            arousal: 3.0,
        }
    }

    #[test]
    fn refuses_tiny_corpora_and_missing_embeddings() {
        let mut store: EmbeddingStore<f64> = EmbeddingStore::new(3, "toy");
        let sentences: Vec<_> = (0..12).map(sentence).collect();
        for s in &sentences[..9] {
            store.insert(&s.body, vec![0.1, 0.2, 0.3]).unwrap();
        }
        let config = TrainConfig::default();
        assert!(matches!(
            train(&sentences[..9], &store, &config),
            Err(Error::InvalidArgument(_))
        ));
        match train(&sentences, &store, &config) {
            Err(Error::MissingEmbeddings { keys }) => assert_eq!(keys.len(), 3),
            other => panic!("unexpected {:?}", other.map(|o| o.report)),
        }
    }
}
