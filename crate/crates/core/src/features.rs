//! Deterministic feature engineering: word counts, the sentence-length
//! one-hot (wide feature), VA target standardization and coarse emotion bins.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

pub const LENGTH_BUCKETS: usize = 7;
/// Upper end of the bucketed word-count range; longer texts land in the last bucket.
pub const LENGTH_RANGE: usize = 800;
pub const EMOTION_BINS: usize = 9;
pub const STD_FLOOR: f64 = 1e-8;

/// Number of maximal non-whitespace runs.
pub fn word_count(body: &str) -> usize {
    body.split_whitespace().count()
}

/// Seven equal-width buckets over `[0, 800)` words.
pub fn bucket_index(word_count: usize) -> usize {
    (word_count.saturating_mul(LENGTH_BUCKETS) / LENGTH_RANGE).min(LENGTH_BUCKETS - 1)
}

/// One-hot encoding of a length bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WideFeature {
    bucket: usize,
}

impl WideFeature {
    pub fn from_text(body: &str) -> Self {
        WideFeature {
            bucket: bucket_index(word_count(body)),
        }
    }

    pub fn bucket(&self) -> usize {
        self.bucket
    }

    pub fn values<T: Scalar>(&self) -> [T; LENGTH_BUCKETS] {
        let mut out = [T::zero(); LENGTH_BUCKETS];
        out[self.bucket] = T::one();
        out
    }
}

pub fn one_hot(bucket: usize) -> Result<WideFeature> {
    if bucket >= LENGTH_BUCKETS {
        return Err(Error::contract(format!(
            "length bucket {bucket} outside 0..{LENGTH_BUCKETS}"
        )));
    }
    Ok(WideFeature { bucket })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VaPoint<T> {
    pub valence: T,
    pub arousal: T,
}

impl<T: Scalar> VaPoint<T> {
    pub fn new(valence: T, arousal: T) -> Self {
        VaPoint { valence, arousal }
    }

    pub fn to_array(self) -> [T; 2] {
        [self.valence, self.arousal]
    }

    pub fn is_finite(&self) -> bool {
        self.valence.is_finite() && self.arousal.is_finite()
    }

    pub fn distance(&self, other: &VaPoint<T>) -> T {
        (self.valence - other.valence).hypot(self.arousal - other.arousal)
    }
}

/// Per-dimension standardization of VA targets (population statistics).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaScaler<T> {
    pub mean: [T; 2],
    pub std: [T; 2],
}

pub fn fit_scaler<T: Scalar>(targets: &[VaPoint<T>]) -> Result<VaScaler<T>> {
    if targets.is_empty() {
        return Err(Error::Empty("cannot fit a scaler on zero targets"));
    }
    let n = T::from_usize(targets.len()).expect("length fits scalar");
    let dims = |p: &VaPoint<T>| p.to_array();
    let mut mean = [T::zero(); 2];
    for p in targets {
        for (m, x) in mean.iter_mut().zip(dims(p)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = [T::zero(); 2];
    for p in targets {
        for d in 0..2 {
            let dev = dims(p)[d] - mean[d];
            var[d] += dev * dev;
        }
    }
    let floor = T::lit(STD_FLOOR);
    let std = var.map(|v| (v / n).sqrt().max(floor));
    Ok(VaScaler { mean, std })
}

impl<T: Scalar> VaScaler<T> {
    pub fn identity() -> Self {
        VaScaler {
            mean: [T::zero(); 2],
            std: [T::one(); 2],
        }
    }

    pub fn standardize(&self, p: VaPoint<T>) -> [T; 2] {
        let x = p.to_array();
        [
            (x[0] - self.mean[0]) / self.std[0],
            (x[1] - self.mean[1]) / self.std[1],
        ]
    }

    pub fn destandardize(&self, z: [T; 2]) -> VaPoint<T> {
        VaPoint::new(
            z[0] * self.std[0] + self.mean[0],
            z[1] * self.std[1] + self.mean[1],
        )
    }

    pub fn cast<U: Scalar>(&self) -> VaScaler<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        VaScaler {
            mean: self.mean.map(c),
            std: self.std.map(c),
        }
    }
}

/// One of nine cells partitioning VA space into low/mid/high thirds per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmotionBin {
    pub v_index: u8,
    pub a_index: u8,
}

impl EmotionBin {
    pub fn id(&self) -> usize {
        self.a_index as usize * 3 + self.v_index as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        if id >= EMOTION_BINS {
            return Err(Error::contract(format!("emotion bin {id} outside 0..9")));
        }
        Ok(EmotionBin {
            v_index: (id % 3) as u8,
            a_index: (id / 3) as u8,
        })
    }
}

fn axis_index<T: Scalar>(x: T) -> u8 {
    let low = T::lit(7.0) / T::lit(3.0);
    let high = T::lit(11.0) / T::lit(3.0);
    if x < low {
        0
    } else if x < high {
        1
    } else {
        2
    }
}

pub fn va_bin<T: Scalar>(p: VaPoint<T>) -> Result<EmotionBin> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cannot bin non-finite VA point ({}, {})",
            p.valence, p.arousal
        )));
    }
    Ok(EmotionBin {
        v_index: axis_index(p.valence),
        a_index: axis_index(p.arousal),
    })
}
