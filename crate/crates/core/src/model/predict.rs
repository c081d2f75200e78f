use super::WideDeepHead;
use crate::embedder::EmbeddingStore;
use crate::features::{VaPoint, VaScaler, WideFeature};
use crate::{Result, Scalar};

/// Anything that maps text to a VA point on the corpus scale.
pub trait VaPredictor<T> {
    fn predict_va(&self, body: &str) -> Result<VaPoint<T>>;
}

impl<T, F> VaPredictor<T> for F
where
    F: Fn(&str) -> Result<VaPoint<T>>,
{
    fn predict_va(&self, body: &str) -> Result<VaPoint<T>> {
        self(body)
    }
}

/// A trained head wired to its scaler and an embedding store.
#[derive(Debug, Clone, Copy)]
pub struct Predictor<'a, T> {
    pub head: &'a WideDeepHead<T>,
    pub scaler: &'a VaScaler<T>,
    pub store: &'a EmbeddingStore<T>,
}

impl<T: Scalar> VaPredictor<T> for Predictor<'_, T> {
    fn predict_va(&self, body: &str) -> Result<VaPoint<T>> {
        predict_va(self.head, self.scaler, self.store, body)
    }
}

pub fn predict_va<T: Scalar>(
    head: &WideDeepHead<T>,
    scaler: &VaScaler<T>,
    store: &EmbeddingStore<T>,
    body: &str,
) -> Result<VaPoint<T>> {
    let embedding = store.get_embedding(body)?;
    let z = head.forward_features(embedding, &WideFeature::from_text(body))?;
    Ok(scaler.destandardize(z))
}
