//! The wide-and-deep regression head.
//!
//! Two feed-forward branches, a deep one over the sentence embedding and a
//! wide one over the length one-hot, are concatenated and mapped by a single
//! linear layer to standardized `[valence, arousal]`.

mod backprop;
mod checkpoint;
mod loss;
mod optim;
mod predict;
mod train;

pub use backprop::{gradients, Example, HeadGradients, LayerGradient};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use loss::{r_squared, smooth_l1, smooth_l1_grad};
pub use optim::{lr_at_step, warmup_steps, Adam};
pub use predict::{predict_va, Predictor, VaPredictor};
pub use train::{
    evaluate, evaluate_held_out, split_indices, train, train_with_shape, EpochStats, TrainConfig,
    TrainOutcome, TrainReport, MIN_TRAIN_SENTENCES,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::{WideFeature, LENGTH_BUCKETS};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Identity => z,
        }
    }

    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu if z > T::zero() => T::one(),
            Activation::Relu => T::zero(),
            Activation::Identity => T::one(),
        }
    }
}

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    inputs: usize,
    outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
            activation,
        }
    }

    pub fn from_parts(
        inputs: usize,
        outputs: usize,
        weights: Vec<T>,
        bias: Vec<T>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::contract("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::contract(format!(
                "layer {inputs}->{outputs} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::contract("layer parameters must be finite"));
        }
        Ok(DenseLayer {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| T::lit(rng.gen_range(-limit..=limit)))
            .collect();
        DenseLayer {
            inputs,
            outputs,
            weights,
            bias: vec![T::zero(); outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn pre_activation(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut z = self.pre_activation(x);
        z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        z
    }
}

/// Layer widths of a head, input width first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadShape {
    pub deep: Vec<usize>,
    pub wide: Vec<usize>,
}

impl HeadShape {
    /// Deep `dim -> 128 -> 64`, wide `7 -> 16`.
    pub fn default_for(embedding_dim: usize) -> Self {
        HeadShape {
            deep: vec![embedding_dim, 128, 64],
            wide: vec![LENGTH_BUCKETS, 16],
        }
    }
}

impl Default for HeadShape {
    fn default() -> Self {
        HeadShape::default_for(crate::embedder::EMBEDDING_DIM)
    }
}

/// Which part of the head a layer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Deep,
    Wide,
    Fusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WideDeepHead<T> {
    deep_input: usize,
    wide_input: usize,
    deep: Vec<DenseLayer<T>>,
    wide: Vec<DenseLayer<T>>,
    fusion: DenseLayer<T>,
}

fn chain_output<T: Scalar>(name: &str, input: usize, layers: &[DenseLayer<T>]) -> Result<usize> {
    let mut width = input;
    for (i, layer) in layers.iter().enumerate() {
        if layer.inputs != width {
            return Err(Error::contract(format!(
                "{name} layer {i} expects {} inputs but receives {width}",
                layer.inputs
            )));
        }
        width = layer.outputs;
    }
    Ok(width)
}

impl<T: Scalar> WideDeepHead<T> {
    /// Assembles a head. An empty branch passes its input through unchanged.
    pub fn new(
        deep_input: usize,
        wide_input: usize,
        deep: Vec<DenseLayer<T>>,
        wide: Vec<DenseLayer<T>>,
        fusion: DenseLayer<T>,
    ) -> Result<Self> {
        let deep_out = chain_output("deep", deep_input, &deep)?;
        let wide_out = chain_output("wide", wide_input, &wide)?;
        if fusion.inputs != deep_out + wide_out {
            return Err(Error::contract(format!(
                "fusion expects {} inputs, branches produce {deep_out} + {wide_out}",
                fusion.inputs
            )));
        }
        if fusion.outputs != 2 || fusion.activation != Activation::Identity {
            return Err(Error::contract(
                "fusion must be a linear layer with 2 outputs",
            ));
        }
        Ok(WideDeepHead {
            deep_input,
            wide_input,
            deep,
            wide,
            fusion,
        })
    }

    fn build(
        shape: &HeadShape,
        mut make: impl FnMut(usize, usize, Activation) -> DenseLayer<T>,
    ) -> Result<Self> {
        let (Some(&deep_input), Some(&wide_input)) = (shape.deep.first(), shape.wide.first())
        else {
            return Err(Error::contract("head shape needs input widths"));
        };
        let mut branch = |widths: &[usize]| -> Vec<DenseLayer<T>> {
            widths
                .windows(2)
                .map(|w| make(w[0], w[1], Activation::Relu))
                .collect()
        };
        let deep = branch(&shape.deep);
        let wide = branch(&shape.wide);
        let fused = shape.deep.last().unwrap() + shape.wide.last().unwrap();
        let fusion = make(fused, 2, Activation::Identity);
        WideDeepHead::new(deep_input, wide_input, deep, wide, fusion)
    }

    pub fn init<R: Rng + ?Sized>(shape: &HeadShape, rng: &mut R) -> Result<Self> {
        Self::build(shape, |i, o, a| DenseLayer::glorot(i, o, a, rng))
    }

    pub fn zeros(shape: &HeadShape) -> Result<Self> {
        Self::build(shape, DenseLayer::zeros)
    }

    pub fn deep_input(&self) -> usize {
        self.deep_input
    }

    pub fn wide_input(&self) -> usize {
        self.wide_input
    }

    pub fn deep_layers(&self) -> &[DenseLayer<T>] {
        &self.deep
    }

    pub fn wide_layers(&self) -> &[DenseLayer<T>] {
        &self.wide
    }

    pub fn fusion(&self) -> &DenseLayer<T> {
        &self.fusion
    }

    /// Deep layers, then wide layers, then the fusion layer.
    pub fn layers(&self) -> impl Iterator<Item = (Branch, &DenseLayer<T>)> {
        self.deep
            .iter()
            .map(|l| (Branch::Deep, l))
            .chain(self.wide.iter().map(|l| (Branch::Wide, l)))
            .chain(std::iter::once((Branch::Fusion, &self.fusion)))
    }

    /// Same order as [`layers`](Self::layers). Shapes cannot be changed through this.
    pub fn layers_mut(&mut self) -> impl Iterator<Item = (&mut Vec<T>, &mut Vec<T>)> {
        self.deep
            .iter_mut()
            .chain(self.wide.iter_mut())
            .chain(std::iter::once(&mut self.fusion))
            .map(|l| (&mut l.weights, &mut l.bias))
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|(_, l)| l.param_count()).sum()
    }

    fn check_inputs(&self, deep_in: &[T], wide_in: &[T]) -> Result<()> {
        if deep_in.len() != self.deep_input || wide_in.len() != self.wide_input {
            return Err(Error::contract(format!(
                "head takes {}+{} inputs, got {}+{}",
                self.deep_input,
                self.wide_input,
                deep_in.len(),
                wide_in.len()
            )));
        }
        Ok(())
    }

    /// Standardized `[valence, arousal]` for raw branch inputs.
    pub fn forward(&self, deep_in: &[T], wide_in: &[T]) -> Result<[T; 2]> {
        self.check_inputs(deep_in, wide_in)?;
        let run = |layers: &[DenseLayer<T>], x: &[T]| {
            layers.iter().fold(x.to_vec(), |h, layer| layer.forward(&h))
        };
        let mut fused = run(&self.deep, deep_in);
        fused.extend(run(&self.wide, wide_in));
        let out = self.fusion.pre_activation(&fused);
        Ok([out[0], out[1]])
    }

    pub fn forward_features(&self, embedding: &[T], wide: &WideFeature) -> Result<[T; 2]> {
        self.forward(embedding, &wide.values::<T>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(i: usize, o: usize, w: &[f64], b: &[f64], act: Activation) -> DenseLayer<f64> {
        DenseLayer::from_parts(i, o, w.to_vec(), b.to_vec(), act).unwrap()
    }

    #[test]
    fn zero_weights_output_the_fusion_bias() {
        let mut head = WideDeepHead::<f64>::zeros(&HeadShape::default()).unwrap();
        head.fusion.bias = vec![0.75, -1.5];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let emb: Vec<f64> = (0..384).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let wide = WideFeature::from_text("some words here");
            assert_eq!(head.forward_features(&emb, &wide).unwrap(), [0.75, -1.5]);
        }
    }

    #[test]
    fn random_heads_emit_two_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let head = WideDeepHead::<f32>::init(&HeadShape::default(), &mut rng).unwrap();
        let out = head
            .forward(&[0.1; 384], &[0., 1., 0., 0., 0., 0., 0.])
            .unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn toy_head_matches_hand_arithmetic() {
        // deep: 1 -> 1 relu (w=2, b=-1); wide: 1 -> 1 relu (w=-1, b=0.5)
        // fusion: [[1, 3], [-2, 0.5]], bias [0.1, 0.2]
        let head = WideDeepHead::new(
            1,
            1,
            vec![layer(1, 1, &[2.0], &[-1.0], Activation::Relu)],
            vec![layer(1, 1, &[-1.0], &[0.5], Activation::Relu)],
            layer(
                2,
                2,
                &[1.0, 3.0, -2.0, 0.5],
                &[0.1, 0.2],
                Activation::Identity,
            ),
        )
        .unwrap();
        // deep: relu(2*1.5 - 1) = 2; wide: relu(-0.25 + 0.5) = 0.25
        // v = 2 + 0.75 + 0.1 = 2.85; a = -4 + 0.125 + 0.2 = -3.675
        let out = head.forward(&[1.5], &[0.25]).unwrap();
        assert!((out[0] - 2.85).abs() < 1e-12);
        assert!((out[1] + 3.675).abs() < 1e-12);
        // relu clips the deep branch: relu(2*0.2 - 1) = 0
        let out = head.forward(&[0.2], &[0.25]).unwrap();
        assert!((out[0] - 0.85).abs() < 1e-12);
        assert!((out[1] - 0.325).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatches_are_contract_errors() {
        let head = WideDeepHead::<f64>::zeros(&HeadShape::default()).unwrap();
        assert!(matches!(
            head.forward(&[0.0; 383], &[0.0; 7]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            head.forward(&[0.0; 384], &[0.0; 6]),
            Err(Error::Contract(_))
        ));

        let bad = WideDeepHead::<f64>::new(
            2,
            1,
            vec![DenseLayer::zeros(3, 2, Activation::Relu)],
            vec![],
            DenseLayer::zeros(3, 2, Activation::Identity),
        );
        assert!(bad.is_err());
        let bad_fusion = WideDeepHead::<f64>::new(
            1,
            1,
            vec![],
            vec![],
            DenseLayer::zeros(2, 3, Activation::Identity),
        );
        assert!(bad_fusion.is_err());
        assert!(
            DenseLayer::<f64>::from_parts(2, 2, vec![0.0; 3], vec![0.0; 2], Activation::Relu)
                .is_err()
        );
    }

    #[test]
    fn default_architecture_is_small() {
        let head = WideDeepHead::<f64>::zeros(&HeadShape::default()).unwrap();
        assert_eq!(
            head.param_count(),
            384 * 128 + 128 + 128 * 64 + 64 + 7 * 16 + 16 + 80 * 2 + 2
        );
        assert!(head.param_count() < 100_000);
    }
}
