use super::loss::{huber, smooth_l1_grad};
use super::{DenseLayer, WideDeepHead};
use crate::{Error, Result, Scalar};

/// One training pair: raw branch inputs and a standardized target.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub deep: &'a [T],
    pub wide: &'a [T],
    pub target: [T; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients in [`WideDeepHead::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients<T> {
    pub layers: Vec<LayerGradient<T>>,
}

impl<T: Scalar> HeadGradients<T> {
    pub fn zeros_like(head: &WideDeepHead<T>) -> Self {
        HeadGradients {
            layers: head
                .layers()
                .map(|(_, l)| LayerGradient {
                    weights: vec![T::zero(); l.weights.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias))
    }

    fn scale(&mut self, factor: T) {
        for g in &mut self.layers {
            g.weights
                .iter_mut()
                .chain(g.bias.iter_mut())
                .for_each(|v| *v *= factor);
        }
    }
}

/// Inputs and pre-activations of each layer in a branch.
struct Trace<T> {
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
}

fn run_branch<T: Scalar>(layers: &[DenseLayer<T>], x: &[T]) -> (Trace<T>, Vec<T>) {
    let mut trace = Trace {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
    };
    let mut h = x.to_vec();
    for layer in layers {
        let z = layer.pre_activation(&h);
        let next = z.iter().map(|&v| layer.activation.apply(v)).collect();
        trace.inputs.push(std::mem::replace(&mut h, next));
        trace.pre.push(z);
    }
    (trace, h)
}

/// Accumulates into `grads` and returns the gradient w.r.t. the layer input.
fn backward_layer<T: Scalar>(
    layer: &DenseLayer<T>,
    input: &[T],
    pre: &[T],
    upstream: &[T],
    grads: &mut LayerGradient<T>,
    need_input_grad: bool,
) -> Vec<T> {
    let n_in = layer.inputs();
    let mut input_grad = if need_input_grad {
        vec![T::zero(); n_in]
    } else {
        Vec::new()
    };
    for (o, (&dy, &z)) in upstream.iter().zip(pre).enumerate() {
        let delta = dy * layer.activation.derivative(z);
        if delta == T::zero() {
            continue;
        }
        grads.bias[o] += delta;
        let row = o * n_in..(o + 1) * n_in;
        for (gw, &x) in grads.weights[row.clone()].iter_mut().zip(input) {
            *gw += delta * x;
        }
        if need_input_grad {
            for (g, &w) in input_grad.iter_mut().zip(&layer.weights[row]) {
                *g += delta * w;
            }
        }
    }
    input_grad
}

fn backward_branch<T: Scalar>(
    layers: &[DenseLayer<T>],
    trace: &Trace<T>,
    mut upstream: Vec<T>,
    grads: &mut [LayerGradient<T>],
) {
    for i in (0..layers.len()).rev() {
        upstream = backward_layer(
            &layers[i],
            &trace.inputs[i],
            &trace.pre[i],
            &upstream,
            &mut grads[i],
            i > 0,
        );
    }
}

/// Mean Smooth-L1 loss over the batch and both outputs, and its exact
/// gradient with respect to every parameter.
pub fn gradients<T: Scalar>(
    head: &WideDeepHead<T>,
    batch: &[Example<'_, T>],
    beta: T,
) -> Result<(T, HeadGradients<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("gradient batch"));
    }
    if beta.is_nan() || beta <= T::zero() {
        return Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let mut grads = HeadGradients::zeros_like(head);
    let n_deep = head.deep.len();
    let n_wide = head.wide.len();
    let (deep_grads, rest) = grads.layers.split_at_mut(n_deep);
    let (wide_grads, fusion_grad) = rest.split_at_mut(n_wide);
    let fusion_grad = &mut fusion_grad[0];

    let mut loss = T::zero();
    for ex in batch {
        head.check_inputs(ex.deep, ex.wide)?;
        let (deep_trace, deep_out) = run_branch(&head.deep, ex.deep);
        let (wide_trace, wide_out) = run_branch(&head.wide, ex.wide);
        let deep_width = deep_out.len();
        let mut fused = deep_out;
        fused.extend(wide_out);
        let out = head.fusion.pre_activation(&fused);

        let mut upstream = [T::zero(); 2];
        for k in 0..2 {
            let d = out[k] - ex.target[k];
            loss += huber(d, beta);
            upstream[k] = smooth_l1_grad(d, beta);
        }

        let fused_grad = backward_layer(&head.fusion, &fused, &out, &upstream, fusion_grad, true);
        let (deep_up, wide_up) = fused_grad.split_at(deep_width);
        backward_branch(&head.deep, &deep_trace, deep_up.to_vec(), deep_grads);
        backward_branch(&head.wide, &wide_trace, wide_up.to_vec(), wide_grads);
    }

    let count = T::from_usize(batch.len() * 2).expect("batch size fits scalar");
    grads.scale(T::one() / count);
    Ok((loss / count, grads))
}
