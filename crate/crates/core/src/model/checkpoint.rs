use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use super::{Activation, Branch, DenseLayer, WideDeepHead};
use crate::features::VaScaler;
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_FORMAT: &str = "ckpt.v1";

/// A trained head together with its target scaler and training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub head: WideDeepHead<T>,
    pub scaler: VaScaler<T>,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct ScalerDoc {
    mean: [f64; 2],
    std: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct InputsDoc {
    deep: usize,
    wide: usize,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    branch: Branch,
    #[serde(rename = "in")]
    inputs: usize,
    out: usize,
    act: Activation,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    inputs: InputsDoc,
    scaler: ScalerDoc,
    layers: Vec<LayerDoc>,
    config: TrainConfig,
}

fn to_f64s<T: Scalar>(values: &[T]) -> Vec<f64> {
    values.iter().map(|v| v.to_f64_lossy()).collect()
}

impl<T: Scalar> Checkpoint<T> {
    fn to_doc(&self) -> CheckpointDoc {
        CheckpointDoc {
            format: CHECKPOINT_FORMAT.into(),
            inputs: InputsDoc {
                deep: self.head.deep_input(),
                wide: self.head.wide_input(),
            },
            scaler: ScalerDoc {
                mean: self.scaler.mean.map(|v| v.to_f64_lossy()),
                std: self.scaler.std.map(|v| v.to_f64_lossy()),
            },
            layers: self
                .head
                .layers()
                .map(|(branch, l)| LayerDoc {
                    branch,
                    inputs: l.inputs(),
                    out: l.outputs(),
                    act: l.activation,
                    w: to_f64s(&l.weights),
                    b: to_f64s(&l.bias),
                })
                .collect(),
            config: self.config.clone(),
        }
    }

    fn from_doc(doc: CheckpointDoc) -> Result<Self> {
        let bad = |msg: String| Error::format("checkpoint", msg);
        let cast = |xs: Vec<f64>| xs.into_iter().map(T::lit).collect::<Vec<T>>();
        let (mut deep, mut wide, mut fusion) = (Vec::new(), Vec::new(), Vec::new());
        for (i, l) in doc.layers.into_iter().enumerate() {
            let layer = DenseLayer::from_parts(l.inputs, l.out, cast(l.w), cast(l.b), l.act)
                .map_err(|e| bad(format!("layer {i}: {e}")))?;
            match l.branch {
                Branch::Deep if fusion.is_empty() => deep.push(layer),
                Branch::Wide if fusion.is_empty() => wide.push(layer),
                Branch::Fusion => fusion.push(layer),
                _ => return Err(bad(format!("layer {i} follows the fusion layer"))),
            }
        }
        if fusion.len() != 1 {
            return Err(bad(format!(
                "expected one fusion layer, found {}",
                fusion.len()
            )));
        }
        let head = WideDeepHead::new(
            doc.inputs.deep,
            doc.inputs.wide,
            deep,
            wide,
            fusion.remove(0),
        )
        .map_err(|e| bad(e.to_string()))?;
        let scaler = VaScaler {
            mean: doc.scaler.mean.map(T::lit),
            std: doc.scaler.std.map(T::lit),
        };
        if scaler.mean.iter().any(|v| !v.is_finite())
            || scaler
                .std
                .iter()
                .any(|v| !(v.is_finite() && *v > T::zero()))
        {
            return Err(bad("scaler must have finite mean and positive std".into()));
        }
        Ok(Checkpoint {
            head,
            scaler,
            config: doc.config,
        })
    }

    pub fn write(&self, out: impl Write) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        serde_json::to_writer(&mut out, &self.to_doc())?;
        out.write_all(b"\n")?;
        out.flush()
    }

    pub fn read(input: impl Read) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(input))
            .map_err(|e| Error::format("checkpoint", e))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            Some(other) if other.starts_with("ckpt.") => {
                return Err(Error::UnsupportedVersion {
                    found: other.to_owned(),
                    expected: CHECKPOINT_FORMAT.into(),
                })
            }
            _ => {
                return Err(Error::format(
                    "checkpoint",
                    "missing or unknown \"format\" tag",
                ))
            }
        }
        let doc: CheckpointDoc =
            serde_json::from_value(value).map_err(|e| Error::format("checkpoint", e))?;
        Self::from_doc(doc)
    }
}

pub fn save_checkpoint<T: Scalar>(
    checkpoint: &Checkpoint<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    checkpoint.write(file).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::read(file)
}
