//! Binary learner checkpoints: magic, format version, a JSON header with the
//! architecture, then every parameter tensor as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::flipout::{FlipoutDense, GaussianPosterior};
use super::layers::{Conv2d, Dense, Layer, LayerSpec};
use super::learner::{LearnerMode, WeakLearner};
use crate::numerics::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PBOOSTWL";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    mode: LearnerMode,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
}

fn empty_layer(spec: &LayerSpec) -> Result<Layer> {
    spec.validate()?;
    Ok(match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => Layer::Conv2d(Conv2d {
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            padding,
        }),
        LayerSpec::Maxpool2d { size, stride } => Layer::MaxPool2d { size, stride },
        LayerSpec::Dense { inputs, units } => Layer::Dense(Dense {
            weight: Tensor::zeros(&[inputs, units]),
            bias: Tensor::zeros(&[units]),
        }),
        LayerSpec::FlipoutDense {
            inputs,
            units,
            prior_std,
        } => {
            let post = |shape: &[usize]| {
                GaussianPosterior::new(Tensor::zeros(shape), Tensor::zeros(shape), prior_std)
            };
            Layer::FlipoutDense(FlipoutDense {
                weight: post(&[inputs, units])?,
                bias: post(&[units])?,
            })
        }
        LayerSpec::Flatten => Layer::Flatten,
        LayerSpec::Relu => Layer::Relu,
        LayerSpec::Softmax => Layer::Softmax,
        LayerSpec::Dropout { rate } => Layer::Dropout { rate },
    })
}

/// Serialises a learner; weights round-trip bit for bit.
pub fn to_bytes(learner: &WeakLearner) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        mode: learner.mode(),
        input_shape: learner.input_shape().to_vec(),
        layers: learner.specs(),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in learner.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<WeakLearner> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::format("byte 0", "not a learner checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(
            "byte 8",
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_bytes = bytes
        .get(20..20 + header_len)
        .ok_or_else(|| Error::format("byte 20", "truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    let layers = header
        .layers
        .iter()
        .map(empty_layer)
        .collect::<Result<Vec<_>>>()?;
    let mut learner = WeakLearner::from_layers(layers, header.mode, header.input_shape)?;
    let mut pos = 20 + header_len;
    for p in learner.params_mut() {
        let (t, used) = Tensor::from_le_bytes(&bytes[pos..])
            .map_err(|e| Error::format(format!("byte {pos}"), e.to_string()))?;
        if t.shape() != p.shape() {
            return Err(Error::format(
                format!("byte {pos}"),
                format!(
                    "tensor shape {:?} does not match layer {:?}",
                    t.shape(),
                    p.shape()
                ),
            ));
        }
        *p = t;
        pos += used;
    }
    if pos != bytes.len() {
        return Err(Error::format(
            format!("byte {pos}"),
            "trailing bytes after last tensor",
        ));
    }
    Ok(learner)
}

pub fn save(learner: &WeakLearner, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(learner)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<WeakLearner> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_dense_stack, build_lenet_variant};
    use crate::numerics::PrngStream;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut init = PrngStream::new(6, 0);
        for net in [
            build_dense_stack(5, &[7, 3], 4, LearnerMode::Variational, &mut init).unwrap(),
            build_dense_stack(5, &[7], 4, LearnerMode::mcd(), &mut init).unwrap(),
            build_lenet_variant([1, 28, 28], 10, LearnerMode::Deterministic, &mut init).unwrap(),
        ] {
            let back = from_bytes(&to_bytes(&net).unwrap()).unwrap();
            assert_eq!(back, net);
        }
    }

    #[test]
    fn rejects_corruption() {
        let net = build_dense_stack(
            2,
            &[],
            2,
            LearnerMode::Deterministic,
            &mut PrngStream::new(1, 0),
        )
        .unwrap();
        let bytes = to_bytes(&net).unwrap();
        assert!(matches!(
            from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Format { .. })));
    }
}
