//! `HFM1` classifier model files.
//!
//! All integers are little-endian `u32`, all reals little-endian `f64`:
//!
//! ```text
//! "HFM1"  version(=1)
//! config_len  config_text[config_len]          TrainConfig as key = value lines
//! layer_count
//!   per layer: inputs outputs activation:u8 dropout:f64
//!              weights[outputs*inputs] (row-major) bias[outputs]
//! epochs  loss[epochs]  accuracy[epochs]
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{ClassifierModel, TrainConfig};
use crate::nn::{Activation, Dense, History, Mlp};

pub const HFM_MAGIC: &[u8; 4] = b"HFM1";
pub const HFM_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn model_to_bytes(model: &ClassifierModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(HFM_MAGIC);
    put_u32(&mut buf, HFM_VERSION as usize);
    let config = model.config.to_text();
    put_u32(&mut buf, config.len());
    buf.extend_from_slice(config.as_bytes());
    put_u32(&mut buf, model.network.layers.len());
    for l in &model.network.layers {
        put_u32(&mut buf, l.inputs);
        put_u32(&mut buf, l.outputs);
        buf.push(l.activation.code());
        put_f64s(&mut buf, &[l.dropout]);
        put_f64s(&mut buf, &l.weights);
        put_f64s(&mut buf, &l.bias);
    }
    put_u32(&mut buf, model.history.len());
    put_f64s(&mut buf, &model.history.loss);
    put_f64s(&mut buf, &model.history.accuracy);
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("HFM1 model file", format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::format("HFM1 model file", "length overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ClassifierModel> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != HFM_MAGIC {
        return Err(Error::format("HFM1 model file", "missing HFM1 magic"));
    }
    let version = c.u32()?;
    if version != HFM_VERSION as usize {
        return Err(Error::format("HFM1 model file", format!("unsupported version {version}")));
    }
    let config_len = c.u32()?;
    let config_text = std::str::from_utf8(c.take(config_len)?)
        .map_err(|e| Error::format("HFM1 model file", format!("config is not UTF-8: {e}")))?;
    let config = TrainConfig::parse(config_text)?;
    let layer_count = c.u32()?;
    let mut layers = Vec::with_capacity(layer_count.min(64));
    for _ in 0..layer_count {
        let inputs = c.u32()?;
        let outputs = c.u32()?;
        let activation = Activation::from_code(c.u8()?)?;
        let dropout = c.f64s(1)?[0];
        let weights = c.f64s(inputs * outputs)?;
        let bias = c.f64s(outputs)?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            bias,
            activation,
            dropout,
        });
    }
    let network = Mlp::new(layers)?;
    let epochs = c.u32()?;
    let loss = c.f64s(epochs)?;
    let accuracy = c.f64s(epochs)?;
    if c.pos != bytes.len() {
        return Err(Error::format(
            "HFM1 model file",
            format!("{} trailing bytes", bytes.len() - c.pos),
        ));
    }
    if network
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.bias))
        .any(|v| !v.is_finite())
    {
        return Err(Error::format("HFM1 model file", "non-finite parameter"));
    }
    Ok(ClassifierModel {
        network,
        history: History { loss, accuracy },
        config,
    })
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ClassifierModel {
        ClassifierModel {
            network: Mlp::classifier(5, 4, 2, 0.5, 3),
            history: History {
                loss: vec![0.7, 0.5],
                accuracy: vec![0.5, 0.75],
            },
            config: TrainConfig {
                seed: 3,
                max_epochs: 2,
                ..Default::default()
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let bytes = model_to_bytes(&m);
        assert_eq!(&bytes[..4], b"HFM1");
        assert_eq!(model_from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = model_to_bytes(&sample());
        assert!(model_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(model_from_bytes(&extra).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(model_from_bytes(&ver).is_err());
    }
}
