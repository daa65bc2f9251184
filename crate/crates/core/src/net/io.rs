//! Binary model format (`.adaw`), little-endian:
//!
//! ```text
//! magic        4 bytes   "ADAW"
//! version      u32       1
//! layer count  u32       L = number of feature layers
//! dims         u32[L+2]  d, h_1, .., h_{L-1}, p, m
//! activations  u8[L]     0 = tanh, 1 = relu, 2 = identity
//! per layer    f64[out*in] weights row-major, then f64[out] bias
//! theta_c      f64[p*m]  row-major
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Activation, Dense, Network};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"ADAW";
pub const MODEL_VERSION: u32 = 1;

pub fn model_to_bytes(net: &Network) -> Vec<u8> {
    let dims = net.layer_dims();
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + net.layers.len() + 8 * net.num_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for layer in &net.layers {
        out.push(layer.activation.tag());
    }
    for v in net.flat_params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                expected: self.pos + n,
                actual: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn model_from_bytes(buf: &[u8]) -> Result<Network> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::Format("model magic is not ADAW".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "model version {version}, expected {MODEL_VERSION}"
        )));
    }
    let n_layers = r.u32()? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let dims = (0..n_layers + 2)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let acts = r
        .take(n_layers)?
        .iter()
        .map(|&t| Activation::from_tag(t).ok_or_else(|| Error::Format(format!("unknown activation tag {t}"))))
        .collect::<Result<Vec<_>>>()?;

    let n_params: usize = (0..n_layers).map(|l| dims[l + 1] * (dims[l] + 1)).sum::<usize>()
        + dims[n_layers] * dims[n_layers + 1];
    let expected = r.pos + 8 * n_params;
    if buf.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: buf.len(),
        });
    }
    if buf.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after model payload",
            buf.len() - expected
        )));
    }
    let flat: Vec<f64> = r
        .take(8 * n_params)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let layers = (0..n_layers)
        .map(|l| Dense {
            weights: DMatrix::zeros(dims[l + 1], dims[l]),
            bias: DVector::zeros(dims[l + 1]),
            activation: acts[l],
        })
        .collect();
    let theta_c = DMatrix::zeros(dims[n_layers], dims[n_layers + 1]);
    let mut net = Network::new(layers, theta_c)?;
    net.set_flat_params(&flat)?;
    if !net.is_finite() {
        return Err(Error::Format("model contains non-finite weights".into()));
    }
    Ok(net)
}

pub fn write_model(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    fs::write(path, model_to_bytes(net))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Network> {
    model_from_bytes(&fs::read(path)?)
}
