//! Versioned binary weights file.
//!
//! Layout (all integers little-endian):
//! magic `OBBW`, u32 version, u32 input (h, w, channels), u8 head flag
//! followed by u32 (S, B, values) when set, u32 layer count, then one record
//! per layer: a u8 tag (0 conv, 1 maxpool, 2 reshape) and its spec fields;
//! conv records carry their parameters as f32, weights row-major
//! `[out][in][ky][kx]` then biases. Parameters are stored in f32, so a
//! loaded network reproduces its file byte-for-byte, while an in-memory f64
//! network survives the round trip only to f32 precision.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, ConvParams, HeadShape, LayerSpec, Network, NetworkSpec};

const MAGIC: &[u8; 4] = b"OBBW";
const VERSION: u32 = 1;

pub fn save_weights(net: &Network, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, net.spec.input_h as u32);
    push_u32(&mut buf, net.spec.input_w as u32);
    push_u32(&mut buf, net.spec.input_channels as u32);
    match net.spec.head {
        Some(h) => {
            buf.push(1);
            push_u32(&mut buf, h.s as u32);
            push_u32(&mut buf, h.b as u32);
            push_u32(&mut buf, h.values as u32);
        }
        None => buf.push(0),
    }
    push_u32(&mut buf, net.spec.layers.len() as u32);
    let mut conv_i = 0;
    for layer in &net.spec.layers {
        match *layer {
            LayerSpec::Conv2d { filters, kernel, stride, padding, activation } => {
                buf.push(0);
                for v in [filters, kernel, stride, padding] {
                    push_u32(&mut buf, v as u32);
                }
                buf.push(match activation {
                    Activation::LeakyRelu => 0,
                    Activation::Linear => 1,
                });
                let p = &net.convs[conv_i];
                conv_i += 1;
                for &w in &p.weights {
                    buf.extend_from_slice(&(w as f32).to_le_bytes());
                }
                for &b in &p.bias {
                    buf.extend_from_slice(&(b as f32).to_le_bytes());
                }
            }
            LayerSpec::MaxPool { size, stride } => {
                buf.push(1);
                push_u32(&mut buf, size as u32);
                push_u32(&mut buf, stride as u32);
            }
            LayerSpec::Reshape => buf.push(2),
        }
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic, not a weights file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(&format!("unsupported version {version}")));
    }
    let input_h = r.u32()? as usize;
    let input_w = r.u32()? as usize;
    let input_channels = r.u32()? as usize;
    let head = match r.u8()? {
        0 => None,
        1 => Some(HeadShape {
            s: r.u32()? as usize,
            b: r.u32()? as usize,
            values: r.u32()? as usize,
        }),
        t => return Err(r.fail(&format!("bad head flag {t}"))),
    };
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    let mut convs = Vec::new();
    let mut channels = input_channels;
    for _ in 0..n_layers {
        match r.u8()? {
            0 => {
                let filters = r.u32()? as usize;
                let kernel = r.u32()? as usize;
                let stride = r.u32()? as usize;
                let padding = r.u32()? as usize;
                let activation = match r.u8()? {
                    0 => Activation::LeakyRelu,
                    1 => Activation::Linear,
                    a => return Err(r.fail(&format!("bad activation tag {a}"))),
                };
                let n_w = filters
                    .checked_mul(channels)
                    .and_then(|v| v.checked_mul(kernel * kernel))
                    .ok_or_else(|| r.fail("conv size overflow"))?;
                let weights = r.f32_vec(n_w)?;
                let bias = r.f32_vec(filters)?;
                layers.push(LayerSpec::Conv2d { filters, kernel, stride, padding, activation });
                convs.push(ConvParams {
                    in_channels: channels,
                    filters,
                    kernel,
                    stride,
                    padding,
                    activation,
                    weights,
                    bias,
                });
                channels = filters;
            }
            1 => {
                let size = r.u32()? as usize;
                let stride = r.u32()? as usize;
                layers.push(LayerSpec::MaxPool { size, stride });
            }
            2 => layers.push(LayerSpec::Reshape),
            t => return Err(r.fail(&format!("bad layer tag {t}"))),
        }
    }
    if r.pos != bytes.len() {
        return Err(r.fail(&format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let spec = NetworkSpec { input_h, input_w, input_channels, layers, head };
    spec.validate()?;
    Ok(Network { spec, convs })
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: &str) -> Error {
        Error::Format(format!("{}: {msg} (at byte {})", self.path.display(), self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.fail("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}
