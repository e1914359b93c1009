//! Binary model checkpoints.
//!
//! Layout: magic `AZTR`, version u32, sixteen u32 config fields, then the
//! weight tensors as raw f64 arrays in declaration order. Everything is
//! little endian. Weight shapes are derived from the config, so the file
//! carries no per-tensor headers; a length mismatch is a hard error.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::Tensor;

use super::{
    AttentionModel, AttentionWeights, ConvModel2Plus1, ConvModel3d, Model, ReasonConfig,
    SelfAttentionLayer, Variant,
};

const MAGIC: &[u8; 4] = b"AZTR";
const VERSION: u32 = 1;

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_tensor(buf: &mut Vec<u8>, t: &Tensor) {
    for v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn config_fields(cfg: &ReasonConfig) -> [u32; 16] {
    let variant = match cfg.variant {
        Variant::Attention => 0,
        Variant::Conv2Plus1 => 1,
        Variant::Conv3d => 2,
    };
    [
        variant,
        cfg.t as u32,
        cfg.d as u32,
        cfg.n as u32,
        cfg.m as u32,
        cfg.s as u32,
        cfg.l as u32,
        cfg.num_classes as u32,
        cfg.residual as u32,
        cfg.input_dim as u32,
        cfg.conv_in_channels as u32,
        cfg.conv_height as u32,
        cfg.conv_width as u32,
        cfg.conv_channels as u32,
        cfg.conv_spatial_kernel as u32,
        cfg.conv_temporal_kernel as u32,
    ]
}

pub fn save_checkpoint(path: &Path, cfg: &ReasonConfig, model: &Model) -> Result<()> {
    cfg.validate()?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    for field in config_fields(cfg) {
        push_u32(&mut buf, field);
    }
    match (cfg.variant, model) {
        (Variant::Attention, Model::Attention(m)) => {
            m.validate(cfg)?;
            for t in m.params() {
                push_tensor(&mut buf, t);
            }
        }
        (Variant::Conv2Plus1, Model::Conv2Plus1(m)) => {
            push_tensor(&mut buf, &m.spatial);
            push_tensor(&mut buf, &m.temporal);
            push_tensor(&mut buf, &m.head_w);
            push_tensor(&mut buf, &m.head_b);
        }
        (Variant::Conv3d, Model::Conv3d(m)) => {
            push_tensor(&mut buf, &m.kernel);
            push_tensor(&mut buf, &m.head_w);
            push_tensor(&mut buf, &m.head_b);
        }
        _ => {
            return Err(Error::Checkpoint(
                "model kind does not match config variant".to_string(),
            ))
        }
    }
    write_atomic(path, &buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint: wanted {} bytes at offset {}, file has {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self, shape: Vec<usize>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ReasonConfig, Model)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".to_string()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let mut fields = [0u32; 16];
    for f in &mut fields {
        *f = r.u32()?;
    }
    let variant = match fields[0] {
        0 => Variant::Attention,
        1 => Variant::Conv2Plus1,
        2 => Variant::Conv3d,
        other => {
            return Err(Error::Checkpoint(format!("unknown variant tag {other}")));
        }
    };
    let cfg = ReasonConfig {
        variant,
        t: fields[1] as usize,
        d: fields[2] as usize,
        n: fields[3] as usize,
        m: fields[4] as usize,
        s: fields[5] as usize,
        l: fields[6] as usize,
        num_classes: fields[7] as usize,
        residual: fields[8] != 0,
        input_dim: fields[9] as usize,
        conv_in_channels: fields[10] as usize,
        conv_height: fields[11] as usize,
        conv_width: fields[12] as usize,
        conv_channels: fields[13] as usize,
        conv_spatial_kernel: fields[14] as usize,
        conv_temporal_kernel: fields[15] as usize,
    };
    cfg.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

    let model = match variant {
        Variant::Attention => {
            let latents = r.tensor(vec![cfg.n, cfg.m])?;
            let embed = r.tensor(vec![cfg.input_dim, cfg.d])?;
            let wq = r.tensor(vec![cfg.m, cfg.s])?;
            let wk = r.tensor(vec![cfg.d, cfg.s])?;
            let wv = r.tensor(vec![cfg.d, cfg.s])?;
            let wo = r.tensor(vec![cfg.s, cfg.m])?;
            let mut layers = Vec::with_capacity(cfg.l);
            for _ in 0..cfg.l {
                layers.push(SelfAttentionLayer {
                    wq: r.tensor(vec![cfg.m, cfg.s])?,
                    wk: r.tensor(vec![cfg.m, cfg.s])?,
                    wv: r.tensor(vec![cfg.m, cfg.s])?,
                    wo: r.tensor(vec![cfg.s, cfg.m])?,
                });
            }
            let head_w = r.tensor(vec![cfg.m, cfg.num_classes])?;
            let head_b = r.tensor(vec![1, cfg.num_classes])?;
            Model::Attention(AttentionModel {
                embed,
                attn: AttentionWeights {
                    latents,
                    wq,
                    wk,
                    wv,
                    wo,
                    layers,
                },
                head_w,
                head_b,
            })
        }
        Variant::Conv2Plus1 => {
            let (f, c, k, kt) = (
                cfg.conv_channels,
                cfg.conv_in_channels,
                cfg.conv_spatial_kernel,
                cfg.conv_temporal_kernel,
            );
            Model::Conv2Plus1(ConvModel2Plus1 {
                spatial: r.tensor(vec![f, c, k, k])?,
                temporal: r.tensor(vec![f, f, kt])?,
                head_w: r.tensor(vec![f, cfg.num_classes])?,
                head_b: r.tensor(vec![1, cfg.num_classes])?,
            })
        }
        Variant::Conv3d => {
            let (f, c, k, kt) = (
                cfg.conv_channels,
                cfg.conv_in_channels,
                cfg.conv_spatial_kernel,
                cfg.conv_temporal_kernel,
            );
            Model::Conv3d(ConvModel3d {
                kernel: r.tensor(vec![f, c, kt, k, k])?,
                head_w: r.tensor(vec![f, cfg.num_classes])?,
                head_b: r.tensor(vec![1, cfg.num_classes])?,
            })
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after weights",
            bytes.len() - r.pos
        )));
    }
    Ok((cfg, model))
}
