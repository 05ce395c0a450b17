//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic   "ITSRCKPT"                     8 bytes
//! version u32                            currently 1
//! meta    u32 length + JSON bytes        CheckpointMeta
//! count   u32                            tensor count
//! tensor  u16 name length + name bytes
//!         u8 ndim + ndim x u32 dims
//!         f32 x prod(dims) data
//! ```
//! Tensors are the parameter values in declaration order followed by their
//! momentum buffers (same names with a `.vel` suffix). Loading rebuilds the
//! network from the embedded config, so a round trip reproduces forward
//! outputs bit for bit.

use super::net::{NetworkConfig, PolicyValueNet};
use super::Scalar;
use crate::env::Environment;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"ITSRCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Training protocol that produced the weights: "mcts" or "supervised".
    pub kind: String,
    pub stage: usize,
    pub epoch: usize,
    pub seed: u64,
    pub network: NetworkConfig,
}

#[derive(Debug, Error)]
pub enum CkptError {
    #[error("not a checkpoint: {0}")]
    Format(String),
    #[error("tensor {name}: expected shape {expected:?}, got {got:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("checkpoint has {got} actions but the environment has {expected}")]
    ActionCount { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad metadata: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

fn write_tensor<F: Scalar>(
    out: &mut impl Write,
    name: &str,
    tensor: &ArrayD<F>,
) -> Result<(), CkptError> {
    let name_bytes = name.as_bytes();
    out.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
    out.write_all(name_bytes)?;
    out.write_all(&[tensor.ndim() as u8])?;
    for &d in tensor.shape() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in tensor.as_slice().expect("contiguous") {
        out.write_all(&v.to_f32().expect("finite").to_le_bytes())?;
    }
    Ok(())
}

pub fn save<F: Scalar>(
    net: &PolicyValueNet<F>,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), CkptError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let meta_json = serde_json::to_vec(meta)?;
    out.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    out.write_all(&meta_json)?;
    let params = net.params();
    out.write_all(&((params.len() * 2) as u32).to_le_bytes())?;
    for p in &params {
        write_tensor(&mut out, &p.name, &p.value)?;
    }
    for p in &params {
        write_tensor(&mut out, &format!("{}.vel", p.name), &p.vel)?;
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, CkptError> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| CkptError::Format("truncated file".into()))?;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16, CkptError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CkptError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
}

type RawTensor = (String, Vec<usize>, Vec<f32>);

fn read_all(path: &Path) -> Result<(CheckpointMeta, Vec<RawTensor>), CkptError> {
    let file = fs::File::open(path)?;
    let mut r = Reader {
        inner: io::BufReader::new(file),
    };
    if r.bytes(8)? != MAGIC {
        return Err(CkptError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CkptError::Format(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(&r.bytes(meta_len)?)?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?)
            .map_err(|_| CkptError::Format("tensor name is not UTF-8".into()))?;
        let ndim = r.bytes(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = r.bytes(len * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, shape, data));
    }
    Ok((meta, tensors))
}

pub fn load(path: &Path) -> Result<(PolicyValueNet<f32>, CheckpointMeta), CkptError> {
    let (meta, tensors) = read_all(path)?;
    let mut by_name: HashMap<String, (Vec<usize>, Vec<f32>)> = tensors
        .into_iter()
        .map(|(name, shape, data)| (name, (shape, data)))
        .collect();
    let mut net = PolicyValueNet::<f32>::new(meta.network.clone(), 0)
        .map_err(|e| CkptError::Format(format!("config rejected: {e}")))?;
    for param in net.params_mut() {
        for (name, slot) in [
            (param.name.clone(), &mut param.value),
            (format!("{}.vel", param.name), &mut param.vel),
        ] {
            let (shape, data) = by_name
                .remove(&name)
                .ok_or_else(|| CkptError::Format(format!("missing tensor {name}")))?;
            if shape != slot.shape() {
                return Err(CkptError::Shape {
                    name,
                    expected: slot.shape().to_vec(),
                    got: shape,
                });
            }
            *slot = ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape checked");
        }
    }
    if let Some(name) = by_name.keys().next() {
        return Err(CkptError::Format(format!("unexpected tensor {name}")));
    }
    Ok((net, meta))
}

pub fn describe(path: &Path) -> Result<(CheckpointMeta, Vec<TensorInfo>), CkptError> {
    let (meta, tensors) = read_all(path)?;
    Ok((
        meta,
        tensors
            .into_iter()
            .map(|(name, shape, _)| TensorInfo { name, shape })
            .collect(),
    ))
}

/// Checks a loaded network against the environment it is about to drive.
pub fn ensure_env_compatible(
    net: &PolicyValueNet<f32>,
    env: &dyn Environment,
) -> Result<(), CkptError> {
    if net.cfg.action_count != env.action_count() {
        return Err(CkptError::ActionCount {
            expected: env.action_count(),
            got: net.cfg.action_count,
        });
    }
    if net.cfg.input_side != env.side() {
        return Err(CkptError::Shape {
            name: "input".into(),
            expected: vec![env.side() as usize],
            got: vec![net.cfg.input_side as usize],
        });
    }
    Ok(())
}
