//! Binary checkpoints.
//!
//! ```text
//! "LPN1"  version:u32  count:u32
//! count × { name_len:u32  name:utf8  rank:u32  dims:rank×u32  values:f32… }
//! ```
//!
//! All integers and values are little-endian. A checkpoint holds every
//! trainable tensor under its slot name (`level1.w0`, `level1.b0`, …), the
//! model geometry under `meta.*`, and optionally the Adam moments under
//! `adam.m.*` / `adam.v.*` with the step counter in `adam.step`.

use std::collections::BTreeMap;
use std::path::Path;

use lpnet_core::adam::AdamState;
use lpnet_core::model::{LpNetParams, ModelConfig, ParamSlot};
use lpnet_core::Tensor;

pub const MAGIC: [u8; 4] = *b"LPN1";
pub const VERSION: u32 = 1;

/// Steps are stored as `f32`, which is exact below this bound.
const MAX_STEP: u64 = 1 << 24;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (magic {found:?})")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    BadVersion { found: u32 },
    #[error("file ends inside {what}")]
    Truncated { what: String },
    #[error("{0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: LpNetParams<f32>,
    pub adam: Option<AdamState<f32>>,
}

fn malformed(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed(msg.into())
}

pub fn write_tensors(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Truncated { what: what() });
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self, what: impl FnOnce() -> String) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>, CheckpointError> {
    let mut cur = Cursor { bytes };
    let magic = cur.take(4, || "the magic bytes".into())?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = cur.u32(|| "the version".into())?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion { found: version });
    }
    let count = cur.u32(|| "the tensor count".into())? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = cur.u32(|| format!("the name length of tensor {i}"))? as usize;
        let name = cur.take(name_len, || format!("the name of tensor {i}"))?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| malformed(format!("tensor {i} name is not UTF-8")))?;
        let rank = cur.u32(|| format!("the rank of `{name}`"))? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(cur.u32(|| format!("the dims of `{name}`"))? as usize);
        }
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| malformed(format!("`{name}` is too large")))?;
        let raw = cur.take(len, || format!("the values of `{name}`"))?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.push(NamedTensor { name, dims, values });
    }
    if !cur.bytes.is_empty() {
        return Err(malformed(format!("{} trailing bytes after the last tensor", cur.bytes.len())));
    }
    Ok(out)
}

fn named(name: impl Into<String>, t: &Tensor<f32>, is_bias: bool) -> NamedTensor {
    let d = t.dims();
    let dims = if is_bias { vec![d.len()] } else { d.as_array().to_vec() };
    NamedTensor {
        name: name.into(),
        dims,
        values: t.data().to_vec(),
    }
}

fn meta(name: &str, values: Vec<f32>) -> NamedTensor {
    NamedTensor {
        name: format!("meta.{name}"),
        dims: vec![values.len()],
        values,
    }
}

pub fn encode(params: &LpNetParams<f32>, adam: Option<&AdamState<f32>>) -> Result<Vec<u8>, CheckpointError> {
    let c = &params.config;
    let mut out = vec![
        meta("levels", vec![c.levels as f32]),
        meta("recursions", vec![c.recursions as f32]),
        meta("kernel_counts", c.kernel_counts.iter().map(|&k| k as f32).collect()),
        meta("first_kernel", vec![c.first_kernel as f32]),
        meta("recon_kernel", vec![c.recon_kernel as f32]),
        meta("lrelu_slope", vec![c.lrelu_slope as f32]),
        meta("image_channels", vec![c.image_channels as f32]),
    ];
    let slots: Vec<ParamSlot> = params.tensors().map(|(s, _)| s).collect();
    for (slot, t) in params.tensors() {
        out.push(named(slot.name(), t, slot.is_bias));
    }
    if let Some(state) = adam {
        if state.m.len() != slots.len() || state.v.len() != slots.len() {
            return Err(malformed("optimizer state does not match the parameters"));
        }
        if state.step >= MAX_STEP {
            return Err(malformed(format!("step {} is too large to store", state.step)));
        }
        for (slot, m) in slots.iter().zip(&state.m) {
            out.push(named(format!("adam.m.{}", slot.name()), m, slot.is_bias));
        }
        for (slot, v) in slots.iter().zip(&state.v) {
            out.push(named(format!("adam.v.{}", slot.name()), v, slot.is_bias));
        }
        out.push(NamedTensor {
            name: "adam.step".into(),
            dims: vec![1],
            values: vec![state.step as f32],
        });
    }
    Ok(write_tensors(&out))
}

fn as_count(name: &str, v: f32) -> Result<usize, CheckpointError> {
    if v >= 0.0 && v.fract() == 0.0 && v < MAX_STEP as f32 {
        Ok(v as usize)
    } else {
        Err(malformed(format!("`{name}` holds {v}, not a count")))
    }
}

type Store = BTreeMap<String, NamedTensor>;

fn take(store: &mut Store, name: &str) -> Result<NamedTensor, CheckpointError> {
    store.remove(name).ok_or_else(|| malformed(format!("missing tensor `{name}`")))
}

fn scalar(store: &mut Store, name: &str) -> Result<f32, CheckpointError> {
    match take(store, name)?.values[..] {
        [v] => Ok(v),
        _ => Err(malformed(format!("`{name}` should hold one value"))),
    }
}

fn count(store: &mut Store, name: &str) -> Result<usize, CheckpointError> {
    as_count(name, scalar(store, name)?)
}

fn fill(store: &mut Store, name: &str, dst: &mut Tensor<f32>, is_bias: bool) -> Result<(), CheckpointError> {
    let t = take(store, name)?;
    let want = named(name, dst, is_bias).dims;
    if t.dims != want {
        return Err(malformed(format!("`{name}` has dims {:?}, expected {want:?}", t.dims)));
    }
    dst.data_mut().copy_from_slice(&t.values);
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut store = Store::new();
    for t in read_tensors(bytes)? {
        if let Some(prev) = store.insert(t.name.clone(), t) {
            return Err(malformed(format!("duplicate tensor `{}`", prev.name)));
        }
    }
    let s = &mut store;
    let config = ModelConfig {
        levels: count(s, "meta.levels")?,
        recursions: count(s, "meta.recursions")?,
        kernel_counts: take(s, "meta.kernel_counts")?
            .values
            .iter()
            .map(|&v| as_count("meta.kernel_counts", v))
            .collect::<Result<Vec<_>, _>>()?,
        first_kernel: count(s, "meta.first_kernel")?,
        recon_kernel: count(s, "meta.recon_kernel")?,
        // the shortest decimal form of the stored f32 recovers the
        // configured value (0.2 rather than 0.2000000029…)
        lrelu_slope: scalar(s, "meta.lrelu_slope")?.to_string().parse().unwrap_or(f64::NAN),
        image_channels: count(s, "meta.image_channels")?,
    };
    let mut params = LpNetParams::<f32>::zeros(&config).map_err(|e| malformed(e.to_string()))?;
    let slots: Vec<ParamSlot> = params.tensors().map(|(slot, _)| slot).collect();
    for (slot, t) in slots.iter().zip(params.tensors_mut()) {
        fill(s, &slot.name(), t, slot.is_bias)?;
    }
    let adam = if s.contains_key("adam.step") {
        let mut state = AdamState::new(params.tensors().map(|(_, t)| t));
        for (slot, m) in slots.iter().zip(&mut state.m) {
            fill(s, &format!("adam.m.{}", slot.name()), m, slot.is_bias)?;
        }
        for (slot, v) in slots.iter().zip(&mut state.v) {
            fill(s, &format!("adam.v.{}", slot.name()), v, slot.is_bias)?;
        }
        state.step = count(s, "adam.step")? as u64;
        Some(state)
    } else {
        None
    };
    if let Some(name) = s.keys().next() {
        return Err(malformed(format!("unexpected tensor `{name}`")));
    }
    Ok(Checkpoint { params, adam })
}

/// Writes through a temporary file so an interrupted save never clobbers
/// the previous checkpoint.
pub fn save_checkpoint(path: &Path, params: &LpNetParams<f32>, adam: Option<&AdamState<f32>>) -> Result<(), CheckpointError> {
    let bytes = encode(params, adam)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}
