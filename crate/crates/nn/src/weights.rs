//! `NNW1` binary weights format.
//!
//! Layout, all integers little-endian:
//! `"NNW1"`, version `u32`, layer count `u32`, then for every layer in
//! pre-order: kind tag `u8`, tensor count `u32`, and per tensor: rank `u32`,
//! dims `u32 × rank`, values `f64 × product(dims)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerKind};
use crate::network::Network;

pub const MAGIC: &[u8; 4] = b"NNW1";
pub const VERSION: u32 = 1;

pub fn encode(net: &Network) -> Vec<u8> {
    let layers = net.all_layers();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        out.push(layer.kind().tag());
        let state = layer.state();
        out.extend_from_slice(&(state.len() as u32).to_le_bytes());
        for t in state {
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Record {
    kind: LayerKind,
    tensors: Vec<(Vec<usize>, Vec<f64>)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn parse(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| NnError::Format("file too short for a header".into()))?;
    if magic != MAGIC {
        return Err(NnError::Format(format!("bad magic {:?}, expected \"NNW1\"", String::from_utf8_lossy(magic))));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}, expected {VERSION}")));
    }
    let count = r.u32()?;
    let mut records = Vec::new();
    for i in 0..count {
        let tag = r.u8()?;
        let kind =
            LayerKind::from_tag(tag).ok_or_else(|| NnError::Format(format!("layer {i}: unknown kind tag {tag}")))?;
        let n = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..n {
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 8 {
                return Err(NnError::Format(format!("layer {i}: unsupported tensor rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| NnError::Format(format!("layer {i}: tensor {dims:?} exceeds the file")))?;
            let raw = r.take(len * 8)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((dims, data));
        }
        records.push(Record { kind, tensors });
    }
    if r.remaining() != 0 {
        return Err(NnError::Format(format!("{} trailing bytes", r.remaining())));
    }
    Ok(records)
}

fn for_each_mut(layer: &mut dyn Layer, f: &mut dyn FnMut(&mut dyn Layer)) {
    f(layer);
    for child in layer.children_mut() {
        for_each_mut(child, f);
    }
}

/// Load weights into `net`. Nothing is modified unless the whole file
/// matches the receiving architecture.
pub fn decode_into(net: &mut Network, bytes: &[u8]) -> Result<()> {
    let records = parse(bytes)?;
    let layers = net.all_layers();
    if records.len() != layers.len() {
        return Err(NnError::Format(format!("file holds {} layers, architecture has {}", records.len(), layers.len())));
    }
    for (layer, rec) in layers.iter().zip(&records) {
        if layer.kind() != rec.kind {
            return Err(NnError::Format(format!(
                "layer `{}` is {} but the file holds {}",
                layer.name(),
                layer.kind(),
                rec.kind
            )));
        }
        let state = layer.state();
        if state.len() != rec.tensors.len() {
            return Err(NnError::Format(format!(
                "layer `{}` stores {} tensors, file holds {}",
                layer.name(),
                state.len(),
                rec.tensors.len()
            )));
        }
        for (t, (dims, _)) in state.iter().zip(&rec.tensors) {
            if t.shape() != dims.as_slice() {
                return Err(NnError::WeightShape {
                    layer: layer.name().to_owned(),
                    expected: t.shape().to_vec(),
                    got: dims.clone(),
                });
            }
        }
    }
    let mut it = records.into_iter();
    for top in net.layers_mut() {
        for_each_mut(top.as_mut(), &mut |layer| {
            let rec = it.next().expect("record count checked");
            for (t, (_, data)) in layer.state_mut().into_iter().zip(rec.tensors) {
                t.data_mut().copy_from_slice(&data);
            }
        });
    }
    Ok(())
}

/// Write via a temporary sibling file and rename.
pub fn save(net: &Network, path: &Path) -> Result<()> {
    let tmp = path.with_extension("nnw1.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(net))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(net: &mut Network, path: &Path) -> Result<()> {
    decode_into(net, &fs::read(path)?)
}
