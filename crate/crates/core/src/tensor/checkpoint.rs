use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ParamStore, Tensor, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"NSPS1";

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    dtype: String,
    params: Vec<Entry>,
    meta: Value,
}

/// Parameters plus free-form metadata (hyperparameters, grammar hash, ...).
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub meta: Value,
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

/// Magic, u64 LE manifest length, JSON manifest, then each parameter as
/// little-endian f64 in manifest order.
pub fn write_checkpoint(out: &mut impl Write, store: &ParamStore, meta: &Value) -> Result<(), TensorError> {
    let manifest = Manifest {
        dtype: "f64le".into(),
        params: store
            .ids()
            .map(|id| Entry {
                name: store.name(id).to_string(),
                shape: store.value(id).shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| bad(e.to_string()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for id in store.ids() {
        let mut buf = Vec::with_capacity(store.value(id).len() * 8);
        for x in store.value(id).data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<Checkpoint, TensorError> {
    let mut magic = [0u8; 5];
    input.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(|_| bad("truncated header"))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json).map_err(|_| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
    if manifest.dtype != "f64le" {
        return Err(bad(format!("unsupported dtype {}", manifest.dtype)));
    }
    let mut params = ParamStore::new();
    for e in manifest.params {
        let n: usize = e.shape.iter().product();
        let mut buf = vec![0u8; n * 8];
        input
            .read_exact(&mut buf)
            .map_err(|_| bad(format!("truncated data for {}", e.name)))?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        params.add(&e.name, Tensor::new(e.shape, data)?)?;
    }
    Ok(Checkpoint {
        params,
        meta: manifest.meta,
    })
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, meta: &Value) -> Result<(), TensorError> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, store, meta)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TensorError> {
    let bytes = fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::vector(vec![0.1, -2.5, 1e-300])).unwrap();
        store
            .add("b", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, f64::MIN_POSITIVE]).unwrap())
            .unwrap();
        let meta = serde_json::json!({"hidden": 8});
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store, &meta).unwrap();
        assert_eq!(&buf[..5], CHECKPOINT_MAGIC);
        let ck = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(ck.meta, meta);
        for id in store.ids() {
            assert_eq!(store.name(id), ck.params.name(id));
            assert_eq!(store.value(id), ck.params.value(id));
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&mut &b"NSPS2xxxxxxxx"[..]).is_err());
        assert!(read_checkpoint(&mut &b"NSPS1"[..]).is_err());
    }
}
