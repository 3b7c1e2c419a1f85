//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic "C4NT" | version u32 = 1 | count u32
//! per entry: name_len u16 | name (UTF-8) | rank u8 | extents u32 x rank | f32 data (row-major)
//! ```
//!
//! BatchNorm running statistics are stored as ordinary entries named
//! `*.running_mean` / `*.running_var`.

use std::io::{Read, Write};

use crate::autograd::{Float, Tensor};
use crate::error::{Error, Result};
use crate::layers::ParamStore;

pub const MAGIC: &[u8; 4] = b"C4NT";
pub const VERSION: u32 = 1;

pub fn write_entries<'a>(w: &mut impl Write, entries: impl ExactSizeIterator<Item = (&'a str, &'a [usize], Vec<f32>)>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = u32::try_from(entries.len()).map_err(|_| Error::Format("too many entries".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, shape, data) in entries {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("name too long: {}", name)))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            let d = u32::try_from(d).map_err(|_| Error::Format("extent exceeds u32".into()))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save<T: Float>(store: &ParamStore<T>, w: &mut impl Write) -> Result<()> {
    let entries: Vec<_> = store
        .iter()
        .map(|(_, p)| (p.name.as_str(), p.tensor.shape(), p.tensor.data().iter().map(|v| v.as_f64() as f32).collect()))
        .collect();
    write_entries(w, entries.into_iter())
}

fn read_exact<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated checkpoint while reading {}", what)),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

/// Reads all entries in file order.
pub fn load(r: &mut impl Read) -> Result<Vec<(String, Tensor<f32>)>> {
    if &read_exact::<4>(r, "magic")? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = u32::from_le_bytes(read_exact(r, "version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", version)));
    }
    let count = u32::from_le_bytes(read_exact(r, "count")?);
    let mut out = Vec::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(r, "name length")?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| Error::Format("truncated name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("name is not UTF-8".into()))?;
        let rank = read_exact::<1>(r, "rank")?[0] as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::Format(format!("entry {} has rank {}", name, rank)));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_exact(r, "extent")?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f32::from_le_bytes(read_exact(r, "data")?));
        }
        let t = Tensor::new(&shape, data).map_err(|e| Error::Format(e.to_string()))?;
        out.push((name, t));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(out)
}

/// Copies loaded entries into `store`; every store entry must be present
/// with a matching shape.
pub fn apply<T: Float>(store: &mut ParamStore<T>, entries: &[(String, Tensor<f32>)]) -> Result<()> {
    if entries.len() != store.len() {
        return Err(Error::Format(format!("checkpoint has {} entries, model has {}", entries.len(), store.len())));
    }
    for (name, t) in entries {
        let id = store.find(name).ok_or_else(|| Error::Format(format!("unknown parameter {}", name)))?;
        if store.tensor(id).shape() != t.shape() {
            return Err(Error::Format(format!("shape mismatch for {}: {:?} vs {:?}", name, t.shape(), store.tensor(id).shape())));
        }
        *store.tensor_mut(id) = t.cast();
    }
    Ok(())
}
