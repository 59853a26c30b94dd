//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic       8 bytes  "DMRGCKPT"
//! version     u32      FORMAT_VERSION
//! set_count   u32
//! per set:    name_len u32, name bytes (utf-8), dims_len u32, dims[dims_len] u32
//! per set:    param_count x f32 (LE), in NetParams flattening order
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::net::NetParams;

pub const MAGIC: &[u8; 8] = b"DMRGCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub params: NetParams,
}

pub fn write_checkpoint<W: Write>(mut w: W, blocks: &[ParamBlock]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for b in blocks {
        let name = b.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let dims = b.params.dims();
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for &d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    for b in blocks {
        for v in b.params.to_flat() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<ParamBlock>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    if count > 4096 {
        return Err(Error::Checkpoint(format!("implausible set count {count}")));
    }
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 1024 {
            return Err(Error::Checkpoint("parameter-set name too long".into()));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not utf-8".into()))?;
        let nd = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&nd) {
            return Err(Error::Checkpoint(format!("implausible layer count {nd}")));
        }
        let dims = (0..nd).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        headers.push((name, dims));
    }
    let mut blocks = Vec::with_capacity(count);
    for (name, dims) in headers {
        let n = NetParams::zeros(&dims)
            .map_err(|e| Error::Checkpoint(format!("set `{name}`: {e}")))?
            .param_count();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)
            .map_err(|_| Error::Checkpoint(format!("set `{name}`: truncated parameters")))?;
        let flat: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let params = NetParams::from_flat(&dims, &flat)?;
        blocks.push(ParamBlock { name, params });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_through_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let blocks = vec![
            ParamBlock {
                name: "root".into(),
                params: NetParams::init(&[4, 3, 2], &mut rng).unwrap(),
            },
            ParamBlock {
                name: "label".into(),
                params: NetParams::init(&[5, 6, 6, 3], &mut rng).unwrap(),
            },
        ];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &blocks).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in blocks.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.params.dims(), b.params.dims());
            for (x, y) in a.params.to_flat().iter().zip(b.params.to_flat()) {
                assert_eq!((*x as f32) as f64, y);
            }
        }
        // writing what was read is byte-stable
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        let p = NetParams::zeros(&[2, 2]).unwrap();
        write_checkpoint(&mut buf, &[ParamBlock { name: "a".into(), params: p }]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..]).is_err());
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra[..]).is_err());
    }
}
