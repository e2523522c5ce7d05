//! `SLRT` parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"SLRT"  version:u32
//! repeated until EOF:
//!   name_len:u32  name:[u8; name_len] (UTF-8)
//!   rank:u32      dims:[u64; rank]
//!   values:[f64; prod(dims)]
//! ```

use std::io::{Read, Write};

use super::dense::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SLRT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut out: W, groups: &[(String, Tensor)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, t) in groups {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
        .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut groups = Vec::new();
    while cur.pos < bytes.len() {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?
            .to_owned();
        let rank = cur.u32()? as usize;
        let dims = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let values = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        groups.push((name, Tensor::new(dims, values)?));
    }
    Ok(groups)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_bytes() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("w".into(), Tensor::scalar(1.5))]).unwrap();
        assert_eq!(&buf[..4], b"SLRT");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(buf[12], b'w');
        assert_eq!(buf.len(), 4 + 4 + 4 + 1 + 4 + 16 + 8);
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &[("w".into(), Tensor::ones(2, 2))]).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(read_checkpoint(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(groups in proptest::collection::vec(
            ("[a-z.]{0,12}", 1usize..4, 1usize..4, proptest::collection::vec(-1e6f64..1e6, 16)),
            0..5,
        )) {
            let groups: Vec<(String, Tensor)> = groups
                .into_iter()
                .map(|(n, r, c, v)| (n, Tensor::matrix(r, c, v[..r * c].to_vec()).unwrap()))
                .collect();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &groups).unwrap();
            prop_assert_eq!(read_checkpoint(&buf[..]).unwrap(), groups);
        }
    }
}
