//! Binary index file, all integers little-endian:
//!
//! ```text
//! magic "MAIX" | version u16 | scheme u8 | metric u8 | dims u32 | count u64
//! ids: count × (len u32, UTF-8 bytes)
//! flat:      count × dims f32
//! quantized: offset[dims] f32, scale[dims] f32, packed codes
//! crc32 u32 over every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use super::{FlatIndex, IndexError, Metric, QuantizedIndex, Scheme, VectorIndex};

pub const MAGIC: [u8; 4] = *b"MAIX";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 + 8;
const CRC_LEN: usize = 4;

fn scheme_tag(s: Scheme) -> u8 {
    match s {
        Scheme::Flat => 0,
        Scheme::Q8 => 1,
        Scheme::Q4 => 2,
    }
}

fn metric_tag(m: Metric) -> u8 {
    match m {
        Metric::L2 => 0,
        Metric::Cosine => 1,
    }
}

impl VectorIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.vector_bytes() + CRC_LEN);
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(scheme_tag(self.scheme()));
        buf.push(metric_tag(self.metric()));
        buf.extend_from_slice(&(self.dims() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for id in self.ids() {
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
        }
        match self {
            VectorIndex::Flat(f) => {
                for x in f.raw_vectors() {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            VectorIndex::Quantized(q) => {
                for x in q.offset().iter().chain(q.scale()) {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                buf.extend_from_slice(q.codes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() >= MAGIC.len() && bytes[..4] != MAGIC {
            return Err(IndexError::BadMagic);
        }
        if bytes.len() < HEADER_LEN + CRC_LEN {
            return Err(corrupt("file shorter than header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion(version));
        }
        let (payload, crc) = bytes.split_at(bytes.len() - CRC_LEN);
        let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored {
            return Err(corrupt("checksum mismatch"));
        }

        let mut r = Reader {
            buf: payload,
            pos: 6,
        };
        let scheme = match r.u8()? {
            0 => Scheme::Flat,
            1 => Scheme::Q8,
            2 => Scheme::Q4,
            t => return Err(corrupt(&format!("unknown scheme tag {t}"))),
        };
        let metric = match r.u8()? {
            0 => Metric::L2,
            1 => Metric::Cosine,
            t => return Err(corrupt(&format!("unknown metric tag {t}"))),
        };
        let dims = r.u32()? as usize;
        let count = usize::try_from(r.u64()?).map_err(|_| corrupt("count overflow"))?;

        // Every id costs at least its 4-byte length prefix.
        if count > r.remaining() / 4 {
            return Err(corrupt("count exceeds payload"));
        }
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let id = std::str::from_utf8(raw).map_err(|_| corrupt("id is not UTF-8"))?;
            ids.push(id.to_string());
        }

        let index = match scheme {
            Scheme::Flat => {
                let n = count.checked_mul(dims).ok_or_else(|| corrupt("size overflow"))?;
                let vectors = r.f32s(n)?;
                if vectors.iter().any(|x| !x.is_finite()) {
                    return Err(corrupt("non-finite vector value"));
                }
                VectorIndex::Flat(
                    FlatIndex::from_parts(dims, metric, ids, vectors)
                        .map_err(|e| corrupt(&e.to_string()))?,
                )
            }
            Scheme::Q8 | Scheme::Q4 => {
                let offset = r.f32s(dims)?;
                let scale = r.f32s(dims)?;
                let n = count
                    .checked_mul(scheme.row_bytes(dims))
                    .ok_or_else(|| corrupt("size overflow"))?;
                let codes = r.take(n)?.to_vec();
                VectorIndex::Quantized(QuantizedIndex::from_parts(
                    scheme, metric, dims, ids, offset, scale, codes,
                )?)
            }
        };
        if r.remaining() != 0 {
            return Err(corrupt("trailing bytes after payload"));
        }
        Ok(index)
    }
}

fn corrupt(msg: &str) -> IndexError {
    IndexError::CorruptPayload(msg.to_string())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        if n > self.remaining() {
            return Err(corrupt("unexpected end of payload"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, IndexError> {
        let bytes = n.checked_mul(4).ok_or_else(|| corrupt("size overflow"))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Write atomically: a sibling temp file is renamed over `path`.
pub fn save_index(index: &VectorIndex, path: &Path) -> Result<(), IndexError> {
    let bytes = index.to_bytes();
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<VectorIndex, IndexError> {
    VectorIndex::from_bytes(&std::fs::read(path)?)
}
