//! Binary dataset files and the lossy CSV export.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! "RLAB"            magic
//! u16               version
//! u32 + bytes       provenance block: JSON of the generator config and seed, or `null`
//! u64               event count
//! count x 230 f64   cluster (225, row-major), E, x, y, theta_x, theta_y
//! u32               CRC32 of every byte after the magic
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rlab_core::calo::{Dataset, EventRecord, Provenance, CELLS};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RLAB";
pub const VERSION: u16 = 1;
/// Reals stored per event.
pub const EVENT_REALS: usize = CELLS + 5;
const EVENT_BYTES: usize = EVENT_REALS * 8;

struct Crc<W: Write> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> Crc<W> {
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)
    }
}

/// Writes `data` to `path` and returns the checksum stored in the trailer.
pub fn save_dataset(data: &Dataset, path: &Path) -> Result<u32> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = Crc { inner: BufWriter::new(file), hasher: crc32fast::Hasher::new() };
    let block = serde_json::to_vec(&data.provenance)?;
    let run = |w: &mut Crc<BufWriter<File>>| -> std::io::Result<u32> {
        w.inner.write_all(MAGIC)?;
        w.put(&VERSION.to_le_bytes())?;
        w.put(&(block.len() as u32).to_le_bytes())?;
        w.put(&block)?;
        w.put(&(data.records.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(EVENT_BYTES);
        for r in &data.records {
            buf.clear();
            for v in r.cluster.iter().chain([&r.energy, &r.x, &r.y, &r.theta_x, &r.theta_y]) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.put(&buf)?;
        }
        let crc = w.hasher.clone().finalize();
        w.inner.write_all(&crc.to_le_bytes())?;
        w.inner.flush()?;
        Ok(crc)
    };
    run(&mut w).map_err(Error::io(path))
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at.checked_add(n)?)?;
        self.at += n;
        Some(s)
    }

    fn array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N).map(|s| s.try_into().unwrap())
    }
}

/// Reads a file written by [`save_dataset`]. Nothing is returned unless the
/// whole file is present and its checksum matches.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    if bytes.len() < 4 + 2 + 4 + 8 + 4 || &bytes[..4] != MAGIC {
        return Err(malformed(path, "missing RLAB header"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let mut c = Cursor { bytes: body, at: 4 };
    let version = u16::from_le_bytes(c.array().unwrap());
    if version != VERSION {
        return Err(malformed(path, format!("unsupported version {version}")));
    }
    let block_len = u32::from_le_bytes(c.array().unwrap()) as usize;
    let block = c.take(block_len).ok_or_else(|| malformed(path, "truncated provenance block"))?;
    let count = c.array::<8>().map(u64::from_le_bytes).ok_or_else(|| malformed(path, "truncated header"))?;
    let expected = (count as usize).checked_mul(EVENT_BYTES).and_then(|n| n.checked_add(c.at));
    if expected != Some(body.len()) {
        return Err(malformed(path, format!("{count} events declared but {} payload bytes present", body.len() - c.at)));
    }
    let crc = crc32fast::hash(&body[4..]);
    if crc != stored {
        return Err(malformed(path, format!("checksum mismatch (stored {stored:08x}, computed {crc:08x})")));
    }
    let provenance: Option<Provenance> =
        serde_json::from_slice(block).map_err(|e| malformed(path, format!("provenance block: {e}")))?;
    let mut records = Vec::with_capacity(count as usize);
    for chunk in body[c.at..].chunks_exact(EVENT_BYTES) {
        let mut vals = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        let mut cluster = [0.0; CELLS];
        for v in cluster.iter_mut() {
            *v = vals.next().unwrap();
        }
        let mut next = || vals.next().unwrap();
        records.push(EventRecord { cluster, energy: next(), x: next(), y: next(), theta_x: next(), theta_y: next() });
    }
    Ok(Dataset { records, provenance })
}

/// CRC32 stored in the trailer of a dataset file.
pub fn stored_checksum(path: &Path) -> Result<u32> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    let tail = bytes.len().checked_sub(4).ok_or_else(|| malformed(path, "file too short"))?;
    Ok(u32::from_le_bytes(bytes[tail..].try_into().unwrap()))
}

/// Plot-friendly export, one row per event.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..CELLS).map(|i| format!("c{i}")).collect();
    header.extend(["E", "x", "y", "tx", "ty"].map(String::from));
    w.write_record(&header)?;
    for r in &data.records {
        let row = r.cluster.iter().chain([&r.energy, &r.x, &r.y, &r.theta_x, &r.theta_y]).map(|v| v.to_string());
        w.write_record(row)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}
