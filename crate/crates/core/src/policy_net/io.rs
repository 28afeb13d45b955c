//! Policy checkpoint files.
//!
//! Layout: 4 magic bytes `VTLP`, format version (u32 LE), length-prefixed
//! JSON architecture descriptor (u32 LE length), parameter count (u64 LE),
//! then the flat parameter vector as little-endian f64 values.

use super::{NetworkArch, PolicyParams};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"VTLP";
const VERSION: u32 = 1;

/// Write `params` to `path`, replacing any existing file.
pub fn save_checkpoint(path: &Path, params: &PolicyParams) -> Result<()> {
    let arch_json = serde_json::to_vec(params.arch())
        .map_err(|e| Error::Checkpoint(format!("encoding architecture: {e}")))?;
    if arch_json.len() > u32::MAX as usize {
        return Err(Error::Checkpoint("architecture descriptor too large".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(arch_json.len() as u32).to_le_bytes())?;
    out.write_all(&arch_json)?;
    out.write_all(&(params.len() as u64).to_le_bytes())?;
    for v in params.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|_| Error::Checkpoint(format!("truncated while reading {what}")))
}

/// Read a checkpoint written by [`save_checkpoint`], revalidating the
/// architecture and parameter vector.
pub fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut reader, &mut magic, "magic bytes")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic bytes {magic:02x?}")));
    }
    let mut word = [0u8; 4];
    read_exact(&mut reader, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    read_exact(&mut reader, &mut word, "architecture length")?;
    let arch_len = u32::from_le_bytes(word) as usize;
    let mut arch_json = vec![0u8; arch_len];
    read_exact(&mut reader, &mut arch_json, "architecture descriptor")?;
    let arch: NetworkArch = serde_json::from_slice(&arch_json)
        .map_err(|e| Error::Checkpoint(format!("decoding architecture: {e}")))?;
    let mut wide = [0u8; 8];
    read_exact(&mut reader, &mut wide, "parameter count")?;
    let count = u64::from_le_bytes(wide) as usize;
    let expected = arch.n_params()?;
    if count != expected {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match architecture ({expected})"
        )));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        read_exact(&mut reader, &mut wide, &format!("parameter {i}"))?;
        values.push(f64::from_le_bytes(wide));
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    PolicyParams::new(arch, values)
}
