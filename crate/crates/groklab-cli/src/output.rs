use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use groklab::numkit::Mat;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// `<out>/<timestamp>-<tag>/`, with `-2`, `-3`, ... appended on collision.
pub fn create_run_dir(out: &Path, tag: &str) -> Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let base = format!("{stamp}-{tag}");
    for n in 1.. {
        let name = if n == 1 { base.clone() } else { format!("{base}-{n}") };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the compact JSON of `inputs`.
pub fn content_hash(inputs: &serde_json::Value) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(inputs)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Little-endian `[u32 rank][u32 dims...][f64 row-major]` per matrix.
pub fn write_weights<W: Write>(mut out: W, mats: &[&Mat]) -> io::Result<()> {
    for m in mats {
        out.write_all(&2u32.to_le_bytes())?;
        out.write_all(&(m.nrows() as u32).to_le_bytes())?;
        out.write_all(&(m.ncols() as u32).to_le_bytes())?;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.write_all(&m[(i, j)].to_le_bytes())?;
            }
        }
    }
    out.flush()
}

fn take<'a>(rest: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if rest.len() < n {
        bail!("weights file truncated");
    }
    let (head, tail) = rest.split_at(n);
    *rest = tail;
    Ok(head)
}

pub fn read_weights<R: Read>(mut src: R) -> Result<Vec<Mat>> {
    let mut bytes = Vec::new();
    src.read_to_end(&mut bytes)?;
    let mut rest = bytes.as_slice();
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let mut mats = Vec::new();
    while !rest.is_empty() {
        let rank = u32_at(take(&mut rest, 4)?);
        if rank != 2 {
            bail!("unsupported tensor rank {rank}");
        }
        let rows = u32_at(take(&mut rest, 4)?);
        let cols = u32_at(take(&mut rest, 4)?);
        let data = take(&mut rest, rows * cols * 8)?;
        let vals: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        mats.push(Mat::from_row_slice(rows, cols, &vals));
    }
    Ok(mats)
}
