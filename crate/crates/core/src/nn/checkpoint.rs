use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NnError, ParamStore, Result, Tensor};

const MAGIC: &[u8; 4] = b"NNP1";

/// Ordered named tensors. Several networks share one file by prefixing
/// their parameter names, e.g. `actor/l0.w`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every tensor of `params` as `prefix/name`.
    pub fn insert(&mut self, prefix: &str, params: &ParamStore<f32>) {
        for (name, t) in params.iter() {
            self.entries.push((format!("{prefix}/{name}"), t.clone()));
        }
    }

    /// Collects the tensors stored under `prefix`, in file order.
    pub fn extract(&self, prefix: &str) -> Option<ParamStore<f32>> {
        let head = format!("{prefix}/");
        let entries: Vec<_> = self
            .entries
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(&head).map(|s| (s.to_string(), t.clone())))
            .collect();
        if entries.is_empty() {
            return None;
        }
        ParamStore::new(entries).ok()
    }

    /// Distinct prefixes in order of first appearance.
    pub fn prefixes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (n, _) in &self.entries {
            if let Some((p, _)) = n.split_once('/') {
                if !out.iter().any(|q| q == p) {
                    out.push(p.to_string());
                }
            }
        }
        out
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.prefixes().iter().any(|p| p == prefix)
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(MAGIC)?;
    for (name, t) in &ckpt.entries {
        let name_len = u16::try_from(name.len())
            .map_err(|_| NnError::Format(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| NnError::Format(format!("rank too large for {name}")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[rank])?;
        for &e in t.shape() {
            let e = u32::try_from(e).map_err(|_| NnError::Format(format!("extent too large in {name}")))?;
            w.write_all(&e.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| NnError::Format(format!("truncated checkpoint while reading {what}")))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(NnError::Format("bad magic, not a parameter checkpoint".into()));
    }
    let mut ckpt = Checkpoint::new();
    loop {
        let mut len = [0u8; 2];
        match r.read(&mut len[..1])? {
            0 => break,
            _ => read_exact_or(&mut r, &mut len[1..], "name length")?,
        }
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(&mut r, &mut name, "name")?;
        let name = String::from_utf8(name).map_err(|_| NnError::Format("tensor name is not utf-8".into()))?;
        let mut rank = [0u8; 1];
        read_exact_or(&mut r, &mut rank, "rank")?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut e = [0u8; 4];
            read_exact_or(&mut r, &mut e, "extent")?;
            shape.push(u32::from_le_bytes(e) as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&n| n <= (1 << 30))
            .ok_or_else(|| NnError::Format(format!("implausible shape {shape:?}")))?;
        let mut raw = vec![0u8; n * 4];
        read_exact_or(&mut r, &mut raw, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| NnError::Format(e.to_string()))?;
        ckpt.entries.push((name, t));
    }
    Ok(ckpt)
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), ckpt)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ParamStore::new(vec![
            ("l0.w".into(), Tensor::new(vec![2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5, 1e-30, -7.25]).unwrap()),
            ("l0.b".into(), Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()),
        ])
        .unwrap();
        let mut ck = Checkpoint::new();
        ck.insert("actor", &p);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        assert_eq!(&buf[..4], b"NNP1");
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        let got = back.extract("actor").unwrap();
        let bits = |s: &ParamStore<f32>| s.flat_values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&got), bits(&p));
        assert_eq!(back.prefixes(), vec!["actor".to_string()]);
        assert!(back.extract("critic").is_none());
    }

    #[test]
    fn truncation_and_bad_magic_rejected() {
        let mut ck = Checkpoint::new();
        ck.entries.push(("x/w".into(), Tensor::new(vec![4], vec![1.0; 4]).unwrap()));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        for cut in 5..buf.len() {
            assert!(read_checkpoint(&buf[..cut]).is_err(), "cut at {cut}");
        }
        assert!(read_checkpoint(&b"NNP2"[..]).is_err());
    }
}
