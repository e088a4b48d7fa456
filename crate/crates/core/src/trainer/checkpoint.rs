//! Checkpoint files: a text header followed by raw parameter values.
//!
//! ```text
//! limi-checkpoint 1
//! config <sha-256 hex of the run configuration>
//! seed <u64>
//! segment image/conv0.w 8,3,3,1
//! segment image/conv0.b 8
//! ...
//! end
//! <f64 little-endian values of every segment, in header order>
//! ```
//!
//! A segment name is `<group>/<name>`; groups are rebuilt as separate
//! parameter vectors on load.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::{ParamVector, Segment};

pub const CHECKPOINT_MAGIC: &str = "limi-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub seed: u64,
    pub groups: Vec<(String, ParamVector)>,
}

/// SHA-256 hex digest of arbitrary bytes (used for config and freeze hashes).
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Checkpoint {
    pub fn group(&self, name: &str) -> Result<&ParamVector> {
        self.groups
            .iter()
            .find(|(g, _)| g == name)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::InvalidInput(format!("checkpoint has no `{name}` group")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!(
            "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nconfig {}\nseed {}\n",
            self.config_hash, self.seed
        );
        for (g, p) in &self.groups {
            for s in p.segments() {
                let shape: Vec<String> = s.shape.iter().map(|d| d.to_string()).collect();
                header.push_str(&format!("segment {g}/{} {}\n", s.name, shape.join(",")));
            }
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for (_, p) in &self.groups {
            for v in p.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, path)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| fail("header is not terminated by `end`".into()))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| fail("header is not UTF-8".into()))?;
            pos += end + 1;
            Ok(line)
        };
        let first = next_line()?;
        if first != format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}") {
            return Err(fail(format!("unexpected first line `{first}`")));
        }
        let config_hash = next_line()?
            .strip_prefix("config ")
            .ok_or_else(|| fail("missing config line".into()))?
            .to_string();
        let seed_line = next_line()?;
        let seed = seed_line
            .strip_prefix("seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail(format!("bad seed line `{seed_line}`")))?;
        let mut layout: Vec<(String, String, Vec<usize>)> = Vec::new();
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            let rest = line
                .strip_prefix("segment ")
                .ok_or_else(|| fail(format!("unexpected header line `{line}`")))?;
            let (full, shape) = rest
                .split_once(' ')
                .ok_or_else(|| fail(format!("segment line without shape `{line}`")))?;
            let (group, name) = full
                .split_once('/')
                .ok_or_else(|| fail(format!("segment `{full}` has no group")))?;
            let shape = shape
                .split(',')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| fail(format!("bad shape in `{line}`")))?;
            layout.push((group.to_string(), name.to_string(), shape));
        }
        let body = &bytes[pos..];
        let total: usize = layout.iter().map(|(_, _, s)| s.iter().product::<usize>()).sum();
        if body.len() != total * 8 {
            return Err(fail(format!("expected {} value bytes, found {}", total * 8, body.len())));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut groups: Vec<(String, ParamVector)> = Vec::new();
        let mut i = 0;
        while i < layout.len() {
            let group = layout[i].0.clone();
            let mut segs = Vec::new();
            let mut offset = 0;
            while i < layout.len() && layout[i].0 == group {
                let seg = Segment {
                    name: layout[i].1.clone(),
                    offset,
                    shape: layout[i].2.clone(),
                };
                offset += seg.len();
                segs.push(seg);
                i += 1;
            }
            let vals: Vec<f64> = values.by_ref().take(offset).collect();
            if groups.iter().any(|(g, _)| *g == group) {
                return Err(fail(format!("group `{group}` appears twice")));
            }
            groups.push((group, ParamVector::from_parts(vals, segs).map_err(|e| fail(e.to_string()))?));
        }
        Ok(Self {
            config_hash,
            seed,
            groups,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut a = ParamVector::zeros(&[("w".into(), vec![2, 3]), ("b".into(), vec![2])]).unwrap();
        for (i, v) in a.values_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.37 - 1.0;
        }
        let mut b = ParamVector::zeros(&[("embed".into(), vec![4])]).unwrap();
        b.values_mut().copy_from_slice(&[f64::MIN_POSITIVE, -0.0, 1e300, 3.5]);
        Checkpoint {
            config_hash: sha256_hex(b"cfg"),
            seed: 42,
            groups: vec![("image".into(), a), ("text".into(), b)],
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.config_hash, c.config_hash);
        assert_eq!(back.seed, 42);
        for ((ga, pa), (gb, pb)) in c.groups.iter().zip(&back.groups) {
            assert_eq!(ga, gb);
            assert_eq!(pa.segments(), pb.segments());
            let bits = |p: &ParamVector| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(pa), bits(pb));
        }
    }

    #[test]
    fn truncated_body_rejected() {
        let bytes = sample().to_bytes();
        let r = Checkpoint::from_bytes(&bytes[..bytes.len() - 1], Path::new("mem"));
        assert!(matches!(r, Err(Error::Format { .. })));
    }

    #[test]
    fn missing_group_is_error() {
        assert!(sample().group("critic").is_err());
    }
}
