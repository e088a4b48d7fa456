//! Dataset files: a text header `<name>.hdr` and a binary record file
//! `<name>.bin`.
//!
//! Header lines are `key value` pairs in fixed order:
//!
//! ```text
//! limi-dataset 1
//! samples 20000
//! image_size 32
//! n_regions 4
//! world <sha-256 hex>
//! seed 7
//! ```
//!
//! Each binary record, all integers little-endian:
//!
//! | field              | type                  |
//! |--------------------|-----------------------|
//! | hiddens            | `n_regions` x u8      |
//! | image_noise        | u8                    |
//! | text_noise         | u8                    |
//! | patch_symbols      | `n_regions` x u16     |
//! | sentence_symbols   | `n_regions` x u16     |
//! | labels             | `n_regions` x u8      |
//! | pixels             | `image_size^2` x u8 (value = byte / 255, row-major) |
//! | sentence count     | u8                    |
//! | per sentence       | u8 length, then length x u16 token ids |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{RegionTruth, WorldSample};
use crate::encoders::{ImageSample, ReportSample};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &str = "limi-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHeader {
    pub samples: usize,
    pub image_size: usize,
    pub n_regions: usize,
    pub world: String,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn render(&self) -> String {
        format!(
            "{DATASET_MAGIC} {DATASET_VERSION}\nsamples {}\nimage_size {}\nn_regions {}\nworld {}\nseed {}\n",
            self.samples, self.image_size, self.n_regions, self.world, self.seed
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        let expected_first = format!("{DATASET_MAGIC} {DATASET_VERSION}");
        if lines.next() != Some(expected_first.as_str()) {
            return Err(fail(format!("first line must be `{expected_first}`")));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| fail(format!("missing `{key}`")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ => Err(fail(format!("expected `{key} <value>`, found `{line}`"))),
            }
        };
        let num = |key: &str, v: String| -> Result<u64> { v.parse().map_err(|_| fail(format!("bad {key} `{v}`"))) };
        let samples = num("samples", field("samples")?)? as usize;
        let image_size = num("image_size", field("image_size")?)? as usize;
        let n_regions = num("n_regions", field("n_regions")?)? as usize;
        let world = field("world")?;
        let seed = num("seed", field("seed")?)?;
        Ok(Self {
            samples,
            image_size,
            n_regions,
            world,
            seed,
        })
    }
}

pub fn dataset_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.hdr")), dir.join(format!("{name}.bin")))
}

fn encode_sample(s: &WorldSample, out: &mut Vec<u8>) -> Result<()> {
    out.extend_from_slice(&s.hiddens);
    out.push(s.image_noise);
    out.push(s.text_noise);
    for v in s.patch_symbols.iter().chain(&s.sentence_symbols) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&s.labels);
    out.extend(s.image.pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    let n = u8::try_from(s.report.sentences.len()).map_err(|_| Error::InvalidInput("too many sentences".into()))?;
    out.push(n);
    for sentence in &s.report.sentences {
        out.push(u8::try_from(sentence.len()).map_err(|_| Error::InvalidInput("sentence too long".into()))?);
        for t in sentence {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    Ok(())
}

pub fn write_dataset(dir: &Path, name: &str, header: &DatasetHeader, samples: &[WorldSample]) -> Result<()> {
    if header.samples != samples.len() {
        return Err(Error::InvalidInput("header sample count differs from data".into()));
    }
    fs::create_dir_all(dir)?;
    let (hdr, bin) = dataset_paths(dir, name);
    let mut buf = Vec::new();
    for s in samples {
        encode_sample(s, &mut buf)?;
    }
    fs::write(&hdr, header.render())?;
    fs::write(&bin, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("truncated record at byte {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16s(&mut self, n: usize) -> Result<Vec<u16>> {
        Ok(self
            .take(2 * n)?
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect())
    }
}

pub fn read_dataset(dir: &Path, name: &str) -> Result<(DatasetHeader, Vec<WorldSample>)> {
    let (hdr, bin) = dataset_paths(dir, name);
    let header = DatasetHeader::parse(&fs::read_to_string(&hdr)?, &hdr)?;
    let bytes = fs::read(&bin)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
        path: &bin,
    };
    let r = header.n_regions;
    let side = header.image_size;
    let mut samples = Vec::with_capacity(header.samples);
    for _ in 0..header.samples {
        let hiddens = c.take(r)?.to_vec();
        let image_noise = c.u8()?;
        let text_noise = c.u8()?;
        let patch_symbols = c.u16s(r)?;
        let sentence_symbols = c.u16s(r)?;
        let labels = c.take(r)?.to_vec();
        let pixels = c.take(side * side)?.iter().map(|&b| f64::from(b) / 255.0).collect();
        let n_sent = c.u8()? as usize;
        let mut sentences = Vec::with_capacity(n_sent);
        for _ in 0..n_sent {
            let len = c.u8()? as usize;
            sentences.push(c.u16s(len)?);
        }
        samples.push(WorldSample {
            hiddens,
            image_noise,
            text_noise,
            patch_symbols,
            sentence_symbols,
            image: ImageSample {
                height: side,
                width: side,
                pixels,
            },
            report: ReportSample { sentences },
            labels,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Format {
            path: bin.clone(),
            reason: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    Ok((header, samples))
}

/// Ground-truth CSV, one row per region.
pub fn write_truth_csv(path: &Path, truths: &[RegionTruth]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "region,sentence,mi_patch_hidden,mi_sentence_hidden,mi_patch_sentence")?;
    for t in truths {
        writeln!(
            w,
            "{},{},{:.12},{:.12},{:.12}",
            t.region, t.sentence, t.mi_patch_hidden, t.mi_sentence_hidden, t.mi_patch_sentence
        )?;
    }
    w.flush()?;
    Ok(())
}
