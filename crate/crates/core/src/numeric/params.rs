use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// A named, shaped slice of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter storage with a named segment layout.
///
/// Segments tile `values` in order with no gaps or overlap; this is checked
/// whenever a vector is constructed from outside data.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    /// All-zero parameters with the given `(name, shape)` layout.
    pub fn zeros(layout: &[(String, Vec<usize>)]) -> Result<Self> {
        let mut segments = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for (name, shape) in layout {
            if segments.iter().any(|s: &Segment| &s.name == name) {
                return Err(Error::Layout(format!("duplicate segment `{name}`")));
            }
            let seg = Segment {
                name: name.clone(),
                offset,
                shape: shape.clone(),
            };
            offset += seg.len();
            segments.push(seg);
        }
        Ok(Self {
            values: vec![0.0; offset],
            segments,
        })
    }

    /// Rebuilds a vector from stored values, validating the layout.
    pub fn from_parts(values: Vec<f64>, segments: Vec<Segment>) -> Result<Self> {
        let mut expected = 0;
        for seg in &segments {
            if seg.offset != expected {
                return Err(Error::Layout(format!(
                    "segment `{}` starts at {} but previous segments end at {expected}",
                    seg.name, seg.offset
                )));
            }
            expected += seg.len();
        }
        if expected != values.len() {
            return Err(Error::Layout(format!(
                "segments cover {expected} values but {} were given",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Layout(format!("non-finite value at index {i}")));
        }
        Ok(Self { values, segments })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            segments: self.segments.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_names(&self) -> Vec<String> {
        self.segments.iter().map(|s| s.name.clone()).collect()
    }

    pub fn find(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn range_of(&self, name: &str) -> Result<Range<usize>> {
        self.find(name)
            .map(Segment::range)
            .ok_or_else(|| Error::Layout(format!("no segment named `{name}`")))
    }

    pub fn segment(&self, name: &str) -> Result<&[f64]> {
        let r = self.range_of(name)?;
        Ok(&self.values[r])
    }

    pub fn segment_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let r = self.range_of(name)?;
        Ok(&mut self.values[r])
    }

    /// True when both vectors have the same segment names, offsets and shapes.
    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.segments == other.segments
    }

    pub fn add_assign(&mut self, other: &ParamVector) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.values {
            *v *= k;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Little-endian bytes of the named segments, in the given order.
    pub fn segment_bytes(&self, names: &[String]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for name in names {
            for v in self.segment(name)? {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }
}

/// Fills `out` with Glorot-uniform samples in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_fill<R: Rng + ?Sized>(out: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot limit");
    for w in out {
        *w = dist.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Vec<(String, Vec<usize>)> {
        vec![("w".into(), vec![2, 3]), ("b".into(), vec![2])]
    }

    #[test]
    fn segments_tile_values() {
        let p = ParamVector::zeros(&layout()).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p.range_of("w").unwrap(), 0..6);
        assert_eq!(p.range_of("b").unwrap(), 6..8);
    }

    #[test]
    fn from_parts_rejects_gaps_and_bad_lengths() {
        let p = ParamVector::zeros(&layout()).unwrap();
        let mut segs = p.segments().to_vec();
        segs[1].offset = 7;
        assert!(ParamVector::from_parts(vec![0.0; 8], segs).is_err());
        assert!(ParamVector::from_parts(vec![0.0; 9], p.segments().to_vec()).is_err());
        assert!(ParamVector::from_parts(vec![f64::NAN; 8], p.segments().to_vec()).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let l = vec![("a".into(), vec![1]), ("a".into(), vec![2])];
        assert!(ParamVector::zeros(&l).is_err());
    }

    #[test]
    fn glorot_respects_limit() {
        let mut rng = rand::rng();
        let mut w = vec![0.0; 1000];
        glorot_fill(&mut w, 10, 20, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert!(w.iter().any(|v| *v != 0.0));
    }
}
