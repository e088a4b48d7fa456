use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv_backward, conv_forward, ConvShape};
use crate::error::{Error, Result};
use crate::numeric::{glorot_fill, ParamVector};

pub type ImageEncoderParams = ParamVector;

/// Single-channel image with values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl ImageSample {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }
}

/// `side x side` cells of `channels` features each, cells in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub side: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(side: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if side == 0 || channels == 0 {
            return Err(Error::InvalidInput("feature grid needs side, channels >= 1".into()));
        }
        if data.len() != side * side * channels {
            return Err(Error::InvalidInput(format!(
                "grid {side}x{side}x{channels} needs {} values, got {}",
                side * side * channels,
                data.len()
            )));
        }
        Ok(Self {
            side,
            channels,
            data,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.side * self.side
    }

    pub fn cell(&self, n: usize) -> &[f64] {
        &self.data[n * self.channels..(n + 1) * self.channels]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    /// Grid with cells reordered so that new cell `i` is old cell `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.cell(p));
        }
        Self {
            side: self.side,
            channels: self.channels,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeature {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageEncoderSpec {
    pub image_size: usize,
    /// Output channels of each stride-2 block of the local stack; the last
    /// entry is the grid width `D`.
    pub local_channels: Vec<usize>,
    pub global_channels: usize,
    pub global_dim: usize,
}

impl Default for ImageEncoderSpec {
    fn default() -> Self {
        Self {
            image_size: 32,
            local_channels: vec![8, 16, 32],
            global_channels: 32,
            global_dim: 64,
        }
    }
}

impl ImageEncoderSpec {
    pub fn downsampling(&self) -> usize {
        1 << self.local_channels.len()
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.downsampling()
    }

    pub fn grid_channels(&self) -> usize {
        *self.local_channels.last().unwrap_or(&1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.local_channels.is_empty() || self.local_channels.contains(&0) {
            return Err(Error::InvalidConfig(
                "image encoder needs at least one block with positive width".into(),
            ));
        }
        if self.image_size == 0 || self.image_size % self.downsampling() != 0 {
            return Err(Error::InvalidConfig(format!(
                "image size {} is not divisible by the downsampling factor {}",
                self.image_size,
                self.downsampling()
            )));
        }
        if self.global_channels == 0 || self.global_dim == 0 {
            return Err(Error::InvalidConfig("global stage widths must be positive".into()));
        }
        Ok(())
    }
}

/// Activations retained from [`ImageEncoder::forward_local`].
#[derive(Debug, Clone)]
pub struct LocalCache {
    /// `acts[0]` is the image; `acts[l + 1]` the relu output of block `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl LocalCache {
    /// Smallest `|z|` over all relu pre-activations; finite differences with
    /// a step well below this margin never cross a kink.
    pub fn relu_margin(&self) -> f64 {
        self.pre.iter().flatten().fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct GlobalCache {
    grid: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    pooled: Vec<f64>,
}

impl GlobalCache {
    pub fn relu_margin(&self) -> f64 {
        self.pre.iter().fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

/// Strided convolution stack producing a local feature grid, plus a global
/// pathway (one more strided block, spatial mean, dense layer).
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    spec: ImageEncoderSpec,
    shapes: Vec<ConvShape>,
    global_shape: ConvShape,
    conv_ranges: Vec<(Range<usize>, Range<usize>)>,
    global_conv: (Range<usize>, Range<usize>),
    dense: (Range<usize>, Range<usize>),
    layout: Vec<(String, Vec<usize>)>,
}

impl ImageEncoder {
    pub fn new(spec: ImageEncoderSpec) -> Result<Self> {
        spec.validate()?;
        let mut shapes = Vec::new();
        let (mut side, mut c) = (spec.image_size, 1);
        for &out_c in &spec.local_channels {
            let s = ConvShape {
                in_h: side,
                in_w: side,
                in_c: c,
                out_c,
                kernel: 3,
                stride: 2,
            };
            side = s.out_h();
            c = out_c;
            shapes.push(s);
        }
        let global_shape = ConvShape {
            in_h: side,
            in_w: side,
            in_c: c,
            out_c: spec.global_channels,
            kernel: 3,
            stride: 2,
        };
        let mut layout = Vec::new();
        for (i, s) in shapes.iter().enumerate() {
            layout.push((format!("conv{i}.w"), vec![s.out_c, 3, 3, s.in_c]));
            layout.push((format!("conv{i}.b"), vec![s.out_c]));
        }
        layout.push((
            "global.conv.w".into(),
            vec![global_shape.out_c, 3, 3, global_shape.in_c],
        ));
        layout.push(("global.conv.b".into(), vec![global_shape.out_c]));
        layout.push((
            "global.dense.w".into(),
            vec![spec.global_dim, spec.global_channels],
        ));
        layout.push(("global.dense.b".into(), vec![spec.global_dim]));

        let probe = ParamVector::zeros(&layout)?;
        let pair = |name: &str| -> Result<(Range<usize>, Range<usize>)> {
            Ok((probe.range_of(&format!("{name}.w"))?, probe.range_of(&format!("{name}.b"))?))
        };
        let conv_ranges = (0..shapes.len())
            .map(|i| pair(&format!("conv{i}")))
            .collect::<Result<Vec<_>>>()?;
        let global_conv = pair("global.conv")?;
        let dense = pair("global.dense")?;
        Ok(Self {
            spec,
            shapes,
            global_shape,
            conv_ranges,
            global_conv,
            dense,
            layout,
        })
    }

    pub fn spec(&self) -> &ImageEncoderSpec {
        &self.spec
    }

    pub fn grid_side(&self) -> usize {
        self.shapes.last().unwrap().out_h()
    }

    pub fn grid_channels(&self) -> usize {
        self.spec.grid_channels()
    }

    pub fn global_dim(&self) -> usize {
        self.spec.global_dim
    }

    pub fn zeros(&self) -> ImageEncoderParams {
        ParamVector::zeros(&self.layout).expect("generated layout is valid")
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ImageEncoderParams {
        let mut p = self.zeros();
        let v = p.values_mut();
        for (s, (w, _)) in self.shapes.iter().zip(&self.conv_ranges) {
            s.init_weights(&mut v[w.clone()], rng);
        }
        self.global_shape
            .init_weights(&mut v[self.global_conv.0.clone()], rng);
        glorot_fill(
            &mut v[self.dense.0.clone()],
            self.spec.global_channels,
            self.spec.global_dim,
            rng,
        );
        p
    }

    /// Segments that produce the feature grid (frozen during frozen-mode
    /// probing) and the remaining global-stage segments.
    pub fn freeze_split(&self) -> (Vec<String>, Vec<String>) {
        let names: Vec<String> = self.layout.iter().map(|(n, _)| n.clone()).collect();
        names.into_iter().partition(|n| n.starts_with("conv"))
    }

    /// Pixel rows (equivalently columns) `[lo, hi]` that can influence grid
    /// row `cell`, clipped to the image.
    pub fn receptive_field(&self, cell: usize) -> (usize, usize) {
        let (mut lo, mut hi) = (cell as isize, cell as isize);
        for s in self.shapes.iter().rev() {
            lo = s.input_span(lo as usize).0;
            hi = s.input_span(hi.max(0) as usize).1;
            lo = lo.max(0);
            hi = hi.min(s.in_h as isize - 1);
        }
        (lo as usize, hi as usize)
    }

    fn check(&self, params: &ParamVector, image: &ImageSample) -> Result<()> {
        if params.len() != self.layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum::<usize>() {
            return Err(Error::Layout("image encoder parameters do not match spec".into()));
        }
        if image.height != self.spec.image_size || image.width != self.spec.image_size {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.spec.image_size,
                got: if image.height != self.spec.image_size {
                    image.height
                } else {
                    image.width
                },
            });
        }
        Ok(())
    }

    pub fn forward_local(
        &self,
        params: &ParamVector,
        image: &ImageSample,
    ) -> Result<(FeatureGrid, LocalCache)> {
        self.check(params, image)?;
        let v = params.values();
        let mut acts = Vec::with_capacity(self.shapes.len() + 1);
        let mut pre = Vec::with_capacity(self.shapes.len());
        acts.push(image.pixels.clone());
        for (l, (s, (w, b))) in self.shapes.iter().zip(&self.conv_ranges).enumerate() {
            let mut z = vec![0.0; s.out_len()];
            conv_forward(s, &v[w.clone()], &v[b.clone()], &acts[l], &mut z);
            let a: Vec<f64> = z.iter().map(|&x| x.max(0.0)).collect();
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { layer: l });
            }
            pre.push(z);
            acts.push(a);
        }
        let grid = FeatureGrid {
            side: self.grid_side(),
            channels: self.grid_channels(),
            data: acts.last().unwrap().clone(),
        };
        Ok((grid, LocalCache { acts, pre }))
    }

    pub fn encode_local(&self, params: &ParamVector, image: &ImageSample) -> Result<FeatureGrid> {
        Ok(self.forward_local(params, image)?.0)
    }

    /// Accumulates parameter gradients given `d_grid`, the gradient with
    /// respect to the grid values.
    pub fn backward_local(
        &self,
        params: &ParamVector,
        cache: &LocalCache,
        d_grid: &[f64],
        grad: &mut ParamVector,
    ) {
        let v = params.values();
        let g = grad.values_mut();
        let mut d = d_grid.to_vec();
        for l in (0..self.shapes.len()).rev() {
            let s = &self.shapes[l];
            for (di, z) in d.iter_mut().zip(&cache.pre[l]) {
                if *z <= 0.0 {
                    *di = 0.0;
                }
            }
            let (w, b) = &self.conv_ranges[l];
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; b.len()];
            let mut d_in = if l > 0 { vec![0.0; s.in_len()] } else { Vec::new() };
            conv_backward(
                s,
                &v[w.clone()],
                &cache.acts[l],
                &d,
                &mut dw,
                &mut db,
                if l > 0 { Some(&mut d_in) } else { None },
            );
            for (gi, x) in g[w.clone()].iter_mut().zip(&dw) {
                *gi += x;
            }
            for (gi, x) in g[b.clone()].iter_mut().zip(&db) {
                *gi += x;
            }
            d = d_in;
        }
    }

    pub fn forward_global(
        &self,
        params: &ParamVector,
        grid: &FeatureGrid,
    ) -> Result<(GlobalFeature, GlobalCache)> {
        if grid.side != self.grid_side() || grid.channels != self.grid_channels() {
            return Err(Error::DimensionMismatch {
                layer: self.shapes.len(),
                expected: self.grid_side() * self.grid_side() * self.grid_channels(),
                got: grid.data.len(),
            });
        }
        let v = params.values();
        let s = &self.global_shape;
        let mut pre = vec![0.0; s.out_len()];
        conv_forward(
            s,
            &v[self.global_conv.0.clone()],
            &v[self.global_conv.1.clone()],
            &grid.data,
            &mut pre,
        );
        let act: Vec<f64> = pre.iter().map(|&x| x.max(0.0)).collect();
        let positions = (s.out_h() * s.out_w()) as f64;
        let mut pooled = vec![0.0; s.out_c];
        for cell in act.chunks_exact(s.out_c) {
            for (p, a) in pooled.iter_mut().zip(cell) {
                *p += a;
            }
        }
        for p in &mut pooled {
            *p /= positions;
        }
        let w = &v[self.dense.0.clone()];
        let b = &v[self.dense.1.clone()];
        let out: Vec<f64> = w
            .chunks_exact(s.out_c)
            .zip(b)
            .map(|(row, bias)| bias + row.iter().zip(&pooled).map(|(a, x)| a * x).sum::<f64>())
            .collect();
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                layer: self.shapes.len() + 1,
            });
        }
        Ok((
            GlobalFeature { vector: out },
            GlobalCache {
                grid: grid.data.clone(),
                pre,
                act,
                pooled,
            },
        ))
    }

    pub fn encode_global(&self, params: &ParamVector, image: &ImageSample) -> Result<GlobalFeature> {
        let grid = self.encode_local(params, image)?;
        Ok(self.forward_global(params, &grid)?.0)
    }

    /// Accumulates global-stage gradients and returns the gradient with
    /// respect to the grid.
    pub fn backward_global(
        &self,
        params: &ParamVector,
        cache: &GlobalCache,
        d_out: &[f64],
        grad: &mut ParamVector,
    ) -> Vec<f64> {
        let v = params.values();
        let s = &self.global_shape;
        let c = s.out_c;
        let positions = (s.out_h() * s.out_w()) as f64;
        let g = grad.values_mut();
        let w = &v[self.dense.0.clone()];
        let mut d_pooled = vec![0.0; c];
        {
            let (wr, br) = (self.dense.0.clone(), self.dense.1.clone());
            for (o, &d) in d_out.iter().enumerate() {
                g[br.start + o] += d;
                for i in 0..c {
                    g[wr.start + o * c + i] += d * cache.pooled[i];
                    d_pooled[i] += d * w[o * c + i];
                }
            }
        }
        let mut d_pre = vec![0.0; cache.pre.len()];
        for (k, (dp, z)) in d_pre.iter_mut().zip(&cache.pre).enumerate() {
            if *z > 0.0 {
                *dp = d_pooled[k % c] / positions;
            }
        }
        debug_assert_eq!(cache.act.len(), d_pre.len());
        let (wr, br) = (self.global_conv.0.clone(), self.global_conv.1.clone());
        let mut dw = vec![0.0; wr.len()];
        let mut db = vec![0.0; br.len()];
        let mut d_grid = vec![0.0; cache.grid.len()];
        conv_backward(
            s,
            &v[wr.clone()],
            &cache.grid,
            &d_pre,
            &mut dw,
            &mut db,
            Some(&mut d_grid),
        );
        for (gi, x) in g[wr].iter_mut().zip(&dw) {
            *gi += x;
        }
        for (gi, x) in g[br].iter_mut().zip(&db) {
            *gi += x;
        }
        d_grid
    }
}
