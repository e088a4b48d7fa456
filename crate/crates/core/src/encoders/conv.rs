//! Strided 2-d convolution over channel-last (`H x W x C`) buffers.
//!
//! Padding follows the "same" rule for strided kernels: the output side is
//! `ceil(in / stride)` and any padding needed goes mostly after the input, so
//! output cell `o` reads input rows `o*stride - pad_before ..`.

use crate::numeric::glorot_fill;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        self.in_h.div_ceil(self.stride)
    }

    pub fn out_w(&self) -> usize {
        self.in_w.div_ceil(self.stride)
    }

    fn pad_before(in_len: usize, out_len: usize, k: usize, s: usize) -> usize {
        let total = ((out_len - 1) * s + k).saturating_sub(in_len);
        total / 2
    }

    pub fn pad_top(&self) -> usize {
        Self::pad_before(self.in_h, self.out_h(), self.kernel, self.stride)
    }

    pub fn pad_left(&self) -> usize {
        Self::pad_before(self.in_w, self.out_w(), self.kernel, self.stride)
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.kernel * self.kernel * self.in_c
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn out_len(&self) -> usize {
        self.out_h() * self.out_w() * self.out_c
    }

    /// Input row range `[lo, hi]` read by output row `o` (unclipped).
    pub fn input_span(&self, o: usize) -> (isize, isize) {
        let lo = (o * self.stride) as isize - self.pad_top() as isize;
        (lo, lo + self.kernel as isize - 1)
    }

    pub fn init_weights<R: Rng + ?Sized>(&self, w: &mut [f64], rng: &mut R) {
        let k2 = self.kernel * self.kernel;
        glorot_fill(w, k2 * self.in_c, k2 * self.out_c, rng);
    }
}

/// Pre-activation forward: `out = conv(input, w) + b`.
pub fn conv_forward(shape: &ConvShape, w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    debug_assert_eq!(input.len(), shape.in_len());
    debug_assert_eq!(out.len(), shape.out_len());
    let (oh, ow) = (shape.out_h(), shape.out_w());
    let (pt, pl) = (shape.pad_top() as isize, shape.pad_left() as isize);
    let k = shape.kernel;
    let (cin, cout) = (shape.in_c, shape.out_c);
    for oy in 0..oh {
        for ox in 0..ow {
            let o_base = (oy * ow + ox) * cout;
            out[o_base..o_base + cout].copy_from_slice(b);
            for ky in 0..k {
                let iy = (oy * shape.stride) as isize + ky as isize - pt;
                if iy < 0 || iy >= shape.in_h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * shape.stride) as isize + kx as isize - pl;
                    if ix < 0 || ix >= shape.in_w as isize {
                        continue;
                    }
                    let i_base = (iy as usize * shape.in_w + ix as usize) * cin;
                    let x = &input[i_base..i_base + cin];
                    for co in 0..cout {
                        let w_base = ((co * k + ky) * k + kx) * cin;
                        let wr = &w[w_base..w_base + cin];
                        let mut s = 0.0;
                        for (wi, xi) in wr.iter().zip(x) {
                            s += wi * xi;
                        }
                        out[o_base + co] += s;
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and, when requested, the input gradient,
/// given the gradient with respect to the pre-activation output.
pub fn conv_backward(
    shape: &ConvShape,
    w: &[f64],
    input: &[f64],
    d_out: &[f64],
    d_w: &mut [f64],
    d_b: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    let (oh, ow) = (shape.out_h(), shape.out_w());
    let (pt, pl) = (shape.pad_top() as isize, shape.pad_left() as isize);
    let k = shape.kernel;
    let (cin, cout) = (shape.in_c, shape.out_c);
    for oy in 0..oh {
        for ox in 0..ow {
            let o_base = (oy * ow + ox) * cout;
            let d = &d_out[o_base..o_base + cout];
            for (db, di) in d_b.iter_mut().zip(d) {
                *db += di;
            }
            for ky in 0..k {
                let iy = (oy * shape.stride) as isize + ky as isize - pt;
                if iy < 0 || iy >= shape.in_h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * shape.stride) as isize + kx as isize - pl;
                    if ix < 0 || ix >= shape.in_w as isize {
                        continue;
                    }
                    let i_base = (iy as usize * shape.in_w + ix as usize) * cin;
                    let x = &input[i_base..i_base + cin];
                    for (co, &dco) in d.iter().enumerate() {
                        if dco == 0.0 {
                            continue;
                        }
                        let w_base = ((co * k + ky) * k + kx) * cin;
                        for (g, xi) in d_w[w_base..w_base + cin].iter_mut().zip(x) {
                            *g += dco * xi;
                        }
                        if let Some(dx) = d_input.as_deref_mut() {
                            let wr = &w[w_base..w_base + cin];
                            for (g, wi) in dx[i_base..i_base + cin].iter_mut().zip(wr) {
                                *g += dco * wi;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::max_relative_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape() -> ConvShape {
        ConvShape {
            in_h: 6,
            in_w: 6,
            in_c: 2,
            out_c: 3,
            kernel: 3,
            stride: 2,
        }
    }

    #[test]
    fn geometry() {
        let s = ConvShape {
            in_h: 32,
            in_w: 32,
            in_c: 1,
            out_c: 4,
            kernel: 3,
            stride: 2,
        };
        assert_eq!(s.out_h(), 16);
        assert_eq!(s.pad_top(), 0);
        assert_eq!(s.input_span(0), (0, 2));
        assert_eq!(s.input_span(15), (30, 32));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = shape();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w = vec![0.0; s.weight_len()];
        s.init_weights(&mut w, &mut rng);
        let b: Vec<f64> = (0..s.out_c).map(|i| 0.1 * i as f64).collect();
        let x: Vec<f64> = (0..s.in_len()).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
        let up: Vec<f64> = (0..s.out_len()).map(|i| ((i * 5) % 7) as f64 / 7.0 - 0.5).collect();
        let obj = |w: &[f64], x: &[f64]| {
            let mut out = vec![0.0; s.out_len()];
            conv_forward(&s, w, &b, x, &mut out);
            out.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; b.len()];
        let mut dx = vec![0.0; x.len()];
        conv_backward(&s, &w, &x, &up, &mut dw, &mut db, Some(&mut dx));
        assert!(max_relative_error(|p| obj(p, &x), &dw, &w, 1e-5) < 1e-7);
        assert!(max_relative_error(|p| obj(&w, p), &dx, &x, 1e-5) < 1e-7);
        let expect_db: Vec<f64> = (0..s.out_c)
            .map(|c| up.iter().skip(c).step_by(s.out_c).sum())
            .collect();
        for (a, e) in db.iter().zip(&expect_db) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
