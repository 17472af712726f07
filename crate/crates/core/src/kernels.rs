// Copyright 2026 The Impression Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Raw forward/backward kernels over flat row-major buffers.
//!
//! Per-sample work is spread across the rayon pool; anything that reduces
//! across samples (weight and bias gradients) is summed sequentially in
//! sample order so results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let [n, c, h, w] = match *input {
            [n, c, h, w] => [n, c, h, w],
            _ => return Err(Error::dim("conv2d input", &[0, 0, 0, 0], input)),
        };
        let [k, wc, kh, kw] = match *weight {
            [k, wc, kh, kw] => [k, wc, kh, kw],
            _ => return Err(Error::dim("conv2d weight", &[0, c, 0, 0], weight)),
        };
        if wc != c {
            return Err(Error::Dimension {
                op: "conv2d channels (input vs weight)",
                expected: input.to_vec(),
                got: weight.to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be >= 1".into()));
        }
        if kh == 0 || kw == 0 || kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::Dimension {
                op: "conv2d kernel larger than padded input",
                expected: vec![h + 2 * pad, w + 2 * pad],
                got: vec![kh, kw],
            });
        }
        Ok(ConvGeom {
            n,
            c,
            h,
            w,
            k,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.n, self.k, self.oh, self.ow]
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    fn in_sample(&self) -> usize {
        self.c * self.h * self.w
    }

    /// For each (patch row, output position), the input offset within one
    /// sample, or `None` where the window hangs over the padding.
    fn source(&self, row: usize, pos: usize) -> Option<usize> {
        let (ci, rest) = (row / (self.kh * self.kw), row % (self.kh * self.kw));
        let (ki, kj) = (rest / self.kw, rest % self.kw);
        let (oy, ox) = (pos / self.ow, pos % self.ow);
        let y = (oy * self.stride + ki) as isize - self.pad as isize;
        let x = (ox * self.stride + kj) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            None
        } else {
            Some((ci * self.h + y as usize) * self.w + x as usize)
        }
    }
}

fn im2col<T: Real>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let plane = g.out_plane();
    for row in 0..g.patch() {
        let dst = &mut cols[row * plane..(row + 1) * plane];
        for (pos, d) in dst.iter_mut().enumerate() {
            *d = match g.source(row, pos) {
                Some(i) => x[i],
                None => T::zero(),
            };
        }
    }
}

fn col2im<T: Real>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let plane = g.out_plane();
    for row in 0..g.patch() {
        let src = &cols[row * plane..(row + 1) * plane];
        for (pos, &v) in src.iter().enumerate() {
            if let Some(i) = g.source(row, pos) {
                dx[i] += v;
            }
        }
    }
}

fn is_pointwise(g: &ConvGeom) -> bool {
    g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0
}

pub fn conv2d_forward<T: Real>(g: &ConvGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let plane = g.out_plane();
    let mut out = vec![T::zero(); g.n * g.k * plane];
    if plane == 0 || g.k == 0 {
        return out;
    }
    out.par_chunks_mut(g.k * plane)
        .zip(x.par_chunks(g.in_sample().max(1)))
        .for_each_init(
            || vec![T::zero(); g.patch() * plane],
            |cols, (o, xs)| {
                if let Some(b) = b {
                    for (kk, row) in o.chunks_mut(plane).enumerate() {
                        row.fill(b[kk]);
                    }
                }
                let beta = if b.is_some() { T::one() } else { T::zero() };
                if is_pointwise(g) {
                    T::gemm(g.k, g.c, plane, w, false, xs, false, o, beta);
                } else {
                    im2col(g, xs, cols);
                    T::gemm(g.k, g.patch(), plane, w, false, cols, false, o, beta);
                }
            },
        );
    out
}

pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub fn conv2d_backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    dout: &[T],
    want: (bool, bool, bool),
) -> ConvGrads<T> {
    let (want_x, want_w, want_b) = want;
    let plane = g.out_plane();
    let patch = g.patch();
    let in_sample = g.in_sample();
    let out_sample = g.k * plane;

    let input = want_x.then(|| {
        let mut dx = vec![T::zero(); g.n * in_sample];
        if in_sample > 0 && out_sample > 0 {
            dx.par_chunks_mut(in_sample)
                .zip(dout.par_chunks(out_sample))
                .for_each_init(
                    || vec![T::zero(); patch * plane],
                    |dcols, (dxs, ds)| {
                        if is_pointwise(g) {
                            T::gemm(g.c, g.k, plane, w, true, ds, false, dxs, T::zero());
                        } else {
                            T::gemm(patch, g.k, plane, w, true, ds, false, dcols, T::zero());
                            col2im(g, dcols, dxs);
                        }
                    },
                );
        }
        dx
    });

    let weight = want_w.then(|| {
        let partials: Vec<Vec<T>> = (0..g.n)
            .into_par_iter()
            .map_init(
                || vec![T::zero(); patch * plane],
                |cols, s| {
                    let xs = &x[s * in_sample..(s + 1) * in_sample];
                    let ds = &dout[s * out_sample..(s + 1) * out_sample];
                    let mut dw = vec![T::zero(); g.k * patch];
                    if is_pointwise(g) {
                        T::gemm(g.k, plane, g.c, ds, false, xs, true, &mut dw, T::zero());
                    } else {
                        im2col(g, xs, cols);
                        T::gemm(g.k, plane, patch, ds, false, cols, true, &mut dw, T::zero());
                    }
                    dw
                },
            )
            .collect();
        let mut dw = vec![T::zero(); g.k * patch];
        for p in &partials {
            for (a, &b) in dw.iter_mut().zip(p) {
                *a += b;
            }
        }
        dw
    });

    let bias = want_b.then(|| {
        let mut db = vec![T::zero(); g.k];
        for s in 0..g.n {
            for (kk, acc) in db.iter_mut().enumerate() {
                let start = s * out_sample + kk * plane;
                for &v in &dout[start..start + plane] {
                    *acc += v;
                }
            }
        }
        db
    });

    ConvGrads {
        input,
        weight,
        bias,
    }
}

/// 2x2 max pooling with stride 2 (floor). Returns the output and, for each
/// output element, the flat input index that won; ties go to the first
/// element in row-major order.
pub fn maxpool2_forward<T: Real>(shape: [usize; 4], x: &[T]) -> (Vec<T>, Vec<usize>) {
    let [n, c, h, w] = shape;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}
