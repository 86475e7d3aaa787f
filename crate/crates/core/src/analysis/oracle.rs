//! Reference implementations used to check the fabric.
//!
//! `float_oracle` evaluates the layer in double precision. The fixed oracle
//! recomputes the exact quantisation schedule with straight-line scalar
//! code that shares nothing with the fabric: its own clamping, its own
//! recursive tree, its own activation table and window arithmetic.

use crate::fabric::{Activation, FabricError};
use crate::memory::{FilterSet, Tensor};
use crate::qformat::QFormat;

/// Planar `f64` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatTensor {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub data: Vec<f64>,
}

impl FloatTensor {
    pub fn new(width: usize, height: usize, depth: usize, data: Vec<f64>) -> Result<Self, FabricError> {
        if data.len() != width * height * depth {
            return Err(FabricError::Shape(format!(
                "{} values for a {width}x{height}x{depth} map",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            depth,
            data,
        })
    }

    /// Decoded values of a fixed-point tensor.
    pub fn from_tensor(t: &Tensor) -> Self {
        Self {
            width: t.width(),
            height: t.height(),
            depth: t.depth(),
            data: t.to_f64(),
        }
    }

    pub fn at(&self, plane: usize, y: usize, x: usize) -> f64 {
        self.data[(plane * self.height + y) * self.width + x]
    }
}

/// Filters in `(filter, plane, row, col)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatFilters {
    pub num_filters: usize,
    pub depth: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl FloatFilters {
    pub fn new(
        num_filters: usize,
        depth: usize,
        kernel: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self, FabricError> {
        if weights.len() != num_filters * depth * kernel * kernel || biases.len() != num_filters {
            return Err(FabricError::Shape(format!(
                "{} weights and {} biases for {num_filters} filters of {depth}x{kernel}x{kernel}",
                weights.len(),
                biases.len()
            )));
        }
        Ok(Self {
            num_filters,
            depth,
            kernel,
            weights,
            biases,
        })
    }

    pub fn from_filters(f: &FilterSet) -> Self {
        let fmt = f.format();
        Self {
            num_filters: f.num_filters(),
            depth: f.depth(),
            kernel: f.kernel(),
            weights: f.weights().iter().map(|&r| fmt.decode_raw(r)).collect(),
            biases: f.biases().iter().map(|&r| fmt.decode_raw(r)).collect(),
        }
    }
}

/// Output extents `(conv_w, conv_h, out_w, out_h)` and padding.
fn extents(
    w: usize,
    h: usize,
    k: usize,
    stride: usize,
    zero_pad: bool,
    pool: usize,
) -> Result<(usize, usize, usize, usize, usize), FabricError> {
    if k == 0 || stride == 0 || pool == 0 {
        return Err(FabricError::Shape("kernel, stride and pool must be positive".into()));
    }
    let pad = if zero_pad { k / 2 } else { 0 };
    let span = |n: usize| (n + 2 * pad).checked_sub(k).map(|r| r / stride + 1);
    let (cw, ch) = match (span(w), span(h)) {
        (Some(cw), Some(ch)) => (cw, ch),
        _ => {
            return Err(FabricError::Shape(format!(
                "{k}x{k} window larger than padded {w}x{h} input"
            )))
        }
    };
    if cw < pool || ch < pool {
        return Err(FabricError::Shape(format!("pool {pool} larger than {cw}x{ch} map")));
    }
    Ok((pad, cw, ch, cw / pool, ch / pool))
}

fn max_pool<T: Copy + PartialOrd>(conv: &[T], cw: usize, ow: usize, oh: usize, pool: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(ow * oh);
    for py in 0..oh {
        for px in 0..ow {
            let mut best = conv[py * pool * cw + px * pool];
            for y in py * pool..(py + 1) * pool {
                for x in px * pool..(px + 1) * pool {
                    let v = conv[y * cw + x];
                    if v > best {
                        best = v;
                    }
                }
            }
            out.push(best);
        }
    }
    out
}

/// The layer in double precision with exact activations. Planes of the
/// result follow filter order.
pub fn float_oracle(
    input: &FloatTensor,
    filters: &FloatFilters,
    stride: usize,
    zero_pad: bool,
    activation: Activation,
    pool: usize,
) -> Result<FloatTensor, FabricError> {
    if filters.depth != input.depth {
        return Err(FabricError::Shape(format!(
            "filters of depth {} on an input of depth {}",
            filters.depth, input.depth
        )));
    }
    let k = filters.kernel;
    let (pad, cw, ch, ow, oh) = extents(input.width, input.height, k, stride, zero_pad, pool)?;
    let mut data = Vec::with_capacity(ow * oh * filters.num_filters);
    for t in 0..filters.num_filters {
        let mut conv = vec![0.0; cw * ch];
        for oy in 0..ch {
            for ox in 0..cw {
                let mut acc = 0.0;
                for r in 0..input.depth {
                    for i in 0..k {
                        for j in 0..k {
                            let y = (oy * stride + i) as isize - pad as isize;
                            let x = (ox * stride + j) as isize - pad as isize;
                            if y < 0 || x < 0 || y as usize >= input.height || x as usize >= input.width {
                                continue;
                            }
                            let wv = filters.weights[((t * filters.depth + r) * k + i) * k + j];
                            acc += input.at(r, y as usize, x as usize) * wv;
                        }
                    }
                }
                conv[oy * cw + ox] = activation.eval_f64(acc + filters.biases[t]);
            }
        }
        data.extend(max_pool(&conv, cw, ow, oh, pool));
    }
    FloatTensor::new(ow, oh, filters.num_filters, data)
}

struct Arith {
    frac: u32,
    lo: i64,
    hi: i64,
}

impl Arith {
    fn new(format: QFormat) -> Self {
        let n = format.total_bits();
        Self {
            frac: format.frac_bits(),
            lo: -(1i64 << (n - 1)),
            hi: (1i64 << (n - 1)) - 1,
        }
    }

    fn clamp(&self, v: i64) -> i64 {
        v.clamp(self.lo, self.hi)
    }

    fn add(&self, a: i64, b: i64) -> i64 {
        self.clamp(a + b)
    }

    fn mul(&self, a: i64, b: i64) -> i64 {
        self.clamp((a * b).div_euclid(1i64 << self.frac))
    }

    /// Pads to a power of two, then sums each half.
    fn tree(&self, values: &[i64]) -> i64 {
        let mut padded = values.to_vec();
        while !padded.len().is_power_of_two() {
            padded.push(0);
        }
        self.halves(&padded)
    }

    fn halves(&self, v: &[i64]) -> i64 {
        if v.len() == 1 {
            return v[0];
        }
        let mid = v.len() / 2;
        self.add(self.halves(&v[..mid]), self.halves(&v[mid..]))
    }

    fn activate(&self, activation: Activation, x: i64) -> i64 {
        match activation {
            Activation::Passthrough => x,
            Activation::Relu => {
                if x < 0 {
                    0
                } else {
                    x
                }
            }
            Activation::Sigmoid | Activation::Tanh => self.pwl(activation, x),
        }
    }

    /// Table over [-8, 8) with 32 segments per unit.
    fn pwl(&self, activation: Activation, x: i64) -> i64 {
        let one = 1i64 << self.frac;
        let quant = |v: f64| self.clamp((v * one as f64).round() as i64);
        let point = |i: i64| quant(activation.eval_f64(i as f64 / 32.0 - 8.0));
        if x < -8 * one {
            return quant(if activation == Activation::Sigmoid { 0.0 } else { -1.0 });
        }
        if x >= 8 * one {
            return quant(1.0);
        }
        // position in units of 1/32, as a fraction over `one`
        let scaled = (x + 8 * one) * 32;
        let seg = scaled.div_euclid(one);
        let rem = scaled.rem_euclid(one);
        if rem == 0 {
            return point(seg);
        }
        let (y0, y1) = (point(seg), point(seg + 1));
        y0 + ((y1 - y0) * rem).div_euclid(one)
    }
}

/// Same contract as the matrix web's forward pass.
pub fn fixed_reference_oracle(
    input: &Tensor,
    filters: &FilterSet,
    stride: usize,
    zero_pad: bool,
    activation: Activation,
    pool: usize,
) -> Result<Tensor, FabricError> {
    let fmt = input.format();
    if filters.format() != fmt || filters.depth() != input.depth() {
        return Err(FabricError::Shape("filters do not match the input".into()));
    }
    let ar = Arith::new(fmt);
    let (w, h, d, k) = (input.width(), input.height(), input.depth(), filters.kernel());
    let (pad, cw, ch, ow, oh) = extents(w, h, k, stride, zero_pad, pool)?;
    let pixels = input.raws();
    let weights = filters.weights();
    let mut data = Vec::with_capacity(ow * oh * filters.num_filters());
    for t in 0..filters.num_filters() {
        let bias = filters.biases()[t] as i64;
        let mut conv = vec![0i64; cw * ch];
        for oy in 0..ch {
            for ox in 0..cw {
                let mut plane_sums = Vec::with_capacity(d);
                for r in 0..d {
                    let mut products = Vec::with_capacity(k * k);
                    for i in 0..k {
                        for j in 0..k {
                            let y = (oy * stride + i) as isize - pad as isize;
                            let x = (ox * stride + j) as isize - pad as isize;
                            let p = if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                pixels[r * w * h + y as usize * w + x as usize] as i64
                            } else {
                                0
                            };
                            let wt = weights[t * d * k * k + r * k * k + i * k + j] as i64;
                            products.push(ar.mul(p, wt));
                        }
                    }
                    plane_sums.push(ar.tree(&products));
                }
                let s = ar.add(ar.tree(&plane_sums), bias);
                conv[oy * cw + ox] = ar.activate(activation, s);
            }
        }
        data.extend(max_pool(&conv, cw, ow, oh, pool).into_iter().map(|v| v as i32));
    }
    Ok(Tensor::from_raws(ow, oh, filters.num_filters(), fmt, data)?)
}
