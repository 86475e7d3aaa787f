#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qfabric::fabric::{Activation, FabricConfig, Geometry};
use qfabric::isa::{Instruction, MemKind};
use qfabric::memory::{AddressSpace, FilterSet, Tensor};
use qfabric::qformat::QFormat;

pub const Q: QFormat = QFormat::Q16_15;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn raws(rng: &mut ChaCha8Rng, n: usize, lo: i32, hi: i32) -> Vec<i32> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Raws in `[-mag, mag]` real units, clipped to the format.
pub fn raws_within(rng: &mut ChaCha8Rng, n: usize, fmt: QFormat, mag: f64) -> Vec<i32> {
    let r = ((mag * (fmt.frac_bits() as f64).exp2()) as i64).min(fmt.max_raw() as i64) as i32;
    raws(rng, n, -r, r)
}

pub fn tensor(rng: &mut ChaCha8Rng, (w, h, d): (usize, usize, usize), fmt: QFormat, mag: f64) -> Tensor {
    Tensor::from_raws(w, h, d, fmt, raws_within(rng, w * h * d, fmt, mag)).unwrap()
}

pub fn filters(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize, fmt: QFormat, mag: f64) -> FilterSet {
    let w = raws_within(rng, n * d * k * k, fmt, mag);
    let b = raws_within(rng, n, fmt, mag);
    FilterSet::from_raws(n, d, k, fmt, w, b).unwrap()
}

pub fn activation(rng: &mut ChaCha8Rng) -> Activation {
    Activation::ALL[rng.random_range(0..4)]
}

/// A random format, Q(16,15) half of the time.
pub fn format(rng: &mut ChaCha8Rng) -> QFormat {
    if rng.random_bool(0.5) {
        return Q;
    }
    let n = rng.random_range(8..=32);
    let m = rng.random_range(1..=n - 2);
    QFormat::new(n, m).unwrap()
}

/// Input extents for which the layer geometry is valid; `max` is raised
/// when the smallest valid extent exceeds it.
pub fn dims(rng: &mut ChaCha8Rng, k: usize, stride: usize, zero_pad: bool, pool: usize, max: usize) -> (usize, usize) {
    let pad = if zero_pad { k / 2 } else { 0 };
    let min = (k + (pool - 1) * stride).saturating_sub(2 * pad).max(1);
    let hi = max.max(min);
    let (w, h) = (rng.random_range(min..=hi), rng.random_range(min..=hi));
    debug_assert!(Geometry::new(w, h, k, stride, zero_pad, pool).is_ok());
    (w, h)
}

/// One layer on a fabric sized exactly for it.
pub struct LayerCase {
    pub cfg: FabricConfig,
    pub input: Tensor,
    pub filters: FilterSet,
    pub stride: usize,
    pub zero_pad: bool,
}

pub fn layer_case(rng: &mut ChaCha8Rng, max_k: usize, max_d: usize, max_n: usize, max_dim: usize) -> LayerCase {
    let k = rng.random_range(1..=max_k);
    let d = rng.random_range(1..=max_d);
    let n = rng.random_range(1..=max_n);
    let stride = rng.random_range(1..=3);
    let zero_pad = rng.random_bool(0.5);
    let pool = rng.random_range(1..=3);
    let fmt = format(rng);
    let cfg = FabricConfig::new(d, k, n)
        .with_pool(pool)
        .with_activation(activation(rng))
        .with_format(fmt);
    let (w, h) = dims(rng, k, stride, zero_pad, pool, max_dim);
    // a wide magnitude now and then exercises saturation
    let mag = if rng.random_bool(0.2) { 1e6 } else { 4.0 };
    LayerCase {
        input: tensor(rng, (w, h, d), fmt, mag),
        filters: filters(rng, n, d, k, fmt, if mag > 4.0 { mag } else { 1.0 }),
        cfg,
        stride,
        zero_pad,
    }
}

pub fn instruction(rng: &mut ChaCha8Rng) -> Instruction {
    match rng.random_range(0..8) {
        0 => Instruction::nop(),
        1 => Instruction::stop(),
        2 => Instruction::flush(),
        3 | 4 => Instruction::convolve(
            rng.random_range(1..1 << 14),
            rng.random_range(1..1 << 14),
            rng.random_range(1..1 << 12),
            rng.random_range(1..256),
            rng.random_bool(0.5),
        ),
        _ => {
            let kind = MemKind::ALL[rng.random_range(0..4)];
            let cbu = if kind.is_per_cbu() { rng.random_range(0..256) } else { 0 };
            let words: u32 = rng.random_range(0..1 << 21);
            Instruction::memory(kind, cbu, AddressSpace::new(rng.random(), words * 4).unwrap())
        }
    }
}
