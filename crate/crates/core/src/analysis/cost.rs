//! Resource and cycle cost models.
//!
//! The multiplier, adder, DSP and fetch counts are closed forms. The
//! weight-load and compute cycle counts are models: the datapath depends on
//! them but no equation pins them down, so they are labelled as such.

use std::ops::Add;

use serde::Serialize;

use crate::fabric::{FabricConfig, FabricError, Geometry};

/// DSP slices per 32-bit fixed-point multiplier.
pub const DSP_PER_MULTIPLIER: u64 = 4;

/// Smallest `e` with `2^e >= n`.
pub fn ceil_log2(n: u64) -> u32 {
    n.max(1).next_power_of_two().trailing_zeros()
}

pub fn multipliers_per_mac(k: u64) -> u64 {
    k * k
}

pub fn multipliers_per_cbu(k: u64, d_in: u64) -> u64 {
    d_in * multipliers_per_mac(k)
}

/// `d_in * sum_{r=0}^{ceil(2 log2 k)} 2^r + sum_{p=0}^{ceil(log2 d_in)} 2^p`
pub fn adders_per_cbu(k: u64, d_in: u64) -> u64 {
    let geometric = |top: u32| (1u64 << (top + 1)) - 1;
    d_in * geometric(ceil_log2(k * k)) + geometric(ceil_log2(d_in))
}

pub fn dsp_per_cbu(k: u64, d_in: u64) -> u64 {
    DSP_PER_MULTIPLIER * multipliers_per_cbu(k, d_in)
}

/// Cycles to fetch one layer's instructions:
/// `gamma + (d_in + 2) * gamma + 1`.
pub fn fetch_cycles(gamma: u64, d_in: u64) -> u64 {
    gamma + (d_in + 2) * gamma + 1
}

/// Adder-tree stages in a MAC, then across planes, plus bias and activation.
pub fn pipeline_depth(k: u64, d_in: u64) -> u64 {
    let leaves = (k * k).next_power_of_two();
    (ceil_log2(leaves) + ceil_log2(d_in.next_power_of_two()) + 2) as u64
}

/// Theoretical multiply and add operations per cycle, `2 * gamma * d_in * k^2`.
pub fn ops_per_cycle(gamma: u64, d_in: u64, k: u64) -> u64 {
    2 * gamma * multipliers_per_cbu(k, d_in)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CycleEstimate {
    pub fetch: u64,
    /// Model.
    pub weight_load: u64,
    /// Model.
    pub compute: u64,
    pub total: u64,
}

impl Add for CycleEstimate {
    type Output = CycleEstimate;

    fn add(self, rhs: CycleEstimate) -> CycleEstimate {
        CycleEstimate {
            fetch: self.fetch + rhs.fetch,
            weight_load: self.weight_load + rhs.weight_load,
            compute: self.compute + rhs.compute,
            total: self.total + rhs.total,
        }
    }
}

/// One layer on a fabric with `cfg.num_filters` cell bodies. Compute counts
/// one window position per cycle before pooling, plus the pipeline fill.
pub fn cycle_model(
    cfg: &FabricConfig,
    width: usize,
    height: usize,
    stride: usize,
    zero_pad: bool,
) -> Result<CycleEstimate, FabricError> {
    cfg.validate()?;
    let geo = Geometry::new(width, height, cfg.kernel, stride, zero_pad, cfg.pool)?;
    let (gamma, d_in, k) = (cfg.num_filters as u64, cfg.d_in as u64, cfg.kernel as u64);
    let fetch = fetch_cycles(gamma, d_in);
    let weight_load = gamma * (multipliers_per_cbu(k, d_in) + 1);
    let compute = geo.conv_positions() as u64 + pipeline_depth(k, d_in);
    Ok(CycleEstimate {
        fetch,
        weight_load,
        compute,
        total: fetch + weight_load + compute,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResourceReport {
    pub multipliers_per_mac: u64,
    pub multipliers_per_cbu: u64,
    pub adders_per_cbu: u64,
    pub dsp_per_cbu: u64,
    pub fetch_cycles: u64,
    pub compute_cycles_model: u64,
}

impl ResourceReport {
    pub fn new(
        cfg: &FabricConfig,
        width: usize,
        height: usize,
        stride: usize,
        zero_pad: bool,
    ) -> Result<Self, FabricError> {
        let (k, d_in) = (cfg.kernel as u64, cfg.d_in as u64);
        let cycles = cycle_model(cfg, width, height, stride, zero_pad)?;
        Ok(Self {
            multipliers_per_mac: multipliers_per_mac(k),
            multipliers_per_cbu: multipliers_per_cbu(k, d_in),
            adders_per_cbu: adders_per_cbu(k, d_in),
            dsp_per_cbu: dsp_per_cbu(k, d_in),
            fetch_cycles: cycles.fetch,
            compute_cycles_model: cycles.compute,
        })
    }
}

/// Measured utilisation of one cell body on the reference FPGA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReferenceRow {
    pub kernel: u64,
    pub d_in: u64,
    pub lut: u64,
    pub ff: u64,
    pub dsp: u64,
}

const fn row(kernel: u64, d_in: u64, lut: u64, ff: u64, dsp: u64) -> ReferenceRow {
    ReferenceRow {
        kernel,
        d_in,
        lut,
        ff,
        dsp,
    }
}

pub const REFERENCE_UTILIZATION: [ReferenceRow; 14] = [
    row(3, 1, 2416, 1299, 36),
    row(4, 1, 3374, 2013, 64),
    row(5, 1, 5683, 3157, 100),
    row(6, 1, 7913, 4433, 144),
    row(7, 1, 10536, 5978, 196),
    row(8, 1, 13143, 7587, 256),
    row(9, 1, 17338, 9784, 324),
    row(3, 3, 6721, 3159, 108),
    row(4, 3, 9360, 4857, 192),
    row(5, 3, 15039, 7713, 300),
    row(6, 3, 22169, 10837, 432),
    row(7, 3, 29487, 14626, 588),
    row(8, 3, 36812, 18503, 768),
    row(9, 3, 48684, 23992, 972),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multipliers() {
        assert_eq!(multipliers_per_mac(3), 9);
        assert_eq!(multipliers_per_cbu(3, 3), 27);
        assert_eq!(multipliers_per_cbu(1, 1), 1);
    }

    #[test]
    fn adders() {
        assert_eq!(adders_per_cbu(3, 1), 32);
        assert_eq!(adders_per_cbu(4, 3), 100);
        assert_eq!(adders_per_cbu(1, 1), 2);
    }

    #[test]
    fn dsp_matches_reference_rows() {
        for r in REFERENCE_UTILIZATION {
            assert_eq!(dsp_per_cbu(r.kernel, r.d_in), r.dsp, "{r:?}");
        }
        assert_eq!(dsp_per_cbu(9, 3), 972);
    }

    #[test]
    fn fetch() {
        assert_eq!(fetch_cycles(16, 1), 65);
        assert_eq!(fetch_cycles(16, 3), 97);
        assert_eq!(fetch_cycles(1, 1), 5);
    }

    #[test]
    fn cycle_model_examples() {
        let cfg = FabricConfig::new(1, 3, 16);
        let c = cycle_model(&cfg, 224, 224, 1, true).unwrap();
        assert_eq!(c.fetch, 65);
        assert_eq!(c.weight_load, 160);
        // 9 leaves pad to 16: four stages, none across one plane, then bias and activation
        assert_eq!(pipeline_depth(3, 1), 6);
        assert_eq!(c.compute, 224 * 224 + 6);
        assert_eq!(c.total, c.fetch + c.weight_load + c.compute);
        let c = cycle_model(&cfg, 3, 3, 1, false).unwrap();
        assert_eq!(c.compute, 1 + 6);
        assert_eq!(pipeline_depth(1, 1), 2);
        assert_eq!(pipeline_depth(5, 3), 5 + 2 + 2);
    }

    #[test]
    fn estimates_add() {
        let a = CycleEstimate {
            fetch: 1,
            weight_load: 2,
            compute: 3,
            total: 6,
        };
        assert_eq!((a + a).total, 12);
        assert_eq!(a + CycleEstimate::default(), a);
    }

    #[test]
    fn report_and_ops() {
        let cfg = FabricConfig::new(3, 3, 16);
        let r = ResourceReport::new(&cfg, 32, 32, 1, true).unwrap();
        assert_eq!((r.multipliers_per_cbu, r.dsp_per_cbu, r.fetch_cycles), (27, 108, 97));
        assert_eq!(ops_per_cycle(16, 1, 3), 288);
    }
}
