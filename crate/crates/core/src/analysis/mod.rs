//! Oracles, the error sweep and the cost models, plus their CSV output.

mod cost;
mod oracle;
mod sweep;

pub use cost::{
    adders_per_cbu, ceil_log2, cycle_model, dsp_per_cbu, fetch_cycles, multipliers_per_cbu, multipliers_per_mac,
    ops_per_cycle, pipeline_depth, CycleEstimate, ReferenceRow, ResourceReport, DSP_PER_MULTIPLIER,
    REFERENCE_UTILIZATION,
};
pub use oracle::{fixed_reference_oracle, float_oracle, FloatFilters, FloatTensor};
pub use sweep::{error_sweep, ErrorSweepRow};

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::fabric::FabricError;
use crate::memory::MemoryError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid input range {lo}:{hi}")]
    Range { lo: f64, hi: f64 },
    #[error("trials must be at least 1")]
    Trials,
    #[error("invalid kernel width {0}")]
    Kernel(usize),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResourceRow {
    pub k: u64,
    pub d_in: u64,
    pub multipliers: u64,
    pub adders: u64,
    pub dsp: u64,
}

impl ResourceRow {
    pub fn new(k: u64, d_in: u64) -> Self {
        Self {
            k,
            d_in,
            multipliers: multipliers_per_cbu(k, d_in),
            adders: adders_per_cbu(k, d_in),
            dsp: dsp_per_cbu(k, d_in),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CycleRow {
    pub gamma: u64,
    pub d_in: u64,
    pub k: u64,
    pub fetch: u64,
    pub weight_load: u64,
    pub compute: u64,
    pub total: u64,
}

impl CycleRow {
    pub fn new(gamma: u64, d_in: u64, k: u64, c: CycleEstimate) -> Self {
        Self {
            gamma,
            d_in,
            k,
            fetch: c.fetch,
            weight_load: c.weight_load,
            compute: c.compute,
            total: c.total,
        }
    }
}

pub const SWEEP_HEADER: [&str; 7] = [
    "kernel",
    "lo",
    "hi",
    "trials",
    "mean_abs_error",
    "max_abs_error",
    "seed",
];
pub const RESOURCES_HEADER: [&str; 5] = ["k", "d_in", "multipliers", "adders", "dsp"];
pub const CYCLES_HEADER: [&str; 7] = ["gamma", "d_in", "k", "fetch", "weight_load", "compute", "total"];

/// The header is written even when there are no rows.
fn write_csv<W: Write, T: Serialize>(out: W, header: &[&str], rows: &[T]) -> Result<(), AnalysisError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[ErrorSweepRow]) -> Result<(), AnalysisError> {
    write_csv(out, &SWEEP_HEADER, rows)
}

pub fn write_resources_csv<W: Write>(out: W, rows: &[ResourceRow]) -> Result<(), AnalysisError> {
    write_csv(out, &RESOURCES_HEADER, rows)
}

pub fn write_cycles_csv<W: Write>(out: W, rows: &[CycleRow]) -> Result<(), AnalysisError> {
    write_csv(out, &CYCLES_HEADER, rows)
}
