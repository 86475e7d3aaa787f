//! Fixed-versus-float error sweep.
//!
//! Each trial draws one `k x k` input window uniformly from `[lo, hi]` and
//! one filter uniformly from `[-1, 1]` with zero bias, runs it through a
//! single-plane passthrough cell body in Q(16,15), and compares against the
//! double-precision result on the undrawn real values. A trial is one
//! output point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::fabric::{Activation, FabricConfig, MatrixWeb};
use crate::memory::{FilterSet, Tensor};
use crate::qformat::{OverflowCounter, QFormat};

use super::oracle::{float_oracle, FloatFilters, FloatTensor};
use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSweepRow {
    pub kernel: usize,
    #[serde(rename = "lo")]
    pub input_lo: f64,
    #[serde(rename = "hi")]
    pub input_hi: f64,
    pub trials: usize,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    pub seed: u64,
}

/// Stream for one cell of the sweep grid.
fn cell_rng(seed: u64, kernel: usize, range_index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(kernel as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(range_index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn sweep_cell(
    kernel: usize,
    range_index: usize,
    (lo, hi): (f64, f64),
    trials: usize,
    seed: u64,
) -> Result<ErrorSweepRow, AnalysisError> {
    let fmt = QFormat::Q16_15;
    let web = MatrixWeb::new(FabricConfig::new(1, kernel, 1).with_activation(Activation::Passthrough))?;
    let mut rng = cell_rng(seed, kernel, range_index);
    let n = kernel * kernel;
    let (mut sum, mut max) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let input = Tensor::from_f64(kernel, kernel, 1, fmt, &x)?;
        let filters = FilterSet::from_f64(1, 1, kernel, fmt, &w, &[0.0])?;
        let fixed = web.cbu_forward(&input, filters.weights(), 0, 1, false, &mut OverflowCounter::new())?;
        let exact = float_oracle(
            &FloatTensor::new(kernel, kernel, 1, x)?,
            &FloatFilters::new(1, 1, kernel, w, vec![0.0])?,
            1,
            false,
            Activation::Passthrough,
            1,
        )?;
        let err = (fmt.decode_raw(fixed.raws()[0]) - exact.data[0]).abs();
        sum += err;
        max = max.max(err);
    }
    Ok(ErrorSweepRow {
        kernel,
        input_lo: lo,
        input_hi: hi,
        trials,
        mean_abs_error: sum / trials as f64,
        max_abs_error: max,
        seed,
    })
}

/// One row per `(kernel, range)`, kernels outermost. Rows run in parallel;
/// each has its own random stream, so the result does not depend on
/// scheduling.
pub fn error_sweep(
    kernels: &[usize],
    ranges: &[(f64, f64)],
    trials: usize,
    seed: u64,
) -> Result<Vec<ErrorSweepRow>, AnalysisError> {
    if trials == 0 {
        return Err(AnalysisError::Trials);
    }
    for &(lo, hi) in ranges {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(AnalysisError::Range { lo, hi });
        }
    }
    if let Some(&k) = kernels.iter().find(|&&k| k == 0) {
        return Err(AnalysisError::Kernel(k));
    }
    let cells: Vec<_> = kernels
        .iter()
        .flat_map(|&k| ranges.iter().enumerate().map(move |(i, &r)| (k, i, r)))
        .collect();
    cells
        .into_par_iter()
        .map(|(k, i, r)| sweep_cell(k, i, r, trials, seed))
        .collect()
}
