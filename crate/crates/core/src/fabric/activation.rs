//! Activation stage of a cell body.
//!
//! Sigmoid and tanh are piecewise-linear over `[-8, 8)` with 512 uniform
//! segments (width 1/32). Breakpoint values are `f(x)` rounded to the
//! nearest raw; between breakpoints the value is interpolated in fixed point
//! with a truncating shift. Below the table the output is the lower
//! asymptote, at or above it the upper one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::qformat::{QFormat, QValue};

pub const PWL_SEGMENTS: usize = 512;
pub const PWL_LOW: i64 = -8;
pub const PWL_HIGH: i64 = 8;
/// log2 of segments per unit interval.
const SEGMENT_SHIFT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Passthrough,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Passthrough,
    ];

    /// Double-precision reference.
    pub fn eval_f64(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Passthrough => x,
        }
    }

    fn asymptotes(self) -> (f64, f64) {
        match self {
            Activation::Sigmoid => (0.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Passthrough => "passthrough",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown activation `{s}` (relu, sigmoid, tanh, passthrough)"))
    }
}

/// Breakpoint table for one function in one format.
#[derive(Debug, Clone)]
pub struct PwlTable {
    frac_bits: u32,
    low_raw: i64,
    high_raw: i64,
    below: i32,
    above: i32,
    points: Vec<i32>,
}

impl PwlTable {
    pub fn new(activation: Activation, format: QFormat) -> Self {
        let scale = (format.frac_bits() as f64).exp2();
        let quantize = |y: f64| format.saturate((y * scale).round() as i64).0;
        let step = 1.0 / (1u32 << SEGMENT_SHIFT) as f64;
        let points = (0..=PWL_SEGMENTS)
            .map(|i| quantize(activation.eval_f64(PWL_LOW as f64 + i as f64 * step)))
            .collect();
        let (lo, hi) = activation.asymptotes();
        Self {
            frac_bits: format.frac_bits(),
            low_raw: PWL_LOW << format.frac_bits(),
            high_raw: PWL_HIGH << format.frac_bits(),
            below: quantize(lo),
            above: quantize(hi),
            points,
        }
    }

    pub fn points(&self) -> &[i32] {
        &self.points
    }

    pub fn eval(&self, raw: i32) -> i32 {
        let x = raw as i64;
        if x < self.low_raw {
            return self.below;
        }
        if x >= self.high_raw {
            return self.above;
        }
        let offset = x - self.low_raw;
        if self.frac_bits >= SEGMENT_SHIFT {
            let shift = self.frac_bits - SEGMENT_SHIFT;
            let idx = (offset >> shift) as usize;
            let rem = offset & ((1i64 << shift) - 1);
            let y0 = self.points[idx] as i64;
            let y1 = self.points[idx + 1] as i64;
            (y0 + (((y1 - y0) * rem) >> shift)) as i32
        } else {
            // every raw step lands on a breakpoint
            self.points[(offset << (SEGMENT_SHIFT - self.frac_bits)) as usize]
        }
    }
}

/// The configured activation, with its table built once.
#[derive(Debug, Clone)]
pub struct ActivationUnit {
    activation: Activation,
    table: Option<PwlTable>,
}

impl ActivationUnit {
    pub fn new(activation: Activation, format: QFormat) -> Self {
        let table =
            matches!(activation, Activation::Sigmoid | Activation::Tanh).then(|| PwlTable::new(activation, format));
        Self { activation, table }
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn apply_raw(&self, raw: i32) -> i32 {
        match (&self.table, self.activation) {
            (Some(t), _) => t.eval(raw),
            (None, Activation::Relu) => raw.max(0),
            (None, _) => raw,
        }
    }

    pub fn apply(&self, x: QValue) -> QValue {
        QValue::from_raw(self.apply_raw(x.raw()), x.format()).expect("activation output is in range")
    }
}

/// One-off evaluation. Builds the table on every call; hold an
/// [`ActivationUnit`] when evaluating many points.
pub fn apply_activation(x: QValue, activation: Activation) -> QValue {
    ActivationUnit::new(activation, x.format()).apply(x)
}
