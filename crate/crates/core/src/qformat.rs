//! Signed Q-format fixed-point numbers.
//!
//! A [`QFormat`] describes an `n`-bit two's-complement word with `m`
//! fractional bits; its value is `raw * 2^-m`. The working format of the
//! fabric is `Q(16,15)`: 32 bits total, 15 of them fractional.
//!
//! All arithmetic saturates at the format limits and re-quantizes to the
//! format after every operation. Products are truncated toward negative
//! infinity (arithmetic shift). Saturation events can be tallied through an
//! [`OverflowCounter`].

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QError {
    #[error("invalid Q format: {total_bits} total bits with {frac_bits} fractional bits")]
    InvalidFormat { total_bits: u32, frac_bits: u32 },
    #[error("cannot encode non-finite value {0}")]
    NonFinite(f64),
    #[error("format mismatch: {0} vs {1}")]
    FormatMismatch(QFormat, QFormat),
    #[error("raw value {raw} does not fit in {format}")]
    RawOutOfRange { raw: i64, format: QFormat },
}

/// Bit layout of a signed fixed-point word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl QFormat {
    /// 32-bit word, 16 integer bits, 15 fractional bits.
    pub const Q16_15: QFormat = QFormat {
        total_bits: 32,
        frac_bits: 15,
    };

    /// Raws are stored in `i32`, so at most 32 bits. One sign bit and at
    /// least one integer bit are always present.
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self, QError> {
        if !(3..=32).contains(&total_bits) || frac_bits < 1 || frac_bits > total_bits - 2 {
            return Err(QError::InvalidFormat { total_bits, frac_bits });
        }
        Ok(Self { total_bits, frac_bits })
    }

    /// Builds `Q(int_bits, frac_bits)`, i.e. `int_bits + frac_bits + 1` total bits.
    pub fn q(int_bits: u32, frac_bits: u32) -> Result<Self, QError> {
        Self::new(int_bits + frac_bits + 1, frac_bits)
    }

    pub fn total_bits(self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    pub fn int_bits(self) -> u32 {
        self.total_bits - self.frac_bits - 1
    }

    pub fn max_raw(self) -> i32 {
        ((1i64 << (self.total_bits - 1)) - 1) as i32
    }

    pub fn min_raw(self) -> i32 {
        (-(1i64 << (self.total_bits - 1))) as i32
    }

    /// Smallest positive step, `2^-m`.
    pub fn resolution(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    pub fn contains_raw(self, raw: i64) -> bool {
        (self.min_raw() as i64..=self.max_raw() as i64).contains(&raw)
    }

    /// Clamps a wide intermediate to the word. The flag is set when clamping
    /// changed the value.
    pub fn saturate(self, wide: i64) -> (i32, bool) {
        if wide > self.max_raw() as i64 {
            (self.max_raw(), true)
        } else if wide < self.min_raw() as i64 {
            (self.min_raw(), true)
        } else {
            (wide as i32, false)
        }
    }

    /// `floor(x * 2^m)` clamped to the word.
    pub fn encode_raw(self, x: f64) -> Result<(i32, bool), QError> {
        if !x.is_finite() {
            return Err(QError::NonFinite(x));
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).floor();
        if scaled > self.max_raw() as f64 {
            Ok((self.max_raw(), true))
        } else if scaled < self.min_raw() as f64 {
            Ok((self.min_raw(), true))
        } else {
            Ok((scaled as i32, false))
        }
    }

    pub fn decode_raw(self, raw: i32) -> f64 {
        raw as f64 * self.resolution()
    }

    pub fn add_raw(self, a: i32, b: i32, overflow: &mut OverflowCounter) -> i32 {
        let (v, sat) = self.saturate(a as i64 + b as i64);
        overflow.record(sat);
        v
    }

    pub fn mul_raw(self, a: i32, b: i32, overflow: &mut OverflowCounter) -> i32 {
        let (v, sat) = self.saturate((a as i64 * b as i64) >> self.frac_bits);
        overflow.record(sat);
        v
    }

    pub fn check_raw(self, raw: i64) -> Result<i32, QError> {
        if self.contains_raw(raw) {
            Ok(raw as i32)
        } else {
            Err(QError::RawOutOfRange { raw, format: self })
        }
    }
}

impl Default for QFormat {
    fn default() -> Self {
        Self::Q16_15
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q({},{})", self.int_bits(), self.frac_bits)
    }
}

/// Running count of saturation events.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OverflowCounter {
    events: u64,
}

impl OverflowCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn record(&mut self, saturated: bool) {
        self.events += saturated as u64;
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn merge(&mut self, other: OverflowCounter) {
        self.events += other.events;
    }
}

/// A fixed-point value: raw two's-complement integer plus its layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QValue {
    raw: i32,
    format: QFormat,
}

impl QValue {
    pub fn from_raw(raw: i32, format: QFormat) -> Result<Self, QError> {
        format.check_raw(raw as i64)?;
        Ok(Self { raw, format })
    }

    pub fn zero(format: QFormat) -> Self {
        Self { raw: 0, format }
    }

    pub fn encode(x: f64, format: QFormat) -> Result<Self, QError> {
        let (raw, _) = format.encode_raw(x)?;
        Ok(Self { raw, format })
    }

    pub fn decode(self) -> f64 {
        self.format.decode_raw(self.raw)
    }

    pub fn raw(self) -> i32 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.format
    }

    fn same_format(self, other: QValue) -> Result<QFormat, QError> {
        if self.format == other.format {
            Ok(self.format)
        } else {
            Err(QError::FormatMismatch(self.format, other.format))
        }
    }

    /// Saturating addition. Fallible on a format mismatch, hence not `ops::Add`.
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: QValue) -> Result<QValue, QError> {
        self.add_counted(other, &mut OverflowCounter::new())
    }

    pub fn add_counted(self, other: QValue, overflow: &mut OverflowCounter) -> Result<QValue, QError> {
        let format = self.same_format(other)?;
        Ok(Self {
            raw: format.add_raw(self.raw, other.raw, overflow),
            format,
        })
    }

    /// Full-width product, truncated by an arithmetic shift, then saturated.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: QValue) -> Result<QValue, QError> {
        self.mul_counted(other, &mut OverflowCounter::new())
    }

    pub fn mul_counted(self, other: QValue, overflow: &mut OverflowCounter) -> Result<QValue, QError> {
        let format = self.same_format(other)?;
        Ok(Self {
            raw: format.mul_raw(self.raw, other.raw, overflow),
            format,
        })
    }

    pub fn max(self, other: QValue) -> Result<QValue, QError> {
        self.same_format(other)?;
        Ok(if other.raw > self.raw { other } else { self })
    }
}

impl PartialOrd for QValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        (self.format == other.format).then(|| self.raw.cmp(&other.raw))
    }
}

impl fmt::Display for QValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.decode())
    }
}
