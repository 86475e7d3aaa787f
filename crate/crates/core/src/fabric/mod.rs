//! Functional model of the matrix web.
//!
//! A cell body unit (CBU) evaluates one filter. It holds one MAC unit per
//! input plane; each MAC multiplies a `k x k` window by its cached weights
//! and reduces the `k^2` products with a binary adder tree whose unused
//! leaves are zero. The per-plane sums meet in a second tree, then the bias
//! adder, the activation, and max pooling over `pool x pool` blocks.
//!
//! Every add and multiply is re-quantized to the configured format at once,
//! so the tree shape and leaf order are part of the result: products enter
//! row-major, plane sums enter in plane order.

mod activation;

pub use activation::{apply_activation, Activation, ActivationUnit, PwlTable, PWL_HIGH, PWL_LOW, PWL_SEGMENTS};

use thiserror::Error;

use crate::memory::{FilterSet, MemoryError, Tensor};
use crate::qformat::{OverflowCounter, QError, QFormat, QValue};

#[derive(Debug, Error)]
pub enum FabricError {
    #[error("invalid fabric configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty input to {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Value(#[from] QError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Reconfigurable parameters fixing the simulated hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FabricConfig {
    /// MAC units per cell body, one per input plane.
    pub d_in: usize,
    /// Filter width `k`.
    pub kernel: usize,
    /// Number of cell bodies.
    pub num_filters: usize,
    /// Max-pooling width; 1 disables pooling.
    pub pool: usize,
    pub activation: Activation,
    pub format: QFormat,
}

impl FabricConfig {
    pub fn new(d_in: usize, kernel: usize, num_filters: usize) -> Self {
        Self {
            d_in,
            kernel,
            num_filters,
            pool: 1,
            activation: Activation::Passthrough,
            format: QFormat::Q16_15,
        }
    }

    pub fn with_pool(mut self, pool: usize) -> Self {
        self.pool = pool;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_format(mut self, format: QFormat) -> Self {
        self.format = format;
        self
    }

    pub fn validate(&self) -> Result<(), FabricError> {
        for (name, v) in [
            ("d_in", self.d_in),
            ("kernel", self.kernel),
            ("num_filters", self.num_filters),
            ("pool", self.pool),
        ] {
            if v == 0 {
                return Err(FabricError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Spatial extents of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub pad: usize,
    /// Convolution output before pooling.
    pub conv_width: usize,
    pub conv_height: usize,
    /// After pooling; partial pooling blocks are dropped.
    pub out_width: usize,
    pub out_height: usize,
}

impl Geometry {
    pub fn new(
        width: usize,
        height: usize,
        kernel: usize,
        stride: usize,
        zero_pad: bool,
        pool: usize,
    ) -> Result<Self, FabricError> {
        if stride == 0 || kernel == 0 || pool == 0 {
            return Err(FabricError::Shape(format!(
                "stride {stride}, kernel {kernel} and pool {pool} must be at least 1"
            )));
        }
        let pad = if zero_pad { kernel / 2 } else { 0 };
        let (pw, ph) = (width + 2 * pad, height + 2 * pad);
        if pw < kernel || ph < kernel {
            return Err(FabricError::Shape(format!(
                "{kernel}x{kernel} window does not fit a padded {pw}x{ph} input"
            )));
        }
        let conv_width = (pw - kernel) / stride + 1;
        let conv_height = (ph - kernel) / stride + 1;
        let (out_width, out_height) = (conv_width / pool, conv_height / pool);
        if out_width == 0 || out_height == 0 {
            return Err(FabricError::Shape(format!(
                "{pool}x{pool} pooling leaves nothing of a {conv_width}x{conv_height} map"
            )));
        }
        Ok(Self {
            pad,
            conv_width,
            conv_height,
            out_width,
            out_height,
        })
    }

    pub fn conv_positions(&self) -> usize {
        self.conv_width * self.conv_height
    }

    pub fn out_len(&self) -> usize {
        self.out_width * self.out_height
    }
}

/// Reduces `values` in place through a zero-padded binary tree; pairs
/// `(2j, 2j+1)` meet at each layer. `values` is clobbered.
pub fn adder_tree_raw(format: QFormat, values: &mut Vec<i32>, overflow: &mut OverflowCounter) -> i32 {
    let leaves = values.len().next_power_of_two();
    values.resize(leaves, 0);
    let mut n = leaves;
    while n > 1 {
        for j in 0..n / 2 {
            values[j] = format.add_raw(values[2 * j], values[2 * j + 1], overflow);
        }
        n /= 2;
    }
    values[0]
}

pub fn adder_tree(values: &[QValue]) -> Result<QValue, FabricError> {
    let first = values.first().ok_or(FabricError::Empty("adder tree"))?;
    let format = first.format();
    if let Some(v) = values.iter().find(|v| v.format() != format) {
        return Err(QError::FormatMismatch(format, v.format()).into());
    }
    let mut raws: Vec<i32> = values.iter().map(|v| v.raw()).collect();
    let raw = adder_tree_raw(format, &mut raws, &mut OverflowCounter::new());
    Ok(QValue::from_raw(raw, format)?)
}

/// Element-wise products of a window and a weight cache, summed by the tree.
pub fn mac_unit(window: &[QValue], weights: &[QValue]) -> Result<QValue, FabricError> {
    if window.len() != weights.len() {
        return Err(FabricError::Shape(format!(
            "{} window values against {} weights",
            window.len(),
            weights.len()
        )));
    }
    let mut overflow = OverflowCounter::new();
    let products = window
        .iter()
        .zip(weights)
        .map(|(x, w)| x.mul_counted(*w, &mut overflow))
        .collect::<Result<Vec<_>, _>>()?;
    adder_tree(&products)
}

/// The array of cell bodies sharing one input stream.
#[derive(Debug, Clone)]
pub struct MatrixWeb {
    config: FabricConfig,
    activation: ActivationUnit,
}

impl MatrixWeb {
    pub fn new(config: FabricConfig) -> Result<Self, FabricError> {
        config.validate()?;
        Ok(Self {
            activation: ActivationUnit::new(config.activation, config.format),
            config,
        })
    }

    pub fn config(&self) -> &FabricConfig {
        &self.config
    }

    pub fn geometry(&self, input: &Tensor, stride: usize, zero_pad: bool) -> Result<Geometry, FabricError> {
        Geometry::new(
            input.width(),
            input.height(),
            self.config.kernel,
            stride,
            zero_pad,
            self.config.pool,
        )
    }

    fn check_input(&self, input: &Tensor) -> Result<(), FabricError> {
        if input.depth() != self.config.d_in {
            return Err(FabricError::Config(format!(
                "input depth {} on a fabric with d_in {}",
                input.depth(),
                self.config.d_in
            )));
        }
        if input.format() != self.config.format {
            return Err(QError::FormatMismatch(self.config.format, input.format()).into());
        }
        Ok(())
    }

    /// One cell body: `weights` holds `d_in * k * k` raws in (plane, row,
    /// col) order. Returns a single-plane tensor.
    pub fn cbu_forward(
        &self,
        input: &Tensor,
        weights: &[i32],
        bias: i32,
        stride: usize,
        zero_pad: bool,
        overflow: &mut OverflowCounter,
    ) -> Result<Tensor, FabricError> {
        self.check_input(input)?;
        let cfg = &self.config;
        let k = cfg.kernel;
        if weights.len() != cfg.d_in * k * k {
            return Err(FabricError::Shape(format!(
                "{} weights for a {}x{k}x{k} filter",
                weights.len(),
                cfg.d_in
            )));
        }
        let fmt = cfg.format;
        fmt.check_raw(bias as i64)?;
        let geo = self.geometry(input, stride, zero_pad)?;
        let (w, h) = (input.width() as isize, input.height() as isize);

        let mut conv = vec![0i32; geo.conv_positions()];
        let mut products = Vec::with_capacity((k * k).next_power_of_two());
        let mut planes = Vec::with_capacity(cfg.d_in.next_power_of_two());
        for oy in 0..geo.conv_height {
            for ox in 0..geo.conv_width {
                let y0 = (oy * stride) as isize - geo.pad as isize;
                let x0 = (ox * stride) as isize - geo.pad as isize;
                planes.clear();
                for r in 0..cfg.d_in {
                    let cache = &weights[r * k * k..(r + 1) * k * k];
                    products.clear();
                    for i in 0..k {
                        let y = y0 + i as isize;
                        for j in 0..k {
                            let x = x0 + j as isize;
                            let pixel = if (0..h).contains(&y) && (0..w).contains(&x) {
                                input.raw(r, y as usize, x as usize)
                            } else {
                                0
                            };
                            products.push(fmt.mul_raw(pixel, cache[i * k + j], overflow));
                        }
                    }
                    planes.push(adder_tree_raw(fmt, &mut products, overflow));
                }
                let sum = adder_tree_raw(fmt, &mut planes, overflow);
                let biased = fmt.add_raw(sum, bias, overflow);
                conv[oy * geo.conv_width + ox] = self.activation.apply_raw(biased);
            }
        }

        let p = cfg.pool;
        let out = if p == 1 {
            conv
        } else {
            let mut out = Vec::with_capacity(geo.out_len());
            for py in 0..geo.out_height {
                for px in 0..geo.out_width {
                    let mut m = i32::MIN;
                    for dy in 0..p {
                        for dx in 0..p {
                            m = m.max(conv[(py * p + dy) * geo.conv_width + px * p + dx]);
                        }
                    }
                    out.push(m);
                }
            }
            out
        };
        Ok(Tensor::from_raws(geo.out_width, geo.out_height, 1, fmt, out)?)
    }

    /// All filters against the same input; plane `t` of the result is filter `t`.
    pub fn forward(
        &self,
        input: &Tensor,
        filters: &FilterSet,
        stride: usize,
        zero_pad: bool,
    ) -> Result<Tensor, FabricError> {
        self.forward_counted(input, filters, stride, zero_pad, &mut OverflowCounter::new())
    }

    pub fn forward_counted(
        &self,
        input: &Tensor,
        filters: &FilterSet,
        stride: usize,
        zero_pad: bool,
        overflow: &mut OverflowCounter,
    ) -> Result<Tensor, FabricError> {
        let cfg = &self.config;
        if filters.depth() != cfg.d_in || filters.kernel() != cfg.kernel {
            return Err(FabricError::Config(format!(
                "{}x{k}x{k} filters on a fabric with d_in {} and kernel {}",
                filters.depth(),
                cfg.d_in,
                cfg.kernel,
                k = filters.kernel()
            )));
        }
        if filters.num_filters() > cfg.num_filters {
            return Err(FabricError::Config(format!(
                "{} filters exceed {} cell bodies",
                filters.num_filters(),
                cfg.num_filters
            )));
        }
        if filters.format() != cfg.format {
            return Err(QError::FormatMismatch(cfg.format, filters.format()).into());
        }
        let planes = (0..filters.num_filters())
            .map(|t| {
                self.cbu_forward(
                    input,
                    filters.filter_weights(t),
                    filters.biases()[t],
                    stride,
                    zero_pad,
                    overflow,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tensor::stack(&planes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: QFormat = QFormat::Q16_15;

    fn q(x: f64) -> QValue {
        QValue::encode(x, Q).unwrap()
    }

    fn raws(xs: &[f64]) -> Vec<i32> {
        xs.iter().map(|&x| q(x).raw()).collect()
    }

    #[test]
    fn tree_single_leaf() {
        assert_eq!(adder_tree(&[q(1.0)]).unwrap(), q(1.0));
        assert!(matches!(adder_tree(&[]), Err(FabricError::Empty(_))));
    }

    #[test]
    fn tree_pads_nine_leaves_to_sixteen() {
        let mut v = vec![q(1.0).raw(); 9];
        let mut ov = OverflowCounter::new();
        assert_eq!(adder_tree_raw(Q, &mut v, &mut ov), q(9.0).raw());
        assert_eq!(v.len(), 16);
        assert_eq!(ov.events(), 0);
    }

    #[test]
    fn tree_order_matters_under_saturation() {
        // ((max + max) + (-max + -max)) saturates on both sides and lands on -1
        let max = i32::MAX;
        let mut v = vec![max, max, -max, -max];
        let mut ov = OverflowCounter::new();
        assert_eq!(adder_tree_raw(Q, &mut v, &mut ov), -1);
        assert_eq!(ov.events(), 2);
    }

    #[test]
    fn mac_examples() {
        let ones = vec![q(1.0); 9];
        assert_eq!(mac_unit(&ones, &ones).unwrap(), q(9.0));
        let zeros = vec![q(0.0); 9];
        let window: Vec<_> = (0..9).map(|i| q(i as f64 * 3.7 - 11.0)).collect();
        assert_eq!(mac_unit(&window, &zeros).unwrap(), q(0.0));
        assert!(mac_unit(&ones[..4], &ones).is_err());
    }

    #[test]
    fn all_ones_kernel_on_ramp() {
        let web = MatrixWeb::new(FabricConfig::new(1, 3, 1).with_activation(Activation::Relu)).unwrap();
        let input = Tensor::from_f64(3, 3, 1, Q, &[1., 2., 3., 4., 5., 6., 7., 8., 9.]).unwrap();
        let out = web
            .cbu_forward(&input, &raws(&[1.0; 9]), 0, 1, false, &mut OverflowCounter::new())
            .unwrap();
        assert_eq!((out.width(), out.height()), (1, 1));
        assert_eq!(out.get(0, 0, 0), q(45.0));
    }

    #[test]
    fn identity_kernel_with_padding() {
        let web = MatrixWeb::new(FabricConfig::new(1, 3, 1)).unwrap();
        let input = Tensor::from_f64(4, 3, 1, Q, &(0..12).map(|i| i as f64 * 0.37 - 2.0).collect::<Vec<_>>()).unwrap();
        let mut kernel = vec![0.0; 9];
        kernel[4] = 1.0;
        let out = web
            .cbu_forward(&input, &raws(&kernel), 0, 1, true, &mut OverflowCounter::new())
            .unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn identity_kernel_sums_planes() {
        let web = MatrixWeb::new(FabricConfig::new(2, 1, 1)).unwrap();
        let input = Tensor::from_f64(2, 1, 2, Q, &[1.0, 2.0, 0.5, -4.0]).unwrap();
        let out = web
            .cbu_forward(&input, &raws(&[1.0, 1.0]), 0, 1, true, &mut OverflowCounter::new())
            .unwrap();
        assert_eq!(out.to_f64(), vec![1.5, -2.0]);
    }

    #[test]
    fn max_pool_after_pointwise() {
        let web = MatrixWeb::new(FabricConfig::new(1, 1, 1).with_pool(2)).unwrap();
        let input = Tensor::from_f64(4, 4, 1, Q, &(0..16).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let out = web
            .cbu_forward(&input, &raws(&[1.0]), 0, 1, false, &mut OverflowCounter::new())
            .unwrap();
        assert_eq!((out.width(), out.height()), (2, 2));
        assert_eq!(out.to_f64(), vec![5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn bias_goes_before_activation() {
        let web = MatrixWeb::new(FabricConfig::new(1, 1, 1).with_activation(Activation::Relu)).unwrap();
        let input = Tensor::from_f64(2, 1, 1, Q, &[1.0, 3.0]).unwrap();
        let out = web
            .cbu_forward(
                &input,
                &raws(&[1.0]),
                q(-2.0).raw(),
                1,
                false,
                &mut OverflowCounter::new(),
            )
            .unwrap();
        assert_eq!(out.to_f64(), vec![0.0, 1.0]);
    }

    #[test]
    fn geometry() {
        let g = Geometry::new(224, 224, 3, 1, true, 1).unwrap();
        assert_eq!((g.pad, g.conv_width, g.out_width), (1, 224, 224));
        let g = Geometry::new(7, 5, 3, 2, false, 2).unwrap();
        assert_eq!((g.conv_width, g.conv_height, g.out_width, g.out_height), (3, 2, 1, 1));
        // even kernel with padding grows by one
        let g = Geometry::new(6, 6, 4, 1, true, 1).unwrap();
        assert_eq!((g.pad, g.conv_width), (2, 7));
        assert!(Geometry::new(2, 2, 3, 1, false, 1).is_err());
        assert!(Geometry::new(2, 2, 3, 0, true, 1).is_err());
        assert!(Geometry::new(3, 3, 3, 1, false, 2).is_err());
    }

    #[test]
    fn shared_input_identical_filters() {
        let web = MatrixWeb::new(FabricConfig::new(1, 2, 2).with_activation(Activation::Tanh)).unwrap();
        let input = Tensor::from_f64(3, 3, 1, Q, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, 0.8, -0.9]).unwrap();
        let w = raws(&[0.5, -0.25, 1.0, 0.75]);
        let filters = FilterSet::from_raws(2, 1, 2, Q, [w.clone(), w].concat(), vec![7, 7]).unwrap();
        let out = web.forward(&input, &filters, 1, false).unwrap();
        assert_eq!(out.depth(), 2);
        assert_eq!(out.plane(0), out.plane(1));
    }

    #[test]
    fn config_mismatches() {
        let web = MatrixWeb::new(FabricConfig::new(2, 3, 1)).unwrap();
        let input = Tensor::zeros(4, 4, 1, Q);
        assert!(matches!(
            web.cbu_forward(&input, &[0; 18], 0, 1, false, &mut OverflowCounter::new()),
            Err(FabricError::Config(_))
        ));
        let input = Tensor::zeros(4, 4, 2, Q);
        let too_many = FilterSet::from_raws(2, 2, 3, Q, vec![0; 36], vec![0, 0]).unwrap();
        assert!(web.forward(&input, &too_many, 1, false).is_err());
        assert!(MatrixWeb::new(FabricConfig::new(1, 3, 1).with_pool(0)).is_err());
    }
}
