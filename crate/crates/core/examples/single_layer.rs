//! One convolution layer through the matrix web, checked against the
//! double-precision oracle.

use qfabric::analysis::{float_oracle, FloatFilters, FloatTensor};
use qfabric::fabric::{Activation, FabricConfig, MatrixWeb};
use qfabric::memory::{FilterSet, Tensor};
use qfabric::qformat::QFormat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = QFormat::Q16_15;
    let values: Vec<f64> = (0..36).map(|i| ((i * 7) % 11) as f64 / 4.0 - 1.0).collect();
    let input = Tensor::from_f64(6, 6, 1, q, &values)?;
    let edge = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
    let blur = [1.0 / 9.0; 9];
    let filters = FilterSet::from_f64(2, 1, 3, q, &[edge, blur].concat(), &[0.0, 0.1])?;

    let cfg = FabricConfig::new(1, 3, 2)
        .with_activation(Activation::Tanh)
        .with_pool(2);
    let out = MatrixWeb::new(cfg)?.forward(&input, &filters, 1, true)?;
    let exact = float_oracle(
        &FloatTensor::from_tensor(&input),
        &FloatFilters::from_filters(&filters),
        1,
        true,
        Activation::Tanh,
        2,
    )?;
    println!("output {}x{}x{}", out.width(), out.height(), out.depth());
    for (i, (a, b)) in out.to_f64().iter().zip(&exact.data).enumerate() {
        println!(
            "plane {} [{}]: fixed {a:+.6}  float {b:+.6}  |diff| {:.1e}",
            i / 9,
            i % 9,
            (a - b).abs()
        );
    }
    Ok(())
}
