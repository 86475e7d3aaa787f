//! Two layers on a fabric with fewer cell bodies than filters: the
//! controller runs a generated program, reusing the bodies across passes.

use qfabric::controller::{generate_layer_program, run_program, LayerSpec, LayoutPlan};
use qfabric::fabric::{Activation, FabricConfig};
use qfabric::isa::assemble;
use qfabric::memory::{FilterSet, MemoryImage, Tensor};
use qfabric::qformat::QFormat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = QFormat::Q16_15;
    let cfg = FabricConfig::new(2, 3, 2)
        .with_pool(2)
        .with_activation(Activation::Relu);
    let wave = |n: usize, scale: f64| (0..n).map(|i| (i as f64 * 0.7).sin() * scale).collect::<Vec<_>>();

    let input = Tensor::from_f64(8, 8, 2, q, &wave(128, 1.0))?;
    let layer1 = FilterSet::from_f64(2, 2, 3, q, &wave(36, 0.3), &[0.05, -0.05])?;
    let layer2 = FilterSet::from_f64(3, 2, 3, q, &wave(54, 0.4), &[0.0; 3])?;
    let spec = |n| LayerSpec {
        num_filters: n,
        stride: 1,
        zero_pad: true,
    };
    let plan = LayoutPlan::sequential(&cfg, (8, 8, 2), &[spec(2), spec(3)], 0)?;
    let text = generate_layer_program(&cfg, &plan)?;
    println!("{text}");

    let mut mem = MemoryImage::new(plan.memory_size());
    plan.load(&mut mem, &input, &[layer1, layer2])?;
    let report = run_program(&assemble(&text)?, &mut mem, cfg)?;
    print!("{report}");
    let out = plan.read_output(&mem, &cfg)?;
    println!(
        "output {}x{}x{}: {:?}",
        out.width(),
        out.height(),
        out.depth(),
        out.to_f64()
    );
    Ok(())
}
