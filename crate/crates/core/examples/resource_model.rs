//! Cell-body resource counts next to the measured utilisation table, and
//! the cycle model for a 224x224 layer.

use qfabric::analysis::{
    adders_per_cbu, cycle_model, dsp_per_cbu, multipliers_per_cbu, ops_per_cycle, REFERENCE_UTILIZATION,
};
use qfabric::fabric::FabricConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("k  d_in  mults  adders  dsp(model)  dsp(measured)  lut     ff");
    for r in REFERENCE_UTILIZATION {
        println!(
            "{}  {:>4}  {:>5}  {:>6}  {:>10}  {:>13}  {:>6}  {:>5}",
            r.kernel,
            r.d_in,
            multipliers_per_cbu(r.kernel, r.d_in),
            adders_per_cbu(r.kernel, r.d_in),
            dsp_per_cbu(r.kernel, r.d_in),
            r.dsp,
            r.lut,
            r.ff
        );
    }
    let cfg = FabricConfig::new(1, 3, 16);
    let c = cycle_model(&cfg, 224, 224, 1, true)?;
    println!(
        "\n16 bodies, k=3, 224x224: fetch {}, weight load {} (model), compute {} (model), total {}",
        c.fetch, c.weight_load, c.compute, c.total
    );
    println!("theoretical ops per cycle: {}", ops_per_cycle(16, 1, 3));
    Ok(())
}
