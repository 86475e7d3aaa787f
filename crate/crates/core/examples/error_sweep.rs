//! Mean and max fixed-versus-float error by kernel width and input range.

use qfabric::analysis::{error_sweep, write_sweep_csv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kernels: Vec<usize> = (3..=9).collect();
    let rows = error_sweep(&kernels, &[(0.0, 1.0), (0.0, 10.0), (0.0, 50.0)], 1000, 7)?;
    write_sweep_csv(std::io::stdout().lock(), &rows)?;
    let worst = rows.iter().map(|r| r.mean_abs_error).fold(0.0, f64::max);
    eprintln!("largest mean error {worst:.3e}");
    Ok(())
}
