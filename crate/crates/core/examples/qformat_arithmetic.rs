//! Encoding, saturation and truncation in Q(16,15).

use qfabric::qformat::{OverflowCounter, QFormat, QValue};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = QFormat::Q16_15;
    println!(
        "{q}: resolution {:e}, range [{}, {}]",
        q.resolution(),
        q.min_value(),
        q.max_value()
    );

    let a = QValue::encode(1.5, q)?;
    let b = QValue::encode(-0.333, q)?;
    println!("1.5    -> raw {:>11} -> {}", a.raw(), a.decode());
    println!("-0.333 -> raw {:>11} -> {}", b.raw(), b.decode());
    println!("1.5 * -0.333 = {} (truncated toward -inf)", a.mul(b)?.decode());

    let mut overflow = OverflowCounter::new();
    let big = QValue::encode(60000.0, q)?;
    let sum = big.add_counted(big, &mut overflow)?;
    println!(
        "60000 + 60000 saturates to {} ({} overflow event)",
        sum.decode(),
        overflow.events()
    );

    let coarse = QFormat::q(7, 8)?;
    let pi = std::f64::consts::PI;
    println!("{coarse}: {pi} -> {}", QValue::encode(pi, coarse)?.decode());
    Ok(())
}
