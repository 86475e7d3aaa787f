//! Assemble a program, show its machine words, and disassemble it back.

use qfabric::isa::{assemble, disassemble, encode_instruction, from_binary, to_binary};

const SOURCE: &str = "\
; one layer, two cell bodies
LDI 0x0, 256
ldw 0, 0x400, 36
LDB 0, 0x4a0, 4
STO 0, 0x500, 64
LDW 1, 0x440, 36
LDB 1, 0x4a4, 4
STO 1, 0x600, 64
CONV zp=1 sl=1 d=1 h=8 w=8
HALT
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let program = assemble(SOURCE)?;
    for ins in &program {
        println!(
            "{:#018x}  {}",
            encode_instruction(ins)?,
            disassemble(&[*ins]).trim_end()
        );
    }
    let image = to_binary(&program)?;
    assert_eq!(from_binary(&image)?, program);
    println!("\n{} bytes; canonical text:\n{}", image.len(), disassemble(&program));

    match assemble("LDW 0 0x2000") {
        Err(e) => println!("diagnostic: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
