mod common;

use proptest::prelude::*;

use qfabric::isa::{
    assemble, decode_instruction, disassemble, encode_instruction, from_binary, to_binary, BinaryError, Instruction,
};
use qfabric::memory::AddressSpace;

fn program(seed: u64, len: usize) -> Vec<Instruction> {
    let mut r = common::rng(seed);
    (0..len).map(|_| common::instruction(&mut r)).collect()
}

proptest! {
    #[test]
    fn words_round_trip(seed in any::<u64>()) {
        for ins in program(seed, 16) {
            let w = encode_instruction(&ins).unwrap();
            prop_assert_eq!(decode_instruction(w).unwrap(), ins);
            prop_assert_eq!(encode_instruction(&decode_instruction(w).unwrap()).unwrap(), w);
        }
    }

    #[test]
    fn binary_images_round_trip(seed in any::<u64>(), len in 0usize..40) {
        let p = program(seed, len);
        let bin = to_binary(&p).unwrap();
        prop_assert_eq!(bin.len(), 8 * len);
        prop_assert_eq!(from_binary(&bin).unwrap(), p);
    }

    #[test]
    fn text_round_trips_one_line_at_a_time(seed in any::<u64>()) {
        for ins in program(seed, 16) {
            let text = disassemble(&[ins]);
            prop_assert_eq!(assemble(&text).unwrap(), vec![ins]);
            prop_assert_eq!(disassemble(&assemble(&text).unwrap()), text);
        }
    }

    #[test]
    fn arbitrary_words_decode_or_fail_cleanly(word in any::<u64>()) {
        if let Ok(ins) = decode_instruction(word) {
            prop_assert_eq!(encode_instruction(&ins).unwrap(), word);
        }
    }
}

#[test]
fn canonical_text() {
    let p = vec![
        Instruction::load_input(AddressSpace::new(0, 256).unwrap()),
        Instruction::load_weights(0, AddressSpace::new(0x2000, 144).unwrap()),
        Instruction::convolve(8, 8, 1, 1, false),
        Instruction::stop(),
    ];
    let text = disassemble(&p);
    assert_eq!(
        text,
        "LDI 0x0, 256\nLDW 0, 0x2000, 144\nCONV w=8 h=8 d=1 sl=1 zp=0\nHALT\n"
    );
    let loose = "  ldi 0, 256 ; input\n\nLdW 0,0x2000,144\nconv zp=0 sl=1 d=1 h=8 w=8\nhalt";
    assert_eq!(assemble(loose).unwrap(), p);
}

#[test]
fn diagnostics_carry_positions() {
    let err = assemble("NOP\nLDW 0 0x2000").unwrap_err();
    assert_eq!((err.line, err.column), (2, 7));
    let err = assemble("CONV w=8 h=8 d=1 sl=1").unwrap_err();
    assert_eq!(err.line, 1);
    assert!(err.to_string().contains("zp"), "{err}");
    let err = assemble("LDW 0, 0x0, 6").unwrap_err();
    assert!(err.to_string().starts_with("line 1, column"), "{err}");
}

#[test]
fn truncated_images_are_rejected() {
    assert_eq!(from_binary(&[0; 12]), Err(BinaryError::Length(12)));
    let mut bin = to_binary(&[Instruction::stop()]).unwrap();
    bin[0] = 1;
    assert!(matches!(from_binary(&bin), Err(BinaryError::Decode { index: 0, .. })));
}
