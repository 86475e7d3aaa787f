//! Instruction set of the process controller.
//!
//! Every instruction is one 64-bit word. Bit 63 selects the class:
//!
//! ```text
//! TYPE=0  matrix-web control
//!   [62:60] CONFIG  0 nop, 1 convolve, 2 flush, 3 stop
//!   [59:46] IFD_W   input width
//!   [45:32] IFD_H   input height
//!   [31:20] IFD_D   input depth
//!   [19:12] SL      stride
//!   [11]    ZP      zero padding enable
//!   [10:0]  reserved, zero
//!
//! TYPE=1  memory control
//!   [62:61] KIND    0 input features, 1 weights, 2 biases, 3 outputs
//!   [60:53] CBU     cell body index (zero for input features)
//!   [52:21] BASE    byte address
//!   [20:0]  LEN     length in 4-byte words
//! ```
//!
//! The IFD/SL/ZP operands only exist on `convolve`; the other configs
//! carry zeros there. The all-zero word is a `nop`.

mod asm;

pub use asm::{assemble, disassemble, AsmError};

use thiserror::Error;

use crate::memory::{AddressSpace, WORD_BYTES};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("field {field} value {value} does not fit in {bits} bits")]
    FieldOverflow { field: &'static str, value: u64, bits: u32 },
    #[error("field {field} must be {requirement}")]
    InvalidField {
        field: &'static str,
        requirement: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal instruction {word:#018x}: {reason}")]
pub struct DecodeError {
    pub word: u64,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConfigOp {
    Nop,
    Convolve,
    Flush,
    Stop,
}

impl ConfigOp {
    fn code(self) -> u64 {
        match self {
            ConfigOp::Nop => 0,
            ConfigOp::Convolve => 1,
            ConfigOp::Flush => 2,
            ConfigOp::Stop => 3,
        }
    }

    fn from_code(code: u64) -> Option<Self> {
        Some(match code {
            0 => ConfigOp::Nop,
            1 => ConfigOp::Convolve,
            2 => ConfigOp::Flush,
            3 => ConfigOp::Stop,
            _ => return None,
        })
    }
}

/// Configures the matrix web or triggers a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MwControl {
    pub config: ConfigOp,
    pub ifd_width: u32,
    pub ifd_height: u32,
    pub ifd_depth: u32,
    pub stride: u32,
    pub zero_pad: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemKind {
    InputFeatures,
    Weights,
    Biases,
    Outputs,
}

impl MemKind {
    pub const ALL: [MemKind; 4] = [
        MemKind::InputFeatures,
        MemKind::Weights,
        MemKind::Biases,
        MemKind::Outputs,
    ];

    fn code(self) -> u64 {
        match self {
            MemKind::InputFeatures => 0,
            MemKind::Weights => 1,
            MemKind::Biases => 2,
            MemKind::Outputs => 3,
        }
    }

    fn from_code(code: u64) -> Self {
        Self::ALL[code as usize & 3]
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            MemKind::InputFeatures => "LDI",
            MemKind::Weights => "LDW",
            MemKind::Biases => "LDB",
            MemKind::Outputs => "STO",
        }
    }

    /// Weights, biases and outputs address one cell body each.
    pub fn is_per_cbu(self) -> bool {
        self != MemKind::InputFeatures
    }
}

/// Points a fabric port at a region of main memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemControl {
    pub kind: MemKind,
    pub cbu: u32,
    pub space: AddressSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    MwControl(MwControl),
    MemControl(MemControl),
}

impl Instruction {
    fn config(config: ConfigOp) -> Self {
        Instruction::MwControl(MwControl {
            config,
            ifd_width: 0,
            ifd_height: 0,
            ifd_depth: 0,
            stride: 0,
            zero_pad: false,
        })
    }

    pub fn nop() -> Self {
        Self::config(ConfigOp::Nop)
    }

    pub fn stop() -> Self {
        Self::config(ConfigOp::Stop)
    }

    pub fn flush() -> Self {
        Self::config(ConfigOp::Flush)
    }

    pub fn convolve(width: u32, height: u32, depth: u32, stride: u32, zero_pad: bool) -> Self {
        Instruction::MwControl(MwControl {
            config: ConfigOp::Convolve,
            ifd_width: width,
            ifd_height: height,
            ifd_depth: depth,
            stride,
            zero_pad,
        })
    }

    pub fn memory(kind: MemKind, cbu: u32, space: AddressSpace) -> Self {
        Instruction::MemControl(MemControl { kind, cbu, space })
    }

    pub fn load_input(space: AddressSpace) -> Self {
        Self::memory(MemKind::InputFeatures, 0, space)
    }

    pub fn load_weights(cbu: u32, space: AddressSpace) -> Self {
        Self::memory(MemKind::Weights, cbu, space)
    }

    pub fn load_biases(cbu: u32, space: AddressSpace) -> Self {
        Self::memory(MemKind::Biases, cbu, space)
    }

    pub fn store_outputs(cbu: u32, space: AddressSpace) -> Self {
        Self::memory(MemKind::Outputs, cbu, space)
    }
}

const TYPE_BIT: u64 = 1 << 63;

fn field(field: &'static str, value: u64, bits: u32, shift: u32) -> Result<u64, EncodeError> {
    if value >> bits != 0 {
        return Err(EncodeError::FieldOverflow { field, value, bits });
    }
    Ok(value << shift)
}

#[inline]
fn extract(word: u64, shift: u32, bits: u32) -> u64 {
    (word >> shift) & ((1u64 << bits) - 1)
}

pub fn encode_instruction(ins: &Instruction) -> Result<u64, EncodeError> {
    match ins {
        Instruction::MwControl(mw) => {
            let operands = [
                ("IFD_W", mw.ifd_width),
                ("IFD_H", mw.ifd_height),
                ("IFD_D", mw.ifd_depth),
                ("SL", mw.stride),
            ];
            if mw.config == ConfigOp::Convolve {
                if let Some((name, _)) = operands.iter().find(|(_, v)| *v == 0) {
                    return Err(EncodeError::InvalidField {
                        field: name,
                        requirement: "at least 1 for convolve",
                    });
                }
            } else if operands.iter().any(|(_, v)| *v != 0) || mw.zero_pad {
                return Err(EncodeError::InvalidField {
                    field: "CONFIG",
                    requirement: "convolve when IFD/SL/ZP operands are set",
                });
            }
            Ok(mw.config.code() << 60
                | field("IFD_W", mw.ifd_width as u64, 14, 46)?
                | field("IFD_H", mw.ifd_height as u64, 14, 32)?
                | field("IFD_D", mw.ifd_depth as u64, 12, 20)?
                | field("SL", mw.stride as u64, 8, 12)?
                | (mw.zero_pad as u64) << 11)
        }
        Instruction::MemControl(mc) => {
            if mc.kind == MemKind::InputFeatures && mc.cbu != 0 {
                return Err(EncodeError::InvalidField {
                    field: "CBU",
                    requirement: "zero for input features",
                });
            }
            if !(mc.space.length as usize).is_multiple_of(WORD_BYTES) {
                return Err(EncodeError::InvalidField {
                    field: "LEN",
                    requirement: "a whole number of words",
                });
            }
            Ok(TYPE_BIT
                | mc.kind.code() << 61
                | field("CBU", mc.cbu as u64, 8, 53)?
                | (mc.space.base as u64) << 21
                | field("LEN", mc.space.word_count() as u64, 21, 0)?)
        }
    }
}

pub fn decode_instruction(word: u64) -> Result<Instruction, DecodeError> {
    let illegal = |reason| DecodeError { word, reason };
    if word & TYPE_BIT == 0 {
        let config = ConfigOp::from_code(extract(word, 60, 3)).ok_or_else(|| illegal("reserved CONFIG code"))?;
        if extract(word, 0, 11) != 0 {
            return Err(illegal("reserved bits set"));
        }
        let mw = MwControl {
            config,
            ifd_width: extract(word, 46, 14) as u32,
            ifd_height: extract(word, 32, 14) as u32,
            ifd_depth: extract(word, 20, 12) as u32,
            stride: extract(word, 12, 8) as u32,
            zero_pad: extract(word, 11, 1) == 1,
        };
        let operands = [mw.ifd_width, mw.ifd_height, mw.ifd_depth, mw.stride];
        if config == ConfigOp::Convolve {
            if operands.contains(&0) {
                return Err(illegal("convolve with a zero IFD or SL field"));
            }
        } else if operands.iter().any(|&v| v != 0) || mw.zero_pad {
            return Err(illegal("operands on a non-convolve config"));
        }
        Ok(Instruction::MwControl(mw))
    } else {
        let kind = MemKind::from_code(extract(word, 61, 2));
        let cbu = extract(word, 53, 8) as u32;
        if kind == MemKind::InputFeatures && cbu != 0 {
            return Err(illegal("cell body index on an input-features instruction"));
        }
        let base = extract(word, 21, 32) as u32;
        let length = (extract(word, 0, 21) as usize * WORD_BYTES) as u32;
        Ok(Instruction::MemControl(MemControl {
            kind,
            cbu,
            space: AddressSpace { base, length },
        }))
    }
}

/// Program image: one little-endian 64-bit word per instruction.
pub fn to_binary(program: &[Instruction]) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(program.len() * 8);
    for ins in program {
        out.extend_from_slice(&encode_instruction(ins)?.to_le_bytes());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BinaryError {
    #[error("program image of {0} bytes is not a whole number of 64-bit words")]
    Length(usize),
    #[error("word {index}: {source}")]
    Decode { index: usize, source: DecodeError },
}

pub fn from_binary(bytes: &[u8]) -> Result<Vec<Instruction>, BinaryError> {
    if !bytes.len().is_multiple_of(8) {
        return Err(BinaryError::Length(bytes.len()));
    }
    bytes
        .chunks_exact(8)
        .enumerate()
        .map(|(index, c)| {
            let word = u64::from_le_bytes(c.try_into().expect("8 bytes"));
            decode_instruction(word).map_err(|source| BinaryError::Decode { index, source })
        })
        .collect()
}
