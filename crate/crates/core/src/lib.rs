//! Bit-exact functional model of a reconfigurable Q-format CNN co-processor,
//! with its instruction set, assembler, controller and cost models.
//!
//! - [`qformat`]: fixed-point words with saturating arithmetic.
//! - [`memory`]: byte-addressed main memory, tensors and their files.
//! - [`isa`]: 64-bit instruction encoding, assembler and disassembler.
//! - [`fabric`]: cell bodies, adder trees, activation and pooling.
//! - [`controller`]: the fetch/execute loop and program generation.
//! - [`analysis`]: reference oracles, error sweeps and cost models.
//! - [`cli`]: the commands behind the `qfabric` binary.

pub mod analysis;
pub mod cli;
pub mod controller;
pub mod fabric;
pub mod isa;
pub mod memory;
pub mod qformat;

pub use controller::{run_program, Controller, RunReport};
pub use fabric::{Activation, FabricConfig, MatrixWeb};
pub use isa::{assemble, disassemble, Instruction};
pub use memory::{AddressSpace, FilterSet, MemoryImage, Tensor};
pub use qformat::{OverflowCounter, QFormat, QValue};
