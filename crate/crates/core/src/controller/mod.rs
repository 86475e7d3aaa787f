//! Process controller: fetches instructions and drives memory and fabric.
//!
//! Memory-control instructions only latch address registers. A `CONV`
//! executes a whole layer at once: every cell body that had a port latched
//! since the previous `CONV` loads its weight and bias caches, the input map
//! is read, the matrix web runs, and each cell body writes its pooled plane
//! to its output space. All latched registers are then released, so the
//! next layer names its ports afresh.

mod program;

pub use program::{generate_layer_program, layer_program, LayerLayout, LayerSpec, LayoutPlan};

use std::fmt;

use thiserror::Error;

use crate::analysis::{cycle_model, CycleEstimate};
use crate::fabric::{FabricConfig, FabricError, MatrixWeb};
use crate::isa::{ConfigOp, Instruction, MemControl, MemKind, MwControl};
use crate::memory::{AddressSpace, FilterSet, MemoryError, MemoryImage, WORD_BYTES};
use crate::qformat::OverflowCounter;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("configuration error at instruction {pc}: {message}")]
    Config { pc: usize, message: String },
    #[error("size error at instruction {pc}: {what} spans {found} bytes, expected {expected}")]
    Size {
        pc: usize,
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("controller is halted")]
    Halted,
    #[error("runaway program: ran past the last instruction ({0}) without HALT")]
    Runaway(usize),
    #[error("layout error: {0}")]
    Layout(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Configured,
    Halted,
}

/// Address registers latched for one cell body.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CbuPorts {
    pub weights: Option<AddressSpace>,
    pub biases: Option<AddressSpace>,
    pub outputs: Option<AddressSpace>,
}

impl CbuPorts {
    fn is_empty(&self) -> bool {
        self.weights.is_none() && self.biases.is_none() && self.outputs.is_none()
    }
}

/// Caches inside one cell body.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CbuState {
    /// One cache of `k^2` weights per input plane; empty after a flush.
    pub weight_caches: Vec<Vec<i32>>,
    pub bias: Option<i32>,
    pub output_space: Option<AddressSpace>,
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub pc: usize,
    pub phase: Phase,
    pub input_space: Option<AddressSpace>,
    pub ports: Vec<CbuPorts>,
    pub cbus: Vec<CbuState>,
    pub ifd: Option<(usize, usize, usize)>,
    pub stride: usize,
    pub zero_pad: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunReport {
    /// Number of `CONV` passes executed.
    pub layers_executed: u64,
    pub instructions_executed: u64,
    pub overflow_events: u64,
    /// Cost model summed over all passes.
    pub cycles: CycleEstimate,
}

impl RunReport {
    pub fn cycle_estimate(&self) -> u64 {
        self.cycles.total
    }
}

impl fmt::Display for RunReport {
    /// `key=value` lines.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "layers_executed={}", self.layers_executed)?;
        writeln!(f, "instructions_executed={}", self.instructions_executed)?;
        writeln!(f, "overflow_events={}", self.overflow_events)?;
        writeln!(f, "cycle_model_fetch={}", self.cycles.fetch)?;
        writeln!(f, "cycle_model_weight_load={}", self.cycles.weight_load)?;
        writeln!(f, "cycle_model_compute={}", self.cycles.compute)?;
        writeln!(f, "cycle_estimate={}", self.cycles.total)
    }
}

pub struct Controller {
    web: MatrixWeb,
    program: Vec<Instruction>,
    state: ControllerState,
    report: RunReport,
}

impl Controller {
    pub fn new(config: FabricConfig, program: Vec<Instruction>) -> Result<Self, ControllerError> {
        let web = MatrixWeb::new(config)?;
        let n = config.num_filters;
        Ok(Self {
            web,
            program,
            state: ControllerState {
                pc: 0,
                phase: Phase::Idle,
                input_space: None,
                ports: vec![CbuPorts::default(); n],
                cbus: vec![CbuState::default(); n],
                ifd: None,
                stride: 0,
                zero_pad: false,
            },
            report: RunReport::default(),
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn report(&self) -> RunReport {
        self.report
    }

    pub fn config(&self) -> &FabricConfig {
        self.web.config()
    }

    /// Executes one instruction.
    pub fn step(&mut self, mem: &mut MemoryImage) -> Result<Phase, ControllerError> {
        if self.state.phase == Phase::Halted {
            return Err(ControllerError::Halted);
        }
        let pc = self.state.pc;
        let ins = *self
            .program
            .get(pc)
            .ok_or(ControllerError::Runaway(self.program.len()))?;
        match ins {
            Instruction::MemControl(mc) => self.latch(pc, mc)?,
            Instruction::MwControl(mw) => match mw.config {
                ConfigOp::Nop => {}
                ConfigOp::Stop => self.state.phase = Phase::Halted,
                ConfigOp::Flush => {
                    for cbu in &mut self.state.cbus {
                        cbu.weight_caches.clear();
                        cbu.bias = None;
                    }
                }
                ConfigOp::Convolve => self.convolve(pc, mw, mem)?,
            },
        }
        self.state.pc += 1;
        self.report.instructions_executed += 1;
        Ok(self.state.phase)
    }

    pub fn run(&mut self, mem: &mut MemoryImage) -> Result<RunReport, ControllerError> {
        while self.step(mem)? != Phase::Halted {}
        Ok(self.report)
    }

    fn config_err(pc: usize, message: impl Into<String>) -> ControllerError {
        ControllerError::Config {
            pc,
            message: message.into(),
        }
    }

    fn latch(&mut self, pc: usize, mc: MemControl) -> Result<(), ControllerError> {
        if mc.kind == MemKind::InputFeatures {
            self.state.input_space = Some(mc.space);
        } else {
            let n = self.state.ports.len();
            let ports = self
                .state
                .ports
                .get_mut(mc.cbu as usize)
                .ok_or_else(|| Self::config_err(pc, format!("cell body {} of {n}", mc.cbu)))?;
            let slot = match mc.kind {
                MemKind::Weights => &mut ports.weights,
                MemKind::Biases => &mut ports.biases,
                _ => &mut ports.outputs,
            };
            *slot = Some(mc.space);
        }
        self.state.phase = Phase::Configured;
        Ok(())
    }

    fn convolve(&mut self, pc: usize, mw: MwControl, mem: &mut MemoryImage) -> Result<(), ControllerError> {
        let cfg = *self.web.config();
        let input_space = self
            .state
            .input_space
            .ok_or_else(|| Self::config_err(pc, "CONV without an input space (LDI)"))?;
        let (w, h, d) = (mw.ifd_width as usize, mw.ifd_height as usize, mw.ifd_depth as usize);
        let stride = mw.stride as usize;
        if w == 0 || h == 0 || stride == 0 {
            return Err(Self::config_err(pc, "CONV needs non-zero width, height and stride"));
        }
        if d != cfg.d_in {
            return Err(Self::config_err(
                pc,
                format!("input depth {d} on a fabric with d_in {}", cfg.d_in),
            ));
        }

        let mut active = Vec::new();
        for (i, ports) in self.state.ports.iter().enumerate() {
            if ports.is_empty() {
                continue;
            }
            let missing = [("LDW", ports.weights), ("LDB", ports.biases), ("STO", ports.outputs)]
                .iter()
                .filter(|(_, s)| s.is_none())
                .map(|(m, _)| *m)
                .collect::<Vec<_>>();
            if !missing.is_empty() {
                return Err(Self::config_err(
                    pc,
                    format!("cell body {i} lacks {}", missing.join(", ")),
                ));
            }
            active.push((i, ports.weights.unwrap(), ports.biases.unwrap(), ports.outputs.unwrap()));
        }
        if active.is_empty() {
            return Err(Self::config_err(pc, "CONV with no cell body configured"));
        }

        let size_check = |what: String, space: AddressSpace, words: usize| {
            let expected = words * WORD_BYTES;
            if space.length as usize != expected {
                return Err(ControllerError::Size {
                    pc,
                    what,
                    expected,
                    found: space.length as usize,
                });
            }
            Ok(())
        };
        let geo = crate::fabric::Geometry::new(w, h, cfg.kernel, stride, mw.zero_pad, cfg.pool)?;
        let kk = cfg.kernel * cfg.kernel;
        size_check("input features".into(), input_space, w * h * d)?;
        for &(i, ws, bs, os) in &active {
            size_check(format!("weights of cell body {i}"), ws, d * kk)?;
            size_check(format!("biases of cell body {i}"), bs, 1)?;
            size_check(format!("outputs of cell body {i}"), os, geo.out_len())?;
        }

        // weights and biases go to the caches first
        for &(i, ws, bs, os) in &active {
            let weights = mem.read_words(ws)?;
            let bias = mem.read_words(bs)?[0];
            let cbu = &mut self.state.cbus[i];
            cbu.weight_caches = weights.chunks(kk).map(<[i32]>::to_vec).collect();
            cbu.bias = Some(bias);
            cbu.output_space = Some(os);
        }
        let input = mem.read_tensor(input_space, w, h, d, cfg.format)?;

        let mut weights = Vec::with_capacity(active.len() * d * kk);
        let mut biases = Vec::with_capacity(active.len());
        for &(i, ..) in &active {
            let cbu = &self.state.cbus[i];
            weights.extend(cbu.weight_caches.iter().flatten());
            biases.push(cbu.bias.expect("loaded above"));
        }
        let filters = FilterSet::from_raws(active.len(), d, cfg.kernel, cfg.format, weights, biases)?;
        let mut overflow = OverflowCounter::new();
        let out = self
            .web
            .forward_counted(&input, &filters, stride, mw.zero_pad, &mut overflow)?;
        for (t, &(_, _, _, os)) in active.iter().enumerate() {
            mem.write_words(os, out.plane(t))?;
        }

        let pass_cfg = FabricConfig {
            num_filters: active.len(),
            ..cfg
        };
        let cycles = cycle_model(&pass_cfg, w, h, stride, mw.zero_pad)?;
        self.report.cycles = self.report.cycles + cycles;
        self.report.overflow_events += overflow.events();
        self.report.layers_executed += 1;

        self.state.ifd = Some((w, h, d));
        self.state.stride = stride;
        self.state.zero_pad = mw.zero_pad;
        self.state.input_space = None;
        self.state.ports.fill(CbuPorts::default());
        self.state.phase = Phase::Idle;
        Ok(())
    }
}

/// Runs `program` to its `HALT`.
pub fn run_program(
    program: &[Instruction],
    mem: &mut MemoryImage,
    config: FabricConfig,
) -> Result<RunReport, ControllerError> {
    Controller::new(config, program.to_vec())?.run(mem)
}
