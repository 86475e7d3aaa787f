//! Command implementations behind the `qfabric` binary.
//!
//! A run is described by a TOML manifest:
//!
//! ```toml
//! [fabric]
//! d_in = 2
//! kernel = 3
//! num_filters = 2
//! pool = 2
//! activation = "relu"
//! total_bits = 32
//! frac_bits = 15
//!
//! [memory]
//! size = 65536      # optional; defaults to what the layout needs
//!
//! [io]
//! input = "input.qtns"
//! output = "output.qtns"
//! program = "net.asm" # optional; generated from the layers when absent
//!
//! [[layer]]
//! filters = "layer1.qwgt"
//! stride = 1
//! zero_pad = true
//! ```
//!
//! Relative paths resolve against the manifest's directory. The layout is
//! the sequential one from [`LayoutPlan::sequential`]; a supplied program
//! must address memory the same way.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::analysis::{
    cycle_model, error_sweep, write_cycles_csv, write_resources_csv, write_sweep_csv, AnalysisError, CycleRow,
    ResourceRow,
};
use crate::controller::{layer_program, run_program, ControllerError, LayerSpec, LayoutPlan, RunReport};
use crate::fabric::{Activation, FabricConfig, FabricError};
use crate::isa::{assemble, disassemble, from_binary, to_binary, AsmError, BinaryError, EncodeError, Instruction};
use crate::memory::{load_filter_file, load_tensor_file, save_tensor_file, FileError, MemoryImage};
use crate::qformat::{QError, QFormat};

pub const SEED_ENV: &str = "QFABRIC_SEED";
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: FileError },
    #[error("{path}: {source}")]
    Asm { path: PathBuf, source: AsmError },
    #[error("{path}: {source}")]
    Binary { path: PathBuf, source: BinaryError },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{0}")]
    Flag(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn file_err(path: &Path) -> impl FnOnce(FileError) -> CliError + '_ {
    move |source| CliError::File {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FabricSection {
    pub d_in: usize,
    pub kernel: usize,
    pub num_filters: usize,
    #[serde(default = "one")]
    pub pool: usize,
    #[serde(default = "passthrough")]
    pub activation: Activation,
    #[serde(default = "total_bits")]
    pub total_bits: u32,
    #[serde(default = "frac_bits")]
    pub frac_bits: u32,
}

fn one() -> usize {
    1
}
fn passthrough() -> Activation {
    Activation::Passthrough
}
fn total_bits() -> u32 {
    QFormat::Q16_15.total_bits()
}
fn frac_bits() -> u32 {
    QFormat::Q16_15.frac_bits()
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MemorySection {
    pub size: Option<usize>,
    #[serde(default)]
    pub base: u32,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub input: PathBuf,
    pub output: PathBuf,
    pub program: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub filters: PathBuf,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub zero_pad: bool,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub fabric: FabricSection,
    #[serde(default)]
    pub memory: MemorySection,
    pub io: IoSection,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerSection>,
}

impl RunManifest {
    /// Parses and validates; paths come back resolved against `dir`.
    pub fn parse(text: &str, dir: &Path, path: &Path) -> Result<Self, CliError> {
        let bad = |message: String| CliError::Manifest {
            path: path.to_path_buf(),
            message,
        };
        let mut m: RunManifest = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        m.config().map_err(|e| bad(e.to_string()))?;
        if m.layers.is_empty() {
            return Err(bad("at least one [[layer]] is required".into()));
        }
        for (i, l) in m.layers.iter().enumerate() {
            if l.stride == 0 {
                return Err(bad(format!("layer {i}: stride must be at least 1")));
            }
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        resolve(&mut m.io.input);
        resolve(&mut m.io.output);
        if let Some(p) = m.io.program.as_mut() {
            resolve(p);
        }
        for l in &mut m.layers {
            resolve(&mut l.filters);
        }
        let mut inputs = vec![&m.io.input];
        inputs.extend(m.io.program.as_ref());
        inputs.extend(m.layers.iter().map(|l| &l.filters));
        if let Some(missing) = inputs.into_iter().find(|p| !p.is_file()) {
            return Err(bad(format!("{} does not exist", missing.display())));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir, path)
    }

    pub fn config(&self) -> Result<FabricConfig, FabricError> {
        let f = &self.fabric;
        let format = QFormat::new(f.total_bits, f.frac_bits).map_err(|e: QError| FabricError::Config(e.to_string()))?;
        let cfg = FabricConfig::new(f.d_in, f.kernel, f.num_filters)
            .with_pool(f.pool)
            .with_activation(f.activation)
            .with_format(format);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn specs(&self, filter_counts: &[usize]) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .zip(filter_counts)
            .map(|(l, &n)| LayerSpec {
                num_filters: n,
                stride: l.stride,
                zero_pad: l.zero_pad,
            })
            .collect()
    }
}

pub fn read_program(path: &Path) -> Result<Vec<Instruction>, CliError> {
    if path.extension().is_some_and(|e| e == "bin") {
        let bytes = fs::read(path).map_err(io_err(path))?;
        from_binary(&bytes).map_err(|source| CliError::Binary {
            path: path.to_path_buf(),
            source,
        })
    } else {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        assemble(&text).map_err(|source| CliError::Asm {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn cmd_assemble(input: &Path, output: &Path) -> Result<usize, CliError> {
    let text = fs::read_to_string(input).map_err(io_err(input))?;
    let program = assemble(&text).map_err(|source| CliError::Asm {
        path: input.to_path_buf(),
        source,
    })?;
    fs::write(output, to_binary(&program)?).map_err(io_err(output))?;
    Ok(program.len())
}

pub fn cmd_disassemble(input: &Path, output: &Path) -> Result<usize, CliError> {
    let bytes = fs::read(input).map_err(io_err(input))?;
    let program = from_binary(&bytes).map_err(|source| CliError::Binary {
        path: input.to_path_buf(),
        source,
    })?;
    fs::write(output, disassemble(&program)).map_err(io_err(output))?;
    Ok(program.len())
}

/// Loads the manifest's files, runs the program and writes the last
/// layer's output.
pub fn cmd_run(manifest: &Path) -> Result<RunReport, CliError> {
    let m = RunManifest::load(manifest)?;
    let cfg = m.config()?;
    let input = load_tensor_file(&m.io.input).map_err(file_err(&m.io.input))?;
    let filters = m
        .layers
        .iter()
        .map(|l| load_filter_file(&l.filters).map_err(file_err(&l.filters)))
        .collect::<Result<Vec<_>, _>>()?;
    let mismatch = |what: String| CliError::Manifest {
        path: manifest.to_path_buf(),
        message: what,
    };
    if input.format() != cfg.format {
        return Err(mismatch(format!(
            "input is {}, fabric is {}",
            input.format(),
            cfg.format
        )));
    }
    for (l, f) in m.layers.iter().zip(&filters) {
        if f.format() != cfg.format || f.kernel() != cfg.kernel {
            return Err(mismatch(format!(
                "{}: {}x{k}x{k} {} filters on a {} fabric with kernel {}",
                l.filters.display(),
                f.num_filters(),
                f.format(),
                cfg.format,
                cfg.kernel,
                k = f.kernel()
            )));
        }
    }
    let counts: Vec<usize> = filters.iter().map(|f| f.num_filters()).collect();
    let plan = LayoutPlan::sequential(
        &cfg,
        (input.width(), input.height(), input.depth()),
        &m.specs(&counts),
        m.memory.base,
    )?;
    let program = match &m.io.program {
        Some(p) => read_program(p)?,
        None => layer_program(&cfg, &plan)?,
    };
    let needed = plan.memory_size();
    let size = m.memory.size.unwrap_or(needed);
    if size < needed {
        return Err(mismatch(format!(
            "memory size {size} is below the {needed} bytes the layout needs"
        )));
    }
    let mut mem = MemoryImage::new(size);
    plan.load(&mut mem, &input, &filters)?;
    let report = run_program(&program, &mut mem, cfg)?;
    let out = plan.read_output(&mem, &cfg)?;
    save_tensor_file(&m.io.output, &out).map_err(file_err(&m.io.output))?;
    Ok(report)
}

/// `a..b` (inclusive) or a comma list.
pub fn parse_kernels(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Flag(format!("invalid kernel list `{s}` (expected e.g. 3..9 or 3,5,7)"));
    let num = |t: &str| t.trim().parse::<usize>().ok().filter(|&k| k > 0);
    let ks = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a).ok_or_else(bad)?, num(b).ok_or_else(bad)?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| num(t).ok_or_else(bad))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(ks)
}

/// `lo:hi`
pub fn parse_range(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Flag(format!("invalid range `{s}` (expected lo:hi)"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// `WxH`
pub fn parse_dims(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Flag(format!("invalid dimensions `{s}` (expected WxH)"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = a.trim().parse().map_err(|_| bad())?;
    let h: usize = b.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// An explicit flag wins, then `QFABRIC_SEED`, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<u64, CliError> {
    match (flag, env) {
        (Some(s), _) => Ok(s),
        (None, Some(v)) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Flag(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        (None, None) => Ok(DEFAULT_SEED),
    }
}

pub fn cmd_sweep<W: Write>(
    kernels: &[usize],
    ranges: &[(f64, f64)],
    trials: usize,
    seed: u64,
    out: W,
) -> Result<usize, CliError> {
    if kernels.is_empty() || ranges.is_empty() {
        return Err(CliError::Flag("sweep needs at least one kernel and one range".into()));
    }
    let rows = error_sweep(kernels, ranges, trials, seed)?;
    write_sweep_csv(out, &rows)?;
    Ok(rows.len())
}

pub fn cmd_resources<W: Write>(kernels: &[usize], depths: &[usize], out: W) -> Result<usize, CliError> {
    if depths.contains(&0) {
        return Err(CliError::Flag("d_in must be at least 1".into()));
    }
    let rows: Vec<_> = kernels
        .iter()
        .flat_map(|&k| depths.iter().map(move |&d| ResourceRow::new(k as u64, d as u64)))
        .collect();
    write_resources_csv(out, &rows)?;
    Ok(rows.len())
}

/// `weight_load`, `compute` and `total` are model estimates.
#[allow(clippy::too_many_arguments)]
pub fn cmd_cycles<W: Write>(
    gamma: usize,
    d_in: usize,
    k: usize,
    dims: (usize, usize),
    stride: usize,
    zero_pad: bool,
    pool: usize,
    out: W,
) -> Result<CycleRow, CliError> {
    let cfg = FabricConfig::new(d_in, k, gamma).with_pool(pool);
    let c = cycle_model(&cfg, dims.0, dims.1, stride, zero_pad)?;
    let row = CycleRow::new(gamma as u64, d_in as u64, k as u64, c);
    write_cycles_csv(out, &[row])?;
    Ok(row)
}
