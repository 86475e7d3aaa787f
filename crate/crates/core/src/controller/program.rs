//! Memory layout planning and program generation for layer stacks.
//!
//! Each layer's weights sit in one block in (filter, plane, row, col) order,
//! its biases in another, and its output planes back to back so the block
//! can serve directly as the next layer's input. Layers with more filters
//! than cell bodies run in several `CONV` passes over the same input.

use crate::fabric::{FabricConfig, Geometry};
use crate::isa::{disassemble, Instruction};
use crate::memory::{AddressSpace, FilterSet, MemoryImage, Tensor};

use super::ControllerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub num_filters: usize,
    pub stride: usize,
    pub zero_pad: bool,
}

/// Extents are `(width, height, depth)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    pub spec: LayerSpec,
    pub input: AddressSpace,
    pub input_dims: (usize, usize, usize),
    pub weights: AddressSpace,
    pub biases: AddressSpace,
    pub output: AddressSpace,
    pub output_dims: (usize, usize, usize),
}

impl LayerLayout {
    fn plane_words(&self) -> usize {
        self.output_dims.0 * self.output_dims.1
    }

    pub fn weight_space(&self, filter: usize) -> Result<AddressSpace, ControllerError> {
        let n = self.weights.word_count() / self.spec.num_filters;
        Ok(self.weights.slice_words(filter * n, n)?)
    }

    pub fn bias_space(&self, filter: usize) -> Result<AddressSpace, ControllerError> {
        Ok(self.biases.slice_words(filter, 1)?)
    }

    pub fn output_space(&self, filter: usize) -> Result<AddressSpace, ControllerError> {
        let n = self.plane_words();
        Ok(self.output.slice_words(filter * n, n)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutPlan {
    pub layers: Vec<LayerLayout>,
}

impl LayoutPlan {
    /// Packs the input, then per layer its weights, biases and outputs,
    /// upward from `base`.
    pub fn sequential(
        config: &FabricConfig,
        input_dims: (usize, usize, usize),
        specs: &[LayerSpec],
        base: u32,
    ) -> Result<Self, ControllerError> {
        if specs.is_empty() {
            return Err(ControllerError::Layout("no layers".into()));
        }
        let mut cursor = base;
        let mut alloc = |words: usize| -> Result<AddressSpace, ControllerError> {
            let space = AddressSpace::words(cursor, words)?;
            cursor = u32::try_from(space.end()).map_err(|_| ControllerError::Layout("layout exceeds 4 GiB".into()))?;
            Ok(space)
        };
        let (w, h, d) = input_dims;
        let mut input = alloc(w * h * d)?;
        let mut dims = input_dims;
        let kk = config.kernel * config.kernel;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let geo = Geometry::new(dims.0, dims.1, config.kernel, spec.stride, spec.zero_pad, config.pool)?;
            let n = spec.num_filters;
            let weights = alloc(n * dims.2 * kk)?;
            let biases = alloc(n)?;
            let output = alloc(n * geo.out_len())?;
            let output_dims = (geo.out_width, geo.out_height, n);
            layers.push(LayerLayout {
                spec: *spec,
                input,
                input_dims: dims,
                weights,
                biases,
                output,
                output_dims,
            });
            input = output;
            dims = output_dims;
        }
        let plan = Self { layers };
        plan.validate(config)?;
        Ok(plan)
    }

    pub fn input(&self) -> AddressSpace {
        self.layers[0].input
    }

    pub fn output(&self) -> &LayerLayout {
        self.layers.last().expect("plan has layers")
    }

    pub fn memory_size(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| [l.input, l.weights, l.biases, l.output])
            .map(|s| s.end() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Checks shapes against the fabric and that no two regions overlap,
    /// other than each layer reading its predecessor's output.
    pub fn validate(&self, config: &FabricConfig) -> Result<(), ControllerError> {
        let layout = |m: String| ControllerError::Layout(m);
        if self.layers.is_empty() {
            return Err(layout("no layers".into()));
        }
        let kk = config.kernel * config.kernel;
        for (i, l) in self.layers.iter().enumerate() {
            let (w, h, d) = l.input_dims;
            if d != config.d_in {
                return Err(layout(format!(
                    "layer {i} input depth {d} on a fabric with d_in {}",
                    config.d_in
                )));
            }
            if l.spec.num_filters == 0 {
                return Err(layout(format!("layer {i} has no filters")));
            }
            let geo = Geometry::new(w, h, config.kernel, l.spec.stride, l.spec.zero_pad, config.pool)?;
            let n = l.spec.num_filters;
            let expect = [
                ("input", l.input, w * h * d),
                ("weights", l.weights, n * d * kk),
                ("biases", l.biases, n),
                ("output", l.output, n * geo.out_len()),
            ];
            for (what, space, words) in expect {
                if space.word_count() != words || !(space.length as usize).is_multiple_of(4) {
                    return Err(layout(format!(
                        "layer {i} {what} holds {} words, needs {words}",
                        space.word_count()
                    )));
                }
            }
            if l.output_dims != (geo.out_width, geo.out_height, n) {
                return Err(layout(format!("layer {i} output extents disagree with its geometry")));
            }
            if i > 0 {
                let prev = &self.layers[i - 1];
                if l.input != prev.output || l.input_dims != prev.output_dims {
                    return Err(layout(format!("layer {i} does not read layer {}'s output", i - 1)));
                }
            }
        }

        let mut regions = vec![("input of layer 0".to_string(), self.layers[0].input)];
        for (i, l) in self.layers.iter().enumerate() {
            regions.push((format!("weights of layer {i}"), l.weights));
            regions.push((format!("biases of layer {i}"), l.biases));
            regions.push((format!("output of layer {i}"), l.output));
        }
        for (a, (na, sa)) in regions.iter().enumerate() {
            for (nb, sb) in &regions[a + 1..] {
                if sa.overlaps(sb) {
                    return Err(layout(format!("{na} {sa} overlaps {nb} {sb}")));
                }
            }
        }
        Ok(())
    }

    /// Writes the input map and every layer's filters into `mem`.
    pub fn load(&self, mem: &mut MemoryImage, input: &Tensor, filters: &[FilterSet]) -> Result<(), ControllerError> {
        if filters.len() != self.layers.len() {
            return Err(ControllerError::Layout(format!(
                "{} filter sets for {} layers",
                filters.len(),
                self.layers.len()
            )));
        }
        let (w, h, d) = self.layers[0].input_dims;
        if (input.width(), input.height(), input.depth()) != (w, h, d) {
            return Err(ControllerError::Layout(format!(
                "input is {}x{}x{}, plan expects {w}x{h}x{d}",
                input.width(),
                input.height(),
                input.depth()
            )));
        }
        mem.write_tensor(self.input(), input)?;
        for (i, (l, f)) in self.layers.iter().zip(filters).enumerate() {
            if f.num_filters() != l.spec.num_filters || f.depth() != l.input_dims.2 {
                return Err(ControllerError::Layout(format!(
                    "layer {i} filter set is {}x{}, plan expects {}x{}",
                    f.num_filters(),
                    f.depth(),
                    l.spec.num_filters,
                    l.input_dims.2
                )));
            }
            mem.write_words(l.weights, f.weights())?;
            mem.write_words(l.biases, f.biases())?;
        }
        Ok(())
    }

    /// The last layer's output block as a tensor.
    pub fn read_output(&self, mem: &MemoryImage, config: &FabricConfig) -> Result<Tensor, ControllerError> {
        let l = self.output();
        let (w, h, d) = l.output_dims;
        Ok(mem.read_tensor(l.output, w, h, d, config.format)?)
    }
}

/// Instructions computing every layer of `plan`, ending in `HALT`.
pub fn layer_program(config: &FabricConfig, plan: &LayoutPlan) -> Result<Vec<Instruction>, ControllerError> {
    plan.validate(config)?;
    let gamma = config.num_filters;
    let mut program = Vec::new();
    for l in &plan.layers {
        let (w, h, d) = l.input_dims;
        let n = l.spec.num_filters;
        for first in (0..n).step_by(gamma) {
            program.push(Instruction::load_input(l.input));
            for (cbu, t) in (first..n.min(first + gamma)).enumerate() {
                program.push(Instruction::load_weights(cbu as u32, l.weight_space(t)?));
                program.push(Instruction::load_biases(cbu as u32, l.bias_space(t)?));
                program.push(Instruction::store_outputs(cbu as u32, l.output_space(t)?));
            }
            program.push(Instruction::convolve(
                w as u32,
                h as u32,
                d as u32,
                l.spec.stride as u32,
                l.spec.zero_pad,
            ));
        }
    }
    program.push(Instruction::stop());
    Ok(program)
}

/// [`layer_program`] as assembly text.
pub fn generate_layer_program(config: &FabricConfig, plan: &LayoutPlan) -> Result<String, ControllerError> {
    Ok(disassemble(&layer_program(config, plan)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{assemble, ConfigOp, MemKind};

    fn spec(num_filters: usize) -> LayerSpec {
        LayerSpec {
            num_filters,
            stride: 1,
            zero_pad: true,
        }
    }

    fn count(program: &[Instruction]) -> (usize, usize) {
        let convs = program
            .iter()
            .filter(|i| matches!(i, Instruction::MwControl(m) if m.config == ConfigOp::Convolve))
            .count();
        let mems = program
            .iter()
            .filter(|i| matches!(i, Instruction::MemControl(_)))
            .count();
        (convs, mems)
    }

    #[test]
    fn one_pass_when_filters_fit() {
        let cfg = FabricConfig::new(1, 3, 4);
        let plan = LayoutPlan::sequential(&cfg, (8, 8, 1), &[spec(4)], 0).unwrap();
        let prog = layer_program(&cfg, &plan).unwrap();
        assert_eq!(count(&prog), (1, 4 * 3 + 1));
        assert_eq!(prog.last(), Some(&Instruction::stop()));
    }

    #[test]
    fn extra_passes_when_filters_exceed_bodies() {
        let cfg = FabricConfig::new(1, 3, 4);
        let plan = LayoutPlan::sequential(&cfg, (8, 8, 1), &[spec(6)], 0).unwrap();
        let prog = layer_program(&cfg, &plan).unwrap();
        assert_eq!(count(&prog), (2, (1 + 4 * 3) + (1 + 2 * 3)));
        // the second pass reuses cell bodies 0 and 1 for filters 4 and 5
        let l = &plan.layers[0];
        assert!(prog.contains(&Instruction::store_outputs(1, l.output_space(5).unwrap())));
        assert!(!prog
            .iter()
            .any(|i| matches!(i, Instruction::MemControl(m) if m.cbu >= 4)));
    }

    #[test]
    fn text_round_trips() {
        let cfg = FabricConfig::new(2, 3, 2).with_pool(2);
        let plan = LayoutPlan::sequential(&cfg, (10, 10, 2), &[spec(2), spec(3)], 0x100).unwrap();
        let text = generate_layer_program(&cfg, &plan).unwrap();
        assert_eq!(assemble(&text).unwrap(), layer_program(&cfg, &plan).unwrap());
    }

    #[test]
    fn layout_is_packed_and_chained() {
        let cfg = FabricConfig::new(1, 3, 1).with_pool(2);
        let plan = LayoutPlan::sequential(&cfg, (8, 8, 1), &[spec(1), spec(1)], 0).unwrap();
        let (a, b) = (&plan.layers[0], &plan.layers[1]);
        assert_eq!(a.input, AddressSpace::new(0, 256).unwrap());
        assert_eq!(a.weights.base, 256);
        assert_eq!(a.output_dims, (4, 4, 1));
        assert_eq!(b.input, a.output);
        assert_eq!(b.output_dims, (2, 2, 1));
        assert_eq!(plan.memory_size() as u64, b.output.end());
    }

    #[test]
    fn overlapping_layout_is_rejected() {
        let cfg = FabricConfig::new(1, 3, 1);
        let mut plan = LayoutPlan::sequential(&cfg, (4, 4, 1), &[spec(1)], 0).unwrap();
        plan.layers[0].biases = AddressSpace::new(plan.layers[0].weights.base, 4).unwrap();
        let err = layer_program(&cfg, &plan).unwrap_err();
        assert!(
            matches!(err, ControllerError::Layout(ref m) if m.contains("overlaps")),
            "{err}"
        );
    }

    #[test]
    fn depth_mismatch_is_rejected() {
        let cfg = FabricConfig::new(2, 3, 4);
        // the second layer would see depth 3
        assert!(LayoutPlan::sequential(&cfg, (6, 6, 2), &[spec(3), spec(1)], 0).is_err());
        let _ = MemKind::ALL;
    }
}
