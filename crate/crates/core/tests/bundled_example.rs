//! The bundled two-layer example under `examples/data`.
//!
//! The golden output comes from the fixed reference oracle, not from the
//! controller. Regenerate with
//! `cargo test -p qfabric --test bundled_example -- --ignored`.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::{filters, rng, tensor, Q};
use qfabric::analysis::fixed_reference_oracle;
use qfabric::cli::{cmd_run, RunManifest};
use qfabric::controller::{generate_layer_program, LayerSpec, LayoutPlan};
use qfabric::fabric::{Activation, FabricConfig};
use qfabric::memory::{load_filter_file, load_tensor_file, save_filter_file, save_tensor_file, Tensor};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data")
}

const MANIFEST: &str = r#"# Two convolution layers on a fabric of two cell bodies.
# The second layer has three filters, so it runs in two passes.

[fabric]
d_in = 2
kernel = 3
num_filters = 2
pool = 2
activation = "tanh"
total_bits = 32
frac_bits = 15

[io]
input = "input.qtns"
output = "two_layer.out.qtns"
program = "two_layer.asm"

[[layer]]
filters = "layer1.qwgt"
stride = 1
zero_pad = true

[[layer]]
filters = "layer2.qwgt"
stride = 1
zero_pad = true
"#;

fn oracle_output(m: &RunManifest, input: &Tensor) -> Tensor {
    let cfg = m.config().unwrap();
    let mut x = input.clone();
    for l in &m.layers {
        let f = load_filter_file(&l.filters).unwrap();
        x = fixed_reference_oracle(&x, &f, l.stride, l.zero_pad, cfg.activation, cfg.pool).unwrap();
    }
    x
}

#[test]
#[ignore = "rewrites the bundled example files"]
fn regenerate() {
    let dir = data_dir();
    fs::create_dir_all(&dir).unwrap();
    let mut r = rng(2024);
    save_tensor_file(dir.join("input.qtns"), &tensor(&mut r, (10, 10, 2), Q, 2.0)).unwrap();
    save_filter_file(dir.join("layer1.qwgt"), &filters(&mut r, 2, 2, 3, Q, 0.5)).unwrap();
    save_filter_file(dir.join("layer2.qwgt"), &filters(&mut r, 3, 2, 3, Q, 0.5)).unwrap();
    fs::write(dir.join("two_layer.toml"), MANIFEST).unwrap();

    let cfg = FabricConfig::new(2, 3, 2)
        .with_pool(2)
        .with_activation(Activation::Tanh);
    let spec = |n| LayerSpec {
        num_filters: n,
        stride: 1,
        zero_pad: true,
    };
    let plan = LayoutPlan::sequential(&cfg, (10, 10, 2), &[spec(2), spec(3)], 0).unwrap();
    let text = generate_layer_program(&cfg, &plan).unwrap();
    fs::write(dir.join("two_layer.asm"), text).unwrap();

    let m = RunManifest::load(&dir.join("two_layer.toml")).unwrap();
    let input = load_tensor_file(&m.io.input).unwrap();
    save_tensor_file(dir.join("two_layer.golden.qtns"), &oracle_output(&m, &input)).unwrap();
}

fn copy_data() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for e in fs::read_dir(data_dir()).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    tmp
}

#[test]
fn golden_matches_the_oracle() {
    let m = RunManifest::load(&data_dir().join("two_layer.toml")).unwrap();
    let input = load_tensor_file(&m.io.input).unwrap();
    let golden = load_tensor_file(data_dir().join("two_layer.golden.qtns")).unwrap();
    assert_eq!(oracle_output(&m, &input), golden);
    assert_eq!((golden.width(), golden.height(), golden.depth()), (2, 2, 3));
}

#[test]
fn run_reproduces_golden_bytes() {
    let tmp = copy_data();
    let manifest = tmp.path().join("two_layer.toml");
    let report = cmd_run(&manifest).unwrap();
    assert_eq!(report.layers_executed, 3);
    assert_eq!(report.overflow_events, 0);
    let out = fs::read(tmp.path().join("two_layer.out.qtns")).unwrap();
    assert_eq!(out, fs::read(data_dir().join("two_layer.golden.qtns")).unwrap());
    cmd_run(&manifest).unwrap();
    assert_eq!(fs::read(tmp.path().join("two_layer.out.qtns")).unwrap(), out);
}

#[test]
fn generated_program_matches_the_committed_text() {
    let m = RunManifest::load(&data_dir().join("two_layer.toml")).unwrap();
    let cfg = m.config().unwrap();
    let input = load_tensor_file(&m.io.input).unwrap();
    let counts: Vec<usize> = m
        .layers
        .iter()
        .map(|l| load_filter_file(&l.filters).unwrap().num_filters())
        .collect();
    let plan = LayoutPlan::sequential(
        &cfg,
        (input.width(), input.height(), input.depth()),
        &m.specs(&counts),
        0,
    )
    .unwrap();
    let committed = fs::read_to_string(m.io.program.as_ref().unwrap()).unwrap();
    assert_eq!(generate_layer_program(&cfg, &plan).unwrap(), committed);
}

#[test]
fn run_without_a_program_generates_one() {
    let tmp = copy_data();
    let text = fs::read_to_string(tmp.path().join("two_layer.toml")).unwrap();
    let manifest = tmp.path().join("generated.toml");
    fs::write(&manifest, text.replace("program = \"two_layer.asm\"\n", "")).unwrap();
    cmd_run(&manifest).unwrap();
    assert_eq!(
        fs::read(tmp.path().join("two_layer.out.qtns")).unwrap(),
        fs::read(data_dir().join("two_layer.golden.qtns")).unwrap()
    );
}

#[test]
fn pool_zero_is_rejected() {
    let tmp = copy_data();
    let text = fs::read_to_string(tmp.path().join("two_layer.toml")).unwrap();
    let manifest = tmp.path().join("bad.toml");
    fs::write(&manifest, text.replace("pool = 2", "pool = 0")).unwrap();
    let err = cmd_run(&manifest).unwrap_err();
    assert!(err.to_string().contains("pool"), "{err}");
    assert!(!tmp.path().join("two_layer.out.qtns").exists());
}
