//! The `qfabric` binary against golden outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qfabric"));
    c.env_remove("QFABRIC_SEED");
    c
}

fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{cmd:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(cmd: &mut Command) -> String {
    String::from_utf8(run(cmd).stdout).unwrap()
}

#[test]
fn sweep_matches_golden() {
    let text = stdout(bin().args([
        "sweep",
        "--kernels",
        "3..9",
        "--range",
        "0:50",
        "--trials",
        "1000",
        "--seed",
        "7",
    ]));
    assert_eq!(text, golden("sweep_k3-9_0-50.csv"));
    let rows: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|&m| m < 0.1));
}

#[test]
fn sweep_seed_from_environment() {
    let flag = stdout(bin().args(["sweep", "--kernels", "3", "--trials", "100", "--seed", "11"]));
    let env = stdout(
        bin()
            .env("QFABRIC_SEED", "11")
            .args(["sweep", "--kernels", "3", "--trials", "100"]),
    );
    assert_eq!(flag, env);
    let other = stdout(
        bin()
            .env("QFABRIC_SEED", "12")
            .args(["sweep", "--kernels", "3", "--trials", "100"]),
    );
    assert_ne!(flag, other);
    let out = bin().env("QFABRIC_SEED", "seven").args(["sweep"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_to_file_with_several_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    run(bin()
        .args([
            "sweep",
            "--kernels",
            "3,5",
            "--range",
            "0:1",
            "--range",
            "0:10",
            "--trials",
            "100",
            "--out",
        ])
        .arg(&csv));
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    for bad in [["--range", "5:1"], ["--kernels", "9..3"], ["--trials", "0"]] {
        let out = bin().arg("sweep").args(bad).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{bad:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }
}

#[test]
fn resources_match_golden() {
    assert_eq!(
        stdout(bin().args(["resources", "--k", "3..9", "--din", "1,3"])),
        golden("resources.csv")
    );
    let one = stdout(bin().args(["resources", "--k", "3", "--din", "1"]));
    assert_eq!(one, "k,d_in,multipliers,adders,dsp\n3,1,9,32,36\n");
}

#[test]
fn cycles_match_golden() {
    let out = run(bin().args([
        "cycles",
        "--gamma",
        "16",
        "--din",
        "1",
        "--k",
        "3",
        "--dims",
        "224x224",
        "--zero-pad",
    ]));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden("cycles_g16_d1_k3.csv"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
    let bad = bin()
        .args(["cycles", "--gamma", "0", "--din", "1", "--k", "3"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn assemble_disassemble_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["two_layer.asm", "single_cbu.asm"] {
        let bin_path = dir.path().join("p.bin");
        let asm_path = dir.path().join("p.asm");
        run(bin().arg("assemble").arg(data(name)).arg(&bin_path));
        assert_eq!(fs::metadata(&bin_path).unwrap().len() % 8, 0);
        run(bin().arg("disassemble").arg(&bin_path).arg(&asm_path));
        let canonical = fs::read_to_string(&asm_path).unwrap();
        let again = dir.path().join("q.bin");
        run(bin().arg("assemble").arg(&asm_path).arg(&again));
        assert_eq!(fs::read(&again).unwrap(), fs::read(&bin_path).unwrap());
        if name == "two_layer.asm" {
            assert_eq!(canonical, fs::read_to_string(data(name)).unwrap());
        }
    }
}

#[test]
fn assembler_diagnostics_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.asm");
    fs::write(&bad, "NOP\nBOGUS 1\n").unwrap();
    let out = bin()
        .arg("assemble")
        .arg(&bad)
        .arg(dir.path().join("bad.bin"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("BOGUS"), "{err}");

    let empty = dir.path().join("empty.asm");
    fs::write(&empty, "").unwrap();
    let target = dir.path().join("empty.bin");
    run(bin().arg("assemble").arg(&empty).arg(&target));
    assert_eq!(fs::read(&target).unwrap(), Vec::<u8>::new());

    let odd = dir.path().join("odd.bin");
    fs::write(&odd, [0u8; 5]).unwrap();
    let out = bin()
        .arg("disassemble")
        .arg(&odd)
        .arg(dir.path().join("o.asm"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_reports_and_writes_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    for f in [
        "two_layer.toml",
        "two_layer.asm",
        "input.qtns",
        "layer1.qwgt",
        "layer2.qwgt",
    ] {
        fs::copy(data(f), dir.path().join(f)).unwrap();
    }
    let manifest = dir.path().join("two_layer.toml");
    let report = stdout(bin().arg("run").arg(&manifest));
    assert!(report.contains("layers_executed=3\n"), "{report}");
    assert!(report.contains("overflow_events=0\n"));
    assert!(report.contains("cycle_model_compute="));
    let out = fs::read(dir.path().join("two_layer.out.qtns")).unwrap();
    assert_eq!(out, fs::read(data("two_layer.golden.qtns")).unwrap());

    let again = stdout(bin().arg("run").arg(&manifest));
    assert_eq!(again, report);
    assert_eq!(fs::read(dir.path().join("two_layer.out.qtns")).unwrap(), out);

    let missing = bin().arg("run").arg(dir.path().join("nope.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}
