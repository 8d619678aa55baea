use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel)
}

fn layoutgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layoutgen")).args(args).output().unwrap()
}

fn run(netlist: &str, script: &Path, out: &Path, extra: &[&str]) -> Output {
    let tech = corpus("abs3ml.json");
    let netlist = corpus(netlist);
    let mut args = vec![
        "run",
        "--tech",
        tech.to_str().unwrap(),
        "--netlist",
        netlist.to_str().unwrap(),
        "--script",
        script.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    layoutgen(&args)
}

#[test]
fn corpus_script_runs_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("netlists/nand2.sp", &corpus("scripts/nand2.dsl"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["design"], "NAND2");
    assert_eq!(report["drc_violations"], 0);
    assert_eq!(report["lvs_verdict"], "MATCH");
    for f in ["layout.json", "layout.svg", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn syntax_error_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.dsl");
    std::fs::write(
        &script,
        "place_rows\nroute net A auto\nroute net B auto\n# comment\n\nreport drc\nroute net ZN trunk M2 trak 8\n",
    )
    .unwrap();
    let out = run("netlists/nand2.sp", &script, &dir.path().join("out"), &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7"), "{err}");
    assert_eq!(err.matches("expected \"track\"").count(), 1, "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unclean_layout_fails_unless_relaxed() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("place.dsl");
    std::fs::write(&script, "place_rows\n").unwrap();
    let strict = run("netlists/nand2.sp", &script, &dir.path().join("a"), &[]);
    assert!(!strict.status.success());
    assert!(String::from_utf8_lossy(&strict.stderr).contains("LVS Mismatch"));
    let relaxed = run("netlists/nand2.sp", &script, &dir.path().join("b"), &["--no-strict"]);
    assert!(relaxed.status.success());
}

#[test]
fn check_and_render() {
    let tech = corpus("abs3ml.json");
    let out = layoutgen(&["check", "--tech", tech.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("abs3ml:"));

    let dir = tempfile::tempdir().unwrap();
    assert!(run("netlists/nand2.sp", &corpus("scripts/nand2.dsl"), dir.path(), &[]).status.success());
    let svg = dir.path().join("hidden.svg");
    let layout = dir.path().join("layout.json");
    let out = layoutgen(&[
        "render",
        "--layout",
        layout.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
        "--hide-layer",
        "M2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hidden = std::fs::read_to_string(svg).unwrap();
    let full = std::fs::read_to_string(dir.path().join("layout.svg")).unwrap();
    let db: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(layout).unwrap()).unwrap();
    let m2 = db["wires"].as_array().unwrap().iter().filter(|w| w["layer"] == "M2").count();
    assert!(m2 > 0);
    let wires = |t: &str| t.matches("class=\"wire\"").count();
    assert_eq!(wires(&full) - wires(&hidden), m2);
}

#[test]
fn missing_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("netlists/nope.sp", &corpus("scripts/nand2.dsl"), dir.path(), &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.sp"));
}
