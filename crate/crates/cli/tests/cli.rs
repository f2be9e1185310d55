use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = r#"
name = "cli-small"
shape = "square"
size = 1.0
elements = 128
electrodes = 8
d0 = 0.1

[[inclusions]]
kind = "rect"
min = [0.25, 0.25]
max = [0.5, 0.625]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_membrane-eit")).args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn table1_reports_reference_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["table1", "square", "--out", out]);
    assert!(o.status.success());
    let t = text(&o);
    assert!(t.contains("256x512") && t.contains("256x262144"), "{t}");
    assert!(dir.path().join("table1-square.json").exists());
    let o = run(&["table1", "disk"]);
    assert!(text(&o).contains("256x436921"));
}

#[test]
fn simulate_then_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, SCENARIO).unwrap();
    let sc = scenario.to_str().unwrap();
    let sim = dir.path().join("sim");
    let o = run(&["simulate", sc, "--out", sim.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let w = sim.join("w.csv");
    assert!(w.exists());

    for (sub, extra) in [("rec", vec![]), ("rec0", vec!["--delta", "0", "--beta", "1e-8", "--merge-pairs", "false"])] {
        let out = dir.path().join(sub);
        let mut args = vec!["reconstruct", sc, w.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend(extra);
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
        assert!(manifest.contains("\"command\": \"reconstruct\""));
        for f in ["estimate.csv", "estimate.pgm", "baseline.csv", "truth.pgm"] {
            assert!(Path::new(&out.join(f)).exists(), "{f}");
        }
    }
    let m0 = std::fs::read_to_string(dir.path().join("rec0/manifest.json")).unwrap();
    assert!(m0.contains("\"columns\": 72") && m0.contains("\"rows\": 64"), "{m0}");

    let out = dir.path().join("rec-tiny");
    let o = run(&["reconstruct", sc, w.to_str().unwrap(), "--out", out.to_str().unwrap(), "--beta", "1e-40"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("too small"));
}

#[test]
fn bad_input_fails_cleanly() {
    let o = run(&["simulate", "/nonexistent/scenario.toml"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert!(!run(&["table1", "triangle"]).status.success());
    assert!(!run(&["reconstruct", "a.toml", "w.csv", "--delta", "x"]).status.success());
}
