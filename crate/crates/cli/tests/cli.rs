use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn fixture(name: &str, ext: &str) -> String {
    fixtures()
        .join(format!("{name}.{ext}"))
        .display()
        .to_string()
}

fn flowcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowcert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn analyze_writes_the_certificate_and_reports_leaks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("leak.dcert");
    let o = flowcert(&[
        "analyze",
        &fixture("leak_chain", "ir"),
        "-c",
        &fixture("leak_chain", "cfgtaint"),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("leak in App.foo/1: id -> sms"));
    let written = fs::read_to_string(&out).unwrap();
    assert_eq!(
        written,
        fs::read_to_string(fixture("leak_chain", "dcert")).unwrap()
    );
}

#[test]
fn analyze_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = vec![];
    for i in 0..2 {
        let out = dir.path().join(format!("{i}.dcert"));
        let o = flowcert(&[
            "analyze",
            &fixture("recursion", "ir"),
            "-c",
            &fixture("recursion", "cfgtaint"),
            "-o",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        texts.push(fs::read(&out).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn check_accepts_a_valid_certificate() {
    let o = flowcert(&[
        "check",
        &fixture("leak_chain", "ir"),
        "-c",
        &fixture("leak_chain", "cfgtaint"),
        "--cert",
        &fixture("leak_chain", "dcert"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "valid");
}

#[test]
fn check_rejects_a_missing_entry() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("leak_chain", "dcert")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["entries"].as_object_mut().unwrap().remove("App.Send/2");
    let cert = dir.path().join("bad.dcert");
    fs::write(&cert, v.to_string()).unwrap();
    let o = flowcert(&[
        "--json-output",
        "check",
        &fixture("leak_chain", "ir"),
        "-c",
        &fixture("leak_chain", "cfgtaint"),
        "--cert",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["verdict"], "invalid");
    assert_eq!(r["failure"]["reason"], "missing-entry");
    assert_eq!(r["failure"]["method"], "App.Send/2");
}

#[test]
fn check_prints_the_diff_of_a_tampered_summary() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("leak_chain", "dcert")).unwrap();
    let cert = dir.path().join("bad.dcert");
    fs::write(&cert, text.replace("\"p:1\"", "\"p:0\"")).unwrap();
    let o = flowcert(&[
        "check",
        &fixture("leak_chain", "ir"),
        "-c",
        &fixture("leak_chain", "cfgtaint"),
        "--cert",
        cert.to_str().unwrap(),
        "--parallel",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("invalid: summary-mismatch in App.Send/2"), "{s}");
    assert!(s.contains("- missing (sym:sms, p:1)"), "{s}");
    assert!(s.contains("+ unexpected (sym:sms, p:0)"), "{s}");
}

#[test]
fn malformed_certificate_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("bad.dcert");
    fs::write(&cert, "{\"version\": 1").unwrap();
    let o = flowcert(&[
        "check",
        &fixture("loops", "ir"),
        "-c",
        &fixture("loops", "cfgtaint"),
        "--cert",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn operational_errors_exit_with_two() {
    let missing = flowcert(&["analyze", "/nonexistent.ir", "-c", "/nonexistent.cfg"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("cannot read"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ir");
    fs::write(&bad, "class A { method m(this) { x := y } }").unwrap();
    let o = flowcert(&[
        "analyze",
        bad.to_str().unwrap(),
        "-c",
        &fixture("loops", "cfgtaint"),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let usage = flowcert(&["check"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn leaks_as_json() {
    let o = flowcert(&[
        "--json-output",
        "leaks",
        &fixture("leak_chain", "ir"),
        "-c",
        &fixture("leak_chain", "cfgtaint"),
        "--cert",
        &fixture("leak_chain", "dcert"),
        "--entry-only",
    ]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["entry_only"], true);
    assert_eq!(r["leaks"].as_array().unwrap().len(), 1);
    assert_eq!(r["leaks"][0]["source"], "id");
}

#[test]
fn debug_graphs_are_dot() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, cg) = (dir.path().join("cfg.dot"), dir.path().join("cg.dot"));
    let o = flowcert(&[
        "analyze",
        &fixture("dispatch", "ir"),
        "-c",
        &fixture("dispatch", "cfgtaint"),
        "--emit-cfg",
        cfg.to_str().unwrap(),
        "--emit-cg",
        cg.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let cfg = fs::read_to_string(cfg).unwrap();
    assert_eq!(cfg.matches("digraph").count(), 4);
    let cg = fs::read_to_string(cg).unwrap();
    assert!(cg.starts_with("digraph"));
    assert!(cg.contains("Disp.relay/3"));
}

#[test]
fn bench_on_a_deep_chain() {
    let o = flowcert(&[
        "--json-output",
        "bench",
        "--sizes",
        "80",
        "--depth",
        "50",
        "--repetitions",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let row = &rows[0];
    assert_eq!(row["methods"], 80);
    assert_eq!(row["check_summarise_calls"], 80);
    assert!(row["analyze_summarise_calls"].as_u64().unwrap() > 80);
    assert_eq!(row["valid"], true);
}

#[test]
fn bench_prints_tsv() {
    let o = flowcert(&[
        "bench",
        "--sizes",
        "30",
        "--depth",
        "4",
        "--repetitions",
        "1",
    ]);
    assert!(o.status.success());
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("methods\tdepth\tanalyze_ms"));
    assert!(lines[1].starts_with("30\t4\t"));
}

#[test]
fn generated_program_analyzes() {
    let dir = tempfile::tempdir().unwrap();
    let (ir, cfg) = (dir.path().join("g.ir"), dir.path().join("g.cfg"));
    let o = flowcert(&[
        "gen",
        "--methods",
        "12",
        "--depth",
        "3",
        "--seed",
        "5",
        "-o",
        ir.to_str().unwrap(),
        "--config-out",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let o = flowcert(&[
        "analyze",
        ir.to_str().unwrap(),
        "-c",
        cfg.to_str().unwrap(),
        "--entry-only",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("leak in Gen.m0/4"));
}

#[test]
fn infeasible_generator_spec_is_an_error() {
    let o = flowcert(&["gen", "--methods", "2", "--depth", "5"]);
    assert_eq!(o.status.code(), Some(2));
}
