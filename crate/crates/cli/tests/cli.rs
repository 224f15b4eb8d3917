use std::path::Path;
use std::process::{Command, Output};

fn pfcnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfcnoise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "seed = 3\n");
    let jsonl = dir.path().join("frames.jsonl");
    let out = pfcnoise(&["simulate", &cfg, "--jsonl", jsonl.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("tx_id,ber,effective_bps,lb_hz,ub_hz,frame_start_s,missed")
    );
    assert!(lines.next().unwrap().starts_with("0,0,28.48484848,"));
    assert_eq!(std::fs::read_to_string(jsonl).unwrap().lines().count(), 1);
}

#[test]
fn exported_trace_decodes_and_idle_trace_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        "seed = 4\nbackground = { count = 0 }\n[[transmitters]]\npayload = { kind = \"bits\", bits = \"1010\" }\nframe = { payload_len_bits = 4 }\n",
    );
    let trace = dir.path().join("t.bin");
    let out = pfcnoise(&["export-trace", &cfg, "-o", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = pfcnoise(&["decode", trace.to_str().unwrap(), "--payload-bits", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",false,1010"), "{text}");

    let idle = write(dir.path(), "idle.toml", "duration_s = 2.0\ntransmitters = []\n");
    let trace = dir.path().join("idle.bin");
    assert!(pfcnoise(&["export-trace", &idle, "-o", trace.to_str().unwrap()])
        .status
        .success());
    let out = pfcnoise(&["scan", trace.to_str().unwrap(), "--pilot-start-s", "0.4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_inputs_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pfcnoise(&["simulate", "/no/such/file.toml"]).status.code(), Some(1));
    let cfg = write(dir.path(), "bad.toml", "sed = 3\n");
    assert_eq!(pfcnoise(&["simulate", &cfg]).status.code(), Some(1));
    let cfg = write(dir.path(), "s.toml", "");
    let out = pfcnoise(&["sweep", &cfg, "--axis", "no.such.field", "--values", "1"]);
    assert_eq!(out.status.code(), Some(1));
}
