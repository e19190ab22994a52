use std::collections::BTreeSet;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_buildfs");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn buildfs(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("BUILDFS_TRACER").output().expect("binary runs")
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad JSONL line {l:?}: {e}")))
        .collect()
}

fn faults(out: &Output) -> BTreeSet<String> {
    records(out).into_iter().filter(|r| r["type"] == "fault").map(|r| r.to_string()).collect()
}

fn summary(out: &Output) -> Value {
    records(out).into_iter().find(|r| r["type"] == "summary").expect("summary record")
}

/// A trace where `link` reads an object file it never declared.
const FAULTY_TRACE: &str = r##"10 write(1, "#BuildFS#: Begin compile", 24) = 24
10 write(1, "#BuildFS#: compile output /w/a.o", 33) = 33
10 write(1, "#BuildFS#: compile input /w/a.c", 31) = 31
10 open("/w/a.c", O_RDONLY) = 3
10 read(3, "int", 4096) = 3
10 open("/w/a.o", O_WRONLY|O_CREAT|O_TRUNC, 0644) = 4
10 write(4, "obj", 3) = 3
10 close(4) = 0
10 close(3) = 0
10 write(1, "#BuildFS#: End compile", 22) = 22
10 write(1, "#BuildFS#: Begin link", 21) = 21
10 write(1, "#BuildFS#: link after compile", 29) = 29
10 write(1, "#BuildFS#: link output /w/app", 29) = 29
10 open("/w/a.o", O_RDONLY) = 3
10 read(3, "obj", 4096) = 3
10 open("/w/app", O_WRONLY|O_CREAT, 0755) = 4
10 write(4, "elf", 3) = 3
10 write(1, "#BuildFS#: End link", 19) = 19
"##;

#[test]
fn correct_trace_exits_zero() {
    let out = buildfs(&["analyze", "--trace", data("copy.strace").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_program_reports_one_record() {
    let out = buildfs(&["analyze", "--program", data("missing_input.buildfs").to_str().unwrap(), "--format", "jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let recs = records(&out);
    assert_eq!(recs[0]["type"], "header");
    assert_eq!(recs[0]["schema"], 1);
    let fs: Vec<&Value> = recs.iter().filter(|r| r["type"] == "fault").collect();
    assert_eq!(fs.len(), 1);
    assert_eq!(fs[0]["kind"], "missing_input");
    assert_eq!(fs[0]["task"], "t2");
    assert_eq!(fs[0]["path"], "/f3");
    assert_eq!(summary(&out)["faults"], 1);
}

#[test]
fn human_output_names_the_fault() {
    let out = buildfs(&["analyze", "--program", data("missing_input.buildfs").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("t2") && text.contains("/f3"), "{text}");
}

#[test]
fn unreadable_input_exits_three() {
    assert_eq!(buildfs(&["analyze", "--trace", "/nonexistent/trace"]).status.code(), Some(3));
    assert_eq!(buildfs(&["analyze", "--program", "/nonexistent/prog"]).status.code(), Some(3));
}

#[test]
fn malformed_program_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.buildfs");
    std::fs::write(&p, "task t (\"/a\" =\n").unwrap();
    assert_eq!(buildfs(&["analyze", "--program", p.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(buildfs(&[]).status.code(), Some(2));
    assert_eq!(buildfs(&["analyze", "--format", "xml", "--trace", "x"]).status.code(), Some(2));
}

#[test]
fn generated_builds_report_exactly_their_truth() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20u64 {
        let prog = dir.path().join(format!("{seed}.buildfs"));
        let truth = dir.path().join(format!("{seed}.truth"));
        let gen = buildfs(&["gen", "--seed", &seed.to_string(), "--truth", truth.to_str().unwrap()]);
        assert_eq!(gen.status.code(), Some(0));
        std::fs::write(&prog, &gen.stdout).unwrap();

        let out = buildfs(&["analyze", "--program", prog.to_str().unwrap(), "--format", "jsonl"]);
        let got: BTreeSet<String> = records(&out)
            .into_iter()
            .filter(|r| r["type"] == "fault")
            .map(|mut r| {
                let obj = r.as_object_mut().unwrap();
                obj.remove("access");
                obj.remove("conflicting_access");
                r.to_string()
            })
            .collect();
        let want: BTreeSet<String> = std::fs::read_to_string(&truth)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap().to_string())
            .collect();
        assert_eq!(got, want, "seed {seed}");
        assert_eq!(out.status.code(), Some(if want.is_empty() { 0 } else { 1 }));
    }
}

#[test]
fn analysis_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.strace");
    let gen = buildfs(&["gen", "--seed", "9", "--trace-lines", "20000"]);
    std::fs::write(&trace, &gen.stdout).unwrap();
    let args = ["analyze", "--trace", trace.to_str().unwrap(), "--format", "jsonl", "--mode", "make"];
    let a = buildfs(&args);
    let b = buildfs(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

/// A stand-in tracer: copies a canned trace to the `-o` target, then runs
/// the build so its exit status propagates.
fn fake_tracer(dir: &Path, trace: &Path) -> PathBuf {
    let script = dir.join("fake-strace");
    std::fs::write(
        &script,
        format!(
            "#!/bin/sh\nwhile [ \"$1\" != \"--\" ]; do [ \"$1\" = \"-o\" ] && out=\"$2\"; shift; done; shift\n\
             cat '{}' > \"$out\"\nexec \"$@\"\n",
            trace.display()
        ),
    )
    .unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    script
}

#[test]
fn online_run_matches_offline_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("faulty.strace");
    std::fs::write(&trace, FAULTY_TRACE).unwrap();
    let tracer = fake_tracer(dir.path(), &trace);

    let offline = buildfs(&["analyze", "--trace", trace.to_str().unwrap(), "--format", "jsonl"]);
    assert_eq!(offline.status.code(), Some(1));
    let online = Command::new(BIN)
        .args(["run", "--format", "jsonl", "--", "true"])
        .env("BUILDFS_TRACER", &tracer)
        .output()
        .unwrap();
    assert_eq!(online.status.code(), Some(1), "{}", String::from_utf8_lossy(&online.stderr));
    assert_eq!(faults(&online), faults(&offline));
    assert!(faults(&online).iter().any(|f| f.contains("\"task\":\"link\"") && f.contains("/w/a.o")));
    assert_eq!(summary(&online)["build_exit_status"], 0);
}

#[test]
fn failing_build_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("faulty.strace");
    std::fs::write(&trace, FAULTY_TRACE).unwrap();
    let tracer = fake_tracer(dir.path(), &trace);
    let out = Command::new(BIN)
        .args(["run", "--format", "jsonl", "--", "sh", "-c", "exit 5"])
        .env("BUILDFS_TRACER", &tracer)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(summary(&out)["build_exit_status"], 5);
    assert!(!faults(&out).is_empty());
}

#[test]
fn missing_tracer_is_an_analysis_failure() {
    let out = Command::new(BIN)
        .args(["run", "--", "true"])
        .env("BUILDFS_TRACER", "/nonexistent/strace")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}
