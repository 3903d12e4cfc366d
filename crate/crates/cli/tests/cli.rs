use std::fs;
use std::io::Write;
use std::process::{Command, Output, Stdio};

fn dynmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Report lines that do not depend on timing.
fn stable(report: &str) -> Vec<&str> {
    report
        .lines()
        .filter(|l| !l.contains("nanos") && !l.contains("_ms=") && !l.contains("per_sec"))
        .collect()
}

#[test]
fn left_intro_has_one_expansion_up_to_two() {
    let o = dynmatch(&[
        "graph",
        "verify",
        "--fixture",
        "left",
        "--e",
        "1",
        "--k",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("expansion=holds\n"), "{out}");
    assert!(out.contains("offline_matching=true\n"));
    assert!(out.ends_with("status=ok\n"));
}

#[test]
fn failed_expansion_exits_one() {
    let o = dynmatch(&[
        "graph",
        "verify",
        "--fixture",
        "left",
        "--e",
        "3/2",
        "--k",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("violating_set="));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(dynmatch(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        dynmatch(&["graph", "verify", "--e", "1", "--k", "2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        dynmatch(&[
            "match",
            "soak",
            "--fixture",
            "left",
            "--k",
            "2",
            "--matcher",
            "nope"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn injected_fault_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("expander.graph");
    let g = g.to_str().unwrap();
    let o = dynmatch(&[
        "graph", "expander", "--left", "40", "--right", "800", "--degree", "9", "--e", "8", "--k",
        "4", "--out", g,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let base = [
        "match",
        "soak",
        "--graph",
        g,
        "--matcher",
        "poly",
        "--k",
        "4",
        "--steps",
        "500",
    ];
    let o = dynmatch(&base);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let mut args = base.to_vec();
    args.extend(["--inject-fault", "20"]);
    let o = dynmatch(&args);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("fault_fired=true\n"), "{out}");
    assert!(out.contains("status=violation\n"));
}

#[test]
fn graph_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.graph");
    let second = dir.path().join("b.graph");
    let o = dynmatch(&[
        "graph",
        "random",
        "--left",
        "12",
        "--right",
        "9",
        "--degree",
        "3",
        "--seed",
        "5",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = dynmatch(&[
        "graph",
        "cat",
        "--graph",
        first.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let a = fs::read(&first).unwrap();
    assert!(a.starts_with(b"bigraph 12 9\n"));
    assert_eq!(a, fs::read(&second).unwrap());
}

#[test]
fn runs_are_reproducible_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("game.txt");
    let run = |seed: &str| {
        let args = [
            "game",
            "run",
            "--fixture",
            "complete-30x30",
            "--matcher",
            "theorem",
            "--k",
            "4",
            "--steps",
            "300",
            "--seed",
            seed,
            "--transcript",
            t.to_str().unwrap(),
        ];
        let o = dynmatch(&args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        stdout(&o)
    };
    let a = run("9");
    let recorded = fs::read_to_string(&t).unwrap();
    assert_eq!(stable(&a), stable(&run("9")));
    assert_eq!(recorded, fs::read_to_string(&t).unwrap());
    let o = dynmatch(&[
        "game",
        "replay",
        "--fixture",
        "complete-30x30",
        "--matcher",
        "theorem",
        "--k",
        "4",
        "--transcript",
        t.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("divergence=none\n"));
}

#[test]
fn search_reproduces_the_fixture_classification() {
    let search = |fixture: &str, incremental: bool, plies: &str| {
        let mut args = vec![
            "game",
            "search",
            "--fixture",
            fixture,
            "--k",
            "2",
            "--plies",
            plies,
        ];
        if incremental {
            args.push("--incremental");
        }
        let out = stdout(&dynmatch(&args));
        out.lines()
            .find_map(|l| l.strip_prefix("winner="))
            .unwrap()
            .to_string()
    };
    assert_eq!(search("left", true, "2"), "requester");
    assert_eq!(search("right", true, "3"), "matcher");
    assert_eq!(search("right", false, "6"), "requester");
}

#[test]
fn bitprobe_line_protocol() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_dynmatch"))
        .args([
            "bitprobe",
            "serve",
            "--n",
            "64",
            "--k",
            "2",
            "--first-right",
            "8192",
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"INSERT 5\nQUERY 5\nDELETE 5\nBOGUS 1\nINSERT 70\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines[0], "OK");
    assert!(lines[1] == "0" || lines[1] == "1");
    assert_eq!(lines[2], "OK");
    assert!(lines[3].starts_with("ERR"));
    assert!(lines[4].starts_with("ERR"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("commands=5\n"));
}

#[test]
fn small_benchmarks_pass() {
    let o = dynmatch(&[
        "bitprobe",
        "bench",
        "--n",
        "256",
        "--k",
        "4",
        "--ops",
        "300",
        "--queries",
        "3000",
        "--checkpoints",
        "10",
        "--non-members",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("reads_per_query=1.000\n"));
    let o = dynmatch(&[
        "connector",
        "demo",
        "--b",
        "2",
        "--t",
        "2",
        "--ops",
        "500",
        "--prune",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn rich_build_writes_graph_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("rich");
    let o = dynmatch(&[
        "rich",
        "build",
        "--n",
        "64",
        "--k",
        "2",
        "--eps",
        "1/4",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let graph = fs::read_to_string(prefix.with_extension("graph")).unwrap();
    assert!(graph.starts_with("bigraph 64 "));
    let meta = fs::read_to_string(prefix.with_extension("meta")).unwrap();
    assert!(meta.contains("first_verification="));
    assert!(meta.contains("second_primes="));
}
