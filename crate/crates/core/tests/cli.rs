mod common;

use std::process::{Command, Output};

use common::exhaustive_optimum;
use genmorton::cache::{CacheLevelSpec, HierarchySpec};
use genmorton::patterns::PatternSpec;
use genmorton::Layout;

fn genmorton(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genmorton"))
        .args(args)
        .env_remove("GENMORTON_CACHE")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn enumerate_prints_count_then_layouts() {
    let text = stdout(&genmorton(&["enumerate", "--bits", "3,3"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "20");
    assert_eq!(lines.len(), 21);
    for l in &lines[1..] {
        assert_eq!(l.parse::<Layout>().unwrap().to_string(), *l);
    }
    assert!(lines.contains(&"[0,1,0,1,0,1]"));

    assert_eq!(stdout(&genmorton(&["enumerate", "--bits", "12,12"])), "2704156\n");
    assert_eq!(
        stdout(&genmorton(&["enumerate", "--bits", "5"])).lines().next(),
        Some("1")
    );
}

#[test]
fn index_round_trips() {
    assert_eq!(
        stdout(&genmorton(&["index", "-l", "[0,1,0,1,0,1]", "--coord", "3,5"])),
        "39\n"
    );
    assert_eq!(
        stdout(&genmorton(&["index", "-l", "[1,1,2,0,0,1,2,0,2]", "--coord", "3,5,4"])),
        "313\n"
    );
    assert_eq!(
        stdout(&genmorton(&["index", "-l", "[1,1,2,0,0,1,2,0,2]", "--linear", "313"])),
        "3,5,4\n"
    );
}

#[test]
fn simulate_is_deterministic_and_consistent() {
    let args = ["simulate", "-l", "[0,0,0,1,1,1]", "-p", "MMijk(3;4)", "-c", "haswell"];
    let first = stdout(&genmorton(&args));
    assert_eq!(first, stdout(&genmorton(&args)));
    let l1: Vec<u64> = first
        .lines()
        .find(|l| l.starts_with("L1 "))
        .unwrap()
        .split_whitespace()
        .skip(1)
        .take(2)
        .map(|v| v.parse().unwrap())
        .collect();
    let counts = "MMijk(3;4)".parse::<PatternSpec>().unwrap().trace_counts();
    assert_eq!(l1[0] + l1[1], counts.loads + counts.stores);
    assert!(first.contains("fitness"));
}

#[test]
fn simulate_rejects_bad_multiplicities() {
    let out = genmorton(&["simulate", "-l", "[0,0,0,1]", "-p", "MMijk(2;4)"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dimension 0"), "{err}");
}

#[test]
fn usage_and_parse_errors_exit_with_one() {
    assert_eq!(
        genmorton(&["simulate", "-l", "[0,1]", "-p", "Nope(1;4)"]).status.code(),
        Some(1)
    );
    assert_eq!(
        genmorton(&["simulate", "-l", "[0,1]", "-p", "MMijk(1;4)", "-c", "/no/such/file"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(genmorton(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        genmorton(&["sample", "-p", "MMijk(1;4)", "--count", "0"]).status.code(),
        Some(1)
    );
    assert_eq!(genmorton(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // A regular file where the output directory should go.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let out = genmorton(&[
        "evolve",
        "-p",
        "MMijk(1;4)",
        "--generations",
        "1",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cache_files_and_environment_default() {
    let dir = tempfile::tempdir().unwrap();
    let spec = HierarchySpec::chain(vec![CacheLevelSpec::new("L1", 1, 4, 32, 4)], 200);
    let path = dir.path().join("tiny.yaml");
    std::fs::write(&path, spec.render()).unwrap();
    let from_file = stdout(&genmorton(&[
        "simulate",
        "-l",
        "[0,0,1,1]",
        "-p",
        "MMijk(2;4)",
        "-c",
        path.to_str().unwrap(),
    ]));
    assert!(from_file.contains("L1 ") && !from_file.contains("L2 "));

    let via_env = Command::new(env!("CARGO_BIN_EXE_genmorton"))
        .args(["simulate", "-l", "[0,0,1,1]", "-p", "MMijk(2;4)"])
        .env("GENMORTON_CACHE", "zen3")
        .output()
        .unwrap();
    let zen3 = stdout(&genmorton(&[
        "simulate",
        "-l",
        "[0,0,1,1]",
        "-p",
        "MMijk(2;4)",
        "-c",
        "zen3",
    ]));
    assert_eq!(stdout(&via_env), zen3);
    let haswell = stdout(&genmorton(&["simulate", "-l", "[0,0,1,1]", "-p", "MMijk(2;4)"]));
    assert_ne!(haswell, zen3);
}

fn evolve_csv(extra: &[&str]) -> (String, String) {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["evolve", "--out", dir.path().to_str().unwrap()];
    args.extend_from_slice(extra);
    let summary = stdout(&genmorton(&args));
    let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let best = std::fs::read_to_string(dir.path().join("best_layout.txt")).unwrap();
    assert!(summary.contains(best.trim()));
    (csv, summary)
}

#[test]
fn evolve_writes_history_and_summary() {
    let args = [
        "-p",
        "MMikj(3;4)",
        "-c",
        "haswell",
        "--mu",
        "20",
        "--lambda",
        "20",
        "--mutation-rate",
        "0.25",
        "--generations",
        "20",
        "--seed",
        "3",
    ];
    let (csv, summary) = evolve_csv(&args);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "generation,min_fitness,mean_fitness,max_fitness,best_layout");
    assert_eq!(rows.len(), 22, "header plus seeds plus 20 generations");
    let last = summary.lines().last().unwrap();
    assert!(
        last.starts_with("best fitness ") && last.contains(" at generation "),
        "{last}"
    );
    for row in &rows[1..] {
        let quoted = row.split('"').nth(1).unwrap();
        quoted.parse::<Layout>().unwrap();
    }
    assert_eq!(evolve_csv(&args).0, csv);
}

#[test]
fn evolve_on_a_tiny_problem_finds_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let spec = HierarchySpec::chain(vec![CacheLevelSpec::new("L1", 1, 4, 32, 4)], 200);
    let path = dir.path().join("tiny.yaml");
    std::fs::write(&path, spec.render()).unwrap();
    let summary = stdout(&genmorton(&[
        "evolve",
        "-p",
        "MMikj(2;4)",
        "-c",
        path.to_str().unwrap(),
    ]));
    let best = summary.lines().find_map(|l| l.strip_prefix("best layout ")).unwrap();
    let pattern: PatternSpec = "MMikj(2;4)".parse().unwrap();
    let (_, argmax) = exhaustive_optimum(&pattern, &spec);
    assert!(
        argmax.contains(&Layout::parse_for(best, &pattern.shape()).unwrap()),
        "{best}"
    );
}

#[test]
fn evolve_respects_contiguity() {
    let summary = stdout(&genmorton(&[
        "evolve",
        "-p",
        "MMijk(3;4)",
        "--generations",
        "3",
        "--contiguity",
        "1:2",
    ]));
    assert!(summary.contains("best fitness"));
    for line in summary.lines().skip(1).filter(|l| l.contains('"')) {
        let layout: Layout = line.split('"').nth(1).unwrap().parse().unwrap();
        assert!(layout.contiguity_block(1).unwrap() >= 4, "{layout}");
    }
}

#[test]
fn sample_writes_one_row_per_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sample.csv");
    let run = || {
        stdout(&genmorton(&[
            "sample",
            "-p",
            "MMijk(3;4)",
            "--count",
            "100",
            "--seed",
            "8",
            "--out",
            path.to_str().unwrap(),
        ]));
        std::fs::read_to_string(&path).unwrap()
    };
    let csv = run();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["layout", "fitness", "cycles", "l1_hit", "l1_miss", "l2_hit", "l2_miss", "l3_hit", "l3_miss", "mem_read"]
    );
    let shape = "MMijk(3;4)".parse::<PatternSpec>().unwrap().shape();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.unwrap();
        Layout::parse_for(&record[0], &shape).unwrap();
        let f: f64 = record[1].parse().unwrap();
        assert!(f > 0.0 && f <= 1.0 / 16.0);
        rows += 1;
    }
    assert_eq!(rows, 100);
    assert_eq!(run(), csv);
}

#[test]
fn trace_export_matches_pattern() {
    let text = stdout(&genmorton(&["trace", "-l", "[0,1]", "-p", "MMijk(1;4)"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 16 + 4);
    assert_eq!(&lines[..3], ["L 0x0", "L 0x10", "L 0x4"]);
    assert_eq!(lines.iter().filter(|l| l.starts_with("S ")).count(), 4);
}
