//! End-to-end runs of the binary.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tagvocab");

const TOY: &str = "100\tu1\tr1\ta,b\n200\tu2\tr1\tb,c\n300\tu1\tr2\tA\n";

fn tagvocab(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split('\t').map(str::to_owned).collect()).collect()
}

#[test]
fn toy_global_growth() {
    let out = stdout(&tagvocab(&["growth", "--sampling", "every"], TOY));
    // case folding merges A into a
    assert_eq!(out, "tau\tn_distinct\n1\t1\n2\t2\n3\t2\n4\t3\n5\t3\n");
}

#[test]
fn toy_summary() {
    let v: Value = serde_json::from_str(&stdout(&tagvocab(&["summary"], TOY))).unwrap();
    let s = &v["summary"];
    assert_eq!(s["post_count"], 3);
    assert_eq!(s["user_count"], 2);
    assert_eq!(s["resource_count"], 2);
    assert_eq!(s["distinct_tag_count"], 3);
    assert_eq!(s["total_tag_assignments"], 5);
}

#[test]
fn ingest_output_reads_back_as_tas() {
    let tas = stdout(&tagvocab(&["ingest"], TOY));
    assert_eq!(tas, "1\ta\tu1\tr1\n2\tb\tu1\tr1\n3\tb\tu2\tr1\n4\tc\tu2\tr1\n5\ta\tu1\tr2\n");
    let from_posts = stdout(&tagvocab(&["local-growth", "--kind", "resource", "--sampling", "every"], TOY));
    let from_tas = stdout(&tagvocab(&["local-growth", "--kind", "resource", "--sampling", "every"], &tas));
    assert_eq!(from_posts, from_tas);
    assert_eq!(
        rows(&from_posts),
        [
            ["resource:r1", "1", "1"],
            ["resource:r1", "2", "2"],
            ["resource:r1", "3", "2"],
            ["resource:r1", "4", "3"],
            ["resource:r2", "1", "1"]
        ]
    );
}

#[test]
fn growth_pipes_into_exponents_and_collapse() {
    let posts = stdout(&tagvocab(
        &["--seed", "7", "synth", "--model", "py", "--d", "0.8", "--theta", "10", "--n", "100000"],
        "",
    ));
    let curve = stdout(&tagvocab(&["growth"], &posts));
    let table = stdout(&tagvocab(&["exponents"], &curve));
    let r = rows(&table);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][1], "100000");
    let endpoint: f64 = r[0][3].parse().unwrap();
    assert!((endpoint - 0.8).abs() < 0.1, "{table}");
    let collapsed = stdout(&tagvocab(&["collapse"], &curve));
    let last = collapsed.lines().last().unwrap();
    assert_eq!(last, "1\t1");
}

#[test]
fn exit_codes() {
    let code = |args: &[&str], input: &str| tagvocab(args, input).status.code().unwrap();
    assert_eq!(code(&["frobnicate"], ""), 1);
    assert_eq!(code(&["synth", "--model", "zipf"], ""), 1);
    assert_eq!(code(&["synth", "--model", "py", "--d", "1.5", "--theta", "1"], ""), 1);
    assert_eq!(code(&["growth"], "x\n"), 2);
    assert_eq!(code(&["growth", "--input", "/nonexistent/posts.tsv"], ""), 2);
    assert_eq!(code(&["growth", "--min-ts", "10", "--max-ts", "5"], TOY), 1);
    assert_eq!(code(&["growth"], ""), 3);
    assert_eq!(code(&["--help"], ""), 0);
}

#[test]
fn parse_errors_skip_or_abort() {
    let input = format!("{TOY}garbage\n400\tu3\tr3\td\n");
    assert_eq!(tagvocab(&["summary"], &input).status.code(), Some(2));
    let v: Value = serde_json::from_str(&stdout(&tagvocab(&["summary", "--on-parse-error", "skip"], &input))).unwrap();
    assert_eq!(v["skipped_lines"], 1);
    assert_eq!(v["summary"]["post_count"], 4);
}

#[test]
fn timestamp_window_drops_posts() {
    let v: Value =
        serde_json::from_str(&stdout(&tagvocab(&["summary", "--min-ts", "150", "--max-ts", "250"], TOY))).unwrap();
    assert_eq!(v["summary"]["post_count"], 1);
    assert_eq!(v["summary"]["dropped_timestamp_count"], 2);
}

#[test]
fn json_report_describes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("toy.tsv");
    fs::write(&input, TOY).unwrap();
    let report = dir.path().join("run.json");
    let out = dir.path().join("growth.tsv");
    let o = tagvocab(
        &[
            "--json-report",
            report.to_str().unwrap(),
            "growth",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        "",
    );
    stdout(&o);
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["command"], "growth");
    assert_eq!(v["input"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["parameters"]["sampling"], "log:50");
    assert_eq!(v["artifacts"][0]["path"], out.to_str().unwrap());
    assert!(v["timings_ms"].is_object());
}

fn manifest_paths(dir: &Path) -> Vec<String> {
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    v["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap().to_owned()).collect()
}

#[test]
fn report_manifest_lists_existing_files() {
    let dir = tempfile::tempdir().unwrap();
    let posts = dir.path().join("posts.tsv");
    let out = dir.path().join("report");
    let gen = tagvocab(
        &["--seed", "5", "synth", "--model", "folksonomy", "--n", "30000", "--out", posts.to_str().unwrap()],
        "",
    );
    stdout(&gen);
    let o = tagvocab(
        &[
            "-q",
            "report",
            "--input",
            posts.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--top",
            "100",
            "--middle",
            "3:6",
        ],
        "",
    );
    stdout(&o);
    let listed = manifest_paths(&out);
    assert!(listed.contains(&"analysis.json".to_owned()));
    assert!(listed.contains(&"growth_global.tsv".to_owned()));
    for p in &listed {
        let meta = fs::metadata(out.join(p)).unwrap();
        assert!(meta.len() > 0, "{p} is empty");
    }
    let mut on_disk: Vec<String> =
        fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    on_disk.retain(|n| n != "manifest.json");
    on_disk.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(on_disk, sorted);
}

#[test]
fn synth_config_file_and_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zipf.toml");
    fs::write(&cfg, "alpha = 2.0\nn = 500\nseed = 3\n").unwrap();
    let from_file = stdout(&tagvocab(&["synth", "--model", "zipf", "--config", cfg.to_str().unwrap()], ""));
    let from_flags = stdout(&tagvocab(&["--seed", "3", "synth", "--model", "zipf", "--alpha", "2", "--n", "500"], ""));
    assert_eq!(from_file, from_flags);
    assert_eq!(from_file.lines().count(), 500);
    let reseeded =
        stdout(&tagvocab(&["--seed", "4", "synth", "--model", "zipf", "--config", cfg.to_str().unwrap()], ""));
    assert_ne!(from_file, reseeded);
    fs::write(&cfg, "alpha = 2.0\nbogus = 1\n").unwrap();
    assert_eq!(tagvocab(&["synth", "--model", "zipf", "--config", cfg.to_str().unwrap()], "").status.code(), Some(2));
}

#[test]
fn closed_stdout_is_not_an_error() {
    use std::io::{BufRead, BufReader};
    let mut child = Command::new(BIN)
        .args(["synth", "--model", "py", "--d", "0.5", "--theta", "1", "--n", "10000000"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut first).unwrap();
    assert!(!first.is_empty());
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stderr.is_empty());
}
