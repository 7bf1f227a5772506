use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn posegraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posegraph")).args(args).env_remove("POSEGRAPH_THREADS").output().expect("spawn posegraph")
}

fn ok(args: &[&str]) -> String {
    let out = posegraph(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SCENE: [&str; 6] = ["--cameras", "10", "--points", "1500", "--seed", "3"];

fn generate(dir: &Path, format: &str) {
    let mut args = vec!["generate", "--out", dir.to_str().unwrap(), "--format", format];
    args.extend(SCENE);
    ok(&args);
}

fn build(input: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["build", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1", "--no-timing"];
    args.extend(extra);
    ok(&args)
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[test]
fn build_is_reproducible_at_one_thread() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "binary");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let summary = build(&data, &a, &[]);
    assert!(summary.starts_with("pairs="), "{summary}");
    build(&data, &b, &[]);
    for name in ["posegraph.txt", "tracks.txt", "pairs.csv", "aggregate.csv", "errors.csv", "similarity.csv", "config.txt"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty(), "{name} is empty");
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn json_and_binary_datasets_build_the_same_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("bin");
    let json = tmp.path().join("json");
    generate(&bin, "binary");
    generate(&json, "json");
    build(&bin, &tmp.path().join("a"), &[]);
    build(&json, &tmp.path().join("b"), &[]);
    assert_eq!(fs::read(tmp.path().join("a/posegraph.txt")).unwrap(), fs::read(tmp.path().join("b/posegraph.txt")).unwrap());
}

#[test]
fn aggregate_report_matches_pair_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "binary");
    let out = tmp.path().join("out");
    build(&data, &out, &[]);

    let pairs = fs::read_to_string(out.join("pairs.csv")).unwrap();
    let mut by_method: BTreeMap<String, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for line in pairs.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let e = by_method.entry(f[1].to_string()).or_default();
        e.0 += 1;
        if let Ok(r) = f[4].parse() {
            e.1.push(r);
        }
        if let Ok(t) = f[5].parse() {
            e.2.push(t);
        }
    }
    let aggregate = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let mut seen = 0;
    for line in aggregate.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (count, rot, trans) = by_method.get_mut(f[0]).unwrap_or_else(|| panic!("method {} not in pairs.csv", f[0]));
        assert_eq!(f[1].parse::<usize>().unwrap(), *count);
        for (cell, values) in [(f[5], rot), (f[6], trans)] {
            match median(values) {
                Some(m) => assert!((cell.parse::<f64>().unwrap() - m).abs() < 2e-6, "{line}: expected {m}"),
                None => assert!(cell.is_empty()),
            }
        }
        seen += 1;
    }
    assert_eq!(seen, by_method.len());
}

#[test]
fn config_file_and_flags_are_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "binary");
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# walk settings\nlambda = 0.25\nmax_depth = 3\n").unwrap();
    let out = tmp.path().join("out");
    build(&data, &out, &["--config", cfg.to_str().unwrap(), "--max-depth", "4", "--traversal", "none"]);
    let written = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(written.contains("lambda = 0.25"), "{written}");
    assert!(written.contains("max_depth = 4"), "{written}");
    let pairs = fs::read_to_string(out.join("pairs.csv")).unwrap();
    assert!(pairs.lines().skip(1).all(|l| !l.split(',').nth(1).unwrap().eq("walk")), "walks found with traversal none");
}

#[test]
fn invalid_arguments_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = tmp.path().join("out");
    let o = posegraph(&["build", "--input", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let data = tmp.path().join("data");
    generate(&data, "binary");
    let o = posegraph(&["build", "--input", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--lambda", "1.5"]);
    assert!(!o.status.success());

    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "lambda 0.3\n").unwrap();
    let o = posegraph(&["build", "--input", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());

    assert!(!posegraph(&["generate", "--out", out.to_str().unwrap(), "--cameras", "1"]).status.success());
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let text = ok(&["sweep", "--cameras", "10", "--points", "1500", "--lambdas", "0,1", "--depths", "2,3"]);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("lambda") && header.contains("depth"), "{header}");
    assert_eq!(lines.count(), 4);
}

#[test]
fn bench_reports_matcher_and_ordering_rows() {
    let text = ok(&["bench", "--keypoints", "500", "--seeds", "2"]);
    assert_eq!(text.lines().filter(|l| l.starts_with("matcher,")).count(), 1);
    assert_eq!(text.lines().filter(|l| l.starts_with("ordering,")).count(), 2);
}
