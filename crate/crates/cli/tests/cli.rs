use std::path::Path;
use std::process::{Command, Output};

fn ssd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate_small(dir: &Path, seed: &str) {
    let out = ssd(&[
        "generate",
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        seed,
        "--authors",
        "90",
        "--vocab",
        "500",
        "--dim",
        "20",
        "--rank",
        "4",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn run_args<'a>(data: &'a str, out: &'a str) -> Vec<String> {
    [
        "--embeddings",
        &format!("{data}/embeddings.txt"),
        "--corpus",
        &format!("{data}/corpus.jsonl"),
        "--outcome",
        "Y",
        "--out-dir",
        out,
        "--k-stop",
        "19",
        "--neighbors",
        "30",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run(sub: &[&str], rest: &[String]) -> Output {
    let mut args: Vec<&str> = sub.to_vec();
    args.extend(rest.iter().map(String::as_str));
    ssd(&args)
}

#[test]
fn generate_writes_three_files_and_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_small(a.path(), "7");
    generate_small(b.path(), "7");
    for name in ["embeddings.txt", "corpus.jsonl", "truth.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn rank_above_dim_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssd(&[
        "generate",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--dim",
        "5",
        "--rank",
        "9",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let line = stderr(&out);
    assert!(line.starts_with("error code=2 kind=config"), "{line}");
    assert_eq!(line.trim_end().lines().count(), 1);
}

#[test]
fn bad_flag_is_a_usage_error() {
    let out = ssd(&["sweep", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error code=2 kind=usage"));
}

#[test]
fn sweep_writes_consistent_artifacts() {
    let data = tempfile::tempdir().unwrap();
    generate_small(data.path(), "1");
    let out_dir = data.path().join("out");
    let args = run_args(data.path().to_str().unwrap(), out_dir.to_str().unwrap());
    let out = run(&["sweep"], &args);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in [
        "sweep_diagnostics.csv",
        "selected_fit.json",
        "clusters.json",
        "clusters.md",
        "curves.svg",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }

    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("selected_fit.json")).unwrap()).unwrap();
    let k = fit["k"].as_u64().unwrap();
    // the selected K has the largest joint score in the diagnostics table
    let csv = std::fs::read_to_string(out_dir.join("sweep_diagnostics.csv")).unwrap();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let jcol = header.iter().position(|h| *h == "joint").unwrap();
    let mut best: Option<(u64, f64)> = None;
    for l in lines {
        let cols: Vec<&str> = l.split(',').collect();
        if let Ok(j) = cols[jcol].parse::<f64>() {
            let kk: u64 = cols[0].parse().unwrap();
            if best.is_none_or(|(_, b)| j > b) {
                best = Some((kk, j));
            }
        }
    }
    assert_eq!(best.unwrap().0, k);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let data = tempfile::tempdir().unwrap();
    generate_small(data.path(), "2");
    let d = data.path().to_str().unwrap();
    let one = data.path().join("one");
    let many = data.path().join("many");
    let mut a = run_args(d, one.to_str().unwrap());
    a.extend(["--workers".to_string(), "1".to_string()]);
    let mut b = run_args(d, many.to_str().unwrap());
    b.extend(["--workers".to_string(), "4".to_string()]);
    assert!(run(&["sweep"], &a).status.success());
    assert!(run(&["sweep"], &b).status.success());
    for name in [
        "sweep_diagnostics.csv",
        "selected_fit.json",
        "clusters.json",
        "clusters.md",
        "curves.svg",
    ] {
        assert_eq!(
            std::fs::read(one.join(name)).unwrap(),
            std::fs::read(many.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn missing_corpus_is_an_io_error_without_artifacts() {
    let data = tempfile::tempdir().unwrap();
    generate_small(data.path(), "3");
    std::fs::remove_file(data.path().join("corpus.jsonl")).unwrap();
    let out_dir = data.path().join("out");
    let out = run(
        &["sweep"],
        &run_args(data.path().to_str().unwrap(), out_dir.to_str().unwrap()),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error code=3 kind=io"));
    assert!(!out_dir.exists());
}

#[test]
fn fixed_k_runs_and_rejects_infeasible_k() {
    let data = tempfile::tempdir().unwrap();
    generate_small(data.path(), "4");
    let d = data.path().to_str().unwrap();
    let out_dir = data.path().join("k1");
    let out = run(&["fixed-k", "--k", "1"], &run_args(d, out_dir.to_str().unwrap()));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("k=1 "));
    assert!(out_dir.join("selected_fit.json").exists());
    assert!(!out_dir.join("sweep_diagnostics.csv").exists());

    // 90 authors, so K = 89 > n - 2
    let bad_dir = data.path().join("k89");
    let out = run(&["fixed-k", "--k", "89"], &run_args(d, bad_dir.to_str().unwrap()));
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).starts_with("error code=5 kind=bounds"));
    assert!(!bad_dir.exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "outcome = \"ADM\"\nseed = 4\nneighbors = 50\n").unwrap();
    let out = ssd(&["show-config", "--config", cfg.to_str().unwrap(), "--seed", "11"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("seed = 11"), "{text}");
    assert!(text.contains("neighbors = 50"));
    assert!(text.contains("outcome = \"ADM\""));

    std::fs::write(&cfg, "neighbours = 50\n").unwrap();
    let out = ssd(&["show-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
