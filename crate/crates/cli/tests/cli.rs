use std::path::Path;
use std::process::{Command, Output};

use phaseserve::profile::ProfileBundle;

fn phaseserve(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaseserve"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn run_writes_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "one.toml",
        "seed = 5\n[workload]\nconcurrency = 1\n",
    );
    let o = phaseserve(dir.path(), &["run", "--config", "one.toml", "--out", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trace.jsonl", "summary.json", "sessions.csv"] {
        assert!(dir.path().join("out").join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("out/sessions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = phaseserve(dir.path(), &["run", "--seed", "9", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/trace.jsonl"), read("b/trace.jsonl"));
    assert_eq!(read("a/summary.json"), read("b/summary.json"));
}

#[test]
fn non_monotone_profile_is_rejected_with_its_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let good = ProfileBundle::default_synthetic().to_toml_string();
    let bad = good.replacen("tokens_per_second = 98.77", "tokens_per_second = 1.0", 1);
    assert_ne!(bad, good);
    write(dir.path(), "bad.toml", &bad);
    write(dir.path(), "run.toml", "[profile]\npath = \"bad.toml\"\n");
    let o = phaseserve(dir.path(), &["run", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("24"), "{msg}");
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "run.toml",
        "seed = 1\n\n[workload]\nparadigm = \"tree-of-thought\"\n",
    );
    let o = phaseserve(dir.path(), &["run", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn compare_orders_policies_on_one_stream() {
    let dir = tempfile::tempdir().unwrap();
    let o = phaseserve(
        dir.path(),
        &[
            "compare",
            "--policies",
            "tpot_driven,mixed_fcfs",
            "--sweep",
            "6",
            "--out",
            "c",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rows = csv::Reader::from_path(dir.path().join("c/compare.csv")).unwrap();
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    let headers = rows.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(&records[0][col("policy")], "tpot_driven");
    let p95 = |r: &csv::StringRecord| r[col("tpot_p95_ms")].parse::<f64>().unwrap();
    assert!(p95(&records[0]) < p95(&records[1]));
    assert_eq!(
        records[0][col("stream_sha256")],
        records[1][col("stream_sha256")]
    );
}

#[test]
fn compare_sweep_gives_a_row_per_level_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let o = phaseserve(
        dir.path(),
        &[
            "compare",
            "--policies",
            "static_partition,chunked_prefill",
            "--sweep",
            "3-6",
            "--out",
            "c",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/compare.json")).unwrap())
            .unwrap();
    assert_eq!(json.as_array().unwrap().len(), 8);
}

#[test]
fn compare_needs_two_policies() {
    let dir = tempfile::tempdir().unwrap();
    let o = phaseserve(dir.path(), &["compare", "--policies", "tpot_driven"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at least two"));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = phaseserve(dir.path(), &["run", "--out", "a"]);
    assert_eq!(ok.status.code(), Some(0));
    let v = phaseserve(dir.path(), &["verify", "a/trace.jsonl"]);
    assert_eq!(v.status.code(), Some(0), "{}", stderr(&v));
    assert!(dir.path().join("a/verify.csv").is_file());

    write(dir.path(), "fcfs.toml", "policy = \"mixed_fcfs\"\n");
    let f = phaseserve(dir.path(), &["run", "--config", "fcfs.toml", "--out", "f"]);
    assert_eq!(f.status.code(), Some(0));
    let v = phaseserve(dir.path(), &["verify", "f/trace.jsonl"]);
    assert_eq!(v.status.code(), Some(4));
    assert!(stderr(&v).contains("premise"));

    let bad = phaseserve(
        dir.path(),
        &["verify", "a/trace.jsonl", "--params", "delta_sms=3"],
    );
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn profile_gen_defaults_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = phaseserve(dir.path(), &["profile-gen", "--out", "p.toml"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("p.toml")).unwrap();
    assert_eq!(
        ProfileBundle::from_toml_str(&text).unwrap(),
        ProfileBundle::default_synthetic()
    );
}

#[test]
fn profile_gen_warns_on_late_decode_knee() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "shape.toml",
        "total_sms = 64\ngranularity = 8\n\
         [decode]\nmax_tokens_per_second = 100.0\nknee = 1.0\ncurvature = 2.0\n\
         [cold]\nmax_tokens_per_second = 5000.0\nknee = 0.5\ncurvature = 2.0\n\
         [resume]\nmax_tokens_per_second = 2000.0\nknee = 0.5\ncurvature = 2.0\n",
    );
    let o = phaseserve(dir.path(), &["profile-gen", "--params", "shape.toml"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    ProfileBundle::from_toml_str(&String::from_utf8(o.stdout).unwrap()).unwrap();

    write(dir.path(), "neg.toml", "total_sms = 64\ngranularity = 8\n[decode]\nmax_tokens_per_second = 100.0\nknee = 0.5\ncurvature = -1.0\n[cold]\nmax_tokens_per_second = 5000.0\nknee = 0.5\ncurvature = 2.0\n[resume]\nmax_tokens_per_second = 2000.0\nknee = 0.5\ncurvature = 2.0\n");
    let o = phaseserve(dir.path(), &["profile-gen", "--params", "neg.toml"]);
    assert_eq!(o.status.code(), Some(1));
}
