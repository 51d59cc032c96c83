use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stiefel-ssl"));
    c.env_remove("RESULT_DIR");
    c
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

const BARBELL: &str = "trials = 2\nmethod = \"ssm_kl\"\n[dataset]\nkind = \"barbell\"\nclique_size = 6\n";

#[test]
fn solve_writes_reproducible_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "b.toml", BARBELL);
    let mut bytes = Vec::new();
    for out in ["a", "b"] {
        let out = dir.path().join(out);
        let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(std::fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let summary = String::from_utf8(bytes.pop().unwrap()).unwrap();
    assert!(summary.contains("\"mean_accuracy\": 1.0"), "{summary}");
}

#[test]
fn result_dir_is_the_fallback_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "b.toml", BARBELL);
    let out = dir.path().join("env_out");
    let o = bin()
        .args(["bench", "--config", cfg.to_str().unwrap(), "--trials", "1"])
        .env("RESULT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("bench.csv").exists() && out.join("bench.json").exists());
}

#[test]
fn certify_and_build_graph_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "b.toml", BARBELL);
    let out = dir.path().join("o");
    let o = run(&["certify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("status "));
    assert!(out.join("certificate.json").exists());
    let o = run(&["build-graph", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let g = std::fs::read_to_string(out.join("graph.txt")).unwrap();
    assert!(g.starts_with("n_vertices 12\n"));
}

#[test]
fn input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let good = config(dir.path(), "b.toml", BARBELL);
    let unknown = config(dir.path(), "u.toml", "bogus = 1\n[dataset]\nkind = \"barbell\"\nclique_size = 4\n");
    let too_many =
        config(dir.path(), "t.toml", "labels_per_class = 3\n[dataset]\nkind = \"barbell\"\nclique_size = 3\n");
    let cases: [&[&str]; 4] = [
        &["solve", "--config", "/nonexistent/config.toml"],
        &["solve", "--config", good.to_str().unwrap(), "--method", "nope"],
        &["solve", "--config", unknown.to_str().unwrap()],
        &["solve", "--config", too_many.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
    ];
    for args in cases {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    }
}

#[test]
fn numerical_failures_exit_with_3() {
    // two of four labeled per class leaves C singular
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "c.toml",
        "labels_per_class = 2\ntrials = 1\nmethod = \"ssm\"\n[dataset]\nkind = \"barbell\"\nclique_size = 4\n",
    );
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
