use std::path::Path;
use std::process::{Command, Output};

use eigenloop::config::ExperimentConfig;

const SMALL: &str = r#"
seeds = [0, 1]

[data.synthetic]
classes = 3
dim = 8
source_per_class = 40
target_per_class = 20
test_per_class = 10

[transfer]
features = "raw"
kappa_max = 2
"#;

fn eigenloop(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigenloop"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = eigenloop(&["print-config"], dir.path());
    assert!(o.status.success());
    let cfg = ExperimentConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn config_errors_exit_with_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[transfer]\nkappa_maxx = 3\n");
    let o = eigenloop(&["--config", &cfg, "print-config"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("transfer.kappa_maxx"));

    let cfg = write_config(dir.path(), "[transfer]\nb = 1\nk = 7\n");
    let o = eigenloop(&["--config", &cfg, "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("transfer.k"));

    let o = eigenloop(&["--config", "missing.toml", "run"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn interactive_oracle_is_rejected_by_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("kappa_max = 2", "kappa_max = 2\noracle = \"interactive\""));
    let o = eigenloop(&["--config", &cfg, "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_file_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[data.files]\ntarget = \"nowhere.emb1\"\nclasses = 3\n[transfer]\nfeatures = \"raw\"\n",
    );
    let o = eigenloop(&["--config", &cfg, "run"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for out in ["a", "b"] {
        assert!(eigenloop(&["--config", &cfg, "--out", out, "gen"], dir.path()).status.success());
    }
    for f in ["source.emb1", "target.emb1", "test.emb1", "target.labels", "test.labels"] {
        for seed in ["seed-0", "seed-1"] {
            let a = std::fs::read(dir.path().join("a").join(seed).join(f)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(seed).join(f)).unwrap();
            assert_eq!(a, b, "{seed}/{f}");
        }
    }
    assert_ne!(
        std::fs::read(dir.path().join("a/seed-0/target.emb1")).unwrap(),
        std::fs::read(dir.path().join("a/seed-1/target.emb1")).unwrap()
    );
}

#[test]
fn run_writes_report_and_per_seed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = eigenloop(&["--config", &cfg, "--out", "out", "run"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "method,seed,kappa,labels_spent,budget,bcubed,top1,mean_per_class");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("progressive,")).count(), 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("random,")).count(), 3);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 8);
        assert_eq!(f[3], "6", "C=3, b=1, two steps: {l}");
        assert_eq!(f[4], "6");
    }
    for seed in ["seed-0", "seed-1"] {
        let d = dir.path().join("out").join(seed);
        let metrics = std::fs::read_to_string(d.join("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 1 + 3);
        assert!(d.join("state.json").exists());
        assert!(d.join("clusters.csv").exists());
        assert!(d.join("centers.emb1").exists());
    }
}

#[test]
fn seed_flag_restricts_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = eigenloop(&["--config", &cfg, "--seed", "5", "--out", "out", "run"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("out/seed-5/metrics.csv").exists());
    assert!(!dir.path().join("out/seed-0").exists());
}

#[test]
fn zero_steps_matches_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("kappa_max = 2", "kappa_max = 0"));
    let o = eigenloop(&["--config", &cfg, "--out", "out", "run"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let prog: Vec<_> = rows.iter().filter(|r| r[0] == "progressive").collect();
    let rand: Vec<_> = rows.iter().filter(|r| r[0] == "random").collect();
    for (p, r) in prog.iter().zip(&rand) {
        assert_eq!(p[3], "0");
        assert_eq!(&p[5..], &r[5..]);
    }
}

#[test]
fn generated_files_feed_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(eigenloop(&["--config", &cfg, "--out", "gen", "gen"], dir.path()).status.success());
    let files = r#"
[data.files]
source = "gen/seed-0/source.emb1"
target = "gen/seed-0/target.emb1"
target_labels = "gen/seed-0/target.labels"
test = "gen/seed-0/test.emb1"
test_labels = "gen/seed-0/test.labels"

[transfer]
features = "raw"
kappa_max = 1
"#;
    let cfg = write_config(dir.path(), files);
    let o = eigenloop(&["--config", &cfg, "--out", "out", "run"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(report.lines().nth(1).unwrap().starts_with("progressive,0,1,3,3,"));
}

#[test]
fn sweep_over_b_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}\n[sweep]\nparameter = \"b\"\nvalues = [1, [2, 1]]\n", SMALL.replace("seeds = [0, 1]", "seeds = [0]"));
    let cfg = write_config(dir.path(), &text);
    let o = eigenloop(&["--config", &cfg, "--out", "out", "sweep"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("b,1,1,"));
    assert!(lines[2].starts_with("b,2-1,1,"));
}
