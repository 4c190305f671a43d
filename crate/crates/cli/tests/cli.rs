use std::fs;
use std::path::Path;
use std::process::Command;

const RUN: &str = "\
te_d: env3
task: {kind: spurious_blobs, n_per_domain: 30}
epos: 2
";

const BENCH: &str = r#"
common:
  task: {kind: spurious_blobs, n_per_domain: 30}
  te_d: [env3]
  epos: 2
  bs: 16
shared:
  pool_size: 2
  params:
    - {name: lr, kind: loguniform, lo: 0.001, hi: 0.01}
methods:
  erm: {model: erm, shared: [lr]}
  dann:
    model: dann
    shared: [lr]
    params:
      - {name: gamma_reg_dann, kind: uniform, lo: 0.1, hi: 2}
sampling: {n_param_samples: 2, n_seeds: 1, base_seed: 3}
"#;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn dgkit(dir: &Path, args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_dgkit"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap();
    Out {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn setup(files: &[(&str, &str)]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in files {
        fs::write(dir.path().join(name), text).unwrap();
    }
    dir
}

#[test]
fn run_prints_accuracy_and_provenance() {
    let dir = setup(&[("r.yaml", RUN)]);
    let o = dgkit(dir.path(), &["run", "--config", "r.yaml", "--set", "lr=0.01"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("test env3: "));
    assert!(o.stderr.contains("config: lr = 0.01 (flag)"));
    assert!(o.stderr.contains("config: epos = 2 (file)"));
    assert!(o.stderr.contains("config: bs = 32 (default)"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = setup(&[("r.yaml", RUN)]);
    let o = dgkit(dir.path(), &["run", "--config", "r.yaml", "--set", "bogus=1"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.starts_with("error[2]: "));
    assert!(o.stderr.contains("bogus"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = setup(&[]);
    let o = dgkit(dir.path(), &["run", "--config", "nope.yaml"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("nope.yaml"));
}

#[test]
fn run_result_file_is_reproducible_and_matches_benchmark_format() {
    let dir = setup(&[("r.yaml", RUN)]);
    for out in ["a.json", "b.json"] {
        assert_eq!(dgkit(dir.path(), &["run", "--config", "r.yaml", "--out", out]).code, 0);
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    assert!(dir.path().join("a.timing.json").exists());
    let outcome = dgkit_core::benchmark::read_outcome(&dir.path().join("a.json")).unwrap();
    assert!(outcome.is_ok());
}

#[test]
fn failed_run_still_writes_a_result() {
    let dir = setup(&[("r.yaml", RUN)]);
    let o = dgkit(
        dir.path(),
        &[
            "run",
            "--config",
            "r.yaml",
            "--set",
            "optimizer=sgd",
            "--set",
            "lr=1e300",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(o.code, 1, "{}", o.stderr);
    let outcome = dgkit_core::benchmark::read_outcome(&dir.path().join("x.json")).unwrap();
    assert!(!outcome.is_ok());
}

#[test]
fn benchmark_run_rerun_and_charts() {
    let dir = setup(&[("b.yaml", BENCH)]);
    let o = dgkit(
        dir.path(),
        &["benchmark", "--config", "b.yaml", "--out", "out", "--workers", "2"],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stderr.contains("skipped: 0 ran: 4 failed: 0"));
    assert!(o.stdout.contains("table: "));
    let out = dir.path().join("out");
    let chart = fs::read(out.join("distribution.svg")).unwrap();

    let again = dgkit(
        dir.path(),
        &["benchmark", "--config", "b.yaml", "--out", "out", "--workers", "2"],
    );
    assert_eq!(again.code, 0);
    assert!(again.stderr.contains("skipped: 4"));

    let c = dgkit(dir.path(), &["charts", "--table", "out/results.csv", "--out", "charts"]);
    assert_eq!(c.code, 0, "{}", c.stderr);
    assert_eq!(fs::read(dir.path().join("charts/distribution.svg")).unwrap(), chart);
}

#[test]
fn cluster_mode_writes_scripts_only() {
    let dir = setup(&[("b.yaml", BENCH)]);
    let o = dgkit(
        dir.path(),
        &["benchmark", "--config", "b.yaml", "--out", "out", "--cluster"],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let cluster = dir.path().join("out/cluster");
    assert!(cluster.join("submit_all.sh").exists());
    assert_eq!(fs::read_dir(&cluster).unwrap().count(), 4 * 2 + 1);
    assert!(!dir.path().join("out/results").exists());
}

#[test]
fn diverging_method_gives_partial_failure() {
    // sgd at lr 1e300 overflows in the first step for this seed
    let text = BENCH.replace("base_seed: 3", "base_seed: 0").replace(
        "sampling:",
        "  broken:\n    model: erm\n    params:\n      - {name: lr, kind: categorical, values: [1.0e300]}\n      \
         - {name: optimizer, kind: categorical, values: [sgd]}\nsampling:",
    );
    let dir = setup(&[("b.yaml", &text)]);
    let o = dgkit(
        dir.path(),
        &["benchmark", "--config", "b.yaml", "--out", "out", "--workers", "3"],
    );
    assert_eq!(o.code, 3, "{}", o.stderr);
    assert!(o.stderr.contains("failed: 2"));
    let table = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);
    assert_eq!(table.matches(",failed,").count(), 2);
}

#[test]
fn charts_without_successful_runs_is_a_config_error() {
    let dir = setup(&[]);
    let header = "job_index,job_id,method,model,trainer,param_index,seed_index,seed,test_domain,status,\
                  val_accuracy,test_accuracy,selected_epoch,epochs_run,error\n";
    fs::write(dir.path().join("t.csv"), header).unwrap();
    let o = dgkit(dir.path(), &["charts", "--table", "t.csv", "--out", "c"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("no successful runs"));
}
