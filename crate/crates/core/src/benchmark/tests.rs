use super::*;

const BENCH: &str = r#"
common:
  task: {kind: spurious_blobs, n_per_domain: 40}
  te_d: [env3]
  epos: 2
  bs: 16
shared:
  pool_size: 4
  params:
    - {name: lr, kind: loguniform, lo: 0.0001, hi: 0.01}
methods:
  erm: {model: erm, shared: [lr]}
  dann:
    model: dann
    shared: [lr]
    params:
      - {name: gamma_reg_dann, kind: uniform, lo: 0.1, hi: 10, step: 0.1}
sampling: {n_param_samples: 2, n_seeds: 2, base_seed: 7}
"#;

fn bench() -> BenchmarkConfig {
    BenchmarkConfig::from_yaml_str(BENCH).unwrap()
}

#[test]
fn enumerates_full_matrix() {
    let jobs = enumerate_jobs(&bench()).unwrap();
    assert_eq!(jobs.len(), 8);
    let mut ids: Vec<String> = jobs.iter().map(JobSpec::job_id).collect();
    assert_eq!(ids[0], "erm-p000-s000-env3");
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 8);
    for (i, j) in jobs.iter().enumerate() {
        assert_eq!(j.job_index, i);
        assert_eq!(j.config.seed, 7 + j.seed_index as u64);
        assert_eq!(j.config.te_d, vec!["env3".to_string()]);
        assert_eq!(j.config.model, j.method);
    }
}

#[test]
fn shared_values_coincide_across_methods() {
    let cfg = bench();
    let pool = shared_pool(&cfg).unwrap();
    let erm = method_samples(&cfg, "erm", &pool).unwrap();
    let dann = method_samples(&cfg, "dann", &pool).unwrap();
    for i in 0..2 {
        assert_eq!(erm[i]["lr"], pool[i]["lr"]);
        assert_eq!(dann[i]["lr"], pool[i]["lr"]);
    }
    assert_ne!(erm[0]["lr"], erm[1]["lr"]);
    let jobs = enumerate_jobs(&cfg).unwrap();
    for j in &jobs {
        assert_eq!(j.config.lr, j.params["lr"].as_f64().unwrap());
    }
}

#[test]
fn private_stream_does_not_depend_on_other_methods() {
    let a = bench();
    let mut b = bench();
    b.methods.shift_remove("erm");
    let pa = shared_pool(&a).unwrap();
    let pb = shared_pool(&b).unwrap();
    assert_eq!(
        method_samples(&a, "dann", &pa).unwrap(),
        method_samples(&b, "dann", &pb).unwrap()
    );
}

#[test]
fn method_without_distributions_keeps_sample_count() {
    let text = BENCH.replace("erm: {model: erm, shared: [lr]}", "erm: {model: erm}");
    let cfg = BenchmarkConfig::from_yaml_str(&text).unwrap();
    let jobs = enumerate_jobs(&cfg).unwrap();
    assert_eq!(jobs.len(), 8);
    assert!(jobs.iter().filter(|j| j.method == "erm").all(|j| j.params.is_empty()));
}

#[test]
fn grid_mode_counts_axis_product() {
    let text = r#"
common: {task: spurious_blobs, te_d: env3}
methods:
  dann:
    model: dann
    params:
      - {name: gamma_reg_dann, kind: grid_list, values: [0.1, 1, 10]}
      - {name: lr, kind: loguniform, lo: 0.001, hi: 0.1, count: 2}
sampling: {mode: grid, n_seeds: 2}
"#;
    let cfg = BenchmarkConfig::from_yaml_str(text).unwrap();
    assert_eq!(enumerate_jobs(&cfg).unwrap().len(), 3 * 2 * 2);
}

#[test]
fn config_errors_name_keys() {
    let cases = [
        (BENCH.replace("lo: 0.0001", "lo: 0"), "loguniform requires lo>0"),
        (
            BENCH.replace("shared: [lr]}", "shared: [mu]}"),
            "undeclared shared parameter `mu`",
        ),
        (BENCH.replace("te_d: [env3]", "te_d: []"), "common.te_d"),
        (
            BENCH.replace("model: dann", "model: frobnicate"),
            "unknown model: frobnicate",
        ),
        (BENCH.replace("n_seeds: 2", "n_seeds: 0"), "sampling.n_seeds"),
        (
            BENCH.replace("pool_size: 4", "pool_size: 1"),
            "exceeds shared.pool_size",
        ),
    ];
    for (text, needle) in cases {
        let err = BenchmarkConfig::from_yaml_str(&text).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains(needle), "{err} lacks {needle}");
    }
}

#[test]
fn reserved_param_names_rejected() {
    let text = BENCH.replace("name: gamma_reg_dann", "name: seed");
    assert!(BenchmarkConfig::from_yaml_str(&text)
        .unwrap_err()
        .to_string()
        .contains("reserved"));
}

#[test]
fn type7_quartiles() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile(&v, 0.25), 1.75);
    assert_eq!(quantile(&v, 0.5), 2.5);
    assert_eq!(quantile(&v, 0.75), 3.25);
    assert_eq!(quantile(&[0.4], 0.75), 0.4);
}

#[test]
fn ticks_are_round_and_cover() {
    assert_eq!(
        nice_ticks(0.0, 1.0, 5),
        vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]
    );
    let t = nice_ticks(0.13, 9.7, 5);
    assert_eq!(t.first().copied(), Some(0.0));
    assert_eq!(t.last().copied(), Some(10.0));
    assert!(nice_ticks(3.0, 3.0, 5).len() >= 2);
}

fn table(rows: &[(&str, bool, Option<f64>, &str)]) -> Table {
    Table {
        param_columns: vec!["lr".into()],
        rows: rows
            .iter()
            .enumerate()
            .map(|(i, (m, ok, a, p))| TableRow {
                job_index: i,
                method: m.to_string(),
                ok: *ok,
                test_accuracy: *a,
                params: vec![p.to_string()],
            })
            .collect(),
    }
}

#[test]
fn charts_need_an_ok_row() {
    let t = table(&[("erm", false, None, "0.1")]);
    assert_eq!(
        distribution_svg(&t).unwrap_err().to_string(),
        "invalid configuration: no successful runs"
    );
}

#[test]
fn single_run_has_no_box() {
    let svg = distribution_svg(&table(&[("erm", true, Some(0.5), "0.1")])).unwrap();
    assert_eq!(svg.matches("<circle").count(), 1);
    assert!(!svg.contains(r#"fill="none""#));
    let two = distribution_svg(&table(&[
        ("erm", true, Some(0.5), "0.1"),
        ("erm", true, Some(0.7), "0.2"),
    ]))
    .unwrap();
    assert_eq!(two.matches(r#"fill="none""#).count(), 1);
}

#[test]
fn scatter_skips_blank_params() {
    let t = table(&[("erm", true, Some(0.5), ""), ("dann", true, Some(0.6), "0.01")]);
    assert!(scatter_svg(&t, "erm", "lr").unwrap().is_none());
    let svg = scatter_svg(&t, "dann", "lr").unwrap().unwrap();
    assert_eq!(svg.matches("<circle").count(), 1);
}

#[test]
fn atomic_write_replaces_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sub").join("x.txt");
    write_atomic(&p, b"one").unwrap();
    write_atomic(&p, b"two").unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), b"two");
    assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
}

#[test]
fn aggregate_marks_missing_results_failed() {
    let cfg = bench();
    let dir = tempfile::tempdir().unwrap();
    let jobs: Vec<JobSpec> = enumerate_jobs(&cfg).unwrap().into_iter().take(2).collect();
    write_manifest(dir.path(), &jobs).unwrap();
    let summary = execute_local(&jobs[..1], 1, dir.path(), false).unwrap();
    assert_eq!(summary.ran_ok(), 1);
    let rows = collect_rows(dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ok);
    assert!(rows[0].wall_time_s.is_some());
    assert!(!rows[1].ok);
    assert!(rows[1].error.starts_with("unreadable result"));
    let path = aggregate(dir.path()).unwrap();
    let t = read_table(&path).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.param_columns, vec!["lr".to_string()]);
}

#[test]
fn cluster_scripts_reference_relative_configs() {
    let dir = tempfile::tempdir().unwrap();
    let jobs: Vec<JobSpec> = enumerate_jobs(&bench()).unwrap().into_iter().take(3).collect();
    let written = emit_cluster_scripts(&jobs, dir.path(), &ClusterTemplate::default()).unwrap();
    assert_eq!(written.len(), 4);
    let id = jobs[0].job_id();
    let script = std::fs::read_to_string(dir.path().join(CLUSTER_DIR).join(format!("{id}.sh"))).unwrap();
    assert!(script.starts_with("#!/bin/sh\n#SBATCH --job-name="));
    assert!(script.contains(&format!("run --config {id}.yaml --out ../results/{id}.json")));
    let yaml = std::fs::read_to_string(dir.path().join(CLUSTER_DIR).join(format!("{id}.yaml"))).unwrap();
    let back = crate::experiment::ExperimentConfig::from_yaml_str(&yaml).unwrap();
    assert_eq!(back.model, "erm");
    let first: Vec<Vec<u8>> = written.iter().map(|p| std::fs::read(p).unwrap()).collect();
    emit_cluster_scripts(&jobs, dir.path(), &ClusterTemplate::default()).unwrap();
    let second: Vec<Vec<u8>> = written.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
}
