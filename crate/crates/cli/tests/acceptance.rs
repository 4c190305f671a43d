//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails. Tolerances are fixed constants below.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dgkit_core::benchmark::{
    enumerate_jobs, execute_local, grid_params, read_table, sample_params, shared_pool, write_manifest,
    BenchmarkConfig, DistKind, ParamDistribution, ParamValue,
};
use dgkit_core::experiment::{run_experiment, ExperimentConfig, TaskSpec};
use dgkit_core::models::{compose_configs, LossReport, MemberConfig, Model, ModelConfig, NetConfig, TaskDims};
use dgkit_core::netcore::{Activation, Optimizer, OptimizerKind, Tensor};
use dgkit_core::rng::{seeded, DgRng};
use dgkit_core::tasks::{builtin_task, Batch, BuiltinTask};
use dgkit_core::trainers::{
    dial_value, fishr_value, holdout_index, mldg_value, Decorator, DialConfig, FishrConfig, FishrState, MldgConfig,
    Trainer, TrainerConfig,
};
use rand::Rng;

const FD_EPS: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared on an absolute scale.
const GRAD_FLOOR: f64 = 1e-6;
const MAX_PARAMS: usize = 50;
const C1_BUDGET: Duration = Duration::from_secs(30);
const SRM_CONFIGS: usize = 100;
const SRM_TOL: f64 = 1e-12;
const NEUTRAL_STEPS: usize = 20;
const NEUTRAL_TOL: f64 = 1e-12;
const C4_SEEDS: u64 = 5;
const C4_ERM_MAX: f64 = 0.35;
const C4_VAL_MIN: f64 = 0.95;
const C4_GAP: f64 = 0.15;
const C4_BUDGET: Duration = Duration::from_secs(180);
const KS_N: usize = 10_000;
const KS_MAX: f64 = 0.05;
const C7_BUDGET: Duration = Duration::from_secs(300);
const C8_BUDGET: Duration = Duration::from_secs(10);

type Outcome = Result<String, String>;
type Run = (String, Result<(f64, f64), String>);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- fixtures

const DIMS: TaskDims = TaskDims {
    input_dim: 3,
    num_classes: 2,
    num_domains: 3,
};

fn tiny_net() -> NetConfig {
    NetConfig {
        feature_widths: vec![2],
        feature_dim: 3,
        domain_widths: vec![],
        activation: Activation::Tanh,
        init_scale: 1.0,
    }
}

/// Fixed hyperparameters without `rng`, random ones with it.
fn member(kind: &str, rng: Option<&mut DgRng>) -> MemberConfig {
    match (kind, rng) {
        ("erm", _) => MemberConfig::Erm,
        ("dann", None) => MemberConfig::Dann { gamma_reg: 0.7 },
        ("dann", Some(r)) => MemberConfig::Dann {
            gamma_reg: r.random_range(0.0..5.0),
        },
        ("diva", None) => MemberConfig::DivaLite {
            gamma_y: 2.0,
            gamma_d: 3.0,
            zx_dim: 1,
            zy_dim: 1,
            zd_dim: 1,
        },
        ("diva", Some(r)) => MemberConfig::DivaLite {
            gamma_y: r.random_range(0.5..5.0),
            gamma_d: r.random_range(0.0..5.0),
            zx_dim: 1,
            zy_dim: 1,
            zd_dim: 1,
        },
        _ => unreachable!(),
    }
}

fn random_batches(rng: &mut DgRng, rows: usize) -> Vec<Batch> {
    (0..DIMS.num_domains)
        .map(|d| {
            let data: Vec<f64> = (0..rows * DIMS.input_dim)
                .map(|_| rng.random_range(-1.5..1.5))
                .collect();
            Batch {
                features: Tensor::new(vec![rows, DIMS.input_dim], data).unwrap(),
                labels: (0..rows).map(|i| (i + d) % 2).collect(),
                domain: d,
            }
        })
        .collect()
}

fn dial(gamma: f64) -> Decorator {
    Decorator::Dial(DialConfig {
        gamma_reg: gamma,
        n_steps: 2,
        step_size: 0.05,
        epsilon: 0.1,
    })
}

fn mldg(gamma: f64) -> Decorator {
    Decorator::Mldg(MldgConfig {
        gamma_reg: gamma,
        inner_lr: 0.05,
    })
}

fn fishr(gamma: f64) -> Decorator {
    Decorator::Fishr(FishrConfig {
        gamma_reg: gamma,
        ..Default::default()
    })
}

/// Decorators listed innermost first.
fn chain(decs: &[Decorator]) -> TrainerConfig {
    decs.iter().fold(TrainerConfig::basic(), |inner, d| {
        TrainerConfig::decorate(d.clone(), inner)
    })
}

// ---------------------------------------------------------------- criterion 1

fn fd(model: &Model, i: usize, f: &dyn Fn(&Model) -> f64) -> f64 {
    let mut m = model.clone();
    let x = m.params().scalar(i);
    m.params_mut().set_scalar(i, x + FD_EPS);
    let up = f(&m);
    m.params_mut().set_scalar(i, x - FD_EPS);
    let down = f(&m);
    (up - down) / (2.0 * FD_EPS)
}

fn dann_terms(r: &LossReport) -> (f64, f64) {
    r.reg_terms
        .iter()
        .filter(|t| t.name == "dann.domain")
        .fold((0.0, 0.0), |(v, wv), t| (v + t.value, wv + t.multiplier * t.value))
}

/// The objective whose gradient each parameter should receive from the
/// model: DANN domain heads descend `R`; every other parameter descends
/// `ℓ + Σμ R` with the DANN term's sign flipped (gradient reversal; only
/// the extractor depends on it).
fn model_objective(m: &Model, batches: &[Batch], dann_head: bool) -> f64 {
    let w = 1.0 / batches.len() as f64;
    batches
        .iter()
        .map(|b| {
            let r = m.evaluate(b).unwrap();
            let (raw, weighted) = dann_terms(&r);
            if dann_head {
                raw
            } else {
                r.total - 2.0 * weighted
            }
        })
        .sum::<f64>()
        * w
}

fn mean_class_loss(m: &Model, batches: &[&Batch]) -> f64 {
    batches
        .iter()
        .map(|b| m.class_loss(&b.features, &b.labels).unwrap())
        .sum::<f64>()
        / batches.len() as f64
}

/// Independent finite-difference gradient of one training step's loss.
fn oracle_gradient(model: &Model, batches: &[Batch], decs: &[Decorator]) -> Vec<f64> {
    let n = model.params().num_scalars();
    let owner = |i: usize| model.params().scalar_owner(i).to_string();
    let mut f: Vec<f64> = (0..n)
        .map(|i| {
            let head = owner(i).contains(".dann.dom.");
            fd(model, i, &|m| model_objective(m, batches, head))
        })
        .collect();
    let holdout = holdout_index(0, batches.len());
    let all: Vec<&Batch> = batches.iter().collect();
    for dec in decs {
        let mu = dec.gamma_reg();
        match dec {
            Decorator::Dial(cfg) => {
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += mu
                        * fd(model, i, &|m| {
                            all.iter()
                                .map(|b| dial_value(&mut m.clone(), b, cfg, None).unwrap())
                                .sum::<f64>()
                                / all.len() as f64
                        });
                }
            }
            Decorator::Mldg(cfg) => {
                // first-order: gradient of the target loss at θ' = θ − α∇ℓ_S(θ)
                let sources: Vec<&Batch> = all
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != holdout)
                    .map(|(_, b)| *b)
                    .collect();
                let target = all[holdout];
                let g_s: Vec<f64> = (0..n)
                    .map(|i| fd(model, i, &|m| mean_class_loss(m, &sources)))
                    .collect();
                let mut shifted = model.clone();
                for (i, g) in g_s.iter().enumerate() {
                    let v = shifted.params().scalar(i);
                    shifted.params_mut().set_scalar(i, v - cfg.inner_lr * g);
                }
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += mu * fd(&shifted, i, &|m| mean_class_loss(m, &[target]));
                }
            }
            Decorator::Fishr(cfg) => {
                let head = model.class_head_params();
                for (i, fi) in f.iter_mut().enumerate() {
                    if head.contains(&owner(i)) {
                        *fi += mu
                            * fd(model, i, &|m| {
                                fishr_value(&mut m.clone(), &all, cfg, &mut FishrState::default(), None).unwrap()
                            });
                    }
                }
            }
        }
    }
    f
}

fn max_rel_err(a: &[f64], f: &[f64]) -> f64 {
    a.iter()
        .zip(f)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(GRAD_FLOOR))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(11);
    let batches = random_batches(&mut rng, 4);
    let trainers: [(&str, Vec<Decorator>); 4] = [
        ("basic", vec![]),
        ("dial", vec![dial(0.6)]),
        ("mldg", vec![mldg(0.8)]),
        ("fishr", vec![fishr(0.9)]),
    ];
    let mut worst = (0.0, String::new());
    let mut largest = 0;
    for kind in ["erm", "dann", "diva"] {
        let model = e2s(Model::build(
            &ModelConfig::single(member(kind, None), tiny_net()),
            DIMS,
            3,
        ))?;
        let n = model.params().num_scalars();
        largest = largest.max(n);
        check(n <= MAX_PARAMS, || format!("{kind} has {n} parameters"))?;
        for (tname, decs) in &trainers {
            let mut t = e2s(Trainer::new(chain(decs)))?;
            let mut m = model.clone();
            e2s(t.accumulate(&mut m, &batches))?;
            let a = m.params().flat_grads();
            let f = oracle_gradient(&model, &batches, decs);
            let err = max_rel_err(&a, &f);
            check(err < GRAD_REL_TOL, || format!("{kind}/{tname}: max rel err {err:.3e}"))?;
            if err >= worst.0 {
                worst = (err, format!("{kind}/{tname}"));
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < C1_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "12 combinations, <= {largest} params, worst rel err {:.2e} ({}), {:.1}s",
        worst.0,
        worst.1,
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let mut rng = seeded(2024);
    let kinds = ["erm", "dann", "diva"];
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for case in 0..SRM_CONFIGS {
        let n_members = rng.random_range(1..=3);
        let members: Vec<MemberConfig> = (0..n_members)
            .map(|_| {
                let k = kinds[rng.random_range(0..3)];
                member(k, Some(&mut rng))
            })
            .collect();
        let parts: Vec<ModelConfig> = members
            .iter()
            .map(|m| ModelConfig::single(m.clone(), tiny_net()))
            .collect();
        let cfg = if parts.len() == 1 {
            parts[0].clone()
        } else {
            e2s(compose_configs(parts))?
        };
        let mut decs = Vec::new();
        for make in [dial as fn(f64) -> Decorator, mldg, fishr] {
            if rng.random_bool(0.5) {
                decs.push(make(rng.random_range(0.0..2.0)));
            }
        }
        let mut model = e2s(Model::build(&cfg, DIMS, case as u64))?;
        let mut trainer = e2s(Trainer::new(chain(&decs)))?;
        let mut opt = e2s(Optimizer::new(OptimizerKind::sgd(), 0.05))?;
        let mut fishr_state = FishrState::default();
        for step in 0..3u64 {
            let batches = random_batches(&mut rng, 4);
            let refs: Vec<&Batch> = batches.iter().collect();
            // expected decomposition, computed before the step
            let mut expected: Vec<(String, f64, f64)> = Vec::new();
            let ell = mean_class_loss(&model, &refs);
            let evals: Vec<LossReport> = batches.iter().map(|b| model.evaluate(b).unwrap()).collect();
            for (k, t) in evals[0].reg_terms.iter().enumerate() {
                let v = evals.iter().map(|r| r.reg_terms[k].value).sum::<f64>() / evals.len() as f64;
                let mu = model_multiplier(&members, k);
                expected.push((t.name.clone(), v, mu));
            }
            for d in &decs {
                let v = match d {
                    Decorator::Dial(c) => {
                        refs.iter()
                            .map(|b| dial_value(&mut model.clone(), b, c, None).unwrap())
                            .sum::<f64>()
                            / refs.len() as f64
                    }
                    Decorator::Mldg(c) => {
                        let h = holdout_index(step, refs.len());
                        let src: Vec<&Batch> = refs
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| *k != h)
                            .map(|(_, b)| *b)
                            .collect();
                        mldg_value(&mut model.clone(), &src, refs[h], c, None).unwrap()
                    }
                    Decorator::Fishr(c) => fishr_value(&mut model.clone(), &refs, c, &mut fishr_state, None).unwrap(),
                };
                expected.push((d.name().to_string(), v, d.gamma_reg()));
            }
            let rep = e2s(trainer.step(&mut model, &batches, &mut opt))?.report;
            check((rep.task_loss - ell).abs() <= SRM_TOL, || {
                format!("case {case} step {step}: task loss {} vs {ell}", rep.task_loss)
            })?;
            check(rep.reg_terms.len() == expected.len(), || {
                format!("case {case}: term count")
            })?;
            let mut sum = ell;
            for (t, (name, v, mu)) in rep.reg_terms.iter().zip(&expected) {
                check(&t.name == name, || format!("case {case}: term {} vs {name}", t.name))?;
                check((t.value - v).abs() <= SRM_TOL, || {
                    format!("case {case}: {name} value {} vs {v}", t.value)
                })?;
                check(t.multiplier.to_bits() == mu.to_bits(), || {
                    format!("case {case}: {name} multiplier {} vs {mu}", t.multiplier)
                })?;
                sum += mu * v;
            }
            let err = (rep.total - sum).abs();
            worst = worst.max(err);
            check(err <= SRM_TOL, || {
                format!("case {case} step {step}: total off by {err:.3e}")
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "{SRM_CONFIGS} configurations, {checked} steps, worst |total - sum| {worst:.1e}"
    ))
}

/// μ of the `k`-th model term, derived from the member list alone.
fn model_multiplier(members: &[MemberConfig], k: usize) -> f64 {
    let mut mus = Vec::new();
    for (i, m) in members.iter().enumerate() {
        if i > 0 {
            mus.push(1.0);
        }
        match *m {
            MemberConfig::Erm => {}
            MemberConfig::Dann { gamma_reg } => mus.push(gamma_reg),
            MemberConfig::DivaLite { gamma_y, gamma_d, .. } => {
                mus.push(gamma_d / gamma_y);
                mus.push(1.0 / gamma_y);
            }
        }
    }
    mus[k]
}

// ---------------------------------------------------------------- criterion 3

fn non_domain_values(m: &Model) -> Vec<f64> {
    m.params()
        .iter()
        .filter(|(name, _)| !name.contains(".dom."))
        .flat_map(|(_, p)| p.value.data().to_vec())
        .collect()
}

fn trajectory_gap(a: &Model, ta: TrainerConfig, b: &Model, tb: TrainerConfig) -> Result<f64, String> {
    let (mut a, mut b) = (a.clone(), b.clone());
    let (mut ta, mut tb) = (e2s(Trainer::new(ta))?, e2s(Trainer::new(tb))?);
    let mut oa = e2s(Optimizer::new(OptimizerKind::adam(), 0.01))?;
    let mut ob = oa.clone();
    let mut rng = seeded(303);
    let mut gap = 0.0f64;
    for _ in 0..NEUTRAL_STEPS {
        let batches = random_batches(&mut rng, 4);
        e2s(ta.step(&mut a, &batches, &mut oa))?;
        e2s(tb.step(&mut b, &batches, &mut ob))?;
        let (va, vb) = (non_domain_values(&a), non_domain_values(&b));
        if va.len() != vb.len() {
            return Err("parameter layouts differ".into());
        }
        gap = va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).fold(gap, f64::max);
    }
    Ok(gap)
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    let zero_chains: [Vec<Decorator>; 4] = [
        vec![dial(0.0)],
        vec![mldg(0.0)],
        vec![fishr(0.0)],
        vec![dial(0.0), fishr(0.0), mldg(0.0)],
    ];
    for kind in ["erm", "dann", "diva"] {
        let m = e2s(Model::build(
            &ModelConfig::single(member(kind, None), tiny_net()),
            DIMS,
            5,
        ))?;
        for decs in &zero_chains {
            let gap = trajectory_gap(&m, TrainerConfig::basic(), &m, chain(decs))?;
            check(gap <= NEUTRAL_TOL, || {
                format!("{kind}/{}: gap {gap:.3e}", chain(decs).name())
            })?;
            worst = worst.max(gap);
            cases += 1;
        }
    }
    let single = |c: MemberConfig| Model::build(&ModelConfig::single(c, tiny_net()), DIMS, 6);
    let erm = e2s(single(MemberConfig::Erm))?;
    let dann0 = e2s(single(MemberConfig::Dann { gamma_reg: 0.0 }))?;
    let gap = trajectory_gap(&erm, TrainerConfig::basic(), &dann0, TrainerConfig::basic())?;
    check(gap <= NEUTRAL_TOL, || format!("dann(0) vs erm: gap {gap:.3e}"))?;
    worst = worst.max(gap);
    let pair = |second: MemberConfig| {
        compose_configs(vec![
            ModelConfig::single(MemberConfig::Erm, tiny_net()),
            ModelConfig::single(second, tiny_net()),
        ])
        .and_then(|c| Model::build(&c, DIMS, 7))
    };
    let erm_erm = e2s(pair(MemberConfig::Erm))?;
    let erm_dann0 = e2s(pair(MemberConfig::Dann { gamma_reg: 0.0 }))?;
    let gap = trajectory_gap(&erm_erm, chain(&[mldg(0.0)]), &erm_dann0, chain(&[dial(0.0)]))?;
    check(gap <= NEUTRAL_TOL, || format!("erm_dann(0) vs erm_erm: gap {gap:.3e}"))?;
    worst = worst.max(gap);
    Ok(format!(
        "{} trajectory pairs x {NEUTRAL_STEPS} steps, max param gap {worst:.1e}",
        cases + 2
    ))
}

// ---------------------------------------------------------------- criterion 4

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Best single-threshold classifier on the spurious coordinate, chosen on
/// the pooled training domains: (train accuracy, test accuracy).
fn spurious_only_classifier() -> Result<(f64, f64), String> {
    let task = e2s(builtin_task(&BuiltinTask::from_name("spurious_blobs").unwrap(), 0))?;
    let mut train: Vec<(f64, usize)> = Vec::new();
    for d in task.training_domains() {
        for (i, &y) in d.labels.iter().enumerate() {
            train.push((d.features.get(i, 2), y));
        }
    }
    let test_name = task.test_domains()[0].clone();
    let test = e2s(task.test_data(&test_name))?;
    let acc = |pts: &[(f64, usize)], t: f64, sign: f64| {
        pts.iter()
            .filter(|(s, y)| usize::from(sign * (s - t) > 0.0) == *y)
            .count() as f64
            / pts.len() as f64
    };
    let mut cuts: Vec<f64> = train.iter().map(|p| p.0).collect();
    cuts.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, 0.0, 1.0);
    for w in cuts.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        for sign in [1.0, -1.0] {
            let a = acc(&train, t, sign);
            if a > best.0 {
                best = (a, t, sign);
            }
        }
    }
    let test_pts: Vec<(f64, usize)> = test
        .labels
        .iter()
        .enumerate()
        .map(|(i, &y)| (test.features.get(i, 2), y))
        .collect();
    Ok((best.0, acc(&test_pts, best.1, best.2)))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (sp_train, sp_test) = spurious_only_classifier()?;
    check(sp_train >= C4_VAL_MIN && sp_test <= 1.0 - C4_VAL_MIN, || {
        format!("spurious-only classifier train {sp_train:.3} test {sp_test:.3}")
    })?;
    let base = |model: &str, gamma: Option<f64>, seed: u64| ExperimentConfig {
        task: Some(TaskSpec::Named("spurious_blobs".into())),
        model: model.into(),
        gamma_reg_dann: gamma,
        seed,
        ..Default::default()
    };
    let mut cfgs = Vec::new();
    for seed in 0..C4_SEEDS {
        cfgs.push(("erm".to_string(), base("erm", None, seed)));
        for g in [0.1, 1.0, 10.0] {
            cfgs.push((format!("dann{g}"), base("dann", Some(g), seed)));
        }
    }
    let results: Vec<Run> = std::thread::scope(|s| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|(label, c)| {
                s.spawn(move || {
                    let r = run_experiment(c).map(|r| (r.mean_test_accuracy(), r.val_accuracy));
                    (label.clone(), e2s(r))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut by: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for (label, r) in results {
        by.entry(label).or_default().push(r?);
    }
    let erm = &by["erm"];
    let erm_med = median(erm.iter().map(|r| r.0).collect());
    let erm_val_min = erm.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let mut dann_best = (f64::NEG_INFINITY, String::new());
    let mut dann_meds = Vec::new();
    for (label, rs) in &by {
        if let Some(gamma) = label.strip_prefix("dann") {
            let m = median(rs.iter().map(|r| r.0).collect());
            dann_meds.push(format!("{gamma}={m:.3}"));
            if m > dann_best.0 {
                dann_best = (m, gamma.to_string());
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "erm median {erm_med:.3} (min val {erm_val_min:.3}), dann medians γ {}, best γ={} gap {:.3}; spurious-only {sp_train:.3}/{sp_test:.3}; {:.1}s",
        dann_meds.join(" "),
        dann_best.1,
        dann_best.0 - erm_med,
        elapsed.as_secs_f64()
    );
    check(erm_med <= C4_ERM_MAX, || format!("erm median too high: {detail}"))?;
    check(erm_val_min >= C4_VAL_MIN, || {
        format!("erm validation too low: {detail}")
    })?;
    check(dann_best.0 - erm_med >= C4_GAP, || format!("gap too small: {detail}"))?;
    check(elapsed < C4_BUDGET, || format!("over budget: {detail}"))?;
    Ok(detail)
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let (lo, hi) = (1e-4, 1e-1);
    let d = ParamDistribution::loguniform("x", lo, hi);
    let a = e2s(sample_params(std::slice::from_ref(&d), KS_N, 99))?;
    let b = e2s(sample_params(&[d], KS_N, 99))?;
    let bits = |v: &[dgkit_core::benchmark::ParamMap]| -> Vec<u64> {
        v.iter().map(|m| m["x"].as_f64().unwrap().to_bits()).collect()
    };
    check(bits(&a) == bits(&b), || "resampling with the same seed differs".into())?;
    let mut logs: Vec<f64> = a.iter().map(|m| m["x"].as_f64().unwrap()).collect();
    check(logs.iter().all(|x| (lo..=hi).contains(x)), || {
        "sample out of bounds".into()
    })?;
    logs.iter_mut().for_each(|x| *x = x.ln());
    logs.sort_by(f64::total_cmp);
    let (a0, a1) = (lo.ln(), hi.ln());
    let n = logs.len() as f64;
    let ks = logs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = (x - a0) / (a1 - a0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    check(ks < KS_MAX, || format!("KS statistic {ks:.4}"))?;
    let axes = vec![
        ParamDistribution::uniform("u", 0.0, 1.0).with_count(4),
        ParamDistribution::loguniform("l", 1e-3, 1.0).with_count(3),
        ParamDistribution::int_uniform("i", 1, 5),
        ParamDistribution::grid_list("g", vec![ParamValue::Str("a".into()), ParamValue::Str("b".into())]),
    ];
    let grid = e2s(grid_params(&axes))?;
    check(grid.len() == 4 * 3 * 5 * 2, || {
        format!("grid has {} points", grid.len())
    })?;
    check(axes[2].kind == DistKind::IntUniform, || "axis kind".into())?;
    Ok(format!(
        "bit-identical resample, {KS_N} draws in bounds, KS {ks:.4}, grid {} = 4x3x5x2",
        grid.len()
    ))
}

// ---------------------------------------------------------------- criterion 6

const SHARED_BENCH: &str = r#"
common: {task: spurious_blobs, te_d: env3, gamma_d: 100000.0}
shared:
  params:
    - {name: gamma_y, kind: loguniform, lo: 100000, hi: 10000000, step: 1000}
methods:
  diva: {model: diva, shared: [gamma_y]}
  dann_diva:
    model: dann_diva
    shared: [gamma_y]
    params:
      - {name: gamma_reg_dann, kind: uniform, lo: 0.1, hi: 10, step: 0.1}
sampling: {n_param_samples: 8, n_seeds: 1, base_seed: 3}
"#;

fn criterion_6() -> Outcome {
    let cfg = e2s(BenchmarkConfig::from_yaml_str(SHARED_BENCH))?;
    let jobs = e2s(enumerate_jobs(&cfg))?;
    let seq = |method: &str| -> Vec<u64> {
        jobs.iter()
            .filter(|j| j.method == method)
            .map(|j| j.config.gamma_y.unwrap().to_bits())
            .collect()
    };
    let (a, b) = (seq("diva"), seq("dann_diva"));
    check(a.len() == 8 && a == b, || format!("sequences differ: {a:?} vs {b:?}"))?;
    let pool = e2s(shared_pool(&cfg))?;
    let from_pool: Vec<u64> = pool
        .iter()
        .take(8)
        .map(|m| m["gamma_y"].as_f64().unwrap().to_bits())
        .collect();
    check(a == from_pool, || "jobs do not read the pool".into())?;
    let mut distinct = a.clone();
    distinct.sort();
    distinct.dedup();
    Ok(format!(
        "diva and dann_diva share 8 gamma_y values exactly ({} distinct)",
        distinct.len()
    ))
}

// ---------------------------------------------------------------- criterion 7

const E2E_BENCH: &str = r#"
common:
  task: spurious_blobs
  te_d: env3
  epos: 5
shared:
  params:
    - {name: lr, kind: loguniform, lo: 0.001, hi: 0.01}
methods:
  erm: {model: erm, shared: [lr]}
  dann:
    model: dann
    shared: [lr]
    params:
      - {name: gamma_reg_dann, kind: loguniform, lo: 0.1, hi: 10}
sampling: {n_param_samples: 2, n_seeds: 2}
"#;

fn dgkit(args: &[&str]) -> Result<(i32, String, String), String> {
    let out = e2s(Command::new(env!("CARGO_BIN_EXE_dgkit")).args(args).output())?;
    Ok((
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    ))
}

fn criterion_7(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let cfg_path = tmp.join("bench.yaml");
    e2s(std::fs::write(&cfg_path, E2E_BENCH))?;
    let out = tmp.join("bench");
    let (c, p) = (cfg_path.to_str().unwrap(), out.to_str().unwrap());
    let (code, _, err) = dgkit(&["benchmark", "--config", c, "--out", p, "--workers", "4"])?;
    let elapsed = start.elapsed();
    check(code == 0, || format!("benchmark exit {code}: {err}"))?;
    check(elapsed < C7_BUDGET, || format!("benchmark took {elapsed:?}"))?;
    let table = e2s(read_table(&out.join("results.csv")))?;
    check(table.rows.len() == 8, || format!("{} data rows", table.rows.len()))?;
    check(table.rows.iter().all(|r| r.ok), || "not all rows ok".into())?;
    check(out.join("distribution.svg").is_file(), || {
        "no distribution chart".into()
    })?;
    let scatters = e2s(std::fs::read_dir(&out))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("scatter_"))
        .count();
    check(scatters >= 2, || format!("{scatters} scatter charts"))?;

    let (code, _, err) = dgkit(&["benchmark", "--config", c, "--out", p, "--workers", "4"])?;
    check(code == 0 && err.contains("skipped: 8"), || {
        format!("rerun exit {code}: {err}")
    })?;

    // one job rewritten to name an unknown model
    let bench = e2s(BenchmarkConfig::from_yaml_str(E2E_BENCH))?;
    let mut jobs = e2s(enumerate_jobs(&bench))?;
    jobs[5].config.model = "frobnicate".into();
    let inj = tmp.join("injected");
    e2s(write_manifest(&inj, &jobs))?;
    let summary = e2s(execute_local(&jobs, 4, &inj, false))?;
    let rows = e2s(read_table(&e2s(dgkit_core::benchmark::aggregate(&inj))?))?;
    let ok = rows.rows.iter().filter(|r| r.ok).count();
    let failed = rows.rows.len() - ok;
    check(ok == 7 && failed == 1 && !rows.rows[5].ok, || {
        format!("{ok} ok, {failed} failed")
    })?;
    check(summary.exit_code() == 3, || {
        format!("exit code {}", summary.exit_code())
    })?;
    Ok(format!(
        "8 rows, {scatters} scatter + 1 distribution chart, rerun skipped 8, injected: 7 ok + 1 failed exit 3; {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 8

const SMOKE: &str = "\
te_d: env3
task: spurious_blobs
bs: 2
epos: 1
model: dann_diva
trainer: mldg_dial
gamma_y: 700000.0
gamma_d: 100000.0
";

fn criterion_8(tmp: &Path) -> Outcome {
    let path = tmp.join("smoke.yaml");
    e2s(std::fs::write(&path, SMOKE))?;
    let start = Instant::now();
    let (code, out, err) = dgkit(&["run", "--config", path.to_str().unwrap()])?;
    let elapsed = start.elapsed();
    check(code == 0, || format!("exit {code}: {err}"))?;
    check(out.contains("test env3:"), || {
        format!("no test accuracy printed: {out}")
    })?;
    check(elapsed < C8_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "dann_diva + mldg_dial, bs 2, epos 1: exit 0 in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

// ----------------------------------------------------------------

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("gradient suite", Box::new(criterion_1)),
        ("SRM additivity", Box::new(criterion_2)),
        ("neutral decoration/composition", Box::new(criterion_3)),
        ("spurious-blobs separation", Box::new(criterion_4)),
        ("sampler determinism and bounds", Box::new(criterion_5)),
        ("shared pool", Box::new(criterion_6)),
        ("end-to-end benchmark", Box::new(|| criterion_7(tmp.path()))),
        ("smoke run", Box::new(|| criterion_8(tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
