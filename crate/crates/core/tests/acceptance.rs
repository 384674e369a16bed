//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use evtfair::evt::{
    cv_test, fit_gev, fit_gpd, return_level, EvtFit, GevParams, GpdParams, Horizon, QqClass,
    TailType,
};
use evtfair::mitigation::{mitigate, MitigationConfig};
use evtfair::statcompare::{bootstrap_test, cliffs_delta};
use evtfair::tabular::{split, write_csv};
use evtfair::tailsampler::{audit, CopulaFactory, SamplerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{copula_task, task_group, Blind, InjectedTail};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    // (0, 1), never 0
    (rng.random::<u64>() >> 11) as f64 / (1u64 << 53) as f64 + 0.5 / (1u64 << 53) as f64
}

fn white_fit() -> EvtFit {
    EvtFit {
        u: 0.12,
        zeta_u: 50.0 / 25658.0,
        k: 50,
        gpd: GpdParams { sigma_hat: 0.03, xi: -0.08 },
        gev: GevParams { mu: 0.15, sigma: 0.03, xi: -0.08 },
        se: None,
        tail_type: TailType::TypeI,
        qq_class: QqClass::Linear,
        qq_r2: 0.99,
        horizon: Horizon::Finite(5000),
        tie_breaking: false,
    }
}

fn criterion_1() -> Outcome {
    let fit = white_fit();
    let start = Instant::now();
    let rl: Vec<f64> = [500.0, 1000.0, 2000.0]
        .iter()
        .map(|&m| return_level(&fit, m).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let ok = within(rl[0], 0.12, 0.01)
        && within(rl[1], 0.14, 0.01)
        && within(rl[2], 0.16, 0.01)
        && elapsed < Duration::from_millis(1);
    check(
        ok,
        format!("RL(500,1000,2000) = {:.4}/{:.4}/{:.4} in {elapsed:?}", rl[0], rl[1], rl[2]),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let exp: Vec<f64> = (0..10_000).map(|_| -uniform(&mut rng).ln() / 2.0).collect();
    let a = fit_gpd(&exp).unwrap().params;
    // GPD(1, -0.2) by inverting F(t) = 1 - (1 + xi t / sigma)^(-1 / xi)
    let (sigma, xi) = (1.0, -0.2);
    let g: Vec<f64> = (0..10_000)
        .map(|_| sigma / xi * (uniform(&mut rng).powf(-xi) - 1.0))
        .collect();
    let b = fit_gpd(&g).unwrap().params;
    let elapsed = start.elapsed();
    let ok = (-0.05..=0.05).contains(&a.xi)
        && (0.48..=0.52).contains(&a.sigma_hat)
        && within(b.xi, -0.2, 0.05)
        && within(b.sigma_hat, 1.0, 0.05)
        && elapsed < Duration::from_secs(5);
    check(
        ok,
        format!(
            "exp: xi={:.4} sigma={:.4}; gpd(1,-0.2): xi={:.4} sigma={:.4}; {elapsed:?}",
            a.xi, a.sigma_hat, b.xi, b.sigma_hat
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<f64> = (0..5_000)
        .map(|_| 0.15 - 0.03 * (-uniform(&mut rng).ln()).ln())
        .collect();
    let p = fit_gev(&draws).unwrap().params;
    let elapsed = start.elapsed();
    let ok = within(p.mu, 0.15, 0.005)
        && within(p.sigma, 0.03, 0.005)
        && within(p.xi, 0.0, 0.05)
        && elapsed < Duration::from_secs(5);
    check(
        ok,
        format!("mu={:.5} sigma={:.5} xi={:.4}; {elapsed:?}", p.mu, p.sigma, p.xi),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut exp_pass, mut pareto_fail) = (0, 0);
    for _ in 0..200 {
        let e: Vec<f64> = (0..1000).map(|_| -uniform(&mut rng).ln()).collect();
        if cv_test(&e, 10, 50).unwrap().passed() {
            exp_pass += 1;
        }
        let p: Vec<f64> = (0..1000).map(|_| uniform(&mut rng).powf(-1.0 / 0.8)).collect();
        if !cv_test(&p, 10, 50).unwrap().passed() {
            pareto_fail += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = exp_pass >= 180 && pareto_fail >= 190 && elapsed < Duration::from_secs(10);
    check(
        ok,
        format!("exponential passed {exp_pass}/200, Pareto(0.8) failed {pareto_fail}/200; {elapsed:?}"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let ds = copula_task(5000, 5);
    let g = task_group();
    let model = InjectedTail::for_dataset(&ds);
    let cfg = SamplerConfig { seed: 5, timeout_secs: 50.0, ..SamplerConfig::default() };
    let factory = CopulaFactory { data: &ds, group: &g };
    let a = audit(&model, &ds, &g, &cfg, &factory).unwrap();
    let elapsed = start.elapsed();
    let r = &a.report;
    let tail = r.unprivileged.fit.as_ref().map(|f| f.tail_type);
    let ok = r.acd_diff < 0.05
        && r.ecd > 0.05
        && (0.25..=0.35).contains(&r.ecd)
        && r.discriminates
        && matches!(tail, Some(TailType::TypeI) | Some(TailType::TypeIII))
        && elapsed < Duration::from_secs(60);
    check(
        ok,
        format!(
            "acd_u={:.4} acd_diff={:.4} ecd={:.4} discriminates={} tail={:?}; {elapsed:?}",
            r.unprivileged.acd, r.acd_diff, r.ecd, r.discriminates, tail
        ),
    )
}

fn criterion_6() -> Outcome {
    let ds = copula_task(2000, 6);
    let g = task_group();
    let cfg = SamplerConfig { seed: 6, ..SamplerConfig::default() };
    let factory = CopulaFactory { data: &ds, group: &g };
    let r = audit(&Blind, &ds, &g, &cfg, &factory).unwrap().report;
    let ok = r.acd_diff == 0.0
        && r.ecd == 0.0
        && !r.discriminates
        && r.unprivileged.status == "degenerate"
        && r.privileged.status == "degenerate";
    check(
        ok,
        format!(
            "acd_diff={} ecd={} discriminates={} statuses={}/{}",
            r.acd_diff, r.ecd, r.discriminates, r.unprivileged.status, r.privileged.status
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let ds = copula_task(5000, 5);
    let g = task_group();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let (train, valid, test) = split(&ds, (0.6, 0.2, 0.2), seed).unwrap();
        let mut cfg = MitigationConfig { n_trials: 50, seed, ..MitigationConfig::default() };
        cfg.audit.timeout_secs = 10.0;
        cfg.audit.m = 10;
        cfg.audit.max_iterations = 2_000;
        cfg.audit.seed = seed;
        let r = mitigate(&train, &valid, &test, &g, &cfg).unwrap();
        let best = &r.trials[r.best_trial];
        let base_obj = r.trials[0].objective.unwrap_or(f64::INFINITY);
        let best_obj = best.objective.unwrap_or(f64::INFINITY);
        let seed_ok = best.feasible
            && !r.no_feasible_candidate
            && best_obj <= base_obj
            && r.valid_accuracy_loss <= cfg.eps_acc;
        ok &= seed_ok;
        lines.push(format!(
            "seed {seed}: |ecd| {base_obj:.4}->{best_obj:.4} acc loss {:.4} (test: |ecd| {:.4}->{:.4}, acc loss {:.4})",
            r.valid_accuracy_loss,
            r.baseline.ecd.abs(),
            r.best.ecd.abs(),
            r.accuracy_loss
        ));
    }
    check(ok, format!("{}; {:?}", lines.join("; "), start.elapsed()))
}

fn criterion_8() -> Outcome {
    let d1 = cliffs_delta(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
    let d2 = cliffs_delta(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    let d3 = cliffs_delta(&[1.0, 2.0], &[2.0, 3.0]).unwrap();
    // pair-by-pair count as the reference
    let (a, b) = ([1.0f64, 2.0], [2.0f64, 3.0]);
    let mut net = 0i32;
    for x in a {
        for y in b {
            net += (x > y) as i32 - (x < y) as i32;
        }
    }
    let reference = net as f64 / 4.0;
    let c = bootstrap_test(&[0.3; 30], &[0.3; 30], 500, 0.05, 8).unwrap();
    let ok = d1 == 1.0 && d2 == -1.0 && d3 == reference && !c.significant;
    check(
        ok,
        format!(
            "disjoint {d1}/{d2}; {{1,2}} vs {{2,3}} = {d3} (pair count {reference}); constant samples significant={}",
            c.significant
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ds = copula_task(1500, 9);
    let data = dir.path().join("data.csv");
    write_csv(std::fs::File::create(&data).unwrap(), &ds).unwrap();
    let schema = dir.path().join("schema.json");
    std::fs::write(
        &schema,
        r#"{"columns":[{"name":"x1","kind":"numeric"},{"name":"x2","kind":"numeric"},
            {"name":"race","kind":"categorical"},{"name":"y","kind":"numeric"}],
            "protected":["race"],"label":"y","favorable":1}"#,
    )
    .unwrap();
    let run = |out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_evtfair"))
            .args(["audit", "--attr", "race", "--privileged", "White", "--unprivileged", "Black"])
            .args(["--model", "builtin:logreg", "--seed", "7", "--quiet", "--timeout", "60"])
            .arg("--data")
            .arg(&data)
            .arg("--schema")
            .arg(&schema)
            .arg("--out")
            .arg(dir.path().join(out).join("report.json"))
            .status()
            .unwrap();
        let bytes = std::fs::read(dir.path().join(out).join("report.json")).unwrap_or_default();
        (status.success(), bytes)
    };
    std::fs::create_dir(dir.path().join("a")).unwrap();
    std::fs::create_dir(dir.path().join("b")).unwrap();
    let (ok_a, a) = run("a");
    let (ok_b, b) = run("b");
    check(
        ok_a && ok_b && !a.is_empty() && a == b,
        format!("exit ok {ok_a}/{ok_b}, {} bytes, identical={}", a.len(), a == b),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("return-level reproduction", criterion_1),
        ("GPD recovery", criterion_2),
        ("GEV recovery", criterion_3),
        ("CV-test calibration", criterion_4),
        ("injected-tail-bias audit", criterion_5),
        ("degenerate fairness", criterion_6),
        ("mitigation no-regression", criterion_7),
        ("statistical primitives", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} ({name}): {} -- {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
